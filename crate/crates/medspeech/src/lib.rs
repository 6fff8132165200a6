//! File formats, synthetic fixtures and the command line around
//! `medspeech-core`.

pub mod arpa;
pub mod cli;
pub mod config;
pub mod manifest;
pub mod matrix;
pub mod testkit;
pub mod wav;
