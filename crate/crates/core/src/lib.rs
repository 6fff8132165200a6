//! Core algorithms for preparing a medical speech corpus and scoring a
//! recognizer on it: audio resampling and statistics, transcript
//! normalization, spectrograms, training-data augmentation, n-gram language
//! models, CTC decoding and error rates.
//!
//! Everything here works on in-memory values and needs only `alloc`. File
//! formats and the command line live in the `medspeech` crate.
#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod features;
pub mod lm;
