fn main() -> std::process::ExitCode {
    medspeech::cli::main()
}
