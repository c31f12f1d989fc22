fn main() -> std::process::ExitCode {
    imitation_core::cli::main()
}
