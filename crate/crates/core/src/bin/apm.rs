fn main() -> std::process::ExitCode {
    hockey_apm::cli::main()
}
