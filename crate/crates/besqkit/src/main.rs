fn main() -> std::process::ExitCode {
    besqkit::cli::main_from_env()
}
