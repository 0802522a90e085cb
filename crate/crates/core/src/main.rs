fn main() -> std::process::ExitCode {
    rental_triage::cli::run(std::env::args_os())
}
