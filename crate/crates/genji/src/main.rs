fn main() -> std::process::ExitCode {
    genji::cli::run(std::env::args_os())
}
