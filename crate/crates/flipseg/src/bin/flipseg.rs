fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(flipseg::cli::run(std::env::args_os()))
}
