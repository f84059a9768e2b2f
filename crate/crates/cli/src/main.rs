fn main() -> std::process::ExitCode {
    emoji_predict_cli::cli::main()
}
