fn main() -> std::process::ExitCode {
    feedalign::cli::main()
}
