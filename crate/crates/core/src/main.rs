fn main() -> std::process::ExitCode {
    kpcluster::cli::main()
}
