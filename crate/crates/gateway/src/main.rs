fn main() -> std::process::ExitCode {
    arena_gateway::cli::main()
}
