fn main() {
    std::process::exit(regagent_bench::cli::main_with_args(std::env::args_os()));
}
