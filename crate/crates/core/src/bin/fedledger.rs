fn main() {
    std::process::exit(fedledger::cli::main_with_args(std::env::args_os()));
}
