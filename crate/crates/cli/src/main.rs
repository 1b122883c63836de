fn main() {
    std::process::exit(eiie_cli::main_with(std::env::args_os()));
}
