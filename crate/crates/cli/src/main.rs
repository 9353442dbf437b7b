fn main() {
    std::process::exit(shape_cli::main_impl());
}
