fn main() {
    std::process::exit(qloss_core::cli::main());
}
