fn main() {
    std::process::exit(qmem_core::cli::run(std::env::args_os()));
}
