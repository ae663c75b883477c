fn main() {
    std::process::exit(tagcl::cli::execute(std::env::args().skip(1)));
}
