fn main() {
    std::process::exit(cliplab::cli::main_entry());
}
