fn main() {
    std::process::exit(dpzip::cli::run(std::env::args_os()));
}
