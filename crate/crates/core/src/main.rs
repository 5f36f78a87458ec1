fn main() {
    std::process::exit(rdsline::cli::run_cli());
}
