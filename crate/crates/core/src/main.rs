fn main() {
    let code = gdpkit::cli::dispatch(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
