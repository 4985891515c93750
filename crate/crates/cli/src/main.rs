fn main() {
    let code = hop_cli::run(
        std::env::args_os(),
        std::env::vars().collect(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
