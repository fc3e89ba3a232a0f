use clap::Parser;

fn main() {
    let cli = lrnet_cli::Cli::parse();
    let code = lrnet_cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
