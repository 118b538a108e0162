use clap::Parser;

fn main() {
    let cli = modeswap_cli::Cli::parse();
    let code = modeswap_cli::run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
