use clap::Parser;
use clap::error::ErrorKind;

fn main() {
    let cli = match tmcc_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            std::process::exit(2);
        }
    };
    if let Err(e) = tmcc_cli::run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
