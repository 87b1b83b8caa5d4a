use clap::Parser;
use mrc_align_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
