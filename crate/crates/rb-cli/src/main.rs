use clap::Parser;

fn main() {
    let cli = rb_cli::Cli::parse();
    std::process::exit(rb_cli::run(&cli));
}
