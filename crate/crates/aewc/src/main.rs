use clap::Parser;

fn main() -> anyhow::Result<()> {
    aewc::cli::run(aewc::cli::Cli::parse())
}
