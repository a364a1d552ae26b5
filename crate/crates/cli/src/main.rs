use clap::Parser;

fn main() {
    let cli = pquasi_cli::Cli::parse();
    match pquasi_cli::run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("{}", pquasi_cli::error_record(&err));
            std::process::exit(1);
        }
    }
}
