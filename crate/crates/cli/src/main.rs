use clap::Parser;

fn main() {
    let cli = chanpred_cli::Cli::parse();
    match chanpred_cli::run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("chanpred: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
