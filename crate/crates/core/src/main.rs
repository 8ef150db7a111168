use clap::Parser;

fn main() {
    let cli = vinslab::cli::Cli::parse();
    match vinslab::cli::run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
