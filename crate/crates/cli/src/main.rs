use clap::Parser;

use fbplab_cli::commands::Cli;
use fbplab_cli::{execute, exit_code, init_threads};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let result = execute(&cli.command);
    match &result {
        Ok(o) => {
            let dir = o.record.outputs.first().map(|_| "written").unwrap_or("empty");
            println!(
                "{} run {} ({dir}): {}",
                o.record.subcommand,
                o.record.run_id,
                if o.passed { "ok" } else { "assertions failed" }
            );
            println!("{}", serde_json::to_string_pretty(&o.record.summary).unwrap_or_default());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    std::process::exit(exit_code(&result));
}
