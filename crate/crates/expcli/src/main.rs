//! `expcli`: one experiment per invocation, one self-describing report per
//! experiment. Exit codes: 0 success, 1 I/O, 2 configuration, 3 violated
//! precondition, 4 numeric failure.

mod commands;
mod config;
mod errors;
mod report;

fn main() {
    // clap exits with code 2 itself on malformed command lines.
    let matches = config::command_tree().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let spec = config::find_command(name).expect("clap admits only table names");
    let (resolved, supplied) = match config::resolve(spec, sub) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("config error: {msg}");
            std::process::exit(2);
        }
    };
    let outcome = if resolved.threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(resolved.threads).build() {
            Ok(pool) => pool.install(|| commands::run(&resolved, &supplied)),
            Err(e) => Err(errors::CliError::Io(format!("thread pool: {e}"))),
        }
    } else {
        commands::run(&resolved, &supplied)
    };
    if let Err(e) = outcome {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
