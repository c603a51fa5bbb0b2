use std::process::exit;

use twophase_cli::{parse_args, run, thread_cap, EXIT_RUNTIME, EXIT_USAGE, THREADS_ENV};

fn main() {
    let config = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };

    match thread_cap(std::env::var(THREADS_ENV).ok().as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: configuring thread pool: {e}");
                exit(EXIT_RUNTIME);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            exit(EXIT_USAGE);
        }
    }

    exit(run(&config));
}
