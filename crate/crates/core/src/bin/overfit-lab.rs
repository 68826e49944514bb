use std::process::ExitCode;

use overfit_lab::cli_io::{main_with, SEED_ENV};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = std::env::var(SEED_ENV).ok();
    ExitCode::from(main_with(&args, seed.as_deref()) as u8)
}
