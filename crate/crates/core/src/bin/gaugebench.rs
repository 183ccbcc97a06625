// SPDX-License-Identifier: Apache-2.0

use clap::Parser;
use gaugebench::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(run(Cli::parse()));
}
