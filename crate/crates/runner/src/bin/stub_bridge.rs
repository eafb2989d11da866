//! Protocol stub: echoes actions into the observation and rewards their sum.
//! Serves stdin/stdout, or one TCP session with `--tcp ADDR`.

use std::io::{BufReader, Write};
use std::net::TcpListener;

use clap::Parser;
use openloop::bridge::stub::{serve, StubConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 4)]
    obs_dim: usize,
    #[arg(long, default_value_t = 2)]
    act_dim: usize,
    #[arg(long, default_value_t = 0.05)]
    control_period: f64,
    #[arg(long, default_value_t = 1000)]
    episode_steps: usize,
    /// Listen on this address and serve a single connection.
    #[arg(long)]
    tcp: Option<String>,
}

fn main() {
    let args = Args::parse();
    let config = StubConfig {
        obs_dim: args.obs_dim,
        act_dim: args.act_dim,
        control_period: args.control_period,
        episode_steps: args.episode_steps,
    };
    let result = match &args.tcp {
        Some(addr) => TcpListener::bind(addr).and_then(|listener| {
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            let (stream, _) = listener.accept()?;
            serve(BufReader::new(stream.try_clone()?), stream, config)
        }),
        None => serve(std::io::stdin().lock(), std::io::stdout().lock(), config),
    };
    if let Err(e) = result {
        eprintln!("stub bridge: {e}");
        std::process::exit(2);
    }
}
