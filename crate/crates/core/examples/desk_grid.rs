//! Runs the evaluation grid on synthetic data and prints the table.
//!
//! `cargo run --release -p graphfraud-core --example desk_grid -- [n_users] [seeds]`

use graphfraud_core::eval::{run_synthetic_grid, EvalConfig, SynthConfig};

fn main() -> graphfraud_core::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n_users = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let synth = SynthConfig {
        n_users,
        ..SynthConfig::default()
    };
    let mut cfg = EvalConfig::desk_preset();
    cfg.seeds = (0..seeds).collect();
    let start = std::time::Instant::now();
    let result = run_synthetic_grid(&synth, &cfg)?;
    println!("{}", result.render_table());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
