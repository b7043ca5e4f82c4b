//! Sweeps the adaptive threshold through the experiment layer and prints the
//! same comparison table the `compare` subcommand writes.

use adasched::experiment::{cmd_compare, sweep, write_compare};
use adasched::ExperimentConfig;

fn main() -> adasched::Result<()> {
    let mut base = ExperimentConfig::default();
    base.set("mixture", "skewed-2d")?;
    base.set("batch", "1000")?;
    let configs = sweep(&base, "theta=0,0.6,0.7,0.8,0.9,1")?;
    let rows = cmd_compare(&configs)?;
    write_compare(&rows, std::io::stdout().lock())
}
