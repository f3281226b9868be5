//! Trains on the exact kernel and on two finite-difference solvers of the
//! same equation, and compares where the partition refines.

use hypergreen::experiments::{compare_solvers, RunConfig};

fn main() -> hypergreen::error::Result<()> {
    let cfg = RunConfig {
        eps: 0.03,
        kc: 0.3,
        max_level: Some(2),
        ..RunConfig::default()
    };
    let cmp = compare_solvers(&cfg, 2.0, 128, 0.9)?;
    for s in &cmp.summaries {
        let vols: Vec<String> = s.red_volume.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "{:8} red leaves {:4}, red volume per level [{}], red inside cone {}, queries {}",
            s.oracle,
            s.red_leaves,
            vols.join(", "),
            s.red_inside_cone,
            s.queries
        );
    }
    Ok(())
}
