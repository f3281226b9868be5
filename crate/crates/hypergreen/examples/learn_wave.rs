//! Learns the Green's function of the wave equation with `c = 2`, then saves
//! the model and reports the query accounting and the operator-norm error.

use hypergreen::experiments::{learn, RunConfig};
use hypergreen::io::save_model;

fn main() -> hypergreen::error::Result<()> {
    let cfg = RunConfig {
        eps: 0.05,
        kc: 0.3,
        ..RunConfig::default()
    };
    let out = learn(&cfg)?;
    for l in &out.tree.levels {
        println!(
            "level {}: {} red boxes, red volume {:.4}",
            l.level, l.red, l.red_volume
        );
    }
    let r = &out.report;
    println!(
        "queries: {} detection + {} approximation = {}",
        r.detection, r.approximation, r.total
    );
    if let Some(e) = &out.error {
        println!("relative operator error ≈ {:.3e}", e.relative);
    }
    let path = std::env::temp_dir().join("hypergreen_model.json");
    save_model(&path, &out.model)?;
    println!("model written to {}", path.display());
    Ok(())
}
