//! Relative error against training queries over a sweep of tolerances.

use hypergreen::experiments::{converge, loglog_slope, RunConfig};

fn main() -> hypergreen::error::Result<()> {
    let cfg = RunConfig {
        nodes: 4,
        ..RunConfig::default()
    };
    let points = converge(&cfg, &[0.4, 0.3, 0.2, 0.15, 0.1])?;
    for p in &points {
        println!(
            "ε = {:.2}: k = {:2}, q = {}, N = {:7}, error = {:.3e}",
            p.eps, p.k, p.q, p.queries, p.relative_error
        );
    }
    let (slope, _) = loglog_slope(&points)?;
    println!("log-log slope: {slope:.3}");
    Ok(())
}
