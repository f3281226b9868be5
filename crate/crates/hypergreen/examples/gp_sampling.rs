//! Draws Gaussian-process forcings on the full domain and on a subdomain,
//! and prints the leading covariance eigenvalues.

use std::sync::Arc;

use hypergreen::gp::{kernel_spectrum, CovarianceKernel};
use hypergreen::grid::{build_grid, Rect, SubGrid};

fn main() -> hypergreen::error::Result<()> {
    let grid = build_grid(8, 8)?;
    let kernel = CovarianceKernel::squared_exponential(0.1, 1.0)?;
    for (name, domain) in [
        ("full square", SubGrid::full(&grid)),
        (
            "level-2 rect",
            SubGrid::new(
                &grid,
                Rect {
                    level: 2,
                    ix: 1,
                    it: 2,
                },
            )?,
        ),
    ] {
        let spec = kernel_spectrum(&kernel, &Arc::new(domain))?;
        let lead: Vec<String> = spec
            .eigenvalues
            .iter()
            .take(5)
            .map(|l| format!("{l:.3e}"))
            .collect();
        let samples = spec.sample(3, 42);
        let gram = samples.gram();
        let norms: Vec<String> = (0..samples.ncols())
            .map(|j| format!("{:.3}", gram[(j, j)].sqrt()))
            .collect();
        println!(
            "{name}: {} modes, trace {:.4}, λ = [{}]",
            spec.len(),
            spec.trace(),
            lead.join(", ")
        );
        println!("  sample L² norms: [{}]", norms.join(", "));
    }
    Ok(())
}
