//! Randomized range finder on an operator with known singular values:
//! projection error against the optimal `σ_{k+1}` for a few power exponents.

use std::sync::Arc;

use hypergreen::gp::{kernel_spectrum, CovarianceKernel};
use hypergreen::grid::{build_grid, SubGrid};
use hypergreen::oracles::{make_synthetic_operator, Oracle};
use hypergreen::rsvd::randomized_range;

fn main() -> hypergreen::error::Result<()> {
    let grid = build_grid(8, 4)?;
    let sigmas: Vec<f64> = (0..40).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let op = make_synthetic_operator(&sigmas, &grid, 3)?;
    let oracle = Oracle::new(Arc::new(op.clone()));
    let kernel = CovarianceKernel::squared_exponential(0.1, 1.0)?;
    let spec = kernel_spectrum(&kernel, &Arc::new(SubGrid::full(&grid)))?;
    let k = 10;
    println!("k = {k}, optimal error σ_(k+1) = {:.4}", sigmas[k]);
    for q in 0..4 {
        let basis = randomized_range(&oracle.full(), &spec.sample(k, 7), q)?;
        println!(
            "q = {q}: ‖(I − QQ*)F‖ = {:.4}",
            op.projection_error(&basis)?
        );
    }
    println!("oracle queries: {}", oracle.queries());
    Ok(())
}
