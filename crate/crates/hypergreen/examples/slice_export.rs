//! Exports a fixed-source slice `G̃(·,·; y, s)` of a learned model, with the
//! exact values, and checks how much of the error sits near characteristics.

use hypergreen::experiments::{
    bundle_for, error_localization, export_slice, learn_with, tube_radius, RunConfig,
};

fn main() -> hypergreen::error::Result<()> {
    let cfg = RunConfig {
        eps: 0.03,
        kc: 0.3,
        ..RunConfig::default()
    };
    // The error estimate costs extra solves and is not needed here.
    let out = learn_with(cfg.oracle.build(&cfg.grid()?)?, &cfg, false)?;
    let wave = cfg.oracle.exact_wave();
    let slice = export_slice(&out.model, 0.8, 0.1, 128, wave.as_ref())?;
    let max_err = slice
        .cells
        .iter()
        .filter_map(|c| c.abs_error)
        .fold(0.0, f64::max);
    println!(
        "{} cells, {} leaf rectangles, max |error| = {max_err:.3e}",
        slice.cells.len(),
        slice.blocks.len()
    );
    let radius = tube_radius(out.tree.final_level());
    let share = error_localization(&slice, &bundle_for(&cfg.oracle)?, radius)?;
    println!(
        "top-decile errors within {radius} of a characteristic: {:.1}%",
        100.0 * share
    );
    Ok(())
}
