//! Closed-form Green's function of `u_tt = c² u_xx` on the unit square,
//! evaluated at a few points around a source.

use hypergreen::oracles::{exact_wave_green_value, WaveSpec};

fn main() -> hypergreen::error::Result<()> {
    let spec = WaveSpec::new(3.0)?;
    let (y, s) = (0.5, 0.1);
    println!(
        "c = {}, images = {}, source (y, s) = ({y}, {s})",
        spec.c, spec.images
    );
    for (x, t) in [(0.5, 0.2), (0.2, 0.3), (0.5, 0.6), (0.9, 0.15), (0.5, 0.05)] {
        println!(
            "G({x:.2}, {t:.2}) = {:+.6}",
            exact_wave_green_value(&spec, x, t, y, s)
        );
    }
    Ok(())
}
