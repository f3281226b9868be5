//! Solves `u_tt = 4 u_xx`, `u(x,0) = 0`, `u_t(x,0) = χ_[0.2,0.3]` with a
//! learned model through Duhamel's principle and compares it with the solver.

use hypergreen::experiments::{ivp, learn_with, RunConfig};

fn main() -> hypergreen::error::Result<()> {
    let cfg = RunConfig {
        eps: 0.02,
        kc: 0.5,
        ..RunConfig::default()
    };
    // The error estimate costs extra solves and is not needed here.
    let out = learn_with(cfg.oracle.build(&cfg.grid()?)?, &cfg, false)?;
    let res = ivp(&out.model, &out.oracle.fresh(), (0.2, 0.3), None, Some(2.0))?;
    println!("δ = {:.4}, smeared = {}", res.delta, res.smeared);
    if let Some(e) = res.direct_max_error {
        println!("solver vs d'Alembert: max error {e:.3e}");
    }
    println!("model vs solver: relative L² {:.3e}", res.model_relative_l2);
    Ok(())
}
