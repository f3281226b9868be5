//! Reflecting characteristics `x′ = ±√a(x,t)` and the sampled bundle `Z`
//! of all characteristics through a lattice of source points.

use crate::error::{Error, Result};
use crate::grid::SubdomainBox;

/// One ray from `origin`, split into segments at each wall reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicPath {
    pub origin: (f64, f64),
    /// Direction of the first segment, `+1` or `−1`.
    pub initial_sign: f64,
    /// Sampled `(x, t)` points of each segment; consecutive segments share
    /// their reflection point.
    pub segments: Vec<Vec<(f64, f64)>>,
    pub reflections: Vec<f64>,
}

impl CharacteristicPath {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.segments.iter().flatten().copied()
    }

    /// Final point of the ray (at `t = 1`).
    pub fn end(&self) -> (f64, f64) {
        *self
            .segments
            .last()
            .and_then(|s| s.last())
            .unwrap_or(&self.origin)
    }
}

fn speed<F: Fn(f64, f64) -> f64>(a: &F, x: f64, t: f64) -> Result<f64> {
    let v = a(x, t);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Hyperbolicity(format!("a({x}, {t}) = {v}")));
    }
    Ok(v.sqrt())
}

/// Classical RK4 step of `x′ = sign·√a` with time step `h`.
fn rk4<F: Fn(f64, f64) -> f64>(a: &F, sign: f64, x: f64, t: f64, h: f64) -> Result<f64> {
    let k1 = sign * speed(a, x, t)?;
    let k2 = sign * speed(a, x + 0.5 * h * k1, t + 0.5 * h)?;
    let k3 = sign * speed(a, x + 0.5 * h * k2, t + 0.5 * h)?;
    let k4 = sign * speed(a, x + h * k3, t + h)?;
    Ok(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn trace_one<F: Fn(f64, f64) -> f64>(
    a: &F,
    x0: f64,
    t0: f64,
    step: f64,
    sign0: f64,
) -> Result<CharacteristicPath> {
    let (mut x, mut t, mut sign) = (x0, t0, sign0);
    let mut segments = vec![vec![(x, t)]];
    let mut reflections = Vec::new();
    speed(a, x, t)?;
    while t < 1.0 {
        if (x <= 0.0 && sign < 0.0) || (x >= 1.0 && sign > 0.0) {
            sign = -sign;
            reflections.push(t);
            segments.push(vec![(x, t)]);
        }
        let h = step.min(1.0 - t);
        let xn = rk4(a, sign, x, t, h)?;
        if (0.0..=1.0).contains(&xn) {
            x = xn;
            t = if h < step { 1.0 } else { t + h };
        } else {
            // Shrink the step until the ray lands on the wall.
            let wall = if xn < 0.0 { 0.0 } else { 1.0 };
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let xm = rk4(a, sign, x, t, mid)?;
                if (0.0..=1.0).contains(&xm) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            x = wall;
            t += 0.5 * (lo + hi);
        }
        segments
            .last_mut()
            .expect("at least one segment")
            .push((x, t.min(1.0)));
    }
    Ok(CharacteristicPath {
        origin: (x0, t0),
        initial_sign: sign0,
        segments,
        reflections,
    })
}

/// The `(+, −)` pair of reflecting characteristics from `(x0, t0)` up to `t = 1`.
pub fn trace_characteristics<F: Fn(f64, f64) -> f64>(
    a: F,
    x0: f64,
    t0: f64,
    step: f64,
) -> Result<(CharacteristicPath, CharacteristicPath)> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    if !(0.0..=1.0).contains(&x0) || !(0.0..=1.0).contains(&t0) {
        return Err(Error::Domain(format!(
            "start ({x0}, {t0}) outside the unit square"
        )));
    }
    Ok((
        trace_one(&a, x0, t0, step, 1.0)?,
        trace_one(&a, x0, t0, step, -1.0)?,
    ))
}

/// Points of one source `(y, s)` of the bundle.
#[derive(Debug, Clone)]
struct Fiber {
    y: f64,
    s: f64,
    xt: Vec<(f64, f64)>,
}

/// Samples of `Z ⊂ [0,1]⁴`: for each source `(y, s)` on a lattice, the
/// points `(x, t, y, s)` on both characteristics through it.
#[derive(Debug, Clone)]
pub struct CharacteristicBundle {
    fibers: Vec<Fiber>,
}

impl CharacteristicBundle {
    pub fn len(&self) -> usize {
        self.fibers.iter().map(|f| f.xt.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 4]> + '_ {
        self.fibers
            .iter()
            .flat_map(|f| f.xt.iter().map(move |&(x, t)| [x, t, f.y, f.s]))
    }
}

/// Traces characteristics from the `lattice × lattice` sources
/// `(i, j)/(lattice − 1)`.
pub fn sample_bundle<F: Fn(f64, f64) -> f64>(
    a: F,
    lattice: usize,
    step: f64,
) -> Result<CharacteristicBundle> {
    if lattice < 2 {
        return Err(Error::Config(format!(
            "lattice needs at least 2 points per side, got {lattice}"
        )));
    }
    let n = (lattice - 1) as f64;
    let mut fibers = Vec::with_capacity(lattice * lattice);
    for i in 0..lattice {
        for j in 0..lattice {
            let (y, s) = (i as f64 / n, j as f64 / n);
            let (p, m) = trace_characteristics(&a, y, s, step)?;
            let xt = p.points().chain(m.points()).collect();
            fibers.push(Fiber { y, s, xt });
        }
    }
    Ok(CharacteristicBundle { fibers })
}

fn gap(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Sup-norm distance from the sampled bundle to `bx` (0 if a sample lies inside).
pub fn tube_distance(bundle: &CharacteristicBundle, bx: &SubdomainBox) -> Result<f64> {
    if bundle.is_empty() {
        return Err(Error::Config("characteristic bundle has no samples".into()));
    }
    let iv = bx.intervals();
    let mut best = f64::INFINITY;
    for f in &bundle.fibers {
        let source = gap(f.y, iv[2]).max(gap(f.s, iv[3]));
        if source >= best {
            continue;
        }
        for &(x, t) in &f.xt {
            let d = source.max(gap(x, iv[0])).max(gap(t, iv[1]));
            if d < best {
                best = d;
                if best == 0.0 {
                    return Ok(0.0);
                }
            }
        }
    }
    Ok(best)
}

/// Whether some sample of the bundle lies within sup-distance `r` of `p`.
pub fn within_tube(bundle: &CharacteristicBundle, p: [f64; 4], r: f64) -> bool {
    bundle.fibers.iter().any(|f| {
        (f.y - p[2]).abs() <= r
            && (f.s - p[3]).abs() <= r
            && f.xt
                .iter()
                .any(|&(x, t)| (x - p[0]).abs() <= r && (t - p[1]).abs() <= r)
    })
}
