//! Coefficient `a(x,t) > 0` of `u_tt − a u_xx`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `a(x,t) = ((x+1)² + 1)/(t+1)`.
    Curved,
    /// Bilinear interpolation of samples on a uniform `(nx+1) × (nt+1)`
    /// lattice of `[0,1]²`; `values[i * (nt+1) + j] = a(i/nx, j/nt)`.
    Tabulated {
        nx: usize,
        nt: usize,
        values: Vec<f64>,
    },
}

impl Coefficient {
    pub fn constant(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Hyperbolicity(format!(
                "coefficient must be positive, got {a}"
            )));
        }
        Ok(Self::Constant(a))
    }

    pub fn tabulated(nx: usize, nt: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || nt == 0 || values.len() != (nx + 1) * (nt + 1) {
            return Err(Error::Config(format!(
                "tabulated coefficient needs (nx+1)(nt+1) = {} values, got {}",
                (nx + 1) * (nt + 1),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Hyperbolicity(format!(
                "tabulated coefficient has non-positive value {v}"
            )));
        }
        Ok(Self::Tabulated { nx, nt, values })
    }

    /// Reads a CSV table without header: row `i` holds `a(i/nx, j/nt)` for `j = 0..=nt`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad coefficient entry {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let nt1 = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.len() < 2 || nt1 < 2 || rows.iter().any(|r| r.len() != nt1) {
            return Err(Error::Config(
                "coefficient table must be a rectangular grid of at least 2x2".into(),
            ));
        }
        let nx = rows.len() - 1;
        Self::tabulated(nx, nt1 - 1, rows.into_iter().flatten().collect())
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Curved => ((x + 1.0).powi(2) + 1.0) / (t + 1.0),
            Self::Tabulated { nx, nt, values } => {
                let fx = x.clamp(0.0, 1.0) * *nx as f64;
                let ft = t.clamp(0.0, 1.0) * *nt as f64;
                let i = (fx.floor() as usize).min(nx - 1);
                let j = (ft.floor() as usize).min(nt - 1);
                let (u, v) = (fx - i as f64, ft - j as f64);
                let at = |i: usize, j: usize| values[i * (nt + 1) + j];
                (1.0 - u) * (1.0 - v) * at(i, j)
                    + u * (1.0 - v) * at(i + 1, j)
                    + (1.0 - u) * v * at(i, j + 1)
                    + u * v * at(i + 1, j + 1)
            }
        }
    }

    /// Upper bound of `√a` on the unit square.
    pub fn max_speed(&self) -> f64 {
        match self {
            Self::Constant(a) => a.sqrt(),
            Self::Curved => 5f64.sqrt(),
            Self::Tabulated { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt(),
        }
    }

    /// Whether `a` has no `x` dependence.
    pub fn is_x_independent(&self) -> bool {
        match self {
            Self::Constant(_) => true,
            Self::Curved => false,
            Self::Tabulated { nx, nt, values } => {
                (0..=*nt).all(|j| (0..=*nx).all(|i| values[i * (nt + 1) + j] == values[j]))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant(a) => format!("constant({a})"),
            Self::Curved => "curved".into(),
            Self::Tabulated { nx, nt, .. } => format!("tabulated({nx}x{nt})"),
        }
    }
}
