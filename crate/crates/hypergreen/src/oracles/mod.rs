//! Black-box solvers that supply input–output pairs, plus the counting
//! wrapper through which every learning algorithm talks to them.

pub mod characteristics;
pub mod coefficient;
pub mod fd;
pub mod synthetic;
pub mod wave;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Grid2D, SubGrid};
use crate::linalg::Quasimatrix;
use crate::rsvd::LinearOperator;

pub use characteristics::{
    sample_bundle, trace_characteristics, tube_distance, within_tube, CharacteristicBundle,
    CharacteristicPath,
};
pub use coefficient::Coefficient;
pub use fd::{fd_solve, FdOracle, FdScheme, FdSteps};
pub use synthetic::{make_synthetic_operator, SyntheticOperator};
pub use wave::{dalembert_indicator, exact_wave_green_value, ExactWave, WaveSpec};

/// A solver for the forward and adjoint problems on a fixed grid.
pub trait SolutionOperator: Send + Sync {
    fn grid(&self) -> &Arc<Grid2D>;

    fn label(&self) -> String;

    /// Applies the operator (or its adjoint) to full-grid columns.
    fn apply_full(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>>;

    /// The block `R_X F R_Y*` (or `R_Y F* R_X*` when `adjoint`): forward inputs
    /// live on `input`, forward outputs on `output`.
    fn apply_block(
        &self,
        output: &SubGrid,
        input: &SubGrid,
        f: &DMatrix<f64>,
        adjoint: bool,
    ) -> Result<DMatrix<f64>> {
        let (from, to) = if adjoint {
            (output, input)
        } else {
            (input, output)
        };
        let m = self.grid().len();
        let mut full = DMatrix::zeros(m, f.ncols());
        for j in 0..f.ncols() {
            for (a, &k) in from.indices.iter().enumerate() {
                full[(k, j)] = f[(a, j)];
            }
        }
        let u = self.apply_full(&full, adjoint)?;
        Ok(DMatrix::from_fn(to.len(), f.ncols(), |a, j| {
            u[(to.indices[a], j)]
        }))
    }
}

/// Counting front end of a [`SolutionOperator`]; every column sent through
/// `apply` or `apply_adjoint` is one input–output pair.
pub struct Oracle {
    op: Arc<dyn SolutionOperator>,
    counter: AtomicU64,
}

impl Oracle {
    pub fn new(op: Arc<dyn SolutionOperator>) -> Self {
        Self {
            op,
            counter: AtomicU64::new(0),
        }
    }

    /// Same solver, independent counter.
    pub fn fresh(&self) -> Self {
        Self::new(self.op.clone())
    }

    pub fn solver(&self) -> &Arc<dyn SolutionOperator> {
        &self.op
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        self.op.grid()
    }

    pub fn label(&self) -> String {
        self.op.label()
    }

    pub fn queries(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    fn charge(&self, n: usize) {
        self.counter.fetch_add(n as u64, Ordering::SeqCst);
    }

    pub fn apply_columns(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
        if f.nrows() != self.grid().len() {
            return Err(Error::Domain(format!(
                "expected {} rows, got {}",
                self.grid().len(),
                f.nrows()
            )));
        }
        self.charge(f.ncols());
        self.op.apply_full(f, adjoint)
    }

    pub fn apply(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.apply_one(f, false)
    }

    pub fn apply_adjoint(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.apply_one(f, true)
    }

    fn apply_one(&self, f: &DiscreteFunction, adjoint: bool) -> Result<DiscreteFunction> {
        let u = self.apply_columns(
            &DMatrix::from_column_slice(f.values.len(), 1, &f.values),
            adjoint,
        )?;
        DiscreteFunction::new(self.grid(), u.column(0).iter().copied().collect())
    }

    /// The restricted operator `R_X F R_Y*` as a [`LinearOperator`].
    pub fn block(&self, output: Arc<SubGrid>, input: Arc<SubGrid>) -> BlockOperator<'_> {
        BlockOperator {
            oracle: self,
            output,
            input,
        }
    }

    pub fn full(&self) -> BlockOperator<'_> {
        let d = Arc::new(SubGrid::full(self.grid()));
        self.block(d.clone(), d)
    }
}

pub struct BlockOperator<'a> {
    oracle: &'a Oracle,
    output: Arc<SubGrid>,
    input: Arc<SubGrid>,
}

impl LinearOperator for BlockOperator<'_> {
    fn input(&self) -> &Arc<SubGrid> {
        &self.input
    }

    fn output(&self) -> &Arc<SubGrid> {
        &self.output
    }

    fn apply(&self, f: &Quasimatrix) -> Result<Quasimatrix> {
        check_domain(&f.domain, &self.input)?;
        self.oracle.charge(f.ncols());
        let u = self
            .oracle
            .op
            .apply_block(&self.output, &self.input, &f.data, false)?;
        Quasimatrix::new(&self.output, u)
    }

    fn apply_adjoint(&self, g: &Quasimatrix) -> Result<Quasimatrix> {
        check_domain(&g.domain, &self.output)?;
        self.oracle.charge(g.ncols());
        let u = self
            .oracle
            .op
            .apply_block(&self.output, &self.input, &g.data, true)?;
        Quasimatrix::new(&self.input, u)
    }
}

fn check_domain(a: &SubGrid, b: &SubGrid) -> Result<()> {
    if a.rect != b.rect || a.len() != b.len() {
        return Err(Error::Domain(format!(
            "columns live on {:?}, operator expects {:?}",
            a.rect, b.rect
        )));
    }
    Ok(())
}
