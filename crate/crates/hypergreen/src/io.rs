//! Artifact formats: JSON for structured data, CSV for arrays. Every file
//! carries [`SCHEMA_VERSION`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, SubGrid, SubdomainBox};
use crate::linalg::Quasimatrix;
use crate::model::{GreenModel, LowRankBlock, ModelMeta, ModelNode};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Writes a CSV with header; `None` cells are left empty.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<Option<f64>>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(
            row.iter()
                .map(|v| v.map(|x| format!("{x}")).unwrap_or_default()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub panels: usize,
    pub nodes_per_panel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockFile {
    #[serde(rename = "box")]
    pub bx: SubdomainBox,
    pub rank: usize,
    /// Columns of `Q` on the output window, x-major node order.
    pub q: Vec<Vec<f64>>,
    /// Columns of `C = F*Q` on the input window.
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub meta: ModelMeta,
    pub nodes: Vec<ModelNode>,
    pub blocks: Vec<BlockFile>,
}

fn columns(q: &Quasimatrix) -> Vec<Vec<f64>> {
    (0..q.ncols()).map(|j| q.column(j)).collect()
}

impl ModelFile {
    pub fn from_model(model: &GreenModel) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid: GridSpec {
                panels: model.grid.gx.panels,
                nodes_per_panel: model.grid.gx.nodes_per_panel,
            },
            meta: model.meta.clone(),
            nodes: model.nodes.clone(),
            blocks: model
                .blocks
                .iter()
                .map(|b| BlockFile {
                    bx: b.bx,
                    rank: b.rank(),
                    q: columns(&b.q),
                    c: columns(&b.c),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<GreenModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "model schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let grid = build_grid(self.grid.panels, self.grid.nodes_per_panel)?;
        let blocks = self
            .blocks
            .into_iter()
            .map(|b| {
                let x = Arc::new(SubGrid::new(&grid, b.bx.output())?);
                let y = Arc::new(SubGrid::new(&grid, b.bx.input())?);
                if b.q.len() != b.rank || b.c.len() != b.rank {
                    return Err(Error::Config(format!(
                        "block {:?} declares rank {} with mismatched columns",
                        b.bx, b.rank
                    )));
                }
                Ok(LowRankBlock {
                    bx: b.bx,
                    q: Quasimatrix::from_columns(&x, &b.q)?,
                    c: Quasimatrix::from_columns(&y, &b.c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GreenModel {
            grid,
            nodes: self.nodes,
            blocks,
            meta: self.meta,
        })
    }
}

pub fn save_model(path: &Path, model: &GreenModel) -> Result<()> {
    write_json(path, &ModelFile::from_model(model))
}

pub fn load_model(path: &Path) -> Result<GreenModel> {
    read_json::<ModelFile>(path)?.into_model()
}

/// Per-phase query totals of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub schema_version: u32,
    pub seed: u64,
    pub k: usize,
    pub q: usize,
    pub boxes_tested: usize,
    pub green_leaves: usize,
    /// `boxes_tested · k(8q+5)`.
    pub detection: u64,
    /// `green_leaves · 2k`.
    pub approximation: u64,
    pub total: u64,
    /// Value of the oracle's own counter after training.
    pub oracle_counter: u64,
    /// Extra queries spent estimating the error (separate counter).
    pub evaluation: u64,
}

/// A dense matrix as row vectors, for small JSON dumps.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
