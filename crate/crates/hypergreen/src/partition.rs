//! Adaptive 16-way partition of `[0,1]⁴` driven by the rank test.
//!
//! Levels are processed breadth-first: every red box of level `L` is split
//! into its 16 children, each child is tested once, and the loop stops when
//! the red volume drops to `ε²` or the depth cap is reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SubdomainBox;
use crate::oracles::Oracle;
use crate::rank::{detect_rank, DetectConfig, RankDecision, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
}

/// The 16 children of `bx`; fails past `max_level`.
pub fn subdivide(bx: &SubdomainBox, max_level: u32) -> Result<[SubdomainBox; 16]> {
    if bx.level >= max_level {
        return Err(Error::Depth(format!(
            "box at level {} cannot be split below level {max_level}",
            bx.level
        )));
    }
    Ok(bx.children())
}

/// `n_ε = ⌈log₂(1/ε²)⌉`.
pub fn depth_target(eps: f64) -> u32 {
    (1.0 / (eps * eps)).log2().ceil() as u32
}

#[derive(Debug, Clone)]
pub struct PartitionNode {
    pub bx: SubdomainBox,
    pub color: Color,
    pub decision: RankDecision,
    /// Indices of the 16 children (empty for leaves).
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub tested: usize,
    pub red: usize,
    pub green: usize,
    pub red_volume: f64,
}

#[derive(Debug, Clone)]
pub struct PartitionConfig {
    pub detect: DetectConfig,
    pub seed: u64,
    /// Depth cap from the grid (boxes must stay panel-aligned).
    pub max_level: u32,
    /// Total query cap including the `2k` per green leaf of the approximant.
    pub budget: Option<u64>,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct PartitionTree {
    /// Node 0 is the root `[0,1]⁴`.
    pub nodes: Vec<PartitionNode>,
    pub levels: Vec<LevelStats>,
    pub depth: u32,
    pub detection_queries: u64,
    /// The budget stopped refinement early.
    pub partial: bool,
}

impl PartitionTree {
    pub fn root(&self) -> &PartitionNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PartitionNode> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    pub fn green_leaves(&self) -> impl Iterator<Item = &PartitionNode> {
        self.leaves().filter(|n| n.color == Color::Green)
    }

    pub fn red_leaves(&self) -> impl Iterator<Item = &PartitionNode> {
        self.leaves().filter(|n| n.color == Color::Red)
    }

    /// Total volume of the red boxes at `level`.
    pub fn red_volume(&self, level: u32) -> Result<f64> {
        self.levels
            .iter()
            .find(|s| s.level == level)
            .map(|s| s.red_volume)
            .ok_or_else(|| Error::Depth(format!("level {level} is not in the tree")))
    }

    pub fn final_level(&self) -> u32 {
        self.levels.last().map(|s| s.level).unwrap_or(0)
    }
}

fn budget_check(cfg: &PartitionConfig, spent: u64, greens: usize, new_boxes: usize) -> Result<()> {
    let Some(cap) = cfg.budget else { return Ok(()) };
    let d = &cfg.detect;
    let need = spent
        + new_boxes as u64 * (d.detection_cost() + d.assembly_cost())
        + greens as u64 * d.assembly_cost();
    if need > cap {
        return Err(Error::Budget { spent: need, cap });
    }
    Ok(())
}

fn test_boxes(
    oracle: &Oracle,
    boxes: &[SubdomainBox],
    cfg: &PartitionConfig,
) -> Result<Vec<RankDecision>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        boxes
            .par_iter()
            .map(|bx| detect_rank(oracle, *bx, &cfg.detect, cfg.seed))
            .collect()
    })
}

fn colored(decision: RankDecision) -> PartitionNode {
    let color = match decision.verdict {
        Verdict::LowRank => Color::Green,
        Verdict::HighRank => Color::Red,
    };
    let mut node = PartitionNode {
        bx: decision.bx,
        color,
        decision,
        children: Vec::new(),
    };
    if color == Color::Red {
        // Red boxes are never approximated; drop the basis.
        node.decision.range.data = node.decision.range.data.columns(0, 0).into_owned();
    }
    node
}

/// Builds the red/green tree. When the budget would be exceeded the partial
/// tree is returned with `partial` set (the error is reported by the caller).
pub fn adaptive_partition(
    oracle: &Oracle,
    eps: f64,
    cfg: &PartitionConfig,
) -> Result<PartitionTree> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Config(format!(
            "eps must lie in (0, 1/2), got {eps}"
        )));
    }
    let grid_cap = oracle.grid().max_level();
    if cfg.max_level > grid_cap {
        return Err(Error::Depth(format!(
            "max level {} exceeds the grid's {grid_cap}",
            cfg.max_level
        )));
    }
    let depth = depth_target(eps).min(cfg.max_level);
    let start = oracle.queries();
    budget_check(cfg, 0, 0, 1)?;
    let root = colored(test_boxes(oracle, &[SubdomainBox::ROOT], cfg)?.remove(0));
    let mut nodes = vec![root];
    let mut frontier: Vec<usize> = if nodes[0].color == Color::Red {
        vec![0]
    } else {
        vec![]
    };
    let mut levels = vec![LevelStats {
        level: 0,
        tested: 1,
        red: frontier.len(),
        green: 1 - frontier.len(),
        red_volume: frontier.len() as f64,
    }];
    let mut partial = false;
    let mut greens = usize::from(nodes[0].color == Color::Green);
    for level in 0..depth {
        let vol = levels.last().expect("root level").red_volume;
        if vol <= eps * eps || frontier.is_empty() {
            break;
        }
        let boxes: Vec<SubdomainBox> = frontier
            .iter()
            .map(|&i| subdivide(&nodes[i].bx, depth))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if budget_check(cfg, oracle.queries() - start, greens, boxes.len()).is_err() {
            partial = true;
            break;
        }
        let decisions = test_boxes(oracle, &boxes, cfg)?;
        let mut next = Vec::new();
        let mut stats = LevelStats {
            level: level + 1,
            tested: boxes.len(),
            red: 0,
            green: 0,
            red_volume: 0.0,
        };
        for (chunk, &parent) in decisions.chunks(16).zip(&frontier) {
            let mut kids = Vec::with_capacity(16);
            for d in chunk {
                let node = colored(d.clone());
                match node.color {
                    Color::Red => {
                        stats.red += 1;
                        stats.red_volume += node.bx.volume();
                        next.push(nodes.len());
                    }
                    Color::Green => {
                        stats.green += 1;
                        greens += 1;
                    }
                }
                kids.push(nodes.len());
                nodes.push(node);
            }
            nodes[parent].children = kids;
        }
        levels.push(stats);
        frontier = next;
    }
    Ok(PartitionTree {
        nodes,
        levels,
        depth,
        detection_queries: oracle.queries() - start,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdivision_tiles_the_parent() {
        let kids = subdivide(&SubdomainBox::ROOT, 3).unwrap();
        let vol: f64 = kids.iter().map(|b| b.volume()).sum();
        assert!((vol - 1.0).abs() < 1e-15);
        assert!(kids.iter().all(|b| b.volume() == 1.0 / 16.0));
        let grand: Vec<SubdomainBox> = kids.iter().flat_map(|k| subdivide(k, 3).unwrap()).collect();
        assert_eq!(grand.len(), 256);
        let mut seen = std::collections::HashSet::new();
        assert!(grand.iter().all(|b| seen.insert(*b)));
        assert!(matches!(subdivide(&grand[0], 2), Err(Error::Depth(_))));
    }

    #[test]
    fn depth_target_values() {
        assert_eq!(depth_target(0.1), 7);
        assert_eq!(depth_target(0.4), 3);
        assert_eq!(depth_target(0.25), 4);
    }
}
