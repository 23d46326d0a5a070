//! k-nary hierarchical partition of an axis-aligned box.
//!
//! Nodes are addressed by `(depth, index)` with the root at `(0, 1)`. The
//! children of `(h, i)` are `(h + 1, k*i - j)` for `j = 0..k`, and their
//! cells tile the parent cell: one axis is cut into `k` equal-width slabs and
//! the child with the smallest index receives the lowest slab.
//!
//! Which axis is cut depends only on the depth, either round-robin or drawn
//! from a seeded stream, so the geometry of any node is a pure function of
//! `(node, spec)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("arity must be at least 2, got {0}")]
    Arity(u32),
    #[error("dimension must be at least 1")]
    Dimension,
    #[error("axis {axis}: lower bound {lower} must be below upper bound {upper}")]
    Axis { axis: usize, lower: f64, upper: f64 },
    #[error("domain has {got} axes but dimension is {expected}")]
    DomainShape { expected: usize, got: usize },
    #[error("node ({depth}, {index}) is not valid for arity {arity}")]
    InvalidNode { depth: u32, index: u64, arity: u32 },
    #[error("depth {depth} exceeds the cap of {cap} for arity {arity}")]
    DepthCap { depth: u32, cap: u32, arity: u32 },
}

/// A cell of the partition tree.
///
/// Ordering is lexicographic on `(depth, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub depth: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, index: 1 };

    pub fn new(depth: u32, index: u64, arity: u32) -> Result<Self, PartitionError> {
        let node = NodeId { depth, index };
        if arity < 2 {
            return Err(PartitionError::Arity(arity));
        }
        let cap = max_depth(arity);
        if depth > cap {
            return Err(PartitionError::DepthCap { depth, cap, arity });
        }
        let width = (arity as u64).pow(depth);
        if index == 0 || index > width {
            return Err(PartitionError::InvalidNode {
                depth,
                index,
                arity,
            });
        }
        Ok(node)
    }

    pub fn is_root(&self) -> bool {
        self.depth == 0
    }

    /// `(h - 1, ceil(i / k))`, or `None` for the root.
    pub fn parent(&self, arity: u32) -> Option<NodeId> {
        if self.depth == 0 {
            return None;
        }
        Some(NodeId {
            depth: self.depth - 1,
            index: self.index.div_ceil(arity as u64),
        })
    }

    /// Zero-based slab position of this node inside its parent.
    pub fn slab(&self, arity: u32) -> u64 {
        (self.index - 1) % arity as u64
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.depth, self.index)
    }
}

/// Deepest depth whose index range `1..=k^h` fits below `2^63`.
pub fn max_depth(arity: u32) -> u32 {
    let k = arity as u128;
    let mut depth = 0;
    let mut width: u128 = 1;
    while width * k <= 1u128 << 63 {
        width *= k;
        depth += 1;
    }
    depth
}

/// Children of `node`, ascending by index.
///
/// Panics if the children would lie beyond [`max_depth`]; callers that grow
/// the tree check the cap first.
pub fn children(node: NodeId, arity: u32) -> Vec<NodeId> {
    try_children(node, arity).expect("child depth exceeds the index cap")
}

pub fn try_children(node: NodeId, arity: u32) -> Result<Vec<NodeId>, PartitionError> {
    let cap = max_depth(arity);
    if node.depth + 1 > cap {
        return Err(PartitionError::DepthCap {
            depth: node.depth + 1,
            cap,
            arity,
        });
    }
    let k = arity as u64;
    Ok((0..k)
        .rev()
        .map(|j| NodeId {
            depth: node.depth + 1,
            index: k * node.index - j,
        })
        .collect())
}

/// Which axis gets cut when a depth-`h` cell is split into its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    /// Axis `h mod D`.
    RoundRobin,
    /// Axis drawn uniformly from a ChaCha8 stream seeded with `seed`, stream id `h`.
    SeededRandom { seed: u64 },
}

/// Axis-aligned box with per-axis bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CellBox {
    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + (hi - lo) / 2.0)
            .collect()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    pub fn contains_box(&self, other: &CellBox) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(outer, inner)| outer <= inner)
            && self
                .upper
                .iter()
                .zip(&other.upper)
                .all(|(outer, inner)| inner <= outer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    arity: u32,
    domain: CellBox,
    policy: SplitPolicy,
}

impl PartitionSpec {
    pub fn new(arity: u32, domain: CellBox, policy: SplitPolicy) -> Result<Self, PartitionError> {
        if arity < 2 {
            return Err(PartitionError::Arity(arity));
        }
        if domain.lower.is_empty() {
            return Err(PartitionError::Dimension);
        }
        if domain.lower.len() != domain.upper.len() {
            return Err(PartitionError::DomainShape {
                expected: domain.lower.len(),
                got: domain.upper.len(),
            });
        }
        for (axis, (&lower, &upper)) in domain.lower.iter().zip(&domain.upper).enumerate() {
            if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                return Err(PartitionError::Axis { axis, lower, upper });
            }
        }
        Ok(PartitionSpec {
            arity,
            domain,
            policy,
        })
    }

    /// The unit cube `[0, 1]^dimension`.
    pub fn unit_cube(arity: u32, dimension: usize, policy: SplitPolicy) -> Result<Self, PartitionError> {
        Self::new(
            arity,
            CellBox {
                lower: vec![0.0; dimension],
                upper: vec![1.0; dimension],
            },
            policy,
        )
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &CellBox {
        &self.domain
    }

    pub fn policy(&self) -> SplitPolicy {
        self.policy
    }

    /// Axis that is cut when splitting a depth-`depth` cell.
    pub fn split_axis(&self, depth: u32) -> usize {
        let dim = self.dimension();
        match self.policy {
            SplitPolicy::RoundRobin => depth as usize % dim,
            SplitPolicy::SeededRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(depth as u64);
                rng.random_range(0..dim)
            }
        }
    }

    pub fn cell_bounds(&self, node: NodeId) -> CellBox {
        let k = self.arity as u64;
        let mut cell = self.domain.clone();
        for level in 0..node.depth {
            // ancestor of `node` at depth level + 1
            let shift = node.depth - level - 1;
            let ancestor = (node.index - 1) / k.pow(shift) + 1;
            let slab = (ancestor - 1) % k;
            let axis = self.split_axis(level);
            let (lo, hi) = (cell.lower[axis], cell.upper[axis]);
            let width = hi - lo;
            let new_lo = if slab == 0 {
                lo
            } else {
                lo + width * slab as f64 / k as f64
            };
            let new_hi = if slab + 1 == k {
                hi
            } else {
                lo + width * (slab + 1) as f64 / k as f64
            };
            cell.lower[axis] = new_lo;
            cell.upper[axis] = new_hi;
        }
        cell
    }

    /// Cell center: the point pulled whenever the node is sampled.
    pub fn representative_point(&self, node: NodeId) -> Vec<f64> {
        self.cell_bounds(node).center()
    }

    /// Deepest node at `depth` whose cell contains `point` (the lowest-index
    /// one when the point sits on a shared face).
    pub fn locate(&self, point: &[f64], depth: u32) -> NodeId {
        let k = self.arity as u64;
        let mut node = NodeId::ROOT;
        let mut cell = self.domain.clone();
        for level in 0..depth {
            let axis = self.split_axis(level);
            let kids = children(node, self.arity);
            let (lo, hi) = (cell.lower[axis], cell.upper[axis]);
            let width = hi - lo;
            let mut chosen = kids[kids.len() - 1];
            for (slab, kid) in kids.iter().enumerate() {
                let upper = if slab as u64 + 1 == k {
                    hi
                } else {
                    lo + width * (slab + 1) as f64 / k as f64
                };
                if point[axis] <= upper {
                    chosen = *kid;
                    break;
                }
            }
            node = chosen;
            let slab = node.slab(self.arity);
            cell.lower[axis] = if slab == 0 {
                lo
            } else {
                lo + width * slab as f64 / k as f64
            };
            cell.upper[axis] = if slab + 1 == k {
                hi
            } else {
                lo + width * (slab + 1) as f64 / k as f64
            };
        }
        node
    }
}

/// Diameter bound `nu1 * rho^h` of a depth-`h` cell under the local
/// smoothness assumption.
pub fn depth_diameter(depth: u32, nu1: f64, rho: f64) -> f64 {
    nu1 * rho.powi(depth as i32)
}
