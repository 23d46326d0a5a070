//! Simulation library for federated X-armed bandits.
//!
//! Clients share a k-nary partition of a box domain and each can only
//! evaluate its own noisy local objective; the server wants the maximizer of
//! the average objective. The protocol runs in phases: the server broadcasts
//! a set of cells and pull counts, clients return per-cell local means, and
//! the server eliminates cells that are provably worse than the best one
//! before refining the survivors.
//!
//! - [`partition`]: node ids, child expansion and cell geometry.
//! - [`objectives`]: Garland, DoubleSine, SEIR, client ensembles and noise.
//! - [`protocol`]: thresholds, phase plans, client execution, aggregation, elimination.
//! - [`privacy`]: Gaussian privatization and the matching confidence constants.
//! - [`harness`]: full runs, regret, communication accounting and the meshgrid baseline.

pub mod harness;
pub mod objectives;
pub mod partition;
pub mod privacy;
pub mod protocol;
pub mod streams;
