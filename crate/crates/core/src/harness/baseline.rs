//! Federated phased elimination over a fixed meshgrid of arms.
//!
//! Each axis gets `K` arms: one drawn uniformly from the first `1/K` of the
//! axis, the other `K - 1` evenly spaced from there to the upper bound. In
//! phase `p` (starting at 0) every client pulls every surviving arm `2^p`
//! times. The server keeps running means over all phases and drops arm `a`
//! when `mu_a + b_a < mu_best - b_best` with the same radius formula as the
//! tree protocol but no smoothness slack. Once a single arm is left it is
//! pulled for the rest of the horizon.

use rand::Rng;
use rayon::prelude::*;

use super::{phase_comms, record_pulls, ExperimentSetup, HarnessError, PhaseRecord, RunTrace};
use crate::objectives::make_ensemble;
use crate::partition::NodeId;
use crate::protocol::{confidence_radius, PhasePlan};
use crate::streams::{stream, Purpose};

/// Upper limit on `K^D`.
pub const MAX_ARMS: usize = 1 << 20;

/// Arm coordinates along one axis.
pub fn axis_arms<R: Rng + ?Sized>(lower: f64, upper: f64, count: usize, rng: &mut R) -> Vec<f64> {
    let width = upper - lower;
    let start = lower + rng.random::<f64>() * width / count as f64;
    let mut arms = vec![start];
    let mesh_lo = lower + width / count as f64;
    match count {
        0 | 1 => {}
        2 => arms.push(upper),
        _ => {
            let gaps = (count - 2) as f64;
            arms.extend((0..count - 1).map(|j| {
                if j == count - 2 {
                    upper
                } else {
                    mesh_lo + (upper - mesh_lo) * j as f64 / gaps
                }
            }));
        }
    }
    arms
}

fn mesh(setup: &ExperimentSetup, per_axis: usize, seed: u64) -> Vec<Vec<f64>> {
    let domain = setup.partition.domain();
    let mut rng = stream(seed, Purpose::Arms, 0, 0);
    let axes: Vec<Vec<f64>> = (0..domain.dimension())
        .map(|d| axis_arms(domain.lower[d], domain.upper[d], per_axis, &mut rng))
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Runs the meshgrid baseline. Arms appear in the trace as depth 0 with
/// `node_index` equal to the 1-based arm number.
pub fn run_grid_baseline(
    setup: &ExperimentSetup,
    per_axis: usize,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let cfg = setup.effective_server();
    cfg.validate()?;
    let dim = setup.partition.dimension();
    let arm_count = (per_axis as u128).pow(dim as u32);
    if per_axis == 0 || arm_count > MAX_ARMS as u128 || arm_count > cfg.horizon as u128 {
        return Err(HarnessError::Infeasible(format!(
            "{per_axis}^{dim} arms cannot all be pulled once within T = {}",
            cfg.horizon
        )));
    }
    let arms = mesh(setup, per_axis, seed);
    let clients = cfg.clients;
    let ensemble = make_ensemble(
        setup.objective.clone(),
        clients,
        setup.perturb_scale,
        setup.noise,
        seed,
    )?;

    let mut active: Vec<usize> = (0..arms.len()).collect();
    let mut sums = vec![0.0; arms.len()];
    let mut counts = vec![0u64; arms.len()];
    let mut pulls = Vec::new();
    let mut phases = Vec::new();
    let mut comms = Vec::new();
    let mut used = 0u64;
    let mut phase = 0u32;
    while used < cfg.horizon {
        let budget = cfg.horizon - used;
        let exploit = active.len() == 1;
        let per_arm = if exploit {
            budget
        } else {
            1u64.checked_shl(phase).unwrap_or(u64::MAX)
        };
        let nodes: Vec<NodeId> = active
            .iter()
            .map(|&a| NodeId {
                depth: 0,
                index: a as u64 + 1,
            })
            .collect();
        let full = per_arm.saturating_mul(active.len() as u64);
        let (schedule, length, truncated) = if full <= budget {
            (vec![per_arm; active.len()], full, false)
        } else {
            let n = active.len() as u64;
            let (base, extra) = (budget / n, budget % n);
            ((0..n).map(|j| base + u64::from(j < extra)).collect(), budget, true)
        };
        phase += 1;
        let plan = PhasePlan {
            phase,
            depth: 0,
            active: nodes.clone(),
            pulls_per_client: per_arm,
            phase_length: length,
            schedule,
            truncated,
            clients,
        };
        let order = plan.pull_order();
        let outputs: Vec<Vec<(usize, f64)>> = (0..clients)
            .into_par_iter()
            .map(|m| {
                let mut rng = stream(seed, Purpose::Reward, m as u32, phase);
                order
                    .iter()
                    .map(|&pos| {
                        let arm = active[pos];
                        (pos, ensemble.sample_reward(m, &arms[arm], &mut rng))
                    })
                    .collect()
            })
            .collect();

        // clients report per-arm local means; the server folds them into running sums
        let mut payloads = Vec::with_capacity(clients);
        for client_pulls in &outputs {
            let mut local = vec![(0.0, 0u64); active.len()];
            for &(pos, r) in client_pulls {
                local[pos].0 += r;
                local[pos].1 += 1;
            }
            for (pos, (sum, n)) in local.iter().enumerate() {
                if *n > 0 {
                    let arm = active[pos];
                    sums[arm] += sum;
                    counts[arm] += n;
                }
            }
            payloads.push(active.len());
        }
        let events = phase_comms(active.len(), phase, &payloads);

        let samples = outputs
            .into_iter()
            .enumerate()
            .map(|(m, list)| {
                let list = list
                    .into_iter()
                    .map(|(pos, r)| (0, active[pos] as u64 + 1, arms[active[pos]].clone(), r))
                    .collect();
                (m, list)
            })
            .collect();
        record_pulls(&mut pulls, phase, used, samples, &setup.objective, setup.fstar);
        used += length;

        let mut eliminated = Vec::new();
        let mut best_node = None;
        if !truncated && !exploit {
            let means: Vec<f64> = active.iter().map(|&a| sums[a] / counts[a] as f64).collect();
            let radii: Vec<f64> = active
                .iter()
                .map(|&a| confidence_radius(counts[a], &cfg))
                .collect();
            let mut best = 0;
            for (pos, m) in means.iter().enumerate() {
                if *m > means[best] {
                    best = pos;
                }
            }
            best_node = Some(nodes[best]);
            let bar = means[best] - radii[best];
            let mut survivors = Vec::with_capacity(active.len());
            for (pos, &arm) in active.iter().enumerate() {
                if means[pos] + radii[pos] < bar {
                    eliminated.push(nodes[pos]);
                } else {
                    survivors.push(arm);
                }
            }
            active = survivors;
        }
        phases.push(PhaseRecord {
            phase,
            depth: 0,
            active: nodes,
            eliminated,
            best: best_node,
            pulls_per_client: per_arm,
            rounds: length,
            truncated,
            events: events.len(),
        });
        comms.extend(events);
    }

    Ok(RunTrace {
        label: format!("grid K={per_axis} {}", setup.label("grid")),
        seed,
        server: cfg,
        dimension: dim,
        fstar: setup.fstar,
        pulls,
        phases,
        comms,
    })
}

/// Rounds per client spent while more than one candidate was active.
pub fn exploration_rounds(trace: &RunTrace) -> u64 {
    trace
        .phases
        .iter()
        .filter(|p| p.active.len() > 1)
        .map(|p| p.rounds)
        .sum()
}
