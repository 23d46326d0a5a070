//! Cumulative regret and multi-seed aggregation.

use super::{HarnessError, RunTrace};
use crate::objectives::GlobalObjective;

#[derive(Debug, Clone, PartialEq)]
pub struct RegretSummary {
    /// Running regret sum of each client, indexed by `round - 1`.
    pub per_client: Vec<Vec<f64>>,
    /// Sum over clients divided by `M`, indexed by `round - 1`.
    pub average: Vec<f64>,
    pub phases: usize,
    pub comm_events: usize,
    pub fstar: f64,
    pub seed: u64,
}

impl RegretSummary {
    pub fn total(&self) -> f64 {
        self.per_client
            .iter()
            .map(|series| series.last().copied().unwrap_or(0.0))
            .sum()
    }

    pub fn final_average(&self) -> f64 {
        self.average.last().copied().unwrap_or(0.0)
    }
}

/// Per-pull increments `f* - f(x)` accumulated per client and averaged over clients.
pub fn cumulative_regret(trace: &RunTrace, fstar: f64, f: &GlobalObjective) -> RegretSummary {
    let clients = trace.clients();
    let mut increments: Vec<Vec<(u64, f64)>> = vec![Vec::new(); clients];
    for pull in &trace.pulls {
        increments[pull.client].push((pull.round, fstar - f.evaluate(&pull.point)));
    }
    let per_client: Vec<Vec<f64>> = increments
        .into_iter()
        .map(|mut inc| {
            inc.sort_by_key(|(round, _)| *round);
            let mut total = 0.0;
            inc.into_iter()
                .map(|(_, r)| {
                    total += r;
                    total
                })
                .collect()
        })
        .collect();
    let rounds = per_client.iter().map(Vec::len).max().unwrap_or(0);
    let average = (0..rounds)
        .map(|t| {
            per_client
                .iter()
                .map(|series| match series.get(t) {
                    Some(v) => *v,
                    None => series.last().copied().unwrap_or(0.0),
                })
                .sum::<f64>()
                / clients as f64
        })
        .collect();
    RegretSummary {
        per_client,
        average,
        phases: trace.phases.len(),
        comm_events: trace.comms.len(),
        fstar,
        seed: trace.seed,
    }
}

/// Pointwise statistics of the average cumulative regret across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretBand {
    /// 1-based round numbers.
    pub rounds: Vec<u64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n - 1` denominator); zero for one run.
    pub std: Vec<f64>,
    pub runs: usize,
}

/// Mean and standard deviation of the per-client average cumulative regret,
/// aligned by round.
pub fn aggregate_runs(
    traces: &[RunTrace],
    fstar: f64,
    f: &GlobalObjective,
) -> Result<RegretBand, HarnessError> {
    let first = traces
        .first()
        .ok_or_else(|| HarnessError::Mismatch("no runs to aggregate".into()))?;
    for t in traces {
        if t.label != first.label || t.server != first.server {
            return Err(HarnessError::Mismatch(format!(
                "`{}` vs `{}`",
                first.label, t.label
            )));
        }
    }
    let series: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| cumulative_regret(t, fstar, f).average)
        .collect();
    Ok(band_from_series(&series))
}

pub(crate) fn band_from_series(series: &[Vec<f64>]) -> RegretBand {
    let n = series.len();
    let rounds = series.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(rounds);
    let mut std = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let values: Vec<f64> = series
            .iter()
            .map(|s| s.get(t).or(s.last()).copied().unwrap_or(0.0))
            .collect();
        let mu = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        mean.push(mu);
        std.push(var.sqrt());
    }
    RegretBand {
        rounds: (1..=rounds as u64).collect(),
        mean,
        std,
        runs: n,
    }
}
