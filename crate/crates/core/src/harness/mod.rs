//! Experiment orchestration: full simulated runs, regret and communication
//! accounting, the grid oracle and the meshgrid baseline.

pub mod baseline;
pub mod comm;
pub mod oracle;
pub mod regret;

use rayon::prelude::*;
use thiserror::Error;

use crate::objectives::{make_ensemble, GlobalObjective, NoiseModel, ObjectiveError};
use crate::partition::{NodeId, PartitionSpec};
use crate::privacy::DpConfig;
use crate::protocol::{
    client_execute, ClientPhase, ClientStreams, PhasePlan, ProtocolError, RewardChannel, Server,
    ServerConfig,
};

pub use baseline::{exploration_rounds, run_grid_baseline};
pub use comm::{communication_bound, communication_check, CommCheck};
pub use oracle::{estimate_fstar, grid_extrema, OracleError};
pub use regret::{aggregate_runs, cumulative_regret, RegretBand, RegretSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("objective has dimension {objective} but the partition has dimension {partition}")]
    Dimension { objective: usize, partition: usize },
    #[error("{0}")]
    Infeasible(String),
    #[error("runs do not share a configuration: {0}")]
    Mismatch(String),
    #[error("client {client} pulled node {node} in two phases")]
    RepeatedQuery { client: usize, node: NodeId },
}

/// Everything a run needs apart from the seed.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub server: ServerConfig,
    pub partition: PartitionSpec,
    /// Global objective; must map into `[0, 1]`.
    pub objective: GlobalObjective,
    /// Scale of the per-client perturbation coefficients.
    pub perturb_scale: f64,
    pub noise: NoiseModel,
    /// Enables the private variant.
    pub privacy: Option<DpConfig>,
    /// Optimum used for regret increments.
    pub fstar: f64,
}

impl ExperimentSetup {
    /// Server constants actually used: the private variant replaces `c` and
    /// `c1` with the noise-adjusted theory constants.
    pub fn effective_server(&self) -> ServerConfig {
        match &self.privacy {
            Some(dp) => self.server.with_private_constants(dp.variance),
            None => self.server.clone(),
        }
    }

    fn channel(&self) -> RewardChannel {
        match &self.privacy {
            Some(dp) => RewardChannel::Gaussian {
                variance: dp.variance,
            },
            None => RewardChannel::Plain,
        }
    }

    /// Short description used to check that runs are comparable.
    pub fn label(&self, algorithm: &str) -> String {
        let s = self.effective_server();
        format!(
            "{algorithm} {} M={} T={} k={} nu1={} rho={} c={} c1={} delta={} noise={:?}/{} perturb={} dp={:?}",
            self.objective.descriptor(),
            s.clients,
            s.horizon,
            s.arity,
            s.nu1,
            s.rho,
            s.c,
            s.c1,
            s.delta,
            self.noise.kind,
            self.noise.scale,
            self.perturb_scale,
            self.privacy.map(|p| (p.epsilon, p.delta)),
        )
    }
}

/// One evaluation by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct PullRecord {
    pub client: usize,
    /// 1-based count of this client's pulls so far.
    pub round: u64,
    pub phase: u32,
    pub depth: u32,
    pub node_index: u64,
    pub point: Vec<f64>,
    pub reward: f64,
    /// `f* - f(x)` on the global objective.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub phase: u32,
    pub depth: u32,
    pub active: Vec<NodeId>,
    pub eliminated: Vec<NodeId>,
    /// Empirically best node, when elimination ran.
    pub best: Option<NodeId>,
    pub pulls_per_client: u64,
    /// Pulls each client made in this phase.
    pub rounds: u64,
    pub truncated: bool,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// A client receiving the phase plan.
    Broadcast,
    /// A client sending its local means.
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommEvent {
    pub direction: Direction,
    pub phase: u32,
    pub client: usize,
    /// Number of values carried.
    pub payload: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub label: String,
    pub seed: u64,
    pub server: ServerConfig,
    pub dimension: usize,
    pub fstar: f64,
    pub pulls: Vec<PullRecord>,
    pub phases: Vec<PhaseRecord>,
    pub comms: Vec<CommEvent>,
}

impl RunTrace {
    pub fn clients(&self) -> usize {
        self.server.clients
    }

    pub fn horizon(&self) -> u64 {
        self.server.horizon
    }

    /// Pulls made by `client`.
    pub fn client_pulls(&self, client: usize) -> impl Iterator<Item = &PullRecord> {
        self.pulls.iter().filter(move |p| p.client == client)
    }
}

pub(crate) fn phase_comms(plan_payload: usize, phase: u32, reports: &[usize]) -> Vec<CommEvent> {
    let mut events: Vec<CommEvent> = (0..reports.len())
        .map(|client| CommEvent {
            direction: Direction::Broadcast,
            phase,
            client,
            payload: plan_payload,
        })
        .collect();
    events.extend(reports.iter().enumerate().map(|(client, &payload)| CommEvent {
        direction: Direction::Report,
        phase,
        client,
        payload,
    }));
    events
}

/// `(depth, node_index, point, reward)` in the order a client pulled them.
pub(crate) type ClientSamples = Vec<(u32, u64, Vec<f64>, f64)>;

pub(crate) fn record_pulls(
    trace: &mut Vec<PullRecord>,
    phase: u32,
    used: u64,
    outputs: Vec<(usize, ClientSamples)>,
    objective: &GlobalObjective,
    fstar: f64,
) {
    for (client, pulls) in outputs {
        for (j, (depth, node_index, point, reward)) in pulls.into_iter().enumerate() {
            let regret = fstar - objective.evaluate(&point);
            trace.push(PullRecord {
                client,
                round: used + j as u64 + 1,
                phase,
                depth,
                node_index,
                point,
                reward,
                regret,
            });
        }
    }
}

fn execute_clients(
    setup: &ExperimentSetup,
    plan: &PhasePlan,
    ensemble: &crate::objectives::ObjectiveEnsemble,
    channel: RewardChannel,
    seed: u64,
) -> Vec<ClientPhase> {
    (0..plan.clients)
        .into_par_iter()
        .map(|m| {
            let mut streams = ClientStreams::for_phase(seed, m, plan.phase);
            client_execute(plan, m, ensemble, &setup.partition, channel, &mut streams)
        })
        .collect()
}

/// Runs the federated protocol until every client has spent its horizon.
///
/// The trace is a pure function of `(setup, seed)`: clients run in parallel
/// but each owns the streams keyed by its id and the phase.
pub fn run_experiment(setup: &ExperimentSetup, seed: u64) -> Result<RunTrace, HarnessError> {
    if setup.objective.dimension() != setup.partition.dimension() {
        return Err(HarnessError::Dimension {
            objective: setup.objective.dimension(),
            partition: setup.partition.dimension(),
        });
    }
    let server_cfg = setup.effective_server();
    let clients = server_cfg.clients;
    let mut server = Server::new(server_cfg.clone())?;
    let ensemble = make_ensemble(
        setup.objective.clone(),
        clients,
        setup.perturb_scale,
        setup.noise,
        seed,
    )?;
    let channel = setup.channel();

    let mut pulls = Vec::with_capacity(clients * server_cfg.horizon as usize);
    let mut phases = Vec::new();
    let mut comms = Vec::new();
    let mut used = 0u64;
    while used < server_cfg.horizon {
        let plan = server.next_plan(server_cfg.horizon - used)?;
        let outputs = execute_clients(setup, &plan, &ensemble, channel, seed);
        let payloads: Vec<usize> = outputs.iter().map(|o| o.report.payload_len()).collect();
        let events = phase_comms(plan.active.len(), plan.phase, &payloads);
        let reports: Vec<_> = outputs.iter().map(|o| o.report.clone()).collect();
        let conclusion = server.conclude(&plan, &reports)?;

        let samples = outputs
            .into_iter()
            .enumerate()
            .map(|(m, o)| {
                let list = o
                    .pulls
                    .into_iter()
                    .map(|p| (p.node.depth, p.node.index, p.point, p.reward))
                    .collect();
                (m, list)
            })
            .collect();
        record_pulls(&mut pulls, plan.phase, used, samples, &setup.objective, setup.fstar);
        used += plan.phase_length;

        let (eliminated, best) = match conclusion.elimination {
            Some(outcome) => (outcome.eliminated, Some(outcome.best)),
            None => (Vec::new(), None),
        };
        phases.push(PhaseRecord {
            phase: plan.phase,
            depth: plan.depth,
            active: plan.active.clone(),
            eliminated,
            best,
            pulls_per_client: plan.pulls_per_client,
            rounds: plan.phase_length,
            truncated: plan.truncated,
            events: events.len(),
        });
        comms.extend(events);
    }

    let algorithm = if setup.privacy.is_some() { "dp-fedpne" } else { "fedpne" };
    Ok(RunTrace {
        label: setup.label(algorithm),
        seed,
        server: server_cfg,
        dimension: setup.partition.dimension(),
        fstar: setup.fstar,
        pulls,
        phases,
        comms,
    })
}

/// Fails if a node's statistics were requested from the same client in two
/// different phases.
pub fn check_single_query(trace: &RunTrace) -> Result<(), HarnessError> {
    let mut first_phase = std::collections::HashMap::new();
    for pull in &trace.pulls {
        let key = (pull.client, pull.depth, pull.node_index);
        let phase = *first_phase.entry(key).or_insert(pull.phase);
        if phase != pull.phase {
            return Err(HarnessError::RepeatedQuery {
                client: pull.client,
                node: NodeId {
                    depth: pull.depth,
                    index: pull.node_index,
                },
            });
        }
    }
    Ok(())
}
