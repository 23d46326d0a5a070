//! Federated phased node elimination.
//!
//! Each phase the server grows the active set until it is large enough to
//! keep every client busy, tells each client how often to pull every active
//! node, averages the clients' local means, and drops every node whose upper
//! confidence bound plus the smoothness slack `nu1 * rho^h` falls below the
//! lower bound of the empirically best node. The children of the survivors
//! form the next active set.
//!
//! All active nodes share one depth `h`, and the threshold, radius and slack
//! of a phase are all evaluated at that depth. The expansion test for a set
//! at depth `h` looks at the threshold of the next depth, `tau_{h+1}`, and the
//! root is always split before anything is sampled.

use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::objectives::ObjectiveEnsemble;
use crate::partition::{depth_diameter, max_depth, try_children, NodeId, PartitionError, PartitionSpec};
use crate::privacy::{dp_constants, privatize_rewards};
use crate::streams::{stream, Purpose};

/// Upper bound on the number of simultaneously active nodes.
pub const MAX_ACTIVE_NODES: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error("threshold at depth {depth} is not a positive finite number ({value})")]
    Threshold { depth: u32, value: f64 },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("active set would grow to {0} nodes")]
    ActiveSetTooLarge(usize),
    #[error("no budget left to plan phase {0}")]
    NoBudget(u32),
    #[error("phase {phase}: missing report from client {client}")]
    MissingReport { phase: u32, client: usize },
    #[error("phase {phase}: report from client {client} does not match the plan")]
    ReportMismatch { phase: u32, client: usize },
    #[error("active nodes do not share depth {0}")]
    MixedDepth(u32),
}

/// Constants shared by the server and the analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Partition arity `k`.
    pub arity: u32,
    pub nu1: f64,
    pub rho: f64,
    pub c: f64,
    pub c1: f64,
    /// Confidence level.
    pub delta: f64,
    /// Per-client horizon `T`.
    pub horizon: u64,
    /// Number of clients `M`.
    pub clients: usize,
}

impl ServerConfig {
    /// `nu1 = 1, rho = 0.5, c = 0.1, c1 = 1, delta = 1/M`.
    pub fn experimental(arity: u32, clients: usize, horizon: u64) -> Self {
        ServerConfig {
            arity,
            nu1: 1.0,
            rho: 0.5,
            c: 0.1,
            c1: 1.0,
            delta: 1.0 / clients.max(1) as f64,
            horizon,
            clients,
        }
    }

    /// Experimental smoothness with `c = 2, c1 = (2M)^(1/8)`.
    pub fn theory(arity: u32, clients: usize, horizon: u64) -> Self {
        let (c, c1) = dp_constants(0.0, clients.max(1));
        ServerConfig {
            c,
            c1,
            ..Self::experimental(arity, clients, horizon)
        }
    }

    /// Theory constants recomputed for per-reward Gaussian noise of `variance`.
    pub fn with_private_constants(&self, variance: f64) -> Self {
        let (c, c1) = dp_constants(variance, self.clients);
        ServerConfig {
            c,
            c1,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |msg: &str| Err(ProtocolError::Config(msg.to_string()));
        if self.arity < 2 {
            return fail("k must be at least 2");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail("rho must lie in (0,1)");
        }
        if !(self.nu1 > 0.0) || !self.nu1.is_finite() {
            return fail("nu1 must be > 0");
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return fail("c must be > 0");
        }
        if !(self.c1 > 0.0) || !self.c1.is_finite() {
            return fail("c1 must be > 0");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return fail("delta must lie in (0,1]");
        }
        if self.horizon == 0 {
            return fail("T must be at least 1");
        }
        if self.clients == 0 {
            return fail("M must be at least 1");
        }
        if !(self.log_term() > 0.0) {
            return fail("log(c1 T / delta) must be > 0");
        }
        Ok(())
    }

    /// `ln(c1 T / delta)`.
    pub fn log_term(&self) -> f64 {
        (self.c1 * self.horizon as f64 / self.delta).ln()
    }
}

/// Unrounded threshold `c^2 ln(c1 T / delta) / nu1^2 * rho^(-2h)`.
pub fn threshold_value(depth: u32, cfg: &ServerConfig) -> f64 {
    cfg.c * cfg.c * cfg.log_term() / (cfg.nu1 * cfg.nu1) * cfg.rho.powi(-2 * depth as i32)
}

/// Number of pulls `tau_h` a depth-`h` node needs, the ceiling of
/// [`threshold_value`].
///
/// The result is an integer held in an `f64`: deep thresholds overflow every
/// machine integer long before they overflow a float.
pub fn threshold_tau(depth: u32, cfg: &ServerConfig) -> Result<f64, ProtocolError> {
    let value = threshold_value(depth, cfg);
    if !value.is_finite() || !(value > 0.0) {
        return Err(ProtocolError::Threshold { depth, value });
    }
    Ok(value.ceil())
}

fn expand(active: &[NodeId], arity: u32) -> Result<Vec<NodeId>, ProtocolError> {
    let size = active.len().saturating_mul(arity as usize);
    if size > MAX_ACTIVE_NODES {
        return Err(ProtocolError::ActiveSetTooLarge(size));
    }
    let mut next = Vec::with_capacity(size);
    for node in active {
        next.extend(try_children(*node, arity)?);
    }
    Ok(next)
}

fn check_depth(active: &[NodeId], depth: u32) -> Result<(), ProtocolError> {
    if active.iter().any(|n| n.depth != depth) {
        return Err(ProtocolError::MixedDepth(depth));
    }
    Ok(())
}

/// Replaces the active set by its children while
/// `|K| * tau_{h+1} <= M` or `tau_{h+1} <= 1`; a lone root is always split.
pub fn expand_until_ready(
    active: Vec<NodeId>,
    depth: u32,
    cfg: &ServerConfig,
) -> Result<(Vec<NodeId>, u32), ProtocolError> {
    check_depth(&active, depth)?;
    let mut active = active;
    let mut depth = depth;
    if depth == 0 {
        active = expand(&active, cfg.arity)?;
        depth = 1;
    }
    let clients = cfg.clients as f64;
    loop {
        let next_tau = threshold_tau(depth + 1, cfg)?;
        if active.len() as f64 * next_tau <= clients || next_tau <= 1.0 {
            if depth + 1 > max_depth(cfg.arity) {
                return Err(PartitionError::DepthCap {
                    depth: depth + 1,
                    cap: max_depth(cfg.arity),
                    arity: cfg.arity,
                }
                .into());
            }
            active = expand(&active, cfg.arity)?;
            depth += 1;
        } else {
            return Ok((active, depth));
        }
    }
}

/// The server's broadcast for one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub phase: u32,
    pub depth: u32,
    /// Active set, ascending by index.
    pub active: Vec<NodeId>,
    /// `ceil(tau_h / M)`: pulls per node per client of a full phase.
    pub pulls_per_client: u64,
    /// Pulls per client the phase actually takes.
    pub phase_length: u64,
    /// Pulls per client for each active node (same order as `active`).
    pub schedule: Vec<u64>,
    /// Set when the remaining budget could not hold the full phase.
    pub truncated: bool,
    pub clients: usize,
}

impl PhasePlan {
    /// Total pulls of the node at `position` summed over clients, `T_{h,i}`.
    pub fn node_pulls(&self, position: usize) -> u64 {
        self.schedule[position] * self.clients as u64
    }

    /// Active-set positions in the order a client pulls them: node by node
    /// for a full phase, round-robin sweeps for a truncated one.
    pub fn pull_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.phase_length as usize);
        if self.truncated {
            let sweeps = self.schedule.iter().copied().max().unwrap_or(0);
            for sweep in 0..sweeps {
                for (pos, &n) in self.schedule.iter().enumerate() {
                    if sweep < n {
                        order.push(pos);
                    }
                }
            }
        } else {
            for (pos, &n) in self.schedule.iter().enumerate() {
                order.extend(std::iter::repeat_n(pos, n as usize));
            }
        }
        order
    }
}

/// Builds the phase plan for `active` at `depth`.
///
/// When `|K| * ceil(tau_h / M)` exceeds `budget`, the plan is truncated:
/// every node gets `budget / |K|` pulls and the first `budget % |K|` nodes
/// (ascending index) one more, so the budget is used up exactly.
pub fn plan_phase(
    phase: u32,
    active: Vec<NodeId>,
    depth: u32,
    cfg: &ServerConfig,
    budget: u64,
) -> Result<PhasePlan, ProtocolError> {
    if budget == 0 {
        return Err(ProtocolError::NoBudget(phase));
    }
    if active.is_empty() {
        return Err(ProtocolError::Config("active set is empty".into()));
    }
    check_depth(&active, depth)?;
    let tau = threshold_tau(depth, cfg)?;
    let per_client = (tau / cfg.clients as f64).ceil();
    let nodes = active.len() as u64;
    let required = per_client * nodes as f64;
    let (pulls_per_client, schedule, phase_length, truncated) = if required <= budget as f64 {
        let t = per_client as u64;
        (t, vec![t; active.len()], t * nodes, false)
    } else {
        let (base, extra) = (budget / nodes, budget % nodes);
        let schedule = (0..nodes).map(|j| base + u64::from(j < extra)).collect();
        let t = if per_client >= u64::MAX as f64 {
            u64::MAX
        } else {
            per_client as u64
        };
        (t, schedule, budget, true)
    };
    Ok(PhasePlan {
        phase,
        depth,
        active,
        pulls_per_client,
        phase_length,
        schedule,
        truncated,
        clients: cfg.clients,
    })
}

/// How a client's rewards leave the client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardChannel {
    Plain,
    /// Each reward is perturbed with `N(0, variance)` first.
    Gaussian { variance: f64 },
}

/// Rewards as they are allowed to leave a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Released(Vec<f64>);

impl RewardChannel {
    pub fn release(&self, rewards: Vec<f64>, rng: &mut ChaCha20Rng) -> Released {
        match *self {
            RewardChannel::Plain => Released(rewards),
            RewardChannel::Gaussian { variance } => Released(privatize_rewards(&rewards, variance, rng)),
        }
    }
}

/// Per-client random streams for one phase.
#[derive(Debug, Clone)]
pub struct ClientStreams {
    pub reward: ChaCha20Rng,
    pub privacy: ChaCha20Rng,
}

impl ClientStreams {
    pub fn for_phase(seed: u64, client: usize, phase: u32) -> Self {
        ClientStreams {
            reward: stream(seed, Purpose::Reward, client as u32, phase),
            privacy: stream(seed, Purpose::Privacy, client as u32, phase),
        }
    }
}

/// One client's local means for a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub phase: u32,
    pub client: usize,
    /// One mean per active node; NaN for a node that received no pulls.
    pub means: Vec<f64>,
    pub pulls: Vec<u64>,
}

impl ClientReport {
    /// Local means built only from released rewards, one vector per node.
    pub fn from_released(phase: u32, client: usize, released: &[Released]) -> Self {
        let means = released
            .iter()
            .map(|Released(values)| {
                if values.is_empty() {
                    f64::NAN
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                }
            })
            .collect();
        let pulls = released.iter().map(|Released(v)| v.len() as u64).collect();
        ClientReport {
            phase,
            client,
            means,
            pulls,
        }
    }

    /// Number of values sent to the server.
    pub fn payload_len(&self) -> usize {
        self.means.len()
    }
}

/// A single evaluation made by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct PullSample {
    pub node: NodeId,
    pub point: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientPhase {
    pub report: ClientReport,
    /// Pulls in execution order.
    pub pulls: Vec<PullSample>,
}

/// Runs client `client`'s share of `plan` against its local objective.
pub fn client_execute(
    plan: &PhasePlan,
    client: usize,
    ensemble: &ObjectiveEnsemble,
    partition: &PartitionSpec,
    channel: RewardChannel,
    streams: &mut ClientStreams,
) -> ClientPhase {
    let points: Vec<Vec<f64>> = plan
        .active
        .iter()
        .map(|n| partition.representative_point(*n))
        .collect();
    let mut rewards: Vec<Vec<f64>> = plan
        .schedule
        .iter()
        .map(|&n| Vec::with_capacity(n as usize))
        .collect();
    let mut pulls = Vec::with_capacity(plan.phase_length as usize);
    for pos in plan.pull_order() {
        let reward = ensemble.sample_reward(client, &points[pos], &mut streams.reward);
        rewards[pos].push(reward);
        pulls.push(PullSample {
            node: plan.active[pos],
            point: points[pos].clone(),
            reward,
        });
    }
    let released: Vec<Released> = rewards
        .into_iter()
        .map(|r| channel.release(r, &mut streams.privacy))
        .collect();
    ClientPhase {
        report: ClientReport::from_released(plan.phase, client, &released),
        pulls,
    }
}

/// Per-node global means `(1/M) sum_m mu_m`, summed in ascending client order.
pub fn aggregate(reports: &[ClientReport], plan: &PhasePlan) -> Result<Vec<f64>, ProtocolError> {
    let mut by_client: Vec<Option<&ClientReport>> = vec![None; plan.clients];
    for report in reports {
        if report.client >= plan.clients
            || report.phase != plan.phase
            || report.means.len() != plan.active.len()
            || by_client[report.client].is_some()
        {
            return Err(ProtocolError::ReportMismatch {
                phase: plan.phase,
                client: report.client,
            });
        }
        by_client[report.client] = Some(report);
    }
    let mut sums = vec![0.0; plan.active.len()];
    for (client, report) in by_client.iter().enumerate() {
        let report = report.ok_or(ProtocolError::MissingReport {
            phase: plan.phase,
            client,
        })?;
        for (sum, mean) in sums.iter_mut().zip(&report.means) {
            *sum += mean;
        }
    }
    let m = plan.clients as f64;
    Ok(sums.into_iter().map(|s| s / m).collect())
}

/// `b = c * sqrt(ln(c1 T / delta) / pulls)`.
pub fn confidence_radius(pulls: u64, cfg: &ServerConfig) -> f64 {
    cfg.c * (cfg.log_term() / pulls as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationOutcome {
    pub best: NodeId,
    pub eliminated: Vec<NodeId>,
    pub survivors: Vec<NodeId>,
    /// Children of the survivors, ascending by index.
    pub next_active: Vec<NodeId>,
    pub means: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Drops every node with `mu + b + nu1 rho^h < mu_best - b_best`.
///
/// `active` must be sorted ascending so that ties in the argmax go to the
/// smallest index.
pub fn eliminate(
    active: &[NodeId],
    means: &[f64],
    radii: &[f64],
    depth: u32,
    cfg: &ServerConfig,
) -> Result<EliminationOutcome, ProtocolError> {
    assert_eq!(active.len(), means.len());
    assert_eq!(active.len(), radii.len());
    check_depth(active, depth)?;
    let mut best = 0;
    for (pos, mean) in means.iter().enumerate() {
        if *mean > means[best] {
            best = pos;
        }
    }
    let bar = means[best] - radii[best];
    let slack = depth_diameter(depth, cfg.nu1, cfg.rho);
    let mut eliminated = Vec::new();
    let mut survivors = Vec::with_capacity(active.len());
    for (pos, node) in active.iter().enumerate() {
        if means[pos] + radii[pos] + slack < bar {
            eliminated.push(*node);
        } else {
            survivors.push(*node);
        }
    }
    let next_active = expand(&survivors, cfg.arity)?;
    Ok(EliminationOutcome {
        best: active[best],
        eliminated,
        survivors,
        next_active,
        means: means.to_vec(),
        radii: radii.to_vec(),
    })
}

/// What the server concluded at the end of a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConclusion {
    pub means: Vec<f64>,
    /// `None` for a truncated phase, which is never used for elimination.
    pub elimination: Option<EliminationOutcome>,
}

/// Server-side state across phases.
#[derive(Debug, Clone)]
pub struct Server {
    cfg: ServerConfig,
    active: Vec<NodeId>,
    depth: u32,
    phase: u32,
}

impl Server {
    pub fn new(cfg: ServerConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        Ok(Server {
            cfg,
            active: vec![NodeId::ROOT],
            depth: 0,
            phase: 0,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn active(&self) -> &[NodeId] {
        &self.active
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Expands the active set and plans the next phase within `budget` pulls per client.
    pub fn next_plan(&mut self, budget: u64) -> Result<PhasePlan, ProtocolError> {
        if budget == 0 {
            return Err(ProtocolError::NoBudget(self.phase + 1));
        }
        let (active, depth) = expand_until_ready(std::mem::take(&mut self.active), self.depth, &self.cfg)?;
        self.active = active;
        self.depth = depth;
        self.phase += 1;
        plan_phase(self.phase, self.active.clone(), depth, &self.cfg, budget)
    }

    /// Aggregates the reports and, for a full phase, eliminates and moves to
    /// the children of the survivors.
    pub fn conclude(
        &mut self,
        plan: &PhasePlan,
        reports: &[ClientReport],
    ) -> Result<PhaseConclusion, ProtocolError> {
        let means = aggregate(reports, plan)?;
        if plan.truncated {
            return Ok(PhaseConclusion {
                means,
                elimination: None,
            });
        }
        let radii: Vec<f64> = (0..plan.active.len())
            .map(|pos| confidence_radius(plan.node_pulls(pos), &self.cfg))
            .collect();
        let outcome = eliminate(&plan.active, &means, &radii, plan.depth, &self.cfg)?;
        self.active = outcome.next_active.clone();
        self.depth = plan.depth + 1;
        Ok(PhaseConclusion {
            means,
            elimination: Some(outcome),
        })
    }
}
