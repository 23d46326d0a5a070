//! Acceptance suite: prints one PASS/FAIL line per criterion.
//!
//! Criteria 5 and 9 do not pass as stated (see `threshold_sandwich` and
//! `meshgrid_dilemma`); they print FAIL and the run checks that each failure
//! has exactly the predicted cause. Any other failing criterion makes the
//! process exit nonzero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fedpne::harness::{
    communication_check, cumulative_regret, estimate_fstar, exploration_rounds, run_experiment,
    run_grid_baseline, ExperimentSetup, RunTrace,
};
use fedpne::objectives::{
    make_ensemble, normalize_objective, simulate_seir, GlobalObjective, NoiseKind, NoiseModel,
    SeirParams,
};
use fedpne::objectives::seir::vaccine_effectiveness;
use fedpne::partition::{children, NodeId, PartitionSpec, SplitPolicy};
use fedpne::privacy::{dp_constants, dp_sigma, privatize_rewards, DpConfig};
use fedpne::protocol::{
    aggregate, client_execute, plan_phase, threshold_tau, threshold_value, ClientStreams,
    RewardChannel, ServerConfig,
};
use fedpne::streams::{stream, Purpose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Garland {
    objective: GlobalObjective,
    fstar: f64,
    argmax: Vec<f64>,
}

impl Garland {
    fn new() -> Self {
        let objective = normalize_objective(&GlobalObjective::garland(), 1_000_000).unwrap();
        let (fstar, argmax) = estimate_fstar(&objective, 1_000_000).unwrap();
        Garland {
            objective,
            fstar,
            argmax,
        }
    }

    fn setup(&self, server: ServerConfig, noise: NoiseModel, perturb: f64) -> ExperimentSetup {
        ExperimentSetup {
            server,
            partition: PartitionSpec::unit_cube(2, 1, SplitPolicy::RoundRobin).unwrap(),
            objective: self.objective.clone(),
            perturb_scale: perturb,
            noise,
            privacy: None,
            fstar: self.fstar,
        }
    }
}

fn uniform_noise() -> NoiseModel {
    NoiseModel::new(NoiseKind::BoundedUniform, 0.1).unwrap()
}

fn runs(setup: &ExperimentSetup, seeds: std::ops::Range<u64>) -> Vec<RunTrace> {
    seeds
        .into_par_iter()
        .map(|s| run_experiment(setup, s).unwrap())
        .collect()
}

fn final_regret(trace: &RunTrace, g: &Garland) -> f64 {
    cumulative_regret(trace, g.fstar, &g.objective).final_average()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn optimum_survival(g: &Garland, log: &mut Vec<RunTrace>) -> Verdict {
    let start = Instant::now();
    let setup = g.setup(ServerConfig::experimental(2, 10, 2000), NoiseModel::NONE, 0.0);
    let traces = runs(&setup, 0..20);
    let mut survived = 0;
    for t in &traces {
        let ok = t.phases.iter().all(|p| {
            let home = setup.partition.locate(&g.argmax, p.depth);
            p.active.contains(&home) && !p.eliminated.contains(&home)
        });
        survived += usize::from(ok);
    }
    let elapsed = start.elapsed();
    let phases = traces[0].phases.len();
    log.extend(traces);
    verdict(
        survived == 20 && elapsed < Duration::from_secs(30),
        format!(
            "argmax x*={:.6} kept in {survived}/20 runs ({phases} phases), {:.1}s",
            g.argmax[0],
            elapsed.as_secs_f64()
        ),
    )
}

fn federation_benefit(g: &Garland, log: &mut Vec<RunTrace>) -> Verdict {
    let start = Instant::now();
    let small = runs(&g.setup(ServerConfig::experimental(2, 5, 2000), uniform_noise(), 1.0), 0..10);
    let large = runs(&g.setup(ServerConfig::experimental(2, 50, 2000), uniform_noise(), 1.0), 0..10);
    let r5: Vec<f64> = small.iter().map(|t| final_regret(t, g)).collect();
    let r50: Vec<f64> = large.iter().map(|t| final_regret(t, g)).collect();
    let wins = r5.iter().zip(&r50).filter(|(a, b)| b < a).count();
    let elapsed = start.elapsed();
    log.extend(small);
    log.extend(large);
    verdict(
        mean(&r50) < mean(&r5) && wins >= 8 && elapsed < Duration::from_secs(120),
        format!(
            "mean final avg regret M=5 {:.3}, M=50 {:.3}; M=50 lower in {wins}/10 seeds, {:.1}s",
            mean(&r5),
            mean(&r50),
            elapsed.as_secs_f64()
        ),
    )
}

fn sublinear_regret(g: &Garland, log: &mut Vec<RunTrace>, at_2000: &mut Vec<RunTrace>) -> Verdict {
    let start = Instant::now();
    let mut per_round = Vec::new();
    for t in [500u64, 1000, 2000] {
        let traces = runs(&g.setup(ServerConfig::experimental(2, 10, t), uniform_noise(), 1.0), 0..10);
        let r: Vec<f64> = traces.iter().map(|tr| final_regret(tr, g)).collect();
        per_round.push(mean(&r) / t as f64);
        if t == 2000 {
            at_2000.extend(traces.iter().cloned());
        }
        log.extend(traces);
    }
    let elapsed = start.elapsed();
    verdict(
        per_round[1] < per_round[0] && per_round[2] < per_round[1] && elapsed < Duration::from_secs(120),
        format!(
            "R/T at T=500,1000,2000: {:.4}, {:.4}, {:.4}; {:.1}s",
            per_round[0],
            per_round[1],
            per_round[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn communication(log: &[RunTrace]) -> Verdict {
    let mut checked = 0;
    let mut worst = f64::MIN;
    let mut violations = 0;
    for t in log {
        let check = communication_check(t, &t.server);
        if let (Some(bound), Some(pass)) = (check.bound, check.pass) {
            checked += 1;
            worst = worst.max(check.phases as f64 - bound.ceil());
            violations += usize::from(!pass);
        }
    }
    // growth at M = 10 as T doubles
    let phases = |horizon: u64, seed: u64| {
        log.iter()
            .find(|t| t.server.clients == 10 && t.horizon() == horizon && t.seed == seed && t.server.c == 0.1 && t.label.contains("noise=BoundedUniform"))
            .map(|t| t.phases.len() as i64)
    };
    let mut max_growth = i64::MIN;
    let mut pairs = 0;
    for seed in 0..10 {
        for (a, b) in [(500, 1000), (1000, 2000)] {
            if let (Some(p), Some(q)) = (phases(a, seed), phases(b, seed)) {
                max_growth = max_growth.max(q - p);
                pairs += 1;
            }
        }
    }
    verdict(
        violations == 0 && checked == log.len() && pairs == 20 && max_growth <= 2,
        format!(
            "{checked}/{} runs within the phase bound (max P - ceil(bound) = {worst}), largest P(2T)-P(T) = {max_growth} over {pairs} pairs",
            log.len()
        ),
    )
}

/// The upper bound `ceil(v) <= 2 v` needs `v >= 1/2`; with `log(c1 T/delta) >= 1`
/// alone, `v = c^2 log(c1 T/delta) rho^-2h / nu1^2` can be far below 1/2 (small
/// `c`, large `nu1`, `h = 0`), where `tau = 1 > 2 v`.
struct Sandwich {
    verdict: Verdict,
    explained: bool,
}

fn threshold_sandwich() -> Sandwich {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lower_bad = 0;
    let mut upper_bad = 0;
    let mut upper_bad_large_v = 0;
    let mut configs = 0;
    let mut small_v = 0;
    while configs < 1000 {
        let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
        let cfg = ServerConfig {
            arity: rng.random_range(2..=4),
            nu1: log_uniform(&mut rng, 0.25, 4.0),
            rho: rng.random_range(0.1..0.95),
            c: log_uniform(&mut rng, 0.1, 4.0),
            c1: log_uniform(&mut rng, 0.5, 30.0),
            delta: rng.random_range(1e-3..=1.0),
            horizon: rng.random_range(1..=1_000_000),
            clients: rng.random_range(1..=1000),
        };
        if cfg.validate().is_err() || cfg.log_term() < 1.0 {
            continue;
        }
        configs += 1;
        let h = rng.random_range(0..=40);
        let tau = threshold_tau(h, &cfg).unwrap();
        let v = threshold_value(h, &cfg);
        let scale = cfg.c * cfg.c / (cfg.nu1 * cfg.nu1) * cfg.rho.powi(-2 * h as i32);
        if !(scale <= tau) {
            lower_bad += 1;
        }
        if !(tau <= 2.0 * v) {
            upper_bad += 1;
            if v >= 0.5 {
                upper_bad_large_v += 1;
            }
        }
        small_v += usize::from(v < 0.5);
    }
    let pass = lower_bad == 0 && upper_bad == 0;
    let explained = lower_bad == 0 && upper_bad_large_v == 0;
    Sandwich {
        verdict: verdict(
            pass,
            format!(
                "{configs} configs: lower bound violated {lower_bad}x, upper bound violated {upper_bad}x \
                 (all with unrounded tau < 1/2: {}; {small_v} configs have tau < 1/2)",
                upper_bad_large_v == 0
            ),
        ),
        explained,
    }
}

fn aggregation_unbiased(g: &Garland) -> Verdict {
    let cfg = ServerConfig::experimental(2, 10, 2000);
    let partition = PartitionSpec::unit_cube(2, 1, SplitPolicy::RoundRobin).unwrap();
    let node = NodeId { depth: 3, index: 3 };
    let plan = plan_phase(1, vec![node], 3, &cfg, cfg.horizon).unwrap();
    let ensemble = make_ensemble(g.objective.clone(), 10, 1.0, uniform_noise(), 0).unwrap();
    let x = partition.representative_point(node);
    let estimates: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|run| {
            let reports: Vec<_> = (0..cfg.clients)
                .map(|m| {
                    let mut streams = ClientStreams::for_phase(run, m, 1);
                    client_execute(&plan, m, &ensemble, &partition, RewardChannel::Plain, &mut streams).report
                })
                .collect();
            aggregate(&reports, &plan).unwrap()[0]
        })
        .collect();
    let mu = mean(&estimates);
    let sd = (estimates.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / 999.0).sqrt();
    let truth = g.objective.evaluate(&x);
    let limit = 3.0 * sd / 1000f64.sqrt();
    verdict(
        (mu - truth).abs() <= limit,
        format!(
            "node (3,3) at x={:.4}: |mean - f| = {:.3e} <= {:.3e} ({} pulls per estimate)",
            x[0],
            (mu - truth).abs(),
            limit,
            plan.node_pulls(0)
        ),
    )
}

fn dp_calibration(g: &Garland) -> Verdict {
    let sigma_ok = (dp_sigma(1.0, 0.05) - 2.0 * 25f64.ln()).abs() <= 1e-12;
    let (c, c1) = dp_constants(0.0, 10);
    let const_ok = (c - 2.0).abs() <= 1e-12 && (c1 - 20f64.powf(0.125)).abs() <= 1e-12;

    let variance = dp_sigma(1.0, 0.05);
    let ensemble = make_ensemble(g.objective.clone(), 4, 1.0, uniform_noise(), 3).unwrap();
    let x = [0.3];
    let mut reward_rng = stream(7, Purpose::Reward, 0, 0);
    let mut privacy_rng = stream(7, Purpose::Privacy, 0, 0);
    let rewards: Vec<f64> = (0..100_000)
        .map(|_| ensemble.sample_reward(0, &x, &mut reward_rng))
        .collect();
    let released = privatize_rewards(&rewards, variance, &mut privacy_rng);
    let mu = mean(&released);
    let empirical = released.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (released.len() - 1) as f64;
    let f0 = ensemble.local(0, &x);
    let w = 0.1f64.min(f0).min(1.0 - f0);
    let expected = w * w / 3.0 + variance;
    let var_ok = (empirical / expected - 1.0).abs() <= 0.05;

    let plain = g.setup(ServerConfig::theory(2, 10, 2000), uniform_noise(), 1.0);
    let mut private = g.setup(ServerConfig::experimental(2, 10, 2000), uniform_noise(), 1.0);
    private.privacy = Some(DpConfig::new(f64::INFINITY, 0.05).unwrap());
    let same_constants = private.effective_server() == plain.effective_server();
    let a = run_experiment(&plain, 11).unwrap();
    let b = run_experiment(&private, 11).unwrap();
    let identical = same_constants && a.pulls == b.pulls && a.phases == b.phases && a.comms == b.comms;

    verdict(
        sigma_ok && const_ok && var_ok && identical,
        format!(
            "sigma^2(1,0.05) ok={sigma_ok}, constants ok={const_ok}, variance {empirical:.4} vs {expected:.4} ok={var_ok}, zero-noise trace identical={identical}"
        ),
    )
}

fn partition_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut round_trip_errors = 0;
    for n in 0..10_000 {
        let k: u32 = rng.random_range(2..=4);
        let d: usize = rng.random_range(1..=3);
        let policy = if n % 2 == 0 {
            SplitPolicy::RoundRobin
        } else {
            SplitPolicy::SeededRandom { seed: rng.random() }
        };
        let spec = PartitionSpec::unit_cube(k, d, policy).unwrap();
        let depth: u32 = rng.random_range(0..=12);
        let node = NodeId {
            depth,
            index: rng.random_range(1..=(k as u64).pow(depth)),
        };
        let cell = spec.cell_bounds(node);
        let axis = spec.split_axis(depth);
        let kids = children(node, k);
        let boxes: Vec<_> = kids.iter().map(|&c| spec.cell_bounds(c)).collect();
        worst = worst.max((boxes[0].lower[axis] - cell.lower[axis]).abs());
        worst = worst.max((boxes[k as usize - 1].upper[axis] - cell.upper[axis]).abs());
        for pair in boxes.windows(2) {
            worst = worst.max((pair[0].upper[axis] - pair[1].lower[axis]).abs());
        }
        let volume = |b: &fedpne::partition::CellBox| (0..d).map(|a| b.width(a)).product::<f64>();
        let total: f64 = boxes.iter().map(volume).sum();
        worst = worst.max((total - volume(&cell)).abs());
        for (j, b) in boxes.iter().enumerate() {
            for a in 0..d {
                if a != axis {
                    worst = worst.max((b.lower[a] - cell.lower[a]).abs());
                    worst = worst.max((b.upper[a] - cell.upper[a]).abs());
                }
            }
            let child = kids[j];
            if child.parent(k) != Some(node)
                || child.index != k as u64 * node.index - (k as u64 - 1 - j as u64)
                || spec.locate(&spec.representative_point(child), child.depth) != child
            {
                round_trip_errors += 1;
            }
        }
    }
    verdict(
        worst <= 1e-12 && round_trip_errors == 0,
        format!("10000 nodes: largest tiling error {worst:.1e}, round-trip errors {round_trip_errors}"),
    )
}

/// With the experimental `c = 0.1` the radius is small enough that the K = 100
/// mesh narrows to one arm early; only the share half of the criterion depends
/// on `c`, so the theory constants are run as well to confirm that.
struct Dilemma {
    verdict: Verdict,
    explained: bool,
}

fn exploration_share(setup: &ExperimentSetup, arms: usize) -> f64 {
    (0..10u64)
        .into_par_iter()
        .map(|s| {
            let t = run_grid_baseline(setup, arms, s).unwrap();
            exploration_rounds(&t) as f64 / t.horizon() as f64
        })
        .reduce(|| f64::MAX, f64::min)
}

fn meshgrid_dilemma(g: &Garland, fedpne_runs: &[RunTrace]) -> Dilemma {
    let start = Instant::now();
    let setup = g.setup(ServerConfig::experimental(2, 10, 2000), uniform_noise(), 1.0);
    let coarse: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|s| final_regret(&run_grid_baseline(&setup, 3, s).unwrap(), g))
        .collect();
    let tree: Vec<f64> = fedpne_runs.iter().map(|t| final_regret(t, g)).collect();
    let min_share = exploration_share(&setup, 100);
    let elapsed = start.elapsed();
    let theory = g.setup(ServerConfig::theory(2, 10, 2000), uniform_noise(), 1.0);
    let theory_share = exploration_share(&theory, 100);
    let gap_ok = tree.len() == 10 && mean(&coarse) > mean(&tree);
    let timely = elapsed < Duration::from_secs(60);
    Dilemma {
        verdict: verdict(
            gap_ok && min_share >= 0.5 && timely,
            format!(
                "K=3 final regret {:.3} vs tree {:.3}; K=100 exploration share >= {:.3} in all seeds \
                 (c=2 radius: >= {:.3}), {:.1}s",
                mean(&coarse),
                mean(&tree),
                min_share,
                theory_share,
                elapsed.as_secs_f64()
            ),
        ),
        explained: gap_ok && timely && min_share < 0.5 && theory_share >= 0.5,
    }
}

fn seir_invariants() -> Verdict {
    let params = SeirParams::default();
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for dosage in [0.05, 0.25, 0.5, 0.75, 1.0] {
        let out = simulate_seir(&params, dosage).unwrap();
        steps = out.trajectory.len() - 1;
        for s in &out.trajectory {
            worst = worst.max((s.total() - params.population).abs() / params.population);
        }
    }
    let alpha_ok = vaccine_effectiveness(params.alpha_full, 0.5) == 0.0
        && vaccine_effectiveness(params.alpha_full, 1.0) == params.alpha_full;
    let mut fixed_ok = true;
    for v_full in [0.0, params.v_full] {
        let p = SeirParams {
            e0: 0.0,
            i0: 0.0,
            s0: params.population - params.r0,
            v_full,
            ..params.clone()
        };
        let out = simulate_seir(&p, 1.0).unwrap();
        fixed_ok &= out.ever_infected() == 0.0 && out.final_infectious() == 0.0;
    }
    verdict(
        worst <= 1e-9 && alpha_ok && fixed_ok,
        format!(
            "max |N(t) - N|/N = {worst:.1e} over {steps} steps x 5 dosages, alpha ok={alpha_ok}, disease-free fixed point ok={fixed_ok}"
        ),
    )
}

fn main() -> ExitCode {
    let g = Garland::new();
    let mut log = Vec::new();
    let mut at_2000 = Vec::new();
    let mut lines: Vec<(u8, &str, Verdict)> = Vec::new();

    lines.push((1, "optimum survival", optimum_survival(&g, &mut log)));
    lines.push((2, "benefit of federation", federation_benefit(&g, &mut log)));
    lines.push((3, "sublinear regret", sublinear_regret(&g, &mut log, &mut at_2000)));
    lines.push((4, "communication bound", communication(&log)));
    let sandwich = threshold_sandwich();
    lines.push((5, "threshold sandwich", sandwich.verdict));
    lines.push((6, "aggregation unbiasedness", aggregation_unbiased(&g)));
    lines.push((7, "dp calibration", dp_calibration(&g)));
    lines.push((8, "partition correctness", partition_correctness()));
    let dilemma = meshgrid_dilemma(&g, &at_2000);
    lines.push((9, "meshgrid dilemma", dilemma.verdict));
    lines.push((10, "seir invariants", seir_invariants()));

    let mut unexpected = 0;
    for (id, name, v) in &lines {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status}: {name}: {}", v.detail);
        let explained = match id {
            5 => sandwich.explained,
            9 => dilemma.explained,
            _ => false,
        };
        if !v.pass && !explained {
            unexpected += 1;
        }
    }
    let passed = lines.iter().filter(|l| l.2.pass).count();
    println!("acceptance: {passed}/10 criteria pass");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}
