//! Objective functions and the federated objective ensemble.
//!
//! A [`GlobalObjective`] is a deterministic function on an axis-aligned box.
//! [`make_ensemble`] derives `M` heterogeneous local objectives whose average
//! is exactly the base objective, and [`ObjectiveEnsemble::sample_reward`]
//! draws bounded, zero-mean noisy rewards from them.

pub mod seir;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::harness::oracle::{grid_extrema, OracleError};
use crate::partition::CellBox;
use crate::streams::{stream, Purpose};

pub use seir::{simulate_seir, InfectionMetric, SeirParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("x = {0} lies outside [0, 1]")]
    Domain(f64),
    #[error("objective is constant over the domain (range {min}..{max}); cannot normalize")]
    Degenerate { min: f64, max: f64 },
    #[error("objective `{0}` is not known to map into [0, 1]; normalize it first")]
    Unbounded(String),
    #[error("client count must be at least 1")]
    NoClients,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("SEIR integration produced a non-finite state at day {day}")]
    NonFinite { day: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Name and parameter record of an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub name: String,
    pub params: Vec<(String, f64)>,
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (key, value) in &self.params {
            write!(f, " {key}={value}")?;
        }
        Ok(())
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct GlobalObjective {
    descriptor: Descriptor,
    domain: CellBox,
    unit_range: bool,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for GlobalObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlobalObjective")
            .field("descriptor", &self.descriptor)
            .field("domain", &self.domain)
            .field("unit_range", &self.unit_range)
            .finish()
    }
}

fn unit_interval() -> CellBox {
    CellBox {
        lower: vec![0.0],
        upper: vec![1.0],
    }
}

impl GlobalObjective {
    /// Wraps an arbitrary function. `unit_range` asserts that it maps into `[0, 1]`.
    pub fn from_fn<F>(descriptor: Descriptor, domain: CellBox, unit_range: bool, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        GlobalObjective {
            descriptor,
            domain,
            unit_range,
            eval: Arc::new(f),
        }
    }

    pub fn garland() -> Self {
        Self::from_fn(
            Descriptor {
                name: "garland".into(),
                params: vec![],
            },
            unit_interval(),
            false,
            |x| garland(x[0]).unwrap_or(f64::NAN),
        )
    }

    pub fn double_sine(rho1: f64, rho2: f64) -> Result<Self, ObjectiveError> {
        for (name, rho) in [("rho1", rho1), ("rho2", rho2)] {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(ObjectiveError::Parameter(format!(
                    "{name} must lie in (0,1), got {rho}"
                )));
            }
        }
        Ok(Self::from_fn(
            Descriptor {
                name: "double_sine".into(),
                params: vec![("rho1".into(), rho1), ("rho2".into(), rho2)],
            },
            unit_interval(),
            false,
            move |x| double_sine(x[0], rho1, rho2),
        ))
    }

    pub fn constant(value: f64, domain: CellBox) -> Self {
        Self::from_fn(
            Descriptor {
                name: "constant".into(),
                params: vec![("value".into(), value)],
            },
            domain,
            (0.0..=1.0).contains(&value),
            move |_| value,
        )
    }

    /// Reward `1 - infected fraction` of the SEIR model as a function of dosage in `[0, 1]`.
    pub fn seir(params: SeirParams, metric: InfectionMetric) -> Result<Self, ObjectiveError> {
        params.validate()?;
        let descriptor = Descriptor {
            name: "seir".into(),
            params: params.record(),
        };
        Ok(Self::from_fn(descriptor, unit_interval(), true, move |x| {
            // below half dosage the vaccine has no effect, so any tiny positive dosage is equivalent
            let dosage = x[0].clamp(f64::MIN_POSITIVE, 1.0);
            match simulate_seir(&params, dosage) {
                Ok(outcome) => 1.0 - outcome.metric(metric),
                Err(_) => f64::NAN,
            }
        }))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &CellBox {
        &self.domain
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    /// Whether the objective is known to take values in `[0, 1]`.
    pub fn unit_range(&self) -> bool {
        self.unit_range
    }
}

/// `x(1-x)(4 - sqrt|sin 60x|)` on `[0, 1]`.
pub fn garland(x: f64) -> Result<f64, ObjectiveError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ObjectiveError::Domain(x));
    }
    Ok(x * (1.0 - x) * (4.0 - (60.0 * x).sin().abs().sqrt()))
}

/// Oscillation envelope `s(t) = max(0, sin 2πt)` used by [`double_sine`].
pub fn double_sine_envelope(t: f64) -> f64 {
    (2.0 * PI * t).sin().max(0.0)
}

/// DoubleSine with `u = |2x - 1|`:
/// `s(log2(u)/2) * (u^a2 - u^a1) - u^a1` where `a = -log2(rho)`.
///
/// At `x = 0.5` every power of `u` vanishes, so the value there is 0.
pub fn double_sine(x: f64, rho1: f64, rho2: f64) -> f64 {
    let u = (2.0 * x - 1.0).abs();
    if u == 0.0 {
        return 0.0;
    }
    let a1 = -rho1.log2();
    let a2 = -rho2.log2();
    let envelope = double_sine_envelope(0.5 * u.log2());
    envelope * (u.powf(a2) - u.powf(a1)) - u.powf(a1)
}

/// Affinely rescales `raw` so that its dense-grid range becomes `[0, 1]`.
///
/// Values between grid points that overshoot the grid extrema are clamped
/// into `[0, 1]`; the overshoot is bounded by the grid resolution error.
pub fn normalize_objective(
    raw: &GlobalObjective,
    resolution: usize,
) -> Result<GlobalObjective, ObjectiveError> {
    let extrema = grid_extrema(raw, resolution)?;
    let (min, max) = (extrema.min, extrema.max);
    if !(max - min > 0.0) || !(max - min).is_finite() {
        return Err(ObjectiveError::Degenerate { min, max });
    }
    let span = max - min;
    let mut descriptor = raw.descriptor.clone();
    descriptor.params.push(("offset".into(), min));
    descriptor.params.push(("scale".into(), span));
    let inner = Arc::clone(&raw.eval);
    Ok(GlobalObjective::from_fn(
        descriptor,
        raw.domain.clone(),
        true,
        move |x| ((inner(x) - min) / span).clamp(0.0, 1.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// Uniform on `[-w, w]` with `w = min(scale, f, 1 - f)`.
    BoundedUniform,
    /// Normal with standard deviation `scale` truncated to `[-w, w]`,
    /// `w = min(f, 1 - f)`. The symmetric truncation keeps the mean at zero.
    TruncatedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        kind: NoiseKind::None,
        scale: 0.0,
    };

    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self, ObjectiveError> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(ObjectiveError::Parameter(format!(
                "noise scale must be finite and >= 0, got {scale}"
            )));
        }
        Ok(NoiseModel { kind, scale })
    }

    /// Draws a zero-mean perturbation whose support keeps `mean + noise` in `[0, 1]`.
    pub fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        let room = mean.min(1.0 - mean).max(0.0);
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::BoundedUniform => {
                let half = self.scale.min(room);
                if half <= 0.0 {
                    return 0.0;
                }
                rng.random_range(-half..=half)
            }
            NoiseKind::TruncatedGaussian => {
                if room <= 0.0 || self.scale <= 0.0 {
                    return 0.0;
                }
                let bound = room / self.scale;
                if bound > 8.0 {
                    // truncation mass below 1e-15: rejection almost never loops
                    loop {
                        let z: f64 = StandardNormal.sample(rng);
                        if z.abs() <= bound {
                            return self.scale * z;
                        }
                    }
                }
                let standard = Normal::standard();
                let lo = standard.cdf(-bound);
                let hi = standard.cdf(bound);
                let u = lo + (hi - lo) * rng.random::<f64>();
                let z = standard.inverse_cdf(u).clamp(-bound, bound);
                self.scale * z
            }
        }
    }
}

/// `M` local objectives `f_m = f + a_m * g` with `sum_m a_m = 0`.
///
/// The perturbation direction is `g(x) = f(x)(1 - f(x)) * prod_d sin(pi u_d)`,
/// `u` being `x` rescaled to the unit cube. With `|a_m| <= 1` this keeps every
/// `f_m` inside `[0, 1]` without clipping.
#[derive(Debug, Clone)]
pub struct ObjectiveEnsemble {
    base: GlobalObjective,
    coefficients: Vec<f64>,
    noise: NoiseModel,
}

/// Draws `a_m ~ perturb_scale * N(0, 1)`, subtracts their mean, and if any
/// `|a_m|` exceeds 1 divides all of them by the largest magnitude.
pub fn make_ensemble(
    base: GlobalObjective,
    clients: usize,
    perturb_scale: f64,
    noise: NoiseModel,
    seed: u64,
) -> Result<ObjectiveEnsemble, ObjectiveError> {
    if clients == 0 {
        return Err(ObjectiveError::NoClients);
    }
    if !base.unit_range() {
        return Err(ObjectiveError::Unbounded(base.descriptor().name.clone()));
    }
    if !(perturb_scale >= 0.0) || !perturb_scale.is_finite() {
        return Err(ObjectiveError::Parameter(format!(
            "perturbation scale must be finite and >= 0, got {perturb_scale}"
        )));
    }
    let mut rng = stream(seed, Purpose::Ensemble, 0, 0);
    let mut coefficients: Vec<f64> = (0..clients)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            perturb_scale * z
        })
        .collect();
    let mean = coefficients.iter().sum::<f64>() / clients as f64;
    coefficients.iter_mut().for_each(|a| *a -= mean);
    let largest = coefficients.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    if largest > 1.0 {
        coefficients.iter_mut().for_each(|a| *a /= largest);
    }
    Ok(ObjectiveEnsemble {
        base,
        coefficients,
        noise,
    })
}

impl ObjectiveEnsemble {
    pub fn clients(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn base(&self) -> &GlobalObjective {
        &self.base
    }

    fn bump(&self, x: &[f64]) -> f64 {
        let domain = self.base.domain();
        x.iter()
            .enumerate()
            .map(|(d, &xd)| {
                let u = (xd - domain.lower[d]) / domain.width(d);
                (PI * u).sin().max(0.0)
            })
            .product()
    }

    /// Local objective of client `m` (0-based).
    pub fn local(&self, m: usize, x: &[f64]) -> f64 {
        let f = self.base.evaluate(x);
        f + self.coefficients[m] * f * (1.0 - f) * self.bump(x)
    }

    /// Average of the local objectives; equal to the base objective.
    pub fn global(&self, x: &[f64]) -> f64 {
        self.base.evaluate(x)
    }

    /// `f_m(x) + noise`, always in `[0, 1]`.
    pub fn sample_reward<R: Rng + ?Sized>(&self, m: usize, x: &[f64], rng: &mut R) -> f64 {
        let mean = self.local(m, x);
        let reward = mean + self.noise.draw(mean, rng);
        // the noise support already fits; this only absorbs last-ulp rounding of mean + w
        reward.clamp(0.0, 1.0)
    }
}
