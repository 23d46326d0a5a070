//! SEIR epidemic model with dosage-dependent vaccination.
//!
//! ```text
//! dS/dt = -beta S I / N - alpha V
//! dE/dt =  beta S I / N - sigma E
//! dI/dt =  sigma E - gamma I
//! dR/dt =  gamma I + alpha V
//! ```
//!
//! Lowering the dosage `x` stretches the vaccine supply, `V = V_full / x`, at
//! the cost of effectiveness, `alpha = alpha_full * max(0, 2x - 1)^2`, which
//! vanishes at half dosage. Integration is fixed-step RK4.

use super::ObjectiveError;

#[derive(Debug, Clone, PartialEq)]
pub struct SeirParams {
    /// Transmission rate (1/day).
    pub beta: f64,
    /// Recovery rate (1/day).
    pub gamma: f64,
    /// Exposed-to-infectious rate (1/day).
    pub sigma_e: f64,
    pub population: f64,
    /// Full-dosage vaccinations per day.
    pub v_full: f64,
    /// Full-dosage vaccine effectiveness in `[0, 1]`.
    pub alpha_full: f64,
    pub s0: f64,
    pub e0: f64,
    pub i0: f64,
    pub r0: f64,
    pub horizon_days: f64,
    pub step_days: f64,
}

impl Default for SeirParams {
    fn default() -> Self {
        let population = 1.0e6;
        let (e0, i0) = (200.0, 100.0);
        SeirParams {
            beta: 0.3,
            gamma: 0.1,
            sigma_e: 0.2,
            population,
            v_full: 4000.0,
            alpha_full: 0.9,
            s0: population - e0 - i0,
            e0,
            i0,
            r0: 0.0,
            horizon_days: 180.0,
            step_days: 0.25,
        }
    }
}

impl SeirParams {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |msg: String| Err(ObjectiveError::Parameter(msg));
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("sigma_e", self.sigma_e),
            ("v_full", self.v_full),
            ("s0", self.s0),
            ("e0", self.e0),
            ("i0", self.i0),
            ("r0", self.r0),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha_full) {
            return bad(format!("alpha_full must lie in [0,1], got {}", self.alpha_full));
        }
        if !(self.population > 0.0) {
            return bad(format!("population must be > 0, got {}", self.population));
        }
        let total = self.s0 + self.e0 + self.i0 + self.r0;
        if (total - self.population).abs() > 1e-9 * self.population {
            return bad(format!(
                "S0+E0+I0+R0 = {total} does not match population {}",
                self.population
            ));
        }
        if !(self.step_days > 0.0) || !(self.horizon_days >= 0.0) {
            return bad("step_days must be > 0 and horizon_days >= 0".into());
        }
        Ok(())
    }

    pub(crate) fn record(&self) -> Vec<(String, f64)> {
        [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("sigma_e", self.sigma_e),
            ("population", self.population),
            ("v_full", self.v_full),
            ("alpha_full", self.alpha_full),
            ("s0", self.s0),
            ("e0", self.e0),
            ("i0", self.i0),
            ("r0", self.r0),
            ("horizon_days", self.horizon_days),
            ("step_days", self.step_days),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// `alpha_full * max(0, 2 * dosage - 1)^2`.
pub fn vaccine_effectiveness(alpha_full: f64, dosage: f64) -> f64 {
    let excess = (2.0 * dosage - 1.0).max(0.0);
    alpha_full * excess * excess
}

/// `v_full / dosage`.
pub fn vaccinations_per_day(v_full: f64, dosage: f64) -> f64 {
    v_full / dosage
}

/// Which number summarizes an epidemic run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfectionMetric {
    /// New infections over the horizon, `(S0 - S_end - vaccinated) / N`.
    #[default]
    EverInfected,
    /// `I_end / N`.
    FinalInfectious,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirState {
    pub day: f64,
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    /// Cumulative effective vaccinations moved from S to R.
    pub vaccinated: f64,
}

impl SeirState {
    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeirOutcome {
    pub trajectory: Vec<SeirState>,
    pub population: f64,
    pub s0: f64,
}

impl SeirOutcome {
    pub fn final_state(&self) -> &SeirState {
        self.trajectory.last().expect("trajectory holds the initial state")
    }

    pub fn ever_infected(&self) -> f64 {
        let end = self.final_state();
        ((self.s0 - end.s - end.vaccinated) / self.population).clamp(0.0, 1.0)
    }

    pub fn final_infectious(&self) -> f64 {
        (self.final_state().i / self.population).clamp(0.0, 1.0)
    }

    pub fn metric(&self, metric: InfectionMetric) -> f64 {
        match metric {
            InfectionMetric::EverInfected => self.ever_infected(),
            InfectionMetric::FinalInfectious => self.final_infectious(),
        }
    }
}

// [S, E, I, R, vaccinated]
type State = [f64; 5];

fn derivative(p: &SeirParams, vaccination: f64, y: &State) -> State {
    let [s, e, i, _, _] = *y;
    let infection = p.beta * s * i / p.population;
    let vacc = if s > 0.0 { vaccination } else { 0.0 };
    [
        -infection - vacc,
        infection - p.sigma_e * e,
        p.sigma_e * e - p.gamma * i,
        p.gamma * i + vacc,
        vacc,
    ]
}

fn axpy(y: &State, h: f64, k: &State) -> State {
    std::array::from_fn(|j| y[j] + h * k[j])
}

/// Integrates the model for `params.horizon_days` at the given dosage.
///
/// Compartments that an RK4 step pushes below zero are reset to zero and the
/// deficit is taken from `R`, so `S + E + I + R` stays equal to `N`.
pub fn simulate_seir(params: &SeirParams, dosage: f64) -> Result<SeirOutcome, ObjectiveError> {
    params.validate()?;
    if !(dosage > 0.0 && dosage <= 1.0) {
        return Err(ObjectiveError::Parameter(format!(
            "dosage must lie in (0,1], got {dosage}"
        )));
    }
    let alpha = vaccine_effectiveness(params.alpha_full, dosage);
    let vaccination = if alpha == 0.0 {
        0.0
    } else {
        alpha * vaccinations_per_day(params.v_full, dosage)
    };

    let steps = (params.horizon_days / params.step_days).ceil() as usize;
    let mut y: State = [params.s0, params.e0, params.i0, params.r0, 0.0];
    let mut day = 0.0;
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(SeirState {
        day,
        s: y[0],
        e: y[1],
        i: y[2],
        r: y[3],
        vaccinated: 0.0,
    });
    for _ in 0..steps {
        let h = params.step_days.min(params.horizon_days - day);
        let k1 = derivative(params, vaccination, &y);
        let k2 = derivative(params, vaccination, &axpy(&y, h / 2.0, &k1));
        let k3 = derivative(params, vaccination, &axpy(&y, h / 2.0, &k2));
        let k4 = derivative(params, vaccination, &axpy(&y, h, &k3));
        for j in 0..5 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y[0] < 0.0 {
            // vaccination overshot the remaining susceptibles
            y[4] += y[0];
            y[3] += y[0];
            y[0] = 0.0;
        }
        for j in 1..3 {
            if y[j] < 0.0 {
                y[3] += y[j];
                y[j] = 0.0;
            }
        }
        day += h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite { day });
        }
        trajectory.push(SeirState {
            day,
            s: y[0],
            e: y[1],
            i: y[2],
            r: y[3],
            vaccinated: y[4],
        });
    }
    Ok(SeirOutcome {
        trajectory,
        population: params.population,
        s0: params.s0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disease_free_fixed_point() {
        let p = SeirParams {
            e0: 0.0,
            i0: 0.0,
            s0: 1.0e6,
            v_full: 0.0,
            ..SeirParams::default()
        };
        let out = simulate_seir(&p, 1.0).unwrap();
        let end = out.final_state();
        assert_eq!((end.s, end.e, end.i, end.r), (1.0e6, 0.0, 0.0, 0.0));
        assert_eq!(out.ever_infected(), 0.0);
        assert_eq!(out.final_infectious(), 0.0);
    }

    #[test]
    fn effectiveness_anchors() {
        assert_eq!(vaccine_effectiveness(0.9, 0.5), 0.0);
        assert_eq!(vaccine_effectiveness(0.9, 1.0), 0.9);
        assert_eq!(vaccine_effectiveness(0.9, 0.2), 0.0);
        assert!((vaccine_effectiveness(0.8, 0.75) - 0.2).abs() < 1e-15);
        assert_eq!(vaccinations_per_day(1000.0, 0.5), 2000.0);
    }

    #[test]
    fn population_is_conserved_every_step() {
        let p = SeirParams::default();
        for dosage in [0.3, 0.6, 0.8, 1.0] {
            let out = simulate_seir(&p, dosage).unwrap();
            assert_eq!(out.trajectory.len(), 721);
            for st in &out.trajectory {
                assert!((st.total() - p.population).abs() <= 1e-9 * p.population);
                assert!(st.s >= 0.0 && st.e >= 0.0 && st.i >= 0.0 && st.r >= 0.0);
            }
        }
    }

    #[test]
    fn vaccination_stops_when_susceptibles_run_out() {
        let p = SeirParams {
            v_full: 50_000.0,
            alpha_full: 1.0,
            ..SeirParams::default()
        };
        let out = simulate_seir(&p, 1.0).unwrap();
        let end = out.final_state();
        assert_eq!(end.s, 0.0);
        assert!(end.vaccinated <= p.s0);
        assert!((end.total() - p.population).abs() <= 1e-9 * p.population);
    }

    #[test]
    fn more_effective_vaccine_means_fewer_infections() {
        for beta in [0.2, 0.3, 0.5] {
            for dosage in [0.7, 0.85, 1.0] {
                let mut last = f64::INFINITY;
                for a in 0..=10 {
                    let p = SeirParams {
                        beta,
                        alpha_full: a as f64 / 10.0,
                        ..SeirParams::default()
                    };
                    let infected = simulate_seir(&p, dosage).unwrap().ever_infected();
                    assert!(infected <= last + 1e-12, "beta {beta} dosage {dosage} alpha {a}");
                    last = infected;
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SeirParams::default();
        assert!(simulate_seir(&p, 0.0).is_err());
        assert!(simulate_seir(&p, 1.1).is_err());
        let unbalanced = SeirParams {
            s0: 10.0,
            ..SeirParams::default()
        };
        assert!(simulate_seir(&unbalanced, 1.0).is_err());
        let negative = SeirParams {
            beta: -1.0,
            ..SeirParams::default()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let p = SeirParams {
            beta: 1.0e308,
            ..SeirParams::default()
        };
        assert!(matches!(
            simulate_seir(&p, 1.0),
            Err(ObjectiveError::NonFinite { .. })
        ));
    }
}
