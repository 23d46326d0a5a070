//! Communication-round accounting.

use super::RunTrace;
use crate::protocol::ServerConfig;

/// Result of comparing the number of phases with the logarithmic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CommCheck {
    /// Phases executed, including a truncated final phase.
    pub phases: usize,
    /// `ln(M T nu1^2 / (k c^2)) / ln(rho^-2)`, when the log argument exceeds 1.
    pub bound: Option<f64>,
    /// `None` when the bound does not apply.
    pub pass: Option<bool>,
}

/// `ln(M T nu1^2 / (k c^2)) / ln(rho^-2)`, or `None` if the argument is at most 1.
pub fn communication_bound(cfg: &ServerConfig) -> Option<f64> {
    let argument = cfg.clients as f64 * cfg.horizon as f64 * cfg.nu1 * cfg.nu1
        / (cfg.arity as f64 * cfg.c * cfg.c);
    if argument > 1.0 {
        Some(argument.ln() / (cfg.rho.powi(-2)).ln())
    } else {
        None
    }
}

pub fn communication_check(trace: &RunTrace, cfg: &ServerConfig) -> CommCheck {
    let phases = trace.phases.len();
    let bound = communication_bound(cfg);
    CommCheck {
        phases,
        bound,
        pass: bound.map(|b| phases as f64 <= b.ceil()),
    }
}
