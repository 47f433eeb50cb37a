use serde::Serialize;

use crate::error::{invalid, Result};

/// Linear halting threshold `per_round·C + per_delta·Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub per_round: f64,
    pub per_delta: f64,
}

impl Threshold {
    pub fn eval(&self, rounds: usize, delta: f64) -> f64 {
        self.per_round * rounds as f64 + self.per_delta * delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationConstants {
    pub c: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub kmsg_threshold: Threshold,
    pub kprt_threshold: Threshold,
    pub strict_mode: bool,
}

impl SimulationConstants {
    /// Deterministic profile: `c = 200`, `σ = 1/4`, `α = γ = 1/c`.
    pub fn det_paper() -> Self {
        let c = 200.0;
        SimulationConstants {
            c,
            sigma: 0.25,
            alpha: 1.0 / c,
            gamma: 1.0 / c,
            kmsg_threshold: Threshold { per_round: 1.0, per_delta: 1.0 },
            kprt_threshold: Threshold { per_round: 5.0, per_delta: 2.0 },
            strict_mode: false,
        }
    }

    /// Randomized profile: `c = 1000`, `σ = 1/10 + 2/c`, `α = γ = 1/10`,
    /// halting above `C + Δ` message cost or `5C + 2Δ` partition cost.
    pub fn rand_paper() -> Self {
        let c = 1000.0;
        SimulationConstants {
            c,
            sigma: 0.1 + 2.0 / c,
            alpha: 0.1,
            gamma: 0.1,
            kmsg_threshold: Threshold { per_round: 1.0, per_delta: 1.0 },
            kprt_threshold: Threshold { per_round: 5.0, per_delta: 2.0 },
            strict_mode: false,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "det-paper" => Ok(Self::det_paper()),
            "rand-paper" => Ok(Self::rand_paper()),
            _ => invalid(format!("unknown constants profile `{name}`")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c, self.sigma, self.alpha, self.gamma];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return invalid("constants c, sigma, alpha, gamma must be positive");
        }
        Ok(())
    }

    /// Extra sparsity allowed after a recovery step: `4/c`.
    pub fn slack(&self) -> f64 {
        4.0 / self.c
    }

    /// `Δ ≥ c·log n`.
    pub fn in_regime(&self, delta: f64, n: usize) -> bool {
        delta >= self.c * (n as f64).log2()
    }
}
