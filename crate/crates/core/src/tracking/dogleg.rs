use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    GaussNewton,
    CauchyClipped,
    Interpolated,
    /// Normal equations were singular.
    SteepestDescent,
}

/// Relative damping of the normal equations, scaled by `trace/dim`.
pub const GN_DAMPING: f64 = 1e-8;

/// Dog-leg step for the local model `c + gᵀΔ + ½ΔᵀHΔ`.
pub fn dogleg_from_normal(h: &DMatrix<f64>, g: &DVector<f64>, rho: f64) -> (DVector<f64>, StepKind) {
    let n = g.len();
    let sd = -g;
    let sd_norm = sd.norm();
    if sd_norm == 0.0 {
        return (DVector::zeros(n), StepKind::GaussNewton);
    }
    let clipped_sd = || sd.clone() * (rho / sd_norm);

    let lambda = GN_DAMPING * h.trace() / n as f64;
    let damped = h + DMatrix::identity(n, n) * lambda;
    let Some(chol) = damped.cholesky() else {
        return (clipped_sd(), StepKind::SteepestDescent);
    };
    let gn = chol.solve(&sd);
    if !gn.iter().all(|v| v.is_finite()) {
        return (clipped_sd(), StepKind::SteepestDescent);
    }
    if gn.norm() <= rho {
        return (gn, StepKind::GaussNewton);
    }

    let curvature = g.dot(&(h * g));
    if curvature <= 0.0 {
        return (clipped_sd(), StepKind::CauchyClipped);
    }
    let cauchy = &sd * (sd_norm * sd_norm / curvature);
    let cauchy_norm = cauchy.norm();
    if cauchy_norm >= rho {
        return (cauchy * (rho / cauchy_norm), StepKind::CauchyClipped);
    }

    // ‖a + s·d‖ = ρ with a the Cauchy point and d = gn − a, s ∈ [0, 1].
    let d = &gn - &cauchy;
    let dd = d.norm_squared();
    let ad = cauchy.dot(&d);
    let c = cauchy_norm * cauchy_norm - rho * rho;
    let disc = (ad * ad - dd * c).max(0.0).sqrt();
    let s = if ad <= 0.0 { (disc - ad) / dd } else { -c / (ad + disc) };
    (cauchy + d * s, StepKind::Interpolated)
}

/// Dog-leg step for residuals `r` with Jacobian `J`, cost `½‖r‖²`.
pub fn dogleg_step(j: &DMatrix<f64>, r: &DVector<f64>, rho: f64) -> (DVector<f64>, StepKind) {
    let jt = j.transpose();
    dogleg_from_normal(&(&jt * j), &(&jt * r), rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub rho: f64,
    pub rho_max: f64,
    pub rho_min: f64,
    pub eta_low: f64,
    pub eta_high: f64,
    pub shrink: f64,
    pub grow: f64,
}

impl TrustRegion {
    pub fn new(rho: f64, rho_max: f64) -> Self {
        Self {
            rho,
            rho_max,
            rho_min: 1e-10,
            eta_low: 0.25,
            eta_high: 0.75,
            shrink: 0.5,
            grow: 2.0,
        }
    }

    /// Adjusts the radius from the gain ratio; returns whether the step is
    /// accepted.
    pub fn update(&mut self, ratio: f64, at_boundary: bool) -> bool {
        if ratio < self.eta_low {
            self.rho *= self.shrink;
        } else if ratio > self.eta_high && at_boundary {
            self.rho = (self.rho * self.grow).min(self.rho_max);
        }
        ratio > 0.0
    }

    pub fn stalled(&self) -> bool {
        self.rho < self.rho_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub rho_initial: f64,
    pub rho_max: f64,
    pub rho_min: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            rho_initial: 0.1,
            rho_max: 1.0,
            rho_min: 1e-10,
            max_iterations: 50,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho_initial > 0.0 && self.rho_initial <= self.rho_max) {
            return Err(format!(
                "trust region radius {} outside (0, {}]",
                self.rho_initial, self.rho_max
            ));
        }
        if !(self.rho_min > 0.0) || self.max_iterations == 0 {
            return Err("rho_min must be positive and max_iterations nonzero".into());
        }
        Ok(())
    }

    fn trust_region(&self) -> TrustRegion {
        TrustRegion {
            rho_min: self.rho_min,
            ..TrustRegion::new(self.rho_initial, self.rho_max)
        }
    }
}

/// Value, gradient and Gauss–Newton Hessian of a cost at a point.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub cost: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub trait LeastSquaresProblem {
    type State: Clone;
    type Error;

    fn linearize(&self, state: &Self::State) -> Result<Linearization, Self::Error>;
    /// `None` when the cost is undefined at `state`; the step is rejected.
    fn cost(&self, state: &Self::State) -> Option<f64>;
    /// Actual cost decrease from `current` (with cost `current_cost`) to
    /// `trial`. Problems whose residual set changes with the state override
    /// this to compare like with like.
    fn cost_reduction(&self, _current: &Self::State, current_cost: f64, trial: &Self::State) -> Option<f64> {
        self.cost(trial).map(|c| current_cost - c)
    }
    fn retract(&self, state: &Self::State, step: &DVector<f64>) -> Self::State;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    StepTolerance,
    CostTolerance,
    MaxIterations,
    RadiusCollapsed,
    /// Zero gradient and curvature at the start: nothing to optimize.
    FlatCost,
    Converged,
}

#[derive(Clone, Debug)]
pub struct SolverOutcome<S> {
    pub state: S,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError<E> {
    #[error("linearization failed: {0:?}")]
    Linearize(E),
}

/// Trust-region dog-leg minimization. A step is accepted iff it lowers the
/// cost.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::State,
    params: &SolverParams,
) -> Result<SolverOutcome<P::State>, SolveError<P::Error>> {
    let mut tr = params.trust_region();
    let mut state = initial;
    let mut lin = problem.linearize(&state).map_err(SolveError::Linearize)?;
    if lin.gradient.iter().all(|g| *g == 0.0) {
        let flat = lin.hessian.iter().all(|h| *h == 0.0);
        return Ok(SolverOutcome {
            state,
            cost: lin.cost,
            iterations: 0,
            termination: if flat {
                Termination::FlatCost
            } else {
                Termination::Converged
            },
        });
    }
    let mut iterations = 0;
    let termination = loop {
        if iterations >= params.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let (step, _) = dogleg_from_normal(&lin.hessian, &lin.gradient, tr.rho);
        let step_norm = step.norm();
        if step_norm < params.step_tolerance {
            break Termination::StepTolerance;
        }
        let trial = problem.retract(&state, &step);
        let predicted = -(lin.gradient.dot(&step) + 0.5 * step.dot(&(&lin.hessian * &step)));
        let (ratio, reduction) = match problem.cost_reduction(&state, lin.cost, &trial) {
            Some(d) if predicted > 0.0 => (d / predicted, d),
            Some(d) => (if d > 0.0 { 1.0 } else { -1.0 }, d),
            None => (-1.0, f64::NEG_INFINITY),
        };
        let at_boundary = step_norm >= tr.rho * (1.0 - 1e-9);
        if tr.update(ratio, at_boundary) {
            state = trial;
            lin = problem.linearize(&state).map_err(SolveError::Linearize)?;
            if reduction < params.cost_tolerance {
                break Termination::CostTolerance;
            }
            if lin.gradient.iter().all(|g| *g == 0.0) {
                break Termination::Converged;
            }
        } else {
            // An interior step would be retried unchanged until the radius
            // drops below it.
            tr.rho = tr.rho.min(step_norm * tr.shrink);
            if tr.stalled() {
                break Termination::RadiusCollapsed;
            }
        }
    };
    Ok(SolverOutcome {
        state,
        cost: lin.cost,
        iterations,
        termination,
    })
}
