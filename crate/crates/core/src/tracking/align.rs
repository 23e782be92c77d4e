use nalgebra::{DMatrix, DVector, Vector3};

use crate::geometry::{PoseSE3, RotationSO3, Twist};

use super::dogleg::{minimize, LeastSquaresProblem, Linearization, SolveError, Termination};
use super::photometric::{cost, cost_reduction, normal_equations, Parameterization, TrackPoints};
use super::{AlignError, FramePyramid, Loss, PyramidLevel, TrackingParams, MIN_RESIDUALS};

/// Relative pose of the tracked camera in the reference camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignOutcome {
    pub pose: PoseSE3,
    pub iterations: usize,
    pub cost: f64,
    /// The cost had no gradient (textureless input).
    pub flat_cost: bool,
}

struct PhotometricProblem<'a> {
    reference: &'a PyramidLevel,
    points: TrackPoints,
    loss: Loss,
    param: Parameterization,
    level: usize,
}

impl<'a> PhotometricProblem<'a> {
    fn new(
        reference: &'a PyramidLevel,
        track: &PyramidLevel,
        loss: Loss,
        param: Parameterization,
        level: usize,
    ) -> Self {
        Self {
            reference,
            points: TrackPoints::from_level(track),
            loss,
            param,
            level,
        }
    }
}

impl LeastSquaresProblem for PhotometricProblem<'_> {
    type State = PoseSE3;
    type Error = AlignError;

    fn linearize(&self, pose: &PoseSE3) -> Result<Linearization, AlignError> {
        let ne = normal_equations(self.reference, &self.points, pose, self.loss);
        if ne.count < MIN_RESIDUALS {
            return Err(AlignError::TooFewResiduals {
                level: self.level,
                found: ne.count,
            });
        }
        let dim = match self.param {
            Parameterization::So3 => 3,
            Parameterization::Se3 => 6,
        };
        Ok(Linearization {
            cost: ne.cost,
            gradient: DVector::from_fn(dim, |i, _| ne.gradient[i]),
            hessian: DMatrix::from_fn(dim, dim, |i, j| ne.hessian[(i, j)]),
        })
    }

    fn cost(&self, pose: &PoseSE3) -> Option<f64> {
        let (c, n) = cost(self.reference, &self.points, pose, self.loss);
        (n >= MIN_RESIDUALS).then_some(c)
    }

    fn cost_reduction(&self, current: &PoseSE3, _current_cost: f64, trial: &PoseSE3) -> Option<f64> {
        self.cost(trial)?;
        Some(cost_reduction(self.reference, &self.points, current, trial, self.loss).0)
    }

    fn retract(&self, pose: &PoseSE3, step: &DVector<f64>) -> PoseSE3 {
        let omega = Vector3::new(step[0], step[1], step[2]);
        let v = match self.param {
            Parameterization::So3 => Vector3::zeros(),
            Parameterization::Se3 => Vector3::new(step[3], step[4], step[5]),
        };
        pose.retract(&Twist::new(omega, v))
    }
}

fn unwrap_solve(e: SolveError<AlignError>) -> AlignError {
    match e {
        SolveError::Linearize(inner) => inner,
    }
}

fn check_pair(reference: &FramePyramid, track: &FramePyramid) -> Result<(), AlignError> {
    if reference.len() != track.len() || reference.is_empty() {
        return Err(AlignError::Pyramid(format!(
            "reference has {} levels, tracked frame {}",
            reference.len(),
            track.len()
        )));
    }
    Ok(())
}

/// Rotation-only alignment at the coarsest level, starting from identity.
pub fn optimize_rotation_so3(
    reference: &FramePyramid,
    track: &FramePyramid,
    params: &TrackingParams,
) -> Result<AlignOutcome, AlignError> {
    check_pair(reference, track)?;
    let problem = PhotometricProblem::new(
        reference.coarsest(),
        track.coarsest(),
        params.loss,
        Parameterization::So3,
        0,
    );
    let out = minimize(&problem, PoseSE3::identity(), &params.solver).map_err(unwrap_solve)?;
    let flat_cost = out.termination == Termination::FlatCost;
    if flat_cost {
        log::warn!("photometric cost is flat at the coarsest level; keeping identity rotation");
    }
    Ok(AlignOutcome {
        pose: PoseSE3::from_rotation(*out.state.rotation()),
        iterations: out.iterations,
        cost: out.cost,
        flat_cost,
    })
}

/// Six-parameter refinement over levels 2..Λ (coarse to fine), initialized
/// with `init_rot` and zero translation. A single-level pyramid is refined
/// at that level.
pub fn optimize_se3(
    reference: &FramePyramid,
    track: &FramePyramid,
    init_rot: &RotationSO3,
    params: &TrackingParams,
) -> Result<AlignOutcome, AlignError> {
    check_pair(reference, track)?;
    let first = if reference.len() == 1 { 0 } else { 1 };
    let mut pose = PoseSE3::from_rotation(*init_rot);
    let mut iterations = 0;
    let mut last_cost = None;
    let mut flat_cost = true;
    for level in first..reference.len() {
        let problem = PhotometricProblem::new(
            &reference.levels[level],
            &track.levels[level],
            params.loss,
            Parameterization::Se3,
            level,
        );
        match minimize(&problem, pose, &params.solver) {
            Ok(out) => {
                pose = out.state;
                iterations += out.iterations;
                last_cost = Some(out.cost);
                flat_cost &= out.termination == Termination::FlatCost;
            }
            Err(e) => log::warn!("skipping pyramid level {level}: {}", unwrap_solve(e)),
        }
    }
    let cost = last_cost.ok_or(AlignError::AllLevelsFailed)?;
    Ok(AlignOutcome {
        pose,
        iterations,
        cost,
        flat_cost,
    })
}

/// Rotation at the coarsest level, then full rigid motion over the finer
/// levels.
pub fn align_pair(
    reference: &FramePyramid,
    track: &FramePyramid,
    params: &TrackingParams,
) -> Result<AlignOutcome, AlignError> {
    let rot = optimize_rotation_so3(reference, track, params)?;
    let mut out = optimize_se3(reference, track, rot.pose.rotation(), params)?;
    out.iterations += rot.iterations;
    out.flat_cost &= rot.flat_cost;
    Ok(out)
}
