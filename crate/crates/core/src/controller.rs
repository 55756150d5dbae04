//! Potential-energy-shaping controller for simultaneous position and
//! stiffness regulation.
//!
//! Tendon tensions `u = (u1, u2)` are mapped to `tau = (u1 - u2, u2)`. The
//! second channel is held at a pretension `tau2*` that lies in the null
//! direction of the actuation, while the first channel shapes the potential
//! into
//!
//! ```text
//! U_d(q) = -gamma cos(q_sum - q_sum*) + (alpha2 / 2) |q - q*|^2
//! ```
//!
//! and injects damping along `1_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{differencing_annihilator, ones, spd_solve, sym_eigenvalues};
use crate::model::{self, inertia_matrix, potential_gradient, q_sum, RobotParams, State};

/// What to do when the commanded tensions would be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaturationPolicy {
    /// Clamp negative tensions to zero and log an event.
    #[default]
    Clamp,
    /// Fail with [`Error::TensionViolation`].
    Strict,
    /// Apply the unconstrained tensions and log an event.
    Monitor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    /// Desired homogeneous joint angle (rad).
    pub theta_star: f64,
    /// Pretension held on the second transformed channel (N).
    pub tau2_star: f64,
    /// Shaping gain (N m / rad).
    pub gamma: f64,
    /// Damping-injection gain, symmetric positive definite.
    pub kd: DMatrix<f64>,
    pub saturation: SaturationPolicy,
}

impl ControllerSpec {
    /// Spec with scalar damping gain `kd * I_n` and the clamping policy.
    pub fn new(n: usize, theta_star: f64, tau2_star: f64, gamma: f64, kd: f64) -> Self {
        ControllerSpec {
            theta_star,
            tau2_star,
            gamma,
            kd: DMatrix::identity(n, n) * kd,
            saturation: SaturationPolicy::Clamp,
        }
    }

    pub fn with_policy(mut self, policy: SaturationPolicy) -> Self {
        self.saturation = policy;
        self
    }

    pub fn with_tau2(mut self, tau2_star: f64) -> Self {
        self.tau2_star = tau2_star;
        self
    }

    pub fn q_star(&self, n: usize) -> DVector<f64> {
        DVector::from_element(n, self.theta_star)
    }

    pub fn validate(&self, params: &RobotParams) -> Result<()> {
        if !(self.tau2_star.is_finite() && self.tau2_star >= 0.0) {
            return Err(Error::invalid(
                "tau2_star",
                format!("pretension must be >= 0, got {}", self.tau2_star),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("shaping gain must satisfy gamma > 0, got {}", self.gamma),
            ));
        }
        if !self.theta_star.is_finite() || self.theta_star.abs() > model::JOINT_LIMIT {
            return Err(Error::invalid(
                "theta_star",
                format!("target {} rad outside [-pi/2, pi/2]", self.theta_star),
            ));
        }
        let n = params.n;
        if self.kd.shape() != (n, n) {
            return Err(Error::Dimension {
                what: "damping gain kd",
                expected: n,
                got: self.kd.nrows(),
            });
        }
        if (&self.kd - self.kd.transpose()).amax() > 1e-12 * self.kd.amax().max(1.0) {
            return Err(Error::invalid("kd", "damping gain must be symmetric"));
        }
        if sym_eigenvalues(&self.kd)[0] <= 0.0 {
            return Err(Error::invalid("kd", "damping gain must be positive definite"));
        }
        Ok(())
    }
}

/// `tau = T_u u` with `T_u = [[1, -1], [0, 1]]`.
pub fn input_transform(u: [f64; 2]) -> [f64; 2] {
    [u[0] - u[1], u[1]]
}

/// `u = T_u^{-1} tau = (tau1 + tau2, tau2)`.
pub fn input_transform_inverse(tau: [f64; 2]) -> [f64; 2] {
    [tau[0] + tau[1], tau[1]]
}

/// `tau_N(tau) = (c1 + g1) tau1 + 2 g1 tau2`, the scalar actually driving
/// the chain along `1_n`.
pub fn tau_n(q: &DVector<f64>, tau: [f64; 2], params: &RobotParams) -> f64 {
    let g = model::g1(q, params);
    (params.c1 + g) * tau[0] + 2.0 * g * tau[1]
}

/// Generalized force `G_tau(q) tau = tau_N 1_n`.
pub fn actuation(q: &DVector<f64>, tau: [f64; 2], params: &RobotParams) -> DVector<f64> {
    ones(q.len()) * tau_n(q, tau, params)
}

pub fn desired_potential(q: &DVector<f64>, spec: &ControllerSpec, params: &RobotParams) -> f64 {
    let n = q.len() as f64;
    let dq = q.add_scalar(-spec.theta_star);
    -spec.gamma * (q_sum(q) - n * spec.theta_star).cos() + 0.5 * params.alpha2 * dq.norm_squared()
}

/// `gamma sin(q_sum - q_sum*) 1_n + alpha2 (q - q*)`.
pub fn desired_potential_gradient(
    q: &DVector<f64>,
    spec: &ControllerSpec,
    params: &RobotParams,
) -> DVector<f64> {
    let n = q.len() as f64;
    let s = spec.gamma * (q_sum(q) - n * spec.theta_star).sin();
    q.map(|qi| s + params.alpha2 * (qi - spec.theta_star))
}

/// `gamma cos(q_sum - q_sum*) 1_{n x n} + alpha2 I`.
pub fn desired_potential_hessian(
    q: &DVector<f64>,
    spec: &ControllerSpec,
    params: &RobotParams,
) -> DMatrix<f64> {
    let n = q.len();
    let c = spec.gamma * (q_sum(q) - n as f64 * spec.theta_star).cos();
    DMatrix::from_element(n, n, c) + DMatrix::identity(n, n) * params.alpha2
}

/// The three additive parts of the transformed input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauComponents {
    pub stiffness: [f64; 2],
    pub shaping: [f64; 2],
    pub damping: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Tensions actually applied after the saturation policy.
    pub u: [f64; 2],
    /// Tensions before the saturation policy.
    pub u_raw: [f64; 2],
    pub tau: [f64; 2],
    pub components: TauComponents,
    /// Raw tensions had a negative component.
    pub saturated: bool,
    /// Smallest pretension keeping both tensions nonnegative at this state.
    pub tau2_min_required: f64,
}

pub fn control_law(state: &State, spec: &ControllerSpec, params: &RobotParams) -> Result<ControlOutput> {
    let q = &state.q;
    let arm = model::moment_arm(q, params)?;
    let g = model::g1(q, params);
    let n = q.len() as f64;

    let stiffness = [-2.0 * g / arm * spec.tau2_star, spec.tau2_star];

    let shaping_dir = potential_gradient(q, params) - desired_potential_gradient(q, spec, params);
    let shaping = [shaping_dir.sum() / n / arm, 0.0];

    let velocity = spd_solve(&inertia_matrix(q, params), &state.p)?;
    let damping = [-(ones(q.len()).dot(&(&spec.kd * &velocity))) / arm, 0.0];

    let tau = [
        stiffness[0] + shaping[0] + damping[0],
        stiffness[1] + shaping[1] + damping[1],
    ];
    let u_raw = input_transform_inverse(tau);

    // u1 = tau1' + tau2* (c1 - g1) / (c1 + g1), tau1' independent of tau2*
    let free = shaping[0] + damping[0];
    let ratio = (params.c1 - g) / arm;
    let tau2_min_required = if free >= 0.0 {
        0.0
    } else if ratio > 0.0 {
        -free / ratio
    } else {
        f64::INFINITY
    };

    let saturated = u_raw[0] < 0.0 || u_raw[1] < 0.0;
    let u = match (spec.saturation, saturated) {
        (_, false) | (SaturationPolicy::Monitor, true) => u_raw,
        (SaturationPolicy::Clamp, true) => [u_raw[0].max(0.0), u_raw[1].max(0.0)],
        (SaturationPolicy::Strict, true) => {
            return Err(Error::TensionViolation {
                u1: u_raw[0],
                u2: u_raw[1],
            })
        }
    };

    Ok(ControlOutput {
        u,
        u_raw,
        tau,
        components: TauComponents {
            stiffness,
            shaping,
            damping,
        },
        saturated,
        tau2_min_required,
    })
}

/// `G_N^perp (grad U - grad U_d)` with the banded differencing annihilator.
pub fn matching_residual(q: &DVector<f64>, spec: &ControllerSpec, params: &RobotParams) -> DVector<f64> {
    matching_residual_for_target(q, &spec.q_star(q.len()), spec.gamma, params)
}

/// Matching residual for an arbitrary (possibly non-homogeneous) target.
pub fn matching_residual_for_target(
    q: &DVector<f64>,
    q_star: &DVector<f64>,
    gamma: f64,
    params: &RobotParams,
) -> DVector<f64> {
    let ds = q_sum(q) - q_sum(q_star);
    let grad_ud = q.zip_map(q_star, |qi, qs| gamma * ds.sin() + params.alpha2 * (qi - qs));
    differencing_annihilator(q.len()) * (potential_gradient(q, params) - grad_ud)
}

/// Admissible shaping gains for global convexity of the desired potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityBounds {
    /// `gamma < alpha2`, as stated with the regulation result.
    pub stated: f64,
    /// `gamma < alpha2 / n`, from the smallest eigenvalue
    /// `alpha2 - n gamma` of the Hessian where `cos(q_sum - q_sum*) = -1`.
    pub conservative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityRegime {
    /// Desired potential is globally convex.
    Global,
    /// Satisfies `gamma < alpha2` but not `gamma < alpha2 / n`.
    StatedBoundOnly,
    /// Convex only near the target.
    Local,
}

impl ConvexityBounds {
    pub fn regime(&self, gamma: f64) -> StabilityRegime {
        if gamma < self.conservative {
            StabilityRegime::Global
        } else if gamma < self.stated {
            StabilityRegime::StatedBoundOnly
        } else {
            StabilityRegime::Local
        }
    }
}

pub fn convexity_bound(params: &RobotParams) -> ConvexityBounds {
    ConvexityBounds {
        stated: params.alpha2,
        conservative: params.alpha2 / params.n as f64,
    }
}
