//! Rigid-link model of a planar antagonistic tendon-driven continuum section.
//!
//! The section is approximated by `n` rigid links joined by revolute joints.
//! A fixed base link of length `ell` stands vertically; every moving link has
//! length `2 ell` with its lumped mass at mid-length. Angles are measured from
//! the vertical, positive towards `+x`, and gravity acts along `-y`.

mod kinematics;
mod potential;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kinematics::{
    forward_kinematics, inertia_matrix, jacobian_point, jacobian_tip_frame, jacobian_world,
    point_hessian, point_position, tip_frame, ChainPoint, Kinematics, TipFrameJacobian,
};
pub use potential::{
    boundary_lengths, elastic_gradient_exact, elastic_potential_exact,
    elastic_potential_quadratic, gravity_potential, gravity_potential_sum, potential_gradient,
    potential_hessian, q_sum, total_potential, total_potential_with, ElasticModel,
};

/// Half of the admissible joint range, `|q_i| <= pi/2`.
pub const JOINT_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

/// Physical and model constants of one continuum section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Number of rigid links.
    pub n: usize,
    /// Half link length (m).
    pub ell: f64,
    /// Beam radius (m).
    pub r: f64,
    /// Mass per link (kg).
    pub m: f64,
    /// Gravity coefficient (N m).
    pub alpha1: f64,
    /// Elastic stiffness coefficient (N m / rad).
    pub alpha2: f64,
    /// Constant part of the tendon moment arm.
    pub c1: f64,
    /// Configuration-dependent modulation of the moment arm.
    pub c2: f64,
    /// Viscous damping per joint (N m s / rad).
    pub d: f64,
    /// Spring elongation coefficient of the exact elastic model (N/m).
    #[serde(default)]
    pub k_elastic: f64,
    /// Spring bending coefficient of the exact elastic model (N m / rad^2).
    #[serde(default)]
    pub k_bend: f64,
    /// Elastic energy offset (J).
    #[serde(default)]
    pub u0: f64,
    /// Whether the gravitational potential is active.
    #[serde(default = "default_true")]
    pub gravity: bool,
}

fn default_true() -> bool {
    true
}

impl RobotParams {
    /// Six-link section carrying the potential and input-matrix constants
    /// identified on the hardware platform (`c1 = 1.2143`, `c2 = -2.9015`,
    /// `alpha1 = 8.6114`, `alpha2 = 0.001`), with a 252 mm section length.
    ///
    /// Mass and damping are not identified on hardware; the values here are
    /// plausible placeholders for simulation.
    pub fn hardware_identified() -> Self {
        RobotParams {
            n: 6,
            ell: 0.021,
            r: 0.025,
            m: 0.1,
            alpha1: 8.6114,
            alpha2: 0.001,
            c1: 1.2143,
            c2: -2.9015,
            d: 0.002,
            k_elastic: 0.0,
            k_bend: 0.0,
            u0: 0.0,
            gravity: true,
        }
        .with_matched_elastic()
    }

    /// Synthetic desk-scale section used throughout the tests: convex shaping
    /// admits `gamma < alpha2 / n = 0.1` and the stiffest mode stays near
    /// 32 rad/s so fixed-step RK4 at 1 ms is accurate.
    pub fn desk_scale() -> Self {
        RobotParams {
            n: 6,
            ell: 0.08,
            r: 0.04,
            m: 1.0,
            alpha1: 1.0,
            alpha2: 0.6,
            c1: 0.04,
            c2: -0.016,
            d: 0.05,
            k_elastic: 0.0,
            k_bend: 0.0,
            u0: 0.0,
            gravity: true,
        }
        .with_matched_elastic()
    }

    /// Section whose elastic stiffness dominates gravity and tendon-induced
    /// stiffening; the regime where the kinematic open-loop stiffness formula
    /// is accurate to second order.
    pub fn stiff_beam() -> Self {
        RobotParams {
            n: 6,
            ell: 0.021,
            r: 0.025,
            m: 0.05,
            alpha1: 0.02,
            alpha2: 4.0,
            c1: 0.01,
            c2: -0.004,
            d: 0.01,
            k_elastic: 0.0,
            k_bend: 0.0,
            u0: 0.0,
            gravity: true,
        }
        .with_matched_elastic()
    }

    /// Chooses `k_elastic` and `k_bend` so that the exact elastic energy has
    /// the same curvature at the origin as the quadratic model, split evenly
    /// between elongation and bending.
    pub fn with_matched_elastic(mut self) -> Self {
        let quarter = self.alpha2 / 4.0;
        self.k_elastic = quarter / (self.ell * self.ell + self.r * self.r);
        self.k_bend = quarter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", format!("need n >= 2, got {}", self.n)));
        }
        let positive = [
            ("ell", self.ell),
            ("r", self.r),
            ("m", self.m),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let finite = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("k_elastic", self.k_elastic),
            ("k_bend", self.k_bend),
            ("u0", self.u0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(Error::invalid("d", format!("must be >= 0, got {}", self.d)));
        }
        if self.c1 == 0.0 {
            return Err(Error::invalid("c1", "moment arm vanishes at the origin"));
        }
        Ok(())
    }

    /// Largest `theta_max <= pi/2` such that `c1 + c2 sin(theta) != 0` for all
    /// `|theta| < theta_max`.
    pub fn moment_arm_range(&self) -> f64 {
        let ratio = (self.c1 / self.c2).abs();
        if self.c2 == 0.0 || ratio >= 1.0 {
            JOINT_LIMIT
        } else {
            ratio.asin()
        }
    }

    /// True when the moment arm is nonzero over the whole feasible range.
    pub fn moment_arm_globally_regular(&self) -> bool {
        self.c2 == 0.0 || (self.c1 / self.c2).abs() > 1.0
    }

    /// Gravity coefficient of the lumped-mass chain, `ell * m`.
    pub fn lumped_alpha1(&self) -> f64 {
        self.ell * self.m
    }

    /// Effective gravity coefficient (zero when gravity is switched off).
    pub fn alpha1_eff(&self) -> f64 {
        if self.gravity {
            self.alpha1
        } else {
            0.0
        }
    }

    /// Rotational inertia of a uniform rod of length `2 ell` about its centre.
    pub fn rod_inertia(&self) -> f64 {
        self.m * (2.0 * self.ell).powi(2) / 12.0
    }

    pub fn check_configuration(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::Dimension {
                what: "configuration",
                expected: self.n,
                got: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("configuration"));
        }
        if let Some((index, &value)) = q
            .iter()
            .enumerate()
            .find(|(_, v)| v.abs() > JOINT_LIMIT)
        {
            return Err(Error::Infeasible {
                index: index + 1,
                value: value.abs(),
            });
        }
        Ok(())
    }
}

/// Configuration and generalized momenta of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                what: "momenta",
                expected: q.len(),
                got: p.len(),
            });
        }
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(State { q, p })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        State {
            q,
            p: DVector::zeros(n),
        }
    }

    pub fn zero(n: usize) -> Self {
        State::at_rest(DVector::zeros(n))
    }

    pub fn homogeneous(n: usize, theta: f64) -> Self {
        State::at_rest(DVector::from_element(n, theta))
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Mean joint angle `q_sum / n`.
    pub fn mean_angle(&self) -> f64 {
        self.q.mean()
    }
}

/// The two input-matrix columns evaluated at a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrixEval {
    /// `g1(q)`.
    pub g1_scalar: f64,
    /// `G1(q) = (c1 + g1) 1_n`.
    pub col1: DVector<f64>,
    /// `G2(q) = (g1 - c1) 1_n`.
    pub col2: DVector<f64>,
}

impl InputMatrixEval {
    /// Generalized force `G(q) u` produced by tensions `u = (u1, u2)`.
    pub fn apply(&self, u: [f64; 2]) -> DVector<f64> {
        &self.col1 * u[0] + &self.col2 * u[1]
    }
}

/// Configuration-dependent part of the moment arm, `c2 sin(q_sum / n)`.
///
/// Odd in `q`, zero at the origin, and equal to `c2 sin(theta)` on homogeneous
/// configurations `q = theta 1_n`.
pub fn g1(q: &DVector<f64>, params: &RobotParams) -> f64 {
    params.c2 * (q_sum(q) / q.len() as f64).sin()
}

/// Gradient of [`g1`] with respect to `q` (a multiple of `1_n`).
pub fn g1_gradient(q: &DVector<f64>, params: &RobotParams) -> DVector<f64> {
    let n = q.len() as f64;
    DVector::from_element(q.len(), params.c2 / n * (q_sum(q) / n).cos())
}

/// `c1 + g1(q)`, failing when it vanishes.
pub fn moment_arm(q: &DVector<f64>, params: &RobotParams) -> Result<f64> {
    let value = params.c1 + g1(q, params);
    let scale = params.c1.abs().max(params.c2.abs());
    if value.abs() <= 1e-12 * scale {
        return Err(Error::SingularMomentArm { value });
    }
    Ok(value)
}

pub fn input_matrix(q: &DVector<f64>, params: &RobotParams) -> Result<InputMatrixEval> {
    moment_arm(q, params)?;
    let g = g1(q, params);
    let n = q.len();
    Ok(InputMatrixEval {
        g1_scalar: g,
        col1: DVector::from_element(n, params.c1 + g),
        col2: DVector::from_element(n, g - params.c1),
    })
}

/// External load on the chain, either as joint torques or as a planar force
/// on the last link at `offset` beyond the link centre.
#[derive(Debug, Clone, PartialEq)]
pub enum Wrench {
    JointTorques(DVector<f64>),
    TipForce { force: Vector2<f64>, offset: f64 },
}

impl Wrench {
    pub fn joint_torques(&self, q: &DVector<f64>, params: &RobotParams) -> Result<DVector<f64>> {
        match self {
            Wrench::JointTorques(tau) => {
                if tau.len() != params.n {
                    return Err(Error::Dimension {
                        what: "joint torques",
                        expected: params.n,
                        got: tau.len(),
                    });
                }
                if tau.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("joint torques"));
                }
                Ok(tau.clone())
            }
            Wrench::TipForce { force, offset } => {
                if !(force.iter().all(|v| v.is_finite()) && offset.is_finite()) {
                    return Err(Error::NonFinite("tip force"));
                }
                let point = ChainPoint::on_last_link(params, *offset);
                let j = jacobian_point(q, params, point);
                Ok(j.transpose() * force)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ones;

    #[test]
    fn presets_validate() {
        for p in [
            RobotParams::hardware_identified(),
            RobotParams::desk_scale(),
            RobotParams::stiff_beam(),
        ] {
            p.validate().unwrap();
        }
    }

    #[test]
    fn identified_constants_have_a_singular_moment_arm_inside_the_joint_range() {
        let p = RobotParams::hardware_identified();
        assert!(!p.moment_arm_globally_regular());
        let theta = p.moment_arm_range();
        assert!((theta.to_degrees() - 24.74).abs() < 0.01);
        let q = DVector::from_element(6, theta);
        assert!(matches!(
            input_matrix(&q, &p),
            Err(Error::SingularMomentArm { .. })
        ));
        assert!(RobotParams::desk_scale().moment_arm_globally_regular());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut p = RobotParams::desk_scale();
        p.n = 1;
        assert!(p.validate().is_err());
        let mut p = RobotParams::desk_scale();
        p.alpha2 = -1.0;
        assert!(p.validate().is_err());
        let mut p = RobotParams::desk_scale();
        p.d = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn input_matrix_at_origin_is_antisymmetric() {
        let p = RobotParams::hardware_identified();
        let g = input_matrix(&DVector::zeros(6), &p).unwrap();
        assert_eq!(g.g1_scalar, 0.0);
        assert_eq!(g.col1, ones(6) * p.c1);
        assert_eq!(g.col2, -ones(6) * p.c1);
    }

    #[test]
    fn input_matrix_on_homogeneous_configuration() {
        let p = RobotParams::hardware_identified();
        let theta = 0.0873;
        let g = input_matrix(&DVector::from_element(6, theta), &p).unwrap();
        let expect = 1.2143 - 2.9015 * theta.sin();
        assert!((g.col1[0] - expect).abs() < 1e-15);
        assert!((p.c1 + g.g1_scalar - expect).abs() < 1e-15);
    }

    #[test]
    fn g1_is_odd_and_columns_have_fixed_sum_and_difference() {
        let p = RobotParams::desk_scale();
        let q = DVector::from_vec(vec![0.1, -0.3, 0.25, 0.05, -0.02, 0.4]);
        assert_eq!(g1(&-q.clone(), &p), -g1(&q, &p));
        let g = input_matrix(&q, &p).unwrap();
        let sum = &g.col1 + &g.col2;
        let diff = &g.col1 - &g.col2;
        assert!((sum - ones(6) * 2.0 * g.g1_scalar).norm() < 1e-15);
        assert!((diff - ones(6) * 2.0 * p.c1).norm() < 1e-15);
    }

    #[test]
    fn configuration_checks() {
        let p = RobotParams::desk_scale();
        assert!(p.check_configuration(&DVector::zeros(5)).is_err());
        let mut q = DVector::zeros(6);
        q[2] = 1.6;
        assert!(matches!(
            p.check_configuration(&q),
            Err(Error::Infeasible { index: 3, .. })
        ));
        q[2] = f64::NAN;
        assert!(matches!(p.check_configuration(&q), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tip_force_maps_through_jacobian_transpose() {
        let p = RobotParams::desk_scale();
        let q = DVector::from_element(6, 0.1);
        let w = Wrench::TipForce {
            force: Vector2::new(1.0, 0.0),
            offset: p.ell,
        };
        let tau = w.joint_torques(&q, &p).unwrap();
        let j = jacobian_world(&q, &p);
        assert!((tau - j.row(0).transpose()).norm() < 1e-15);
    }
}
