//! Equilibria and stiffness: assignable-equilibrium membership, open- and
//! closed-loop stiffness, shifted equilibria under constant loads and
//! stiffness sweeps with affine fits.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::controller::{self, ControllerSpec};
use crate::dynamics::{quasi_static_probe, ProbeConfig, ProbeLoad};
use crate::error::{Error, Result};
use crate::linalg::{affine_fit, differencing_annihilator, orthogonal_annihilator, pearson, pinv, sym_eigenvalues};
use crate::model::{self, jacobian_tip_frame, potential_gradient, potential_hessian, RobotParams};

/// Relative tolerance for the equality condition of membership tests.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;
pub const SHIFTED_TOLERANCE: f64 = 1e-12;
pub const SHIFTED_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumReason {
    Assignable,
    /// The required pretension would be negative.
    TensionSign,
    /// The static balance has no solution for any input.
    NotInRange,
    /// `g0` and `g1` are parallel; handled by the scalar (homogeneous) test.
    ParallelInputs,
    /// `g1` vanishes; only `tau1` acts.
    Origin,
    /// Closed-loop equilibrium under a constant external load.
    Shifted,
}

impl fmt::Display for EquilibriumReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EquilibriumReason::Assignable => "assignable",
            EquilibriumReason::TensionSign => "tension sign",
            EquilibriumReason::NotInRange => "not in range",
            EquilibriumReason::ParallelInputs => "parallel inputs",
            EquilibriumReason::Origin => "origin",
            EquilibriumReason::Shifted => "shifted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub q_bar: Vec<f64>,
    /// Norm of the static balance residual at the reported input (N·m).
    pub residual_norm: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub assignable: bool,
    pub reason: EquilibriumReason,
    /// The reported `(tau1, tau2)` also gives `u1, u2 >= 0`.
    pub tensions_nonnegative: bool,
}

impl EquilibriumReport {
    pub fn tensions(&self) -> [f64; 2] {
        controller::input_transform_inverse([self.tau1, self.tau2])
    }

    pub fn summary(&self) -> String {
        let [u1, u2] = self.tensions();
        format!(
            "assignable = {}\nreason = {}\nresidual_norm = {}\ntau1 = {}\ntau2 = {}\nu1 = {}\nu2 = {}\n",
            self.assignable,
            self.reason,
            sig6(self.residual_norm),
            sig6(self.tau1),
            sig6(self.tau2),
            sig6(u1),
            sig6(u2),
        )
    }
}

/// Split of a scalar drive `tau_n = a tau1 + b tau2` with the smallest
/// `tau2 >= 0` such that `u1 = tau1 + tau2 >= 0`.
///
/// Returns `None` when no nonnegative pretension makes `u1` nonnegative.
pub fn minimal_pretension_split(tau_n: f64, a: f64, b: f64) -> Option<(f64, f64)> {
    // u1 = tau_n / a + (1 - b / a) tau2
    let base = tau_n / a;
    let gain = 1.0 - b / a;
    let tau2 = if base >= 0.0 {
        0.0
    } else if gain > 0.0 {
        -base / gain
    } else {
        return None;
    };
    Some(((tau_n - b * tau2) / a, tau2))
}

fn residual(grad_u: &DVector<f64>, g0: &DVector<f64>, g1: &DVector<f64>, tau1: f64, tau2: f64) -> f64 {
    (grad_u - (g0 + g1) * tau1 - g1 * (2.0 * tau2)).norm()
}

/// Membership in the assignable set for `grad U = (g0 + g1) tau1 + 2 g1 tau2`
/// with `tau2 >= 0`, given the gradient directly.
pub fn assignable_membership_core(
    q: &DVector<f64>,
    grad_u: &DVector<f64>,
    g0: &DVector<f64>,
    g1: &DVector<f64>,
) -> Result<EquilibriumReport> {
    let n = q.len();
    for (what, v) in [("g0", g0), ("g1", g1), ("gradient", grad_u)] {
        if v.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                got: v.len(),
            });
        }
    }
    let tol = MEMBERSHIP_TOLERANCE * grad_u.norm().max(1e-12);
    let report = |tau1: f64, tau2: f64, assignable: bool, reason| {
        let [u1, u2] = controller::input_transform_inverse([tau1, tau2]);
        EquilibriumReport {
            q_bar: q.iter().copied().collect(),
            residual_norm: residual(grad_u, g0, g1, tau1, tau2),
            tau1,
            tau2,
            assignable,
            reason,
            tensions_nonnegative: u1 >= 0.0 && u2 >= 0.0,
        }
    };

    let g1_norm = g1.norm();
    if g1_norm <= 1e-14 * g0.norm().max(1.0) {
        // only g0 tau1 acts; any tau2 >= 0 is admissible, take the smallest
        // one keeping u1 >= 0
        let g0_sq = g0.norm_squared();
        if g0_sq == 0.0 {
            return Err(Error::RankDeficient {
                what: "input matrix vanishes".into(),
            });
        }
        let tau1 = g0.dot(grad_u) / g0_sq;
        let tau2 = (-tau1).max(0.0);
        let r = report(tau1, tau2, true, EquilibriumReason::Origin);
        let ok = r.residual_norm <= tol;
        return Ok(EquilibriumReport {
            assignable: ok,
            reason: if ok { EquilibriumReason::Origin } else { EquilibriumReason::NotInRange },
            ..r
        });
    }

    let g1_perp = orthogonal_annihilator(g1)?;
    let w = &g1_perp * g0;
    if w.norm() <= 1e-12 * g0.norm() {
        // parallel inputs: grad U must lie along g1 and the drive is scalar
        let e = g1 / g1_norm;
        let tau_n = e.dot(grad_u);
        let a = e.dot(g0) + g1_norm;
        let b = 2.0 * g1_norm;
        let in_range = (grad_u - &e * tau_n).norm() <= tol;
        let (tau1, tau2) = minimal_pretension_split(tau_n, a, b).unwrap_or((tau_n / a, 0.0));
        let r = report(tau1, tau2, in_range, EquilibriumReason::ParallelInputs);
        return Ok(EquilibriumReport {
            reason: if in_range {
                EquilibriumReason::ParallelInputs
            } else {
                EquilibriumReason::NotInRange
            },
            ..r
        });
    }

    let v = &g1_perp * grad_u;
    let w_mat = DMatrix::from_column_slice(n - 1, 1, w.as_slice());
    let w_pinv = pinv(&w_mat);
    let tau1 = (&w_pinv * &v)[0];
    // (g1^perp g0)^perp g1^perp grad U, as the distance of v from span{w}
    let range_residual = (&v - &w * tau1).norm();
    let slack = g1.dot(grad_u) - g1.dot(&(g0 + g1)) * tau1;
    let tau2 = slack / (2.0 * g1_norm * g1_norm);

    let in_range = range_residual <= tol;
    let sign_ok = slack >= -tol * g1_norm;
    let reason = match (in_range, sign_ok) {
        (true, true) => EquilibriumReason::Assignable,
        (false, _) => EquilibriumReason::NotInRange,
        (true, false) => EquilibriumReason::TensionSign,
    };
    let tau2 = if sign_ok { tau2.max(0.0) } else { tau2 };
    Ok(report(tau1, tau2, in_range && sign_ok, reason))
}

/// Membership test at `q` with input directions `g0`, `g1` and the model
/// potential gradient.
pub fn assignable_membership_general(
    q: &DVector<f64>,
    g0: &DVector<f64>,
    g1: &DVector<f64>,
    params: &RobotParams,
) -> Result<EquilibriumReport> {
    params.check_configuration(q)?;
    assignable_membership_core(q, &potential_gradient(q, params), g0, g1)
}

/// Scalar drive `tau_N = alpha1 sin(n theta) + alpha2 theta` holding the
/// homogeneous configuration `theta 1_n`.
pub fn homogeneous_drive(theta: f64, params: &RobotParams) -> f64 {
    let n = params.n as f64;
    params.alpha1_eff() * (n * theta).sin() + params.alpha2 * theta
}

/// Homogeneous equilibria `theta 1_n`, reported with the minimal pretension
/// keeping both tensions nonnegative.
pub fn homogeneous_membership(theta: f64, params: &RobotParams) -> Result<EquilibriumReport> {
    let n = params.n;
    let q = DVector::from_element(n, theta);
    params.check_configuration(&q)?;
    let grad = potential_gradient(&q, params);
    let annihilated = (differencing_annihilator(n) * &grad).norm();
    let in_range = annihilated <= MEMBERSHIP_TOLERANCE * grad.norm().max(1e-12);

    let arm = model::moment_arm(&q, params)?;
    let g = model::g1(&q, params);
    let tau_n = homogeneous_drive(theta, params);
    let (tau1, tau2, nonneg) = match minimal_pretension_split(tau_n, arm, 2.0 * g) {
        Some((t1, t2)) => (t1, t2, true),
        None => (tau_n / arm, 0.0, false),
    };
    let force = controller::actuation(&q, [tau1, tau2], params);
    Ok(EquilibriumReport {
        q_bar: q.iter().copied().collect(),
        residual_norm: (&grad - force).norm().max(annihilated),
        tau1,
        tau2,
        assignable: in_range,
        reason: if in_range {
            EquilibriumReason::Assignable
        } else {
            EquilibriumReason::NotInRange
        },
        tensions_nonnegative: nonneg,
    })
}

/// Column of the tip-frame Jacobian pseudoinverse belonging to the
/// transverse coordinate, with the transverse row.
fn transverse_map(q: &DVector<f64>, params: &RobotParams, contact_offset: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let jt = jacobian_tip_frame(q, params, contact_offset);
    if jt.transverse.norm() <= 1e-14 * params.ell {
        return Err(Error::RankDeficient {
            what: "transverse row of the tip-frame Jacobian".into(),
        });
    }
    let column = pinv(&jt.matrix()).column(0).into_owned();
    Ok((jt.transverse, column))
}

/// Open-loop transverse stiffness at the origin under balanced tensions
/// `u = (mu, mu)`, contact at the tip.
pub fn open_loop_stiffness_analytic(mu: f64, params: &RobotParams) -> Result<f64> {
    open_loop_stiffness_analytic_at(mu, params, params.ell)
}

/// `K_T = (J1 / |J1|^2) [grad^2 U - mu (grad G1 + grad G2)^T] x1`, with `x1`
/// the transverse column of the tip-frame Jacobian pseudoinverse at `q = 0`.
pub fn open_loop_stiffness_analytic_at(mu: f64, params: &RobotParams, contact_offset: f64) -> Result<f64> {
    params.validate()?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid("mu", "pretension must be >= 0"));
    }
    let n = params.n;
    let q = DVector::zeros(n);
    let (j1, x1) = transverse_map(&q, params, contact_offset)?;
    let input_jac_sum = input_column_jacobian_sum(&q, params);
    let k = potential_hessian(&q, params) - input_jac_sum.transpose() * mu;
    Ok(j1.dot(&(k * x1)) / j1.norm_squared())
}

/// `grad G1 + grad G2` with `grad G_j` the Jacobian of the j-th column of the
/// input matrix. Both columns vary as `g1(q) 1_n`.
pub fn input_column_jacobian_sum(q: &DVector<f64>, params: &RobotParams) -> DMatrix<f64> {
    let n = q.len();
    let dg = model::g1_gradient(q, params);
    DMatrix::from_fn(n, n, |_, j| 2.0 * dg[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverallStiffness {
    pub analytic: DMatrix<f64>,
    pub numeric: DMatrix<f64>,
    /// Largest entrywise difference relative to the largest analytic entry.
    pub max_relative_difference: f64,
    /// Ascending eigenvalues of the analytic matrix.
    pub eigenvalues: Vec<f64>,
}

/// Closed-loop stiffness `K_O = gamma 1_{n x n} + alpha2 I` at the target,
/// with a central-difference version of the Jacobian of `grad U_d`.
pub fn overall_stiffness_matrix(spec: &ControllerSpec, params: &RobotParams) -> Result<OverallStiffness> {
    spec.validate(params)?;
    let n = params.n;
    let q_star = spec.q_star(n);
    let analytic = DMatrix::from_element(n, n, spec.gamma) + DMatrix::identity(n, n) * params.alpha2;
    let h = 1e-6;
    let mut numeric = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut qp = q_star.clone();
        qp[k] += h;
        let mut qm = q_star.clone();
        qm[k] -= h;
        let col = (controller::desired_potential_gradient(&qp, spec, params)
            - controller::desired_potential_gradient(&qm, spec, params))
            / (2.0 * h);
        numeric.set_column(k, &col);
    }
    let max_relative_difference = (&analytic - &numeric).amax() / analytic.amax();
    let eigenvalues = sym_eigenvalues(&analytic);
    Ok(OverallStiffness {
        analytic,
        numeric,
        max_relative_difference,
        eigenvalues,
    })
}

/// Closed-loop stiffness eigenvalues at the target, with the top one compared
/// against the shortcut `alpha2 + gamma |cos(q_sum - q_sum*)|`, which drops
/// the factor `n` of the rank-one term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvalueDiscrepancy {
    pub computed: Vec<f64>,
    /// `alpha2 + n gamma`.
    pub expected_top: f64,
    /// `alpha2 + gamma`.
    pub shortcut_top: f64,
    pub relative_gap: f64,
}

impl fmt::Display for EigenvalueDiscrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list: Vec<String> = self.computed.iter().map(|v| sig6(*v)).collect();
        write!(
            f,
            "K_O eigenvalues = [{}]; top eigenvalue alpha2 + n gamma = {}; closed form alpha2 + gamma |cos| = {}; relative gap = {}",
            list.join(", "),
            sig6(self.expected_top),
            sig6(self.shortcut_top),
            sig6(self.relative_gap)
        )
    }
}

pub fn eigenvalue_discrepancy(spec: &ControllerSpec, params: &RobotParams) -> Result<EigenvalueDiscrepancy> {
    let computed = overall_stiffness_matrix(spec, params)?.eigenvalues;
    let expected_top = params.alpha2 + params.n as f64 * spec.gamma;
    let shortcut_top = params.alpha2 + spec.gamma;
    Ok(EigenvalueDiscrepancy {
        relative_gap: (expected_top - shortcut_top).abs() / expected_top,
        computed,
        expected_top,
        shortcut_top,
    })
}

/// Transverse stiffness of the linearized closed loop at the target,
/// `1 / (J1 K_O^{-1} J1^T)`.
pub fn closed_loop_transverse_stiffness(spec: &ControllerSpec, params: &RobotParams, contact_offset: f64) -> Result<f64> {
    let k_o = overall_stiffness_matrix(spec, params)?.analytic;
    let q_star = spec.q_star(params.n);
    let j1 = jacobian_tip_frame(&q_star, params, contact_offset).transverse;
    let x = crate::linalg::spd_solve(&k_o, &j1)?;
    Ok(1.0 / j1.dot(&x))
}

/// Closed-loop equilibrium under a constant external joint torque: solves
/// `gamma sin(q_sum - q_sum*) 1_n + alpha2 (q - q*) = tau_ext` by Newton's
/// method from the target.
pub fn shifted_equilibrium(tau_ext: &DVector<f64>, spec: &ControllerSpec, params: &RobotParams) -> Result<EquilibriumReport> {
    spec.validate(params)?;
    let n = params.n;
    if tau_ext.len() != n {
        return Err(Error::Dimension {
            what: "tau_ext",
            expected: n,
            got: tau_ext.len(),
        });
    }
    if tau_ext.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tau_ext"));
    }
    let mut q = spec.q_star(n);
    let mut res = f64::INFINITY;
    for _ in 0..=SHIFTED_MAX_ITERATIONS {
        let f = controller::desired_potential_gradient(&q, spec, params) - tau_ext;
        res = f.amax();
        if res <= SHIFTED_TOLERANCE {
            params.check_configuration(&q)?;
            let out = controller::control_law(&crate::model::State::at_rest(q.clone()), spec, params)?;
            return Ok(EquilibriumReport {
                q_bar: q.iter().copied().collect(),
                residual_norm: f.norm(),
                tau1: out.tau[0],
                tau2: out.tau[1],
                assignable: true,
                reason: EquilibriumReason::Shifted,
                tensions_nonnegative: !out.saturated,
            });
        }
        let jac = controller::desired_potential_hessian(&q, spec, params);
        let step = jac.lu().solve(&f).ok_or_else(|| Error::RankDeficient {
            what: "desired potential Hessian".into(),
        })?;
        q -= step;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shifted equilibrium iterate"));
        }
    }
    Err(Error::NoConvergence {
        solver: "shifted equilibrium",
        iterations: SHIFTED_MAX_ITERATIONS,
        residual: res,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffnessMode {
    OpenLoopAnalytic,
    OpenLoopProbe,
    ClosedLoopOverall,
    ClosedLoopTransverse,
}

impl fmt::Display for StiffnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StiffnessMode::OpenLoopAnalytic => "open_loop_analytic",
            StiffnessMode::OpenLoopProbe => "open_loop_probe",
            StiffnessMode::ClosedLoopOverall => "closed_loop_overall",
            StiffnessMode::ClosedLoopTransverse => "closed_loop_transverse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiffnessReport {
    pub mode: StiffnessMode,
    /// Homogeneous operating angle (rad).
    pub operating_point: f64,
    /// Name of the swept quantity (`mu` or `gamma`).
    pub sweep_name: &'static str,
    pub sweep_values: Vec<f64>,
    pub stiffness_values: Vec<f64>,
    /// Slope of the least-squares line.
    pub fit_slope: f64,
    /// Intercept of the least-squares line.
    pub fit_intercept: f64,
    pub correlation: f64,
    /// Set when the sweep stopped early; values cover the points before it.
    pub incomplete: Option<String>,
}

impl StiffnessReport {
    fn from_values(
        mode: StiffnessMode,
        operating_point: f64,
        sweep_name: &'static str,
        sweep_values: Vec<f64>,
        stiffness_values: Vec<f64>,
        incomplete: Option<String>,
    ) -> Self {
        let xs = &sweep_values[..stiffness_values.len()];
        let (fit_slope, fit_intercept, correlation) = if stiffness_values.len() >= 2 {
            let (s, i) = affine_fit(xs, &stiffness_values);
            (s, i, pearson(xs, &stiffness_values))
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        StiffnessReport {
            mode,
            operating_point,
            sweep_name,
            sweep_values,
            stiffness_values,
            fit_slope,
            fit_intercept,
            correlation,
            incomplete,
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.stiffness_values.windows(2).all(|w| w[1] > w[0])
    }

    /// Largest deviation of the middle point from the secant through the
    /// first and last, relative to the middle value.
    pub fn collinearity_defect(&self) -> f64 {
        let k = self.stiffness_values.len();
        if k < 3 {
            return 0.0;
        }
        let (x, y) = (&self.sweep_values, &self.stiffness_values);
        (1..k - 1)
            .map(|i| {
                let secant = y[0] + (y[k - 1] - y[0]) * (x[i] - x[0]) / (x[k - 1] - x[0]);
                ((y[i] - secant) / y[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `sweep_value, stiffness`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value,stiffness\n");
        for (x, y) in self.sweep_values.iter().zip(&self.stiffness_values) {
            let _ = writeln!(out, "{x:.16e},{y:.16e}");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "operating_point_deg = {}", sig6(self.operating_point.to_degrees()));
        let _ = writeln!(out, "sweep = {} ({} points)", self.sweep_name, self.stiffness_values.len());
        let _ = writeln!(out, "kappa1 = {}", sig6(self.fit_slope));
        let _ = writeln!(out, "kappa2 = {}", sig6(self.fit_intercept));
        let _ = writeln!(out, "correlation = {}", sig6(self.correlation));
        if let Some(msg) = &self.incomplete {
            let _ = writeln!(out, "incomplete = {msg}");
        }
        out
    }
}

/// Format with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// Open-loop transverse stiffness at the origin over balanced tensions
/// `u = (mu, mu)`, from the probe or from the analytic formula.
pub fn open_loop_stiffness_sweep(
    mus: &[f64],
    params: &RobotParams,
    probe: &ProbeConfig,
    mode: StiffnessMode,
) -> Result<StiffnessReport> {
    let q0 = DVector::zeros(params.n);
    let mut values = Vec::with_capacity(mus.len());
    let mut incomplete = None;
    for &mu in mus {
        let k = match mode {
            StiffnessMode::OpenLoopAnalytic => open_loop_stiffness_analytic_at(mu, params, probe.contact_offset),
            StiffnessMode::OpenLoopProbe => {
                quasi_static_probe(&q0, ProbeLoad::OpenLoop { u: [mu, mu] }, params, probe).map(|r| r.stiffness)
            }
            other => return Err(Error::invalid("mode", format!("{other} is not an open-loop sweep"))),
        };
        match k {
            Ok(k) => values.push(k),
            Err(e) => {
                incomplete = Some(format!("mu = {mu}: {e}"));
                break;
            }
        }
    }
    Ok(StiffnessReport::from_values(mode, 0.0, "mu", mus.to_vec(), values, incomplete))
}

/// Closed-loop transverse stiffness at `q*` over shaping gains.
///
/// `q*` is an exact equilibrium of the closed loop for every gain, so each
/// point probes `-grad U_d` there directly.
pub fn transverse_stiffness_sweep(
    spec_base: &ControllerSpec,
    gammas: &[f64],
    params: &RobotParams,
    probe: &ProbeConfig,
) -> Result<StiffnessReport> {
    let q_star = spec_base.q_star(params.n);
    let mut values = Vec::with_capacity(gammas.len());
    let mut incomplete = None;
    for &gamma in gammas {
        let mut spec = spec_base.clone();
        spec.gamma = gamma;
        match quasi_static_probe(&q_star, ProbeLoad::ClosedLoop(&spec), params, probe) {
            Ok(r) => values.push(r.stiffness),
            Err(e) => {
                incomplete = Some(format!("gamma = {gamma}: {e}"));
                break;
            }
        }
    }
    Ok(StiffnessReport::from_values(
        StiffnessMode::ClosedLoopTransverse,
        spec_base.theta_star,
        "gamma",
        gammas.to_vec(),
        values,
        incomplete,
    ))
}
