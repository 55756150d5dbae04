//! Quasi-static transverse stiffness probe.
//!
//! The tip contact point is pushed by `delta_x` along the transverse direction
//! of the last link at the operating point, and the static balance
//!
//! ```text
//! r(q) + J_t(q)^T f = 0,    t* . (P(q) - P(q_op)) = delta_x
//! ```
//!
//! is solved for `(q, f)` by Newton's method. `r = -grad U + G u` in open
//! loop and `-grad U_d` under feedback; the stiffness is `f / delta_x`.

use nalgebra::{DMatrix, DVector};

use crate::controller::{self, ControllerSpec};
use crate::error::{Error, Result};
use crate::model::{
    self, input_matrix, jacobian_point, point_hessian, point_position, potential_gradient,
    potential_hessian, tip_frame, ChainPoint, RobotParams,
};

pub const PROBE_TOLERANCE: f64 = 1e-10;
pub const PROBE_MAX_ITERATIONS: usize = 50;

/// Residual allowed at the operating point, relative to the size of the
/// forces balancing there.
const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

/// Static load acting on the chain while it is probed.
#[derive(Debug, Clone, Copy)]
pub enum ProbeLoad<'a> {
    /// Constant tendon tensions.
    OpenLoop { u: [f64; 2] },
    /// The shaping controller, whose static part is `-grad U_d`.
    ClosedLoop(&'a ControllerSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// Imposed transverse displacement (m).
    pub delta_x: f64,
    /// Contact point distance beyond the last link's centre (m).
    pub contact_offset: f64,
}

impl ProbeConfig {
    /// `delta_x = 1e-4` times the moving chain length, contact at the tip.
    pub fn for_params(params: &RobotParams) -> Self {
        ProbeConfig {
            delta_x: 1e-4 * 2.0 * params.n as f64 * params.ell,
            contact_offset: params.ell,
        }
    }

    pub fn with_delta_x(mut self, delta_x: f64) -> Self {
        self.delta_x = delta_x;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Transverse tip displacement (m).
    pub displacement: f64,
    /// Probe force needed to hold the displacement (N).
    pub reaction: f64,
    /// `reaction / displacement` (N/m).
    pub stiffness: f64,
    /// Displaced configuration.
    pub configuration: DVector<f64>,
    pub iterations: usize,
    /// Final max-norm residual of the balance equations.
    pub residual: f64,
}

fn static_residual(q: &DVector<f64>, load: &ProbeLoad, params: &RobotParams) -> Result<DVector<f64>> {
    match load {
        ProbeLoad::OpenLoop { u } => Ok(input_matrix(q, params)?.apply(*u) - potential_gradient(q, params)),
        ProbeLoad::ClosedLoop(spec) => Ok(-controller::desired_potential_gradient(q, spec, params)),
    }
}

fn static_residual_jacobian(q: &DVector<f64>, load: &ProbeLoad, params: &RobotParams) -> DMatrix<f64> {
    match load {
        ProbeLoad::OpenLoop { u } => {
            let n = q.len();
            // d(G u)/dq = (u1 + u2) 1_n grad g1^T
            let dg = model::g1_gradient(q, params) * (u[0] + u[1]);
            let mut r = -potential_hessian(q, params);
            for i in 0..n {
                for j in 0..n {
                    r[(i, j)] += dg[j];
                }
            }
            r
        }
        ProbeLoad::ClosedLoop(spec) => -controller::desired_potential_hessian(q, spec, params),
    }
}

/// Newton solve of the displaced static balance around `operating_point`.
pub fn quasi_static_probe(
    operating_point: &DVector<f64>,
    load: ProbeLoad,
    params: &RobotParams,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    params.validate()?;
    params.check_configuration(operating_point)?;
    if !(config.delta_x.is_finite() && config.delta_x > 0.0) {
        return Err(Error::invalid("delta_x", "probe displacement must be > 0"));
    }
    if !config.contact_offset.is_finite() {
        return Err(Error::NonFinite("contact_offset"));
    }
    if let ProbeLoad::ClosedLoop(spec) = &load {
        spec.validate(params)?;
    }
    let n = params.n;
    let q0 = operating_point;
    let point = ChainPoint::on_last_link(params, config.contact_offset);
    let (t_star, _) = tip_frame(q0);
    let p0 = point_position(q0, params, point);

    let r0 = static_residual(q0, &load, params)?;
    let scale0 = potential_gradient(q0, params).amax().max(params.alpha2 * 1e-3);
    if r0.amax() > EQUILIBRIUM_TOLERANCE * scale0.max(1e-300) {
        return Err(Error::invalid(
            "operating_point",
            format!("not an equilibrium under the given load (residual {:e})", r0.amax()),
        ));
    }

    let transverse_row = |q: &DVector<f64>| -> DVector<f64> {
        (t_star.transpose() * jacobian_point(q, params, point)).transpose()
    };
    let dx = config.delta_x;

    let mut q = q0.clone();
    let mut f = 0.0;
    let mut residual = f64::INFINITY;
    for iter in 0..=PROBE_MAX_ITERATIONS {
        let jt = transverse_row(&q);
        let r = static_residual(&q, &load, params)?;
        let f1 = &r + &jt * f;
        let f2 = t_star.dot(&(point_position(&q, params, point) - p0)) - dx;

        let rq = static_residual_jacobian(&q, &load, params);
        let balance_scale = (jt.amax() * f.abs()).max(rq.amax() * (&q - q0).amax());
        residual = f1.amax().max(f2.abs());
        let converged = f1.amax() <= PROBE_TOLERANCE * balance_scale.max(1e-300)
            && f2.abs() <= PROBE_TOLERANCE * dx;
        if converged && iter > 0 {
            params.check_configuration(&q)?;
            return Ok(ProbeResult {
                displacement: dx,
                reaction: f,
                stiffness: f / dx,
                configuration: q,
                iterations: iter,
                residual,
            });
        }
        if iter == PROBE_MAX_ITERATIONS {
            break;
        }

        let hess = point_hessian(&q, params, point, &t_star) * f;
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&(rq + hess));
        jac.view_mut((0, n), (n, 1)).copy_from(&jt);
        jac.view_mut((n, 0), (1, n)).copy_from(&jt.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-f1));
        rhs[n] = -f2;
        let step = jac.lu().solve(&rhs).ok_or_else(|| Error::RankDeficient {
            what: "probe balance Jacobian".into(),
        })?;
        q += step.rows(0, n);
        f += step[n];
        if q.iter().any(|v| !v.is_finite()) || !f.is_finite() {
            return Err(Error::NonFinite("probe iterate"));
        }
    }
    Err(Error::NoConvergence {
        solver: "quasi-static probe",
        iterations: PROBE_MAX_ITERATIONS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ones;

    #[test]
    fn open_loop_probe_against_linear_oracle() {
        // For small delta_x the reaction is (J A^{-1} J^T)^{-1} delta_x with
        // A = -dr/dq at the origin.
        let params = RobotParams::stiff_beam();
        let u = [5.0, 5.0];
        let q0 = DVector::zeros(6);
        let cfg = ProbeConfig::for_params(&params);
        let res = quasi_static_probe(&q0, ProbeLoad::OpenLoop { u }, &params, &cfg).unwrap();
        let a = -static_residual_jacobian(&q0, &ProbeLoad::OpenLoop { u }, &params);
        let jt = model::jacobian_tip_frame(&q0, &params, params.ell).transverse;
        let compliance = jt.dot(&a.lu().solve(&jt).unwrap());
        let k = 1.0 / compliance;
        assert!((res.stiffness - k).abs() < 1e-3 * k, "{} vs {k}", res.stiffness);
        assert!(res.iterations < 10);
    }

    #[test]
    fn probe_is_locally_linear() {
        let params = RobotParams::desk_scale();
        let spec = ControllerSpec::new(6, 0.1, 1.0, 0.05, 1.0);
        let q0 = spec.q_star(6);
        let cfg = ProbeConfig::for_params(&params);
        let a = quasi_static_probe(&q0, ProbeLoad::ClosedLoop(&spec), &params, &cfg).unwrap();
        let b = quasi_static_probe(
            &q0,
            ProbeLoad::ClosedLoop(&spec),
            &params,
            &cfg.with_delta_x(cfg.delta_x / 2.0),
        )
        .unwrap();
        assert!((a.stiffness - b.stiffness).abs() < 5e-3 * a.stiffness);
    }

    #[test]
    fn rejects_non_equilibrium() {
        let params = RobotParams::desk_scale();
        let q0 = ones(6) * 0.1;
        let r = quasi_static_probe(
            &q0,
            ProbeLoad::OpenLoop { u: [0.0, 0.0] },
            &params,
            &ProbeConfig::for_params(&params),
        );
        assert!(matches!(r, Err(Error::InvalidParameter { name: "operating_point", .. })));
    }

    #[test]
    fn residual_jacobian_matches_differences() {
        let params = RobotParams::desk_scale();
        let q = DVector::from_vec(vec![0.1, -0.05, 0.2, 0.0, 0.07, -0.1]);
        let load = ProbeLoad::OpenLoop { u: [3.0, 1.5] };
        let jac = static_residual_jacobian(&q, &load, &params);
        let h = 1e-6;
        for k in 0..6 {
            let mut qp = q.clone();
            qp[k] += h;
            let mut qm = q.clone();
            qm[k] -= h;
            let col = (static_residual(&qp, &load, &params).unwrap() - static_residual(&qm, &load, &params).unwrap())
                / (2.0 * h);
            assert!((col - jac.column(k)).amax() < 1e-7);
        }
    }
}
