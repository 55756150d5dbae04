//! Port-Hamiltonian vector field, fixed-step integration and trajectories.
//!
//! ```text
//! q' = M(q)^{-1} p
//! p' = -grad_q H(q, p) - D M(q)^{-1} p + G(q) u + tau_ext
//! H  = 1/2 p^T M(q)^{-1} p + U(q)
//! ```

mod probe;
mod trajectory;

use nalgebra::DVector;

use crate::controller::{self, ControllerSpec, SaturationPolicy};
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::model::{self, inertia_matrix, input_matrix, potential_gradient, RobotParams, State};

pub use probe::{quasi_static_probe, ProbeConfig, ProbeLoad, ProbeResult};
pub use trajectory::{Energies, Event, EventKind, Trajectory};

/// Step used for central differences of the inertia matrix (rad).
pub const INERTIA_FD_STEP: f64 = 1e-6;

/// Kinetic energy `1/2 p^T M(q)^{-1} p`.
pub fn kinetic_energy(state: &State, params: &RobotParams) -> Result<f64> {
    let v = spd_solve(&inertia_matrix(&state.q, params), &state.p)?;
    Ok(0.5 * state.p.dot(&v))
}

pub fn hamiltonian(state: &State, params: &RobotParams) -> Result<f64> {
    Ok(kinetic_energy(state, params)? + model::total_potential(&state.q, params))
}

/// Translational part of `1/2 v^T M(q) v` at fixed joint velocities `v`.
/// The rod rotation term does not depend on `q` and is left out.
fn translational_coenergy(q: &DVector<f64>, velocity: &DVector<f64>, params: &RobotParams) -> f64 {
    (0..q.len())
        .map(|link| {
            let jc = model::jacobian_point(q, params, model::ChainPoint::center(link, params));
            (jc * velocity).norm_squared()
        })
        .sum::<f64>()
        * 0.5
        * params.m
}

/// `grad_q (1/2 p^T M^{-1} p) = -1/2 v^T (dM/dq_k) v` with `v = M^{-1} p`,
/// by central differences of `v^T M(q) v` at fixed `v`.
pub fn kinetic_gradient(q: &DVector<f64>, velocity: &DVector<f64>, params: &RobotParams) -> DVector<f64> {
    let n = q.len();
    let h = INERTIA_FD_STEP;
    let mut grad = DVector::zeros(n);
    let mut qp = q.clone();
    for k in 0..n {
        let orig = qp[k];
        qp[k] = orig + h;
        let tp = translational_coenergy(&qp, velocity, params);
        qp[k] = orig - h;
        let tm = translational_coenergy(&qp, velocity, params);
        qp[k] = orig;
        grad[k] = -(tp - tm) / (2.0 * h);
    }
    grad
}

/// Time derivative of the state, `(q', p')`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub q_dot: DVector<f64>,
    pub p_dot: DVector<f64>,
}

/// Vector field with tendon tensions `u`. Fails when a tension is negative.
pub fn dynamics_rhs(
    state: &State,
    u: [f64; 2],
    tau_ext: &DVector<f64>,
    params: &RobotParams,
) -> Result<StateDerivative> {
    if !(u[0].is_finite() && u[1].is_finite()) {
        return Err(Error::NonFinite("tensions"));
    }
    if u[0] < 0.0 || u[1] < 0.0 {
        return Err(Error::TensionViolation { u1: u[0], u2: u[1] });
    }
    dynamics_rhs_unchecked(state, u, tau_ext, params)
}

/// Same as [`dynamics_rhs`] without the tension sign check.
pub fn dynamics_rhs_unchecked(
    state: &State,
    u: [f64; 2],
    tau_ext: &DVector<f64>,
    params: &RobotParams,
) -> Result<StateDerivative> {
    let g = input_matrix(&state.q, params)?;
    vector_field(state, &g.apply(u), tau_ext, params)
}

/// Vector field for a given total generalized input force.
fn vector_field(
    state: &State,
    input_force: &DVector<f64>,
    tau_ext: &DVector<f64>,
    params: &RobotParams,
) -> Result<StateDerivative> {
    let q = &state.q;
    let v = spd_solve(&inertia_matrix(q, params), &state.p)?;
    let mut p_dot = -potential_gradient(q, params) + input_force + tau_ext - &v * params.d;
    if state.p.iter().any(|&x| x != 0.0) {
        p_dot -= kinetic_gradient(q, &v, params);
    }
    Ok(StateDerivative { q_dot: v, p_dot })
}

/// Where the tendon tensions come from during integration.
#[derive(Debug, Clone)]
pub enum Controls {
    /// Fixed tensions for the whole run.
    Constant([f64; 2]),
    /// Piecewise-constant tensions: each `(t_start, u)` holds until the next.
    Schedule(Vec<(f64, [f64; 2])>),
    /// State feedback from the shaping controller.
    Feedback(ControllerSpec),
}

impl Controls {
    fn tensions_at(&self, t: f64) -> [f64; 2] {
        match self {
            Controls::Constant(u) => *u,
            Controls::Schedule(points) => points
                .iter()
                .take_while(|(t0, _)| *t0 <= t)
                .last()
                .or_else(|| points.first())
                .map(|(_, u)| *u)
                .unwrap_or([0.0, 0.0]),
            Controls::Feedback(_) => unreachable!("feedback is state dependent"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub duration: f64,
    /// Constant external joint torque.
    pub tau_ext: Option<DVector<f64>>,
}

impl IntegrationOptions {
    pub fn new(dt: f64, duration: f64) -> Self {
        IntegrationOptions {
            dt,
            duration,
            tau_ext: None,
        }
    }

    pub fn with_tau_ext(mut self, tau: DVector<f64>) -> Self {
        self.tau_ext = Some(tau);
        self
    }
}

/// Evaluated control at a stage, with the resulting generalized force.
struct StageInput {
    u: [f64; 2],
    force: DVector<f64>,
    saturated: bool,
    raw: [f64; 2],
    tau2_min_required: Option<f64>,
}

fn stage_input(state: &State, t: f64, controls: &Controls, params: &RobotParams) -> Result<StageInput> {
    match controls {
        Controls::Feedback(spec) => {
            let out = controller::control_law(state, spec, params)?;
            let g = input_matrix(&state.q, params)?;
            Ok(StageInput {
                u: out.u,
                force: g.apply(out.u),
                saturated: out.saturated,
                raw: out.u_raw,
                tau2_min_required: Some(out.tau2_min_required),
            })
        }
        _ => {
            let u = controls.tensions_at(t);
            if !(u[0].is_finite() && u[1].is_finite()) {
                return Err(Error::NonFinite("tensions"));
            }
            if u[0] < 0.0 || u[1] < 0.0 {
                return Err(Error::TensionViolation { u1: u[0], u2: u[1] });
            }
            let g = input_matrix(&state.q, params)?;
            Ok(StageInput {
                u,
                force: g.apply(u),
                saturated: false,
                raw: u,
                tau2_min_required: None,
            })
        }
    }
}

fn energies(state: &State, controls: &Controls, tau_ext: &DVector<f64>, params: &RobotParams) -> Result<Energies> {
    let kinetic = kinetic_energy(state, params)?;
    let h = kinetic + model::total_potential(&state.q, params);
    let h_d = match controls {
        Controls::Feedback(spec) => kinetic + controller::desired_potential(&state.q, spec, params),
        _ => h,
    };
    Ok(Energies {
        h,
        h_d,
        v: h_d - state.q.dot(tau_ext),
    })
}

fn offset(state: &State, k: &StateDerivative, scale: f64) -> State {
    State {
        q: &state.q + &k.q_dot * scale,
        p: &state.p + &k.p_dot * scale,
    }
}

/// Classical fixed-step fourth-order Runge-Kutta over `[0, duration]`.
///
/// Every step is recorded. Leaving `|q_i| <= pi/2` or producing a non-finite
/// state aborts with [`Error::Aborted`], which carries the partial trajectory.
pub fn integrate(
    initial: &State,
    controls: &Controls,
    params: &RobotParams,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    params.validate()?;
    params.check_configuration(&initial.q)?;
    let n = params.n;
    if initial.p.len() != n {
        return Err(Error::Dimension {
            what: "momenta",
            expected: n,
            got: initial.p.len(),
        });
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::invalid("dt", "time step must be > 0"));
    }
    if !(opts.duration.is_finite() && opts.duration >= opts.dt) {
        return Err(Error::invalid("duration", "duration must be >= dt"));
    }
    if let Controls::Feedback(spec) = controls {
        spec.validate(params)?;
    }
    let tau_ext = match &opts.tau_ext {
        Some(t) => {
            if t.len() != n {
                return Err(Error::Dimension {
                    what: "tau_ext",
                    expected: n,
                    got: t.len(),
                });
            }
            t.clone()
        }
        None => DVector::zeros(n),
    };

    let steps = (opts.duration / opts.dt).round() as usize;
    let dt = opts.dt;
    let mut traj = Trajectory::with_capacity(steps + 1);
    let mut state = initial.clone();

    let field = |s: &State, t: f64| -> Result<StateDerivative> {
        let input = stage_input(s, t, controls, params)?;
        vector_field(s, &input.force, &tau_ext, params)
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        let input = stage_input(&state, t, controls, params)?;
        let e = energies(&state, controls, &tau_ext, params)?;
        traj.push(t, state.clone(), input.u, e);
        if let Some(req) = input.tau2_min_required {
            traj.tau2_min_required.push(req);
        }
        if input.saturated {
            let kind = match controls {
                Controls::Feedback(spec) if spec.saturation == SaturationPolicy::Monitor => {
                    EventKind::ConstraintViolation {
                        u1: input.raw[0],
                        u2: input.raw[1],
                    }
                }
                _ => EventKind::Saturation {
                    u1: input.raw[0],
                    u2: input.raw[1],
                },
            };
            traj.events.push(Event { step: k, t, kind });
        }
        if k == steps {
            break;
        }

        let k1 = field(&state, t)?;
        let k2 = field(&offset(&state, &k1, dt / 2.0), t + dt / 2.0)?;
        let k3 = field(&offset(&state, &k2, dt / 2.0), t + dt / 2.0)?;
        let k4 = field(&offset(&state, &k3, dt), t + dt)?;
        let next = State {
            q: &state.q + (&k1.q_dot + &k2.q_dot * 2.0 + &k3.q_dot * 2.0 + &k4.q_dot) * (dt / 6.0),
            p: &state.p + (&k1.p_dot + &k2.p_dot * 2.0 + &k3.p_dot * 2.0 + &k4.p_dot) * (dt / 6.0),
        };

        let t_next = t + dt;
        if next.q.iter().chain(next.p.iter()).any(|v| !v.is_finite()) {
            traj.events.push(Event {
                step: k + 1,
                t: t_next,
                kind: EventKind::NonFinite,
            });
            return Err(Error::Aborted {
                t: t_next,
                reason: "non-finite state".into(),
                partial: Box::new(traj),
            });
        }
        if let Some((i, v)) = next
            .q
            .iter()
            .enumerate()
            .find(|(_, v)| v.abs() > model::JOINT_LIMIT)
        {
            traj.events.push(Event {
                step: k + 1,
                t: t_next,
                kind: EventKind::Boundary { index: i + 1 },
            });
            return Err(Error::Aborted {
                t: t_next,
                reason: format!("joint {} left the feasible set (|q| = {:.4})", i + 1, v.abs()),
                partial: Box::new(traj),
            });
        }
        state = next;
    }
    Ok(traj)
}
