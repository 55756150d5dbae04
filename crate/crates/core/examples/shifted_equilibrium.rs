// A constant external torque moves the closed-loop rest point to where
// `grad U_d(q) = tau_ext`. Newton's method finds it and a simulation settles
// there.

use tendonsim::analysis::shifted_equilibrium;
use tendonsim::controller::{desired_potential_gradient, ControllerSpec, SaturationPolicy};
use tendonsim::dynamics::{self, Controls, IntegrationOptions};
use tendonsim::nalgebra::DVector;
use tendonsim::{RobotParams, State};

/// (Newton error, simulated error) against the chosen offset (rad).
pub fn run_example() -> tendonsim::Result<(f64, f64)> {
    let params = RobotParams::desk_scale();
    let n = params.n;
    let spec = ControllerSpec::new(n, 5f64.to_radians(), 0.0, 0.05, 1.0).with_policy(SaturationPolicy::Monitor);
    let offset = DVector::from_fn(n, |i, _| 0.004 * (i as f64 - 2.5));
    let q_bar = spec.q_star(n) + offset;
    let tau_ext = desired_potential_gradient(&q_bar, &spec, &params);

    let report = shifted_equilibrium(&tau_ext, &spec, &params)?;
    let newton = (DVector::from_vec(report.q_bar.clone()) - &q_bar).amax();

    let opts = IntegrationOptions::new(1e-3, 50.0).with_tau_ext(tau_ext);
    let traj = dynamics::integrate(&State::at_rest(spec.q_star(n)), &Controls::Feedback(spec), &params, &opts)?;
    let simulated = (&traj.last_state().expect("samples").q - &q_bar).amax();
    println!("Newton error = {newton:.2e} rad, simulated error after 50 s = {simulated:.2e} rad");
    Ok((newton, simulated))
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
