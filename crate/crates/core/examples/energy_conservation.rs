// Free motion of an undamped, unactuated section: the Hamiltonian is
// conserved by the RK4 integrator to well below 1e-6 relative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendonsim::dynamics::{self, Controls, IntegrationOptions};
use tendonsim::nalgebra::DVector;
use tendonsim::{RobotParams, State};

/// Largest relative deviation of `H` from its initial value over 10 s.
pub fn run_example() -> tendonsim::Result<f64> {
    let params = RobotParams {
        d: 0.0,
        ..RobotParams::desk_scale()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q0 = DVector::from_fn(params.n, |_, _| rng.random_range(-0.1..=0.1));
    let traj = dynamics::integrate(
        &State::at_rest(q0),
        &Controls::Constant([0.0, 0.0]),
        &params,
        &IntegrationOptions::new(1e-3, 10.0),
    )?;
    let h0 = traj.energies[0].h;
    let drift = traj.energies.iter().map(|e| (e.h - h0).abs() / h0).fold(0.0, f64::max);
    println!("steps = {}, H(0) = {h0:.6e} J, max relative drift = {drift:.3e}", traj.len());
    Ok(drift)
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
