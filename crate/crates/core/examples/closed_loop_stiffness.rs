// Closed-loop stiffness: the joint-space matrix `gamma 1 1^T + alpha2 I` at
// the target, its eigenvalues, and the transverse stiffness over a decade of
// shaping gains with its affine fit.

use tendonsim::analysis::{eigenvalue_discrepancy, overall_stiffness_matrix, transverse_stiffness_sweep, StiffnessReport};
use tendonsim::controller::ControllerSpec;
use tendonsim::dynamics::ProbeConfig;
use tendonsim::RobotParams;

pub fn run_example() -> tendonsim::Result<StiffnessReport> {
    let params = RobotParams::desk_scale();
    let spec = ControllerSpec::new(params.n, 8f64.to_radians(), 0.0, 0.05, 1.0);
    let k = overall_stiffness_matrix(&spec, &params)?;
    println!("K_O finite-difference relative error = {:.2e}", k.max_relative_difference);
    println!("{}", eigenvalue_discrepancy(&spec, &params)?);

    let gammas: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 9.0)).collect();
    let sweep = transverse_stiffness_sweep(&spec, &gammas, &params, &ProbeConfig::for_params(&params))?;
    print!("{}", sweep.summary());
    Ok(sweep)
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
