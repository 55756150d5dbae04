// Open-loop transverse stiffness at the straight configuration over balanced
// pretensions `u = (mu, mu)`: virtual probe against the kinematic formula.

use tendonsim::analysis::{open_loop_stiffness_sweep, StiffnessMode, StiffnessReport};
use tendonsim::dynamics::ProbeConfig;
use tendonsim::RobotParams;

pub fn run_example() -> tendonsim::Result<(StiffnessReport, StiffnessReport)> {
    let params = RobotParams::stiff_beam();
    let cfg = ProbeConfig::for_params(&params);
    let mus: Vec<f64> = (0..10).map(|k| 5.0 * k as f64).collect();
    let probe = open_loop_stiffness_sweep(&mus, &params, &cfg, StiffnessMode::OpenLoopProbe)?;
    let analytic = open_loop_stiffness_sweep(&mus, &params, &cfg, StiffnessMode::OpenLoopAnalytic)?;
    println!("{:>6} {:>14} {:>14}", "mu/N", "probe N/m", "analytic N/m");
    for ((mu, p), a) in mus.iter().zip(&probe.stiffness_values).zip(&analytic.stiffness_values) {
        println!("{mu:>6.1} {p:>14.6} {a:>14.6}");
    }
    print!("{}", probe.summary());
    Ok((probe, analytic))
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
