// Closed-loop regulation to a homogeneous 5 deg target, then a re-run with
// the pretension raised above the largest value the first run required.

use tendonsim::controller::{ControllerSpec, SaturationPolicy};
use tendonsim::dynamics::{self, Controls, EventKind, IntegrationOptions};
use tendonsim::{RobotParams, State};

pub struct RegulationSummary {
    /// `|qbar(T) - theta*|` (deg).
    pub final_error_deg: f64,
    pub max_tau2_min_required: f64,
    /// Saturation events in the re-run with raised pretension.
    pub rerun_saturations: usize,
}

pub fn run_example() -> tendonsim::Result<RegulationSummary> {
    let params = RobotParams::desk_scale();
    let opts = IntegrationOptions::new(1e-3, 8.0);
    let spec = ControllerSpec::new(params.n, 5f64.to_radians(), 0.0, 0.05, 1.0).with_policy(SaturationPolicy::Monitor);
    let traj = dynamics::integrate(&State::zero(params.n), &Controls::Feedback(spec.clone()), &params, &opts)?;
    let last = traj.last_state().expect("trajectory has samples");
    let final_error_deg = (last.mean_angle() - spec.theta_star).to_degrees().abs();
    if let Some((mean, sd)) = traj.mean_angle_stats(4.0, 8.0) {
        println!("qbar over [4, 8] s: {:.4} +- {:.4} deg", mean.to_degrees(), sd.to_degrees());
    }
    let h_d: Vec<f64> = traj.energies.iter().map(|e| e.h_d).collect();
    println!("H_d: {:.6e} -> {:.6e} J", h_d[0], h_d[h_d.len() - 1]);

    let need = traj.max_tau2_min_required().unwrap_or(0.0);
    let raised = spec.with_tau2(need + 1.0).with_policy(SaturationPolicy::Clamp);
    let rerun = dynamics::integrate(&State::zero(params.n), &Controls::Feedback(raised), &params, &opts)?;
    let rerun_saturations = rerun.count_events(|k| matches!(k, EventKind::Saturation { .. }));
    println!(
        "|qbar(8) - 5 deg| = {final_error_deg:.4} deg, max tau2_min_required = {need:.4} N, re-run saturations = {rerun_saturations}"
    );
    Ok(RegulationSummary {
        final_error_deg,
        max_tau2_min_required: need,
        rerun_saturations,
    })
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
