// Static identification: hold a grid of homogeneous angles, record both
// tensions, and fit `(alpha1, alpha2, c1, c2)` with `c1` fixed as the gauge.

use tendonsim::ident::{fit_parameters, generate_static_dataset, Gauge, IdentResult, TensionNoise};
use tendonsim::RobotParams;

/// Noiseless and 1%-noise fits.
pub fn run_example() -> tendonsim::Result<(IdentResult, IdentResult)> {
    let truth = RobotParams::hardware_identified();
    let thetas: Vec<f64> = (0..15).map(|k| (-15.0 + 30.0 * k as f64 / 14.0f64).to_radians()).collect();
    let gauge = Gauge::C1(truth.c1);
    let clean = generate_static_dataset(&truth, &thetas, 6, 25.0, TensionNoise::None, 0)?;
    let exact = fit_parameters(&clean.samples, truth.n, gauge)?;
    println!("noiseless:\n{}", exact.summary());
    let noisy = generate_static_dataset(&truth, &thetas, 6, 25.0, TensionNoise::Multiplicative { relative: 0.01 }, 0)?;
    let fit = fit_parameters(&noisy.samples, truth.n, gauge)?;
    println!("1% tension noise:\n{}", fit.summary());
    let errs = fit.relative_errors(&truth);
    println!(
        "relative errors: alpha1 {:.2e}, alpha2 {:.2e}, c1 {:.2e}, c2 {:.2e}",
        errs[0], errs[1], errs[2], errs[3]
    );
    Ok((exact, fit))
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
