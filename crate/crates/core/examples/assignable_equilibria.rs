// Which configurations can constant nonnegative tensions hold? Every
// homogeneous angle can; a configuration with unequal joint angles cannot.

use tendonsim::analysis::{assignable_membership_general, homogeneous_membership, EquilibriumReport};
use tendonsim::controller::matching_residual_for_target;
use tendonsim::model::g1;
use tendonsim::nalgebra::DVector;
use tendonsim::RobotParams;

/// (reports on a homogeneous grid, report for an unequal configuration).
pub fn run_example() -> tendonsim::Result<(Vec<EquilibriumReport>, EquilibriumReport)> {
    let params = RobotParams::hardware_identified();
    let n = params.n;
    let mut grid = Vec::new();
    for deg in [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0f64] {
        let r = homogeneous_membership(deg.to_radians(), &params)?;
        let [u1, u2] = r.tensions();
        println!("theta = {deg:>6.1} deg: assignable = {}, u = ({u1:.4}, {u2:.4}) N", r.assignable);
        grid.push(r);
    }
    let q = DVector::from_fn(n, |i, _| (2.0 + 1.5 * i as f64).to_radians());
    let ones = DVector::from_element(n, 1.0);
    let verdict = assignable_membership_general(&q, &(&ones * params.c1), &(&ones * g1(&q, &params)), &params)?;
    let residual = matching_residual_for_target(&q, &q, 0.1, &params).amax();
    println!("unequal angles: matching residual {residual:.3e}\n{}", verdict.summary());
    Ok((grid, verdict))
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
