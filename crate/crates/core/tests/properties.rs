//! Randomized invariants of the model, controller and scenario layer.

use proptest::prelude::*;
use tendonsim::analysis::{homogeneous_membership, minimal_pretension_split};
use tendonsim::controller::{
    control_law, input_transform, input_transform_inverse, matching_residual, tau_n, ControllerSpec,
    SaturationPolicy,
};
use tendonsim::dynamics::dynamics_rhs_unchecked;
use tendonsim::nalgebra::DVector;
use tendonsim::scenario::parse_scenario;
use tendonsim::{RobotParams, State};

fn joint_vector(bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, 6)
}

proptest! {
    #[test]
    fn input_transform_round_trip(u1 in 0.0..100.0f64, u2 in 0.0..100.0f64) {
        let back = input_transform_inverse(input_transform([u1, u2]));
        prop_assert!((back[0] - u1).abs() <= 1e-12 * u1.max(1.0));
        prop_assert_eq!(back[1], u2);
    }

    #[test]
    fn matching_holds_for_homogeneous_targets(q in joint_vector(0.4), theta in -0.25..0.25f64, gamma in 0.001..1.0f64) {
        let params = RobotParams::hardware_identified();
        let spec = ControllerSpec::new(params.n, theta, 0.0, gamma, 1.0);
        let r = matching_residual(&DVector::from_vec(q), &spec, &params);
        prop_assert!(r.amax() < 1e-12);
    }

    #[test]
    fn stiffness_term_lies_in_the_null_direction(q in joint_vector(0.4), tau2 in 0.0..50.0f64) {
        let params = RobotParams::hardware_identified();
        let q = DVector::from_vec(q);
        let spec = ControllerSpec::new(params.n, 0.05, tau2, 0.1, 1.0);
        let out = control_law(&State::at_rest(q.clone()), &spec, &params).unwrap();
        prop_assert!(tau_n(&q, out.components.stiffness, &params).abs() < 1e-12 * tau2.max(1.0));
        prop_assert_eq!(out.u_raw[1], tau2);
    }

    #[test]
    fn pretension_does_not_change_the_closed_loop(q in joint_vector(0.3), p in joint_vector(0.05), tau2 in 0.0..30.0f64) {
        let params = RobotParams::desk_scale();
        let state = State::new(DVector::from_vec(q), DVector::from_vec(p)).unwrap();
        let zero = DVector::zeros(params.n);
        let field = |t: f64| {
            let spec = ControllerSpec::new(params.n, 0.1, t, 0.05, 1.0).with_policy(SaturationPolicy::Monitor);
            let u = control_law(&state, &spec, &params).unwrap().u_raw;
            dynamics_rhs_unchecked(&state, u, &zero, &params).unwrap()
        };
        let (a, b) = (field(0.0), field(tau2));
        prop_assert!((&a.p_dot - &b.p_dot).amax() < 1e-11);
    }

    #[test]
    fn homogeneous_angles_are_assignable(theta in -0.26..0.26f64) {
        let params = RobotParams::hardware_identified();
        let r = homogeneous_membership(theta, &params).unwrap();
        prop_assert!(r.assignable && r.tensions_nonnegative);
    }

    #[test]
    fn minimal_split_reproduces_the_drive(tau in -50.0..50.0f64, a in 0.1..3.0f64, b in -3.0..0.09f64) {
        let (t1, t2) = minimal_pretension_split(tau, a, b).unwrap();
        prop_assert!((a * t1 + b * t2 - tau).abs() < 1e-9);
        prop_assert!(t2 >= 0.0 && t1 + t2 >= -1e-9);
    }

    #[test]
    fn scenario_round_trip(theta in -15.0..15.0f64, gamma in 0.001..1.0f64, tau2 in 0.0..20.0f64, kd in 0.01..10.0f64) {
        let doc = format!(
            "schema_version = 1\nname = \"prop\"\nmode = \"simulate\"\n\n[robot]\npreset = \"hardware_identified\"\n\n\
             [controller]\ntheta_star_deg = {theta:?}\ntau2_star = {tau2:?}\ngamma = {gamma:?}\nkd = {kd:?}\n"
        );
        let s = parse_scenario(&doc).unwrap();
        prop_assert_eq!(parse_scenario(&s.to_toml()).unwrap(), s);
    }
}
