use nalgebra::{DMatrix, DVector};

use super::RobotParams;
use crate::error::{Error, Result};

/// Which elastic energy to use when assembling the total potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElasticModel {
    /// `(alpha2 / 2) |q|^2 + U0`, the form all control derivations rely on.
    #[default]
    Quadratic,
    /// Spring-pair energy from the segment boundary lengths.
    Exact,
}

pub fn q_sum(q: &DVector<f64>) -> f64 {
    q.iter().sum()
}

/// Gravitational energy summed link by link over the lumped masses,
/// `sum_i (l_i m / 2) [cos(s_{i-1}) - cos(s_i)]` with `l_i = 2 ell`.
pub fn gravity_potential_sum(q: &DVector<f64>, params: &RobotParams) -> Result<f64> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("configuration"));
    }
    let link = 2.0 * params.ell;
    let mut prev = 0.0_f64;
    let mut energy = 0.0;
    for qi in q.iter() {
        let next = prev + qi;
        energy += link * params.m / 2.0 * (prev.cos() - next.cos());
        prev = next;
    }
    Ok(energy)
}

/// Closed form `alpha1 (1 - cos q_sum)`.
pub fn gravity_potential(q: &DVector<f64>, params: &RobotParams) -> f64 {
    params.alpha1_eff() * (1.0 - q_sum(q).cos())
}

/// Boundary lengths `(h1, h2)` of one constant-curvature segment.
pub fn boundary_lengths(qi: f64, params: &RobotParams) -> (f64, f64) {
    let arc = params.ell * q_cot_half(qi);
    let offset = qi * params.r;
    (arc + offset, arc - offset)
}

/// `q cot(q/2)`, which tends to 2 as `q -> 0`.
fn q_cot_half(q: f64) -> f64 {
    // 2 - q^2/6 - q^4/360 + O(q^6)
    if q.abs() < 1e-4 {
        let q2 = q * q;
        2.0 - q2 / 6.0 - q2 * q2 / 360.0
    } else {
        q / (q / 2.0).tan()
    }
}

/// Exact spring-pair energy
/// `sum_i k [q_i^2 (ell^2 cos^2(q_i/2) + r^2) - ell^2] + k' q_i^2`.
pub fn elastic_potential_exact(q: &DVector<f64>, params: &RobotParams) -> f64 {
    let (l2, r2) = (params.ell * params.ell, params.r * params.r);
    q.iter()
        .map(|&qi| {
            let c = (qi / 2.0).cos();
            params.k_elastic * (qi * qi * (l2 * c * c + r2) - l2) + params.k_bend * qi * qi
        })
        .sum()
}

pub fn elastic_gradient_exact(q: &DVector<f64>, params: &RobotParams) -> DVector<f64> {
    let (l2, r2) = (params.ell * params.ell, params.r * params.r);
    q.map(|qi| {
        let (s, c) = (qi / 2.0).sin_cos();
        params.k_elastic * (2.0 * qi * (l2 * c * c + r2) - qi * qi * l2 * c * s)
            + 2.0 * params.k_bend * qi
    })
}

/// `(alpha2 / 2) |q|^2 + U0`.
pub fn elastic_potential_quadratic(q: &DVector<f64>, params: &RobotParams) -> f64 {
    0.5 * params.alpha2 * q.norm_squared() + params.u0
}

/// Gravity plus quadratic elastic energy.
pub fn total_potential(q: &DVector<f64>, params: &RobotParams) -> f64 {
    total_potential_with(q, params, ElasticModel::Quadratic)
}

pub fn total_potential_with(q: &DVector<f64>, params: &RobotParams, model: ElasticModel) -> f64 {
    let elastic = match model {
        ElasticModel::Quadratic => elastic_potential_quadratic(q, params),
        ElasticModel::Exact => elastic_potential_exact(q, params),
    };
    gravity_potential(q, params) + elastic
}

/// `alpha1 sin(q_sum) 1_n + alpha2 q`.
pub fn potential_gradient(q: &DVector<f64>, params: &RobotParams) -> DVector<f64> {
    let g = params.alpha1_eff() * q_sum(q).sin();
    q.map(|qi| g + params.alpha2 * qi)
}

/// `alpha1 cos(q_sum) 1_{n x n} + alpha2 I`.
pub fn potential_hessian(q: &DVector<f64>, params: &RobotParams) -> DMatrix<f64> {
    let n = q.len();
    let c = params.alpha1_eff() * q_sum(q).cos();
    DMatrix::from_element(n, n, c) + DMatrix::identity(n, n) * params.alpha2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params() -> RobotParams {
        RobotParams::hardware_identified()
    }

    #[test]
    fn gravity_vanishes_at_origin() {
        let q = DVector::zeros(6);
        assert_eq!(gravity_potential(&q, &params()), 0.0);
        assert_eq!(gravity_potential_sum(&q, &params()).unwrap(), 0.0);
    }

    #[test]
    fn gravity_sum_two_links_quarter_turn() {
        let mut p = params();
        p.n = 2;
        p.m = 1.0;
        p.ell = 0.021;
        let q = DVector::from_vec(vec![FRAC_PI_2, 0.0]);
        let u = gravity_potential_sum(&q, &p).unwrap();
        assert!((u - 0.021).abs() < 1e-15);
    }

    #[test]
    fn gravity_half_turn_doubles_alpha1() {
        let p = params();
        let q = DVector::from_element(6, PI / 6.0);
        assert!((gravity_potential(&q, &p) - 2.0 * p.alpha1).abs() < 1e-12);
    }

    #[test]
    fn gravity_sum_rejects_nan() {
        let q = DVector::from_vec(vec![0.0, f64::NAN]);
        assert!(gravity_potential_sum(&q, &params()).is_err());
    }

    #[test]
    fn boundary_lengths_limit_and_value() {
        let p = params();
        let (h1, h2) = boundary_lengths(0.0, &p);
        assert_eq!((h1, h2), (2.0 * p.ell, 2.0 * p.ell));
        // q (ell cot(q/2) + r) at q = 0.1
        let (h1, _) = boundary_lengths(0.1, &p);
        let expect = 0.1 * (0.021 / 0.05_f64.tan() + 0.025);
        assert!((h1 - expect).abs() < 1e-15);
    }

    #[test]
    fn boundary_series_matches_direct_formula_at_threshold() {
        let p = params();
        for q in [9.9e-5, -9.9e-5, 1.0e-4, 1.5e-4] {
            let (h1, h2) = boundary_lengths(q, &p);
            let direct = q / (q / 2.0_f64).tan();
            let d1 = p.ell * direct + q * p.r;
            let d2 = p.ell * direct - q * p.r;
            assert!((h1 - d1).abs() < 1e-14, "{q}");
            assert!((h2 - d2).abs() < 1e-14, "{q}");
        }
    }

    #[test]
    fn boundary_mirror_symmetry() {
        let p = params();
        for &t in &[1e-6, 0.01, 0.3, 1.2] {
            let (h1p, h2p) = boundary_lengths(t, &p);
            let (h1m, h2m) = boundary_lengths(-t, &p);
            assert!((h1m - h2p).abs() < 1e-15);
            assert!((h2m - h1p).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_elastic_at_origin() {
        let p = params();
        let u = elastic_potential_exact(&DVector::zeros(6), &p);
        assert!((u + 6.0 * p.k_elastic * p.ell * p.ell).abs() < 1e-15);
    }

    #[test]
    fn quadratic_elastic_at_origin_is_offset() {
        let mut p = params();
        p.u0 = 0.37;
        assert_eq!(elastic_potential_quadratic(&DVector::zeros(6), &p), 0.37);
    }

    #[test]
    fn hessian_at_origin_is_positive_definite() {
        let p = params();
        let h = potential_hessian(&DVector::zeros(6), &p);
        let ev = sym_eigenvalues(&h);
        assert!((ev[0] - p.alpha2).abs() < 1e-12);
        assert!((ev[5] - (p.alpha2 + 6.0 * p.alpha1)).abs() < 1e-9);
        assert_eq!(potential_gradient(&DVector::zeros(6), &p).norm(), 0.0);
    }

    #[test]
    fn gravity_switch() {
        let mut p = params();
        p.gravity = false;
        let q = DVector::from_element(6, 0.2);
        assert_eq!(gravity_potential(&q, &p), 0.0);
        assert!((potential_gradient(&q, &p) - &q * p.alpha2).norm() < 1e-15);
    }
}
