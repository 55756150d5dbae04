//! Small dense linear-algebra helpers shared by the analysis code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_RCOND: f64 = 1e-12;

/// Moore-Penrose pseudoinverse by SVD, discarding singular values below
/// `PINV_RCOND * sigma_max`.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.max();
    let cutoff = PINV_RCOND * smax;
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += v_t.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Numerical rank with the same relative cutoff as [`pinv`].
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > PINV_RCOND * smax).count()
}

/// Banded differencing annihilator of `1_n`: rows `(.., 1, -1, ..)`.
pub fn differencing_annihilator(n: usize) -> DMatrix<f64> {
    let rows = n.saturating_sub(1);
    let mut g = DMatrix::zeros(rows, n);
    for i in 0..rows {
        g[(i, i)] = 1.0;
        g[(i, i + 1)] = -1.0;
    }
    g
}

/// Full-rank left annihilator of a nonzero vector by orthogonal completion.
///
/// Builds the Householder reflector mapping `v/|v|` to `e_1`; its remaining
/// `n - 1` rows are an orthonormal basis of the complement of `v`.
pub fn orthogonal_annihilator(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = v.len();
    let norm = v.norm();
    if n == 0 || norm == 0.0 || !norm.is_finite() {
        return Err(Error::RankDeficient {
            what: "annihilator of a zero vector".into(),
        });
    }
    let unit = v / norm;
    // reflect towards +/- e_1 depending on sign to avoid cancellation
    let sign = if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = unit.clone();
    w[0] += sign;
    let w = w.normalize();
    let h = DMatrix::identity(n, n) - 2.0 * &w * w.transpose();
    Ok(h.rows(1, n - 1).into_owned())
}

/// Solve `M x = b` for symmetric positive-definite `M` via Cholesky.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| Error::RankDeficient {
        what: "matrix is not symmetric positive definite".into(),
    })?;
    Ok(chol.solve(b))
}

/// Symmetric eigenvalues sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// Pearson correlation coefficient. Returns `NaN` for degenerate input.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Ordinary least-squares line `y = slope * x + intercept`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differencing_annihilates_ones() {
        for n in 1..8 {
            let g = differencing_annihilator(n);
            assert_eq!(g.nrows(), n - 1);
            assert_eq!((&g * ones(n)).norm(), 0.0);
        }
    }

    #[test]
    fn orthogonal_annihilator_contract() {
        let v = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0, -0.1]);
        let a = orthogonal_annihilator(&v).unwrap();
        assert!((&a * &v).norm() < 1e-14);
        assert_eq!(rank(&a), 4);
        let neg = -&v;
        let b = orthogonal_annihilator(&neg).unwrap();
        assert!((&b * &neg).norm() < 1e-14);
    }

    #[test]
    fn zero_vector_has_no_annihilator() {
        assert!(orthogonal_annihilator(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        let p = pinv(&a);
        let expect = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]) / 14.0;
        assert!((p - expect).norm() < 1e-14);
    }

    #[test]
    fn fit_and_correlation_on_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, c) = affine_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
        assert!((pearson(&x, &y) - 1.0).abs() < 1e-14);
    }
}
