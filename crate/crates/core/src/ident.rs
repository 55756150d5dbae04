//! Static identification of `(alpha1, alpha2, c1, c2)` from homogeneous
//! equilibria.
//!
//! At rest on `theta 1_n` the balance reads
//!
//! ```text
//! alpha1 sin(n theta) + alpha2 theta = c1 (u1 - u2) + c2 sin(theta) (u1 + u2)
//! ```
//!
//! which is linear and homogeneous in the four parameters. One of them has to
//! be fixed (the [`Gauge`]) before the remaining three follow from linear
//! least squares.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{homogeneous_drive, minimal_pretension_split, sig6};
use crate::error::{Error, Result};
use crate::linalg::rank;
use crate::model::{self, RobotParams, JOINT_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticSample {
    /// Homogeneous joint angle (rad).
    pub theta: f64,
    pub u1: f64,
    pub u2: f64,
    pub repeat_index: usize,
}

/// Tension measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensionNoise {
    #[default]
    None,
    /// Zero-mean Gaussian with standard deviation `sigma` (N).
    Additive { sigma: f64 },
    /// `u (1 + e)` with `e` zero-mean Gaussian of standard deviation `relative`.
    Multiplicative { relative: f64 },
}

/// A sample that could not be generated with the requested pretension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rejection {
    pub theta: f64,
    pub repeat_index: usize,
    pub tau2: f64,
    /// Smallest pretension giving `u1 >= 0`, if any.
    pub min_tau2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<StaticSample>,
    pub rejected: Vec<Rejection>,
}

impl Dataset {
    /// CSV with columns `theta_rad, u1_N, u2_N, repeat`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_rad,u1_N,u2_N,repeat\n");
        for s in &self.samples {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{}", s.theta, s.u1, s.u2, s.repeat_index);
        }
        out
    }
}

/// Noiseless tensions holding `theta 1_n` with pretension `u2 = tau2`.
///
/// Fails with the minimal feasible pretension when `u1` would be negative.
pub fn static_tensions(theta: f64, tau2: f64, params: &RobotParams) -> std::result::Result<[f64; 2], Rejection> {
    let n = params.n;
    let q = DVector::from_element(n, theta);
    let g = model::g1(&q, params);
    let arm = params.c1 + g;
    let tau_n = homogeneous_drive(theta, params);
    let tau1 = (tau_n - 2.0 * g * tau2) / arm;
    let u1 = tau1 + tau2;
    if u1 < 0.0 {
        return Err(Rejection {
            theta,
            repeat_index: 0,
            tau2,
            min_tau2: minimal_pretension_split(tau_n, arm, 2.0 * g).map(|(_, t2)| t2),
        });
    }
    Ok([u1, tau2])
}

/// Synthetic static dataset: every angle in `thetas` is held `repeats` times
/// with pretension `tau2`, and the tensions are perturbed by `noise`.
pub fn generate_static_dataset(
    params: &RobotParams,
    thetas: &[f64],
    repeats: usize,
    tau2: f64,
    noise: TensionNoise,
    seed: u64,
) -> Result<Dataset> {
    params.validate()?;
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(Error::invalid("tau2", "pretension must be >= 0"));
    }
    let normal = match noise {
        TensionNoise::None => None,
        TensionNoise::Additive { sigma } | TensionNoise::Multiplicative { relative: sigma } => {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::invalid("noise", e.to_string()))?)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Dataset::default();
    for repeat_index in 0..repeats {
        for &theta in thetas {
            if !(theta.is_finite() && theta.abs() <= JOINT_LIMIT) {
                return Err(Error::invalid("theta", format!("{theta} outside the feasible range")));
            }
            model::moment_arm(&DVector::from_element(params.n, theta), params)?;
            let [mut u1, mut u2] = match static_tensions(theta, tau2, params) {
                Ok(u) => u,
                Err(r) => {
                    out.rejected.push(Rejection { repeat_index, ..r });
                    continue;
                }
            };
            if let Some(dist) = &normal {
                let (e1, e2) = (dist.sample(&mut rng), dist.sample(&mut rng));
                match noise {
                    TensionNoise::Additive { .. } => {
                        u1 += e1;
                        u2 += e2;
                    }
                    TensionNoise::Multiplicative { .. } => {
                        u1 *= 1.0 + e1;
                        u2 *= 1.0 + e2;
                    }
                    TensionNoise::None => {}
                }
            }
            if u1 < 0.0 || u2 < 0.0 {
                out.rejected.push(Rejection {
                    theta,
                    repeat_index,
                    tau2,
                    min_tau2: None,
                });
                continue;
            }
            out.samples.push(StaticSample {
                theta,
                u1,
                u2,
                repeat_index,
            });
        }
    }
    Ok(out)
}

/// Which parameter is held fixed to remove the scale ambiguity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fix", content = "value", rename_all = "snake_case")]
pub enum Gauge {
    Alpha1(f64),
    Alpha2(f64),
    C1(f64),
    C2(f64),
}

impl Gauge {
    fn index(&self) -> usize {
        match self {
            Gauge::Alpha1(_) => 0,
            Gauge::Alpha2(_) => 1,
            Gauge::C1(_) => 2,
            Gauge::C2(_) => 3,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Gauge::Alpha1(v) | Gauge::Alpha2(v) | Gauge::C1(v) | Gauge::C2(v) => v,
        }
    }
}

const PARAM_NAMES: [&str; 4] = ["alpha1", "alpha2", "c1", "c2"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentResult {
    pub alpha1_hat: f64,
    pub alpha2_hat: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    /// Root-mean-square balance residual at the fit (N·m).
    pub residual_rms: f64,
    /// `alpha1, alpha2, c1 > 0` and `c2 < 0`.
    pub sign_ok: bool,
    pub samples: usize,
    pub gauge: Gauge,
}

impl IdentResult {
    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha1_hat, self.alpha2_hat, self.c1_hat, self.c2_hat]
    }

    /// Relative error of each parameter against reference values.
    pub fn relative_errors(&self, truth: &RobotParams) -> [f64; 4] {
        let t = [truth.alpha1, truth.alpha2, truth.c1, truth.c2];
        let h = self.as_array();
        std::array::from_fn(|i| ((h[i] - t[i]) / t[i]).abs())
    }

    pub fn summary(&self) -> String {
        format!(
            "alpha1_hat = {}\nalpha2_hat = {}\nc1_hat = {}\nc2_hat = {}\nresidual_rms = {}\nsign_ok = {}\nsamples = {}\n",
            sig6(self.alpha1_hat),
            sig6(self.alpha2_hat),
            sig6(self.c1_hat),
            sig6(self.c2_hat),
            sig6(self.residual_rms),
            self.sign_ok,
            self.samples,
        )
    }

    /// CSV with columns `parameter, value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,value\n");
        for (name, v) in PARAM_NAMES.iter().zip(self.as_array()) {
            let _ = writeln!(out, "{name},{v:.16e}");
        }
        let _ = writeln!(out, "residual_rms,{:.16e}", self.residual_rms);
        out
    }
}

/// Regressor row so that `row . (alpha1, alpha2, c1, c2) = 0` at balance.
fn regressor_row(s: &StaticSample, n: usize) -> [f64; 4] {
    let st = s.theta.sin();
    [
        (n as f64 * s.theta).sin(),
        s.theta,
        -(s.u1 - s.u2),
        -st * (s.u1 + s.u2),
    ]
}

/// Least-squares fit of the static balance with one parameter fixed by `gauge`.
pub fn fit_parameters(dataset: &[StaticSample], n: usize, gauge: Gauge) -> Result<IdentResult> {
    if n < 1 {
        return Err(Error::invalid("n", "need at least one segment"));
    }
    if !(gauge.value().is_finite() && gauge.value() != 0.0) {
        return Err(Error::invalid("gauge", "fixed value must be finite and nonzero"));
    }
    let mut distinct: Vec<f64> = dataset.iter().map(|s| s.theta).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if dataset.len() < 4 || distinct.len() < 3 {
        return Err(Error::RankDeficient {
            what: format!(
                "regressor: need >= 4 samples over >= 3 angles, got {} samples over {} angles",
                dataset.len(),
                distinct.len()
            ),
        });
    }
    if dataset
        .iter()
        .any(|s| !(s.theta.is_finite() && s.u1.is_finite() && s.u2.is_finite()))
    {
        return Err(Error::NonFinite("dataset"));
    }

    let fixed = gauge.index();
    let free: Vec<usize> = (0..4).filter(|&i| i != fixed).collect();
    let m = dataset.len();
    let mut a = DMatrix::zeros(m, 3);
    let mut b = DVector::zeros(m);
    for (r, s) in dataset.iter().enumerate() {
        let row = regressor_row(s, n);
        for (c, &i) in free.iter().enumerate() {
            a[(r, c)] = row[i];
        }
        b[r] = -row[fixed] * gauge.value();
    }

    // column scaling keeps the rank test independent of units
    let scales: Vec<f64> = (0..3).map(|c| a.column(c).norm()).collect();
    if let Some(c) = scales.iter().position(|&s| s == 0.0) {
        return Err(Error::RankDeficient {
            what: format!("regressor: no excitation of {}", PARAM_NAMES[free[c]]),
        });
    }
    for (c, &s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }
    if rank(&a) < 3 {
        let svd = a.clone().svd(false, true);
        let v_t = svd.v_t.expect("svd v_t");
        let k = svd.singular_values.imin();
        let mut dir = String::new();
        for (c, &i) in free.iter().enumerate() {
            let _ = write!(dir, "{}{:+.3} {}", if c == 0 { "" } else { " " }, v_t[(k, c)], PARAM_NAMES[i]);
        }
        return Err(Error::RankDeficient {
            what: format!("regressor along ({dir})"),
        });
    }
    // thin QR: R x = Q^T b
    let qr = a.qr();
    let x_scaled = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &b))
        .ok_or_else(|| Error::RankDeficient {
            what: "regressor".into(),
        })?;

    let mut theta = [0.0; 4];
    theta[fixed] = gauge.value();
    for (c, &i) in free.iter().enumerate() {
        theta[i] = x_scaled[c] / scales[c];
    }
    let residual_rms = (dataset
        .iter()
        .map(|s| {
            let row = regressor_row(s, n);
            (0..4).map(|i| row[i] * theta[i]).sum::<f64>().powi(2)
        })
        .sum::<f64>()
        / m as f64)
        .sqrt();
    let [alpha1_hat, alpha2_hat, c1_hat, c2_hat] = theta;
    Ok(IdentResult {
        alpha1_hat,
        alpha2_hat,
        c1_hat,
        c2_hat,
        residual_rms,
        sign_ok: alpha1_hat > 0.0 && alpha2_hat > 0.0 && c1_hat > 0.0 && c2_hat < 0.0,
        samples: m,
        gauge,
    })
}
