use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::RobotParams;

/// A material point on one of the moving links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoint {
    /// Zero-based link index.
    pub link: usize,
    /// Distance from the link's proximal joint along the link (m).
    pub along: f64,
}

impl ChainPoint {
    pub fn center(link: usize, params: &RobotParams) -> Self {
        ChainPoint {
            link,
            along: params.ell,
        }
    }

    pub fn tip(params: &RobotParams) -> Self {
        ChainPoint {
            link: params.n - 1,
            along: 2.0 * params.ell,
        }
    }

    /// Point on the last link at `offset` beyond its centre.
    pub fn on_last_link(params: &RobotParams, offset: f64) -> Self {
        ChainPoint {
            link: params.n - 1,
            along: params.ell + offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub tip: Vector2<f64>,
    /// Proximal joint of every moving link; the first sits on top of the base link.
    pub joints: Vec<Vector2<f64>>,
    pub centers: Vec<Vector2<f64>>,
}

#[inline]
fn axis(s: f64) -> Vector2<f64> {
    Vector2::new(s.sin(), s.cos())
}

#[inline]
fn axis_prime(s: f64) -> Vector2<f64> {
    Vector2::new(s.cos(), -s.sin())
}

fn cumulative(q: &DVector<f64>) -> Vec<f64> {
    q.iter()
        .scan(0.0, |acc, qi| {
            *acc += qi;
            Some(*acc)
        })
        .collect()
}

pub fn forward_kinematics(q: &DVector<f64>, params: &RobotParams) -> Kinematics {
    let s = cumulative(q);
    let link = 2.0 * params.ell;
    let mut joint = Vector2::new(0.0, params.ell);
    let mut joints = Vec::with_capacity(s.len());
    let mut centers = Vec::with_capacity(s.len());
    for &si in &s {
        let e = axis(si);
        joints.push(joint);
        centers.push(joint + e * params.ell);
        joint += e * link;
    }
    Kinematics {
        tip: joint,
        joints,
        centers,
    }
}

/// World position of a point on the chain.
pub fn point_position(q: &DVector<f64>, params: &RobotParams, point: ChainPoint) -> Vector2<f64> {
    let k = forward_kinematics(q, params);
    let s: f64 = q.iter().take(point.link + 1).sum();
    k.joints[point.link] + axis(s) * point.along
}

/// `2 x n` world Jacobian of a chain point.
pub fn jacobian_point(q: &DVector<f64>, params: &RobotParams, point: ChainPoint) -> DMatrix<f64> {
    let n = q.len();
    let s = cumulative(q);
    let link = 2.0 * params.ell;
    let mut j = DMatrix::zeros(2, n);
    // accumulate from the distal end towards the base
    let mut acc = axis_prime(s[point.link]) * point.along;
    for k in (0..=point.link).rev() {
        if k < point.link {
            acc += axis_prime(s[k]) * link;
        }
        j[(0, k)] = acc.x;
        j[(1, k)] = acc.y;
    }
    j
}

/// Hessian of the scalar `direction . P(q)` for a chain point `P`.
pub fn point_hessian(
    q: &DVector<f64>,
    params: &RobotParams,
    point: ChainPoint,
    direction: &Vector2<f64>,
) -> DMatrix<f64> {
    let n = q.len();
    let s = cumulative(q);
    let link = 2.0 * params.ell;
    // tail[i] = sum over segments at or beyond i of direction . d2P/ds_i^2
    let mut tail = vec![0.0; point.link + 1];
    let mut acc = -direction.dot(&axis(s[point.link])) * point.along;
    tail[point.link] = acc;
    for i in (0..point.link).rev() {
        acc += -direction.dot(&axis(s[i])) * link;
        tail[i] = acc;
    }
    DMatrix::from_fn(n, n, |a, b| {
        let m = a.max(b);
        if m <= point.link {
            tail[m]
        } else {
            0.0
        }
    })
}

/// World Jacobian of the tip.
pub fn jacobian_world(q: &DVector<f64>, params: &RobotParams) -> DMatrix<f64> {
    jacobian_point(q, params, ChainPoint::tip(params))
}

/// Unit transverse and axial directions of the last link.
pub fn tip_frame(q: &DVector<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let sn = q.iter().sum::<f64>();
    (axis_prime(sn), axis(sn))
}

/// Rows of the contact-point Jacobian expressed in the last link's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TipFrameJacobian {
    /// Transverse row `J1`.
    pub transverse: DVector<f64>,
    /// Axial row `J2`.
    pub axial: DVector<f64>,
}

impl TipFrameJacobian {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.transverse.len();
        DMatrix::from_fn(2, n, |r, c| {
            if r == 0 {
                self.transverse[c]
            } else {
                self.axial[c]
            }
        })
    }
}

/// Jacobian of the contact point at `contact_offset` beyond the last link's
/// centre, rotated by `-s_n` into the tangential/axial frame of that link.
pub fn jacobian_tip_frame(
    q: &DVector<f64>,
    params: &RobotParams,
    contact_offset: f64,
) -> TipFrameJacobian {
    let j = jacobian_point(q, params, ChainPoint::on_last_link(params, contact_offset));
    let (t, a) = tip_frame(q);
    let rot = Matrix2::new(t.x, t.y, a.x, a.y);
    let local = rot * j;
    TipFrameJacobian {
        transverse: local.row(0).transpose(),
        axial: local.row(1).transpose(),
    }
}

/// Lumped-mass inertia matrix
/// `sum_i m Jc_i^T Jc_i + I_rod jw_i^T jw_i`, `jw_i = (1,..,1,0,..,0)`.
pub fn inertia_matrix(q: &DVector<f64>, params: &RobotParams) -> DMatrix<f64> {
    let n = q.len();
    let i_rod = params.rod_inertia();
    let mut m = DMatrix::zeros(n, n);
    for link in 0..n {
        let jc = jacobian_point(q, params, ChainPoint::center(link, params));
        m += jc.transpose() * &jc * params.m;
        for a in 0..=link {
            for b in 0..=link {
                m[(a, b)] += i_rod;
            }
        }
    }
    // symmetrize away rounding in the products
    (&m + m.transpose()) * 0.5
}
