//! Small dense linear algebra over 3x3 and 3x2 real matrices.
//!
//! Everything here is closed-form and allocation-free: cross products,
//! cofactor determinants, rank-one dyads and a rotation-valued SVD
//! `F = P * Q^T * G * Q` with `P, Q` in SO(3) and `G` diagonal (entries
//! signed so that the decomposition also covers `det F < 0`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatError {
    /// `signed_svd` requires an invertible input.
    #[error("matrix is singular within tolerance")]
    SingularInput,
}

/// Scale-aware invertibility test: `|det F| > 1e-12 * (1 + |F|^3)`.
pub fn is_invertible(f: &Mat33) -> bool {
    let n = f.norm();
    det3(f).abs() > 1e-12 * (1.0 + n * n * n)
}

// ---------------------------------------------------------------------------
// vectors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2(pub [f64; 2]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2([0.0; 2]);

    pub fn dot(&self, o: &Vec2) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(&self) -> Vec2 {
        Vec2([-self.0[1], self.0[0]])
    }

    pub fn scale(&self, s: f64) -> Vec2 {
        Vec2([self.0[0] * s, self.0[1] * s])
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);
    pub const E1: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const E2: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const E3: Vec3 = Vec3([0.0, 0.0, 1.0]);

    pub fn dot(&self, o: &Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn add(&self, o: &Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn sub(&self, o: &Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 {
            Some(self.scale(1.0 / n))
        } else {
            None
        }
    }

    /// A unit vector orthogonal to `self` (which must be nonzero).
    pub fn any_orthogonal(&self) -> Vec3 {
        let trial = if self.0[0].abs() <= self.0[1].abs() && self.0[0].abs() <= self.0[2].abs() {
            Vec3::E1
        } else if self.0[1].abs() <= self.0[2].abs() {
            Vec3::E2
        } else {
            Vec3::E3
        };
        self.cross(&trial)
            .normalized()
            .expect("any_orthogonal of a nonzero vector")
    }
}

// ---------------------------------------------------------------------------
// matrices
// ---------------------------------------------------------------------------

/// 3x3 matrix stored by columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat33 {
    pub cols: [Vec3; 3],
}

/// 3x2 matrix: the two columns `xi_1`, `xi_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat32 {
    pub cols: [Vec3; 2],
}

impl Mat33 {
    pub const ZERO: Mat33 = Mat33 {
        cols: [Vec3::ZERO; 3],
    };

    pub fn identity() -> Mat33 {
        Mat33::from_diag(1.0, 1.0, 1.0)
    }

    pub fn from_cols(c1: Vec3, c2: Vec3, c3: Vec3) -> Mat33 {
        Mat33 { cols: [c1, c2, c3] }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Mat33 {
        Mat33::from_cols(
            Vec3([rows[0][0], rows[1][0], rows[2][0]]),
            Vec3([rows[0][1], rows[1][1], rows[2][1]]),
            Vec3([rows[0][2], rows[1][2], rows[2][2]]),
        )
    }

    pub fn from_diag(d1: f64, d2: f64, d3: f64) -> Mat33 {
        Mat33::from_cols(
            Vec3([d1, 0.0, 0.0]),
            Vec3([0.0, d2, 0.0]),
            Vec3([0.0, 0.0, d3]),
        )
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.cols[col].0[row]
    }

    pub fn row(&self, row: usize) -> Vec3 {
        Vec3([
            self.cols[0].0[row],
            self.cols[1].0[row],
            self.cols[2].0[row],
        ])
    }

    pub fn transpose(&self) -> Mat33 {
        Mat33::from_cols(self.row(0), self.row(1), self.row(2))
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        self.cols[0]
            .scale(v.0[0])
            .add(&self.cols[1].scale(v.0[1]))
            .add(&self.cols[2].scale(v.0[2]))
    }

    pub fn mul_mat(&self, o: &Mat33) -> Mat33 {
        Mat33::from_cols(
            self.mul_vec(&o.cols[0]),
            self.mul_vec(&o.cols[1]),
            self.mul_vec(&o.cols[2]),
        )
    }

    pub fn add(&self, o: &Mat33) -> Mat33 {
        Mat33::from_cols(
            self.cols[0].add(&o.cols[0]),
            self.cols[1].add(&o.cols[1]),
            self.cols[2].add(&o.cols[2]),
        )
    }

    pub fn sub(&self, o: &Mat33) -> Mat33 {
        Mat33::from_cols(
            self.cols[0].sub(&o.cols[0]),
            self.cols[1].sub(&o.cols[1]),
            self.cols[2].sub(&o.cols[2]),
        )
    }

    pub fn scale(&self, s: f64) -> Mat33 {
        Mat33::from_cols(
            self.cols[0].scale(s),
            self.cols[1].scale(s),
            self.cols[2].scale(s),
        )
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.cols.iter().map(|c| c.dot(c)).sum::<f64>()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.0.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Singular values in ascending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let a = self.transpose().mul_mat(self);
        let (vals, _) = sym_eigen3(&a);
        [
            vals[0].max(0.0).sqrt(),
            vals[1].max(0.0).sqrt(),
            vals[2].max(0.0).sqrt(),
        ]
    }

    /// Product of the singular values, `v(F) = |det F|`.
    pub fn sv_product(&self) -> f64 {
        let s = self.singular_values();
        s[0] * s[1] * s[2]
    }
}

impl Mat32 {
    pub const ZERO: Mat32 = Mat32 {
        cols: [Vec3::ZERO; 2],
    };

    pub fn from_cols(c1: Vec3, c2: Vec3) -> Mat32 {
        Mat32 { cols: [c1, c2] }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.cols[col].0[row]
    }

    pub fn add(&self, o: &Mat32) -> Mat32 {
        Mat32::from_cols(self.cols[0].add(&o.cols[0]), self.cols[1].add(&o.cols[1]))
    }

    pub fn sub(&self, o: &Mat32) -> Mat32 {
        Mat32::from_cols(self.cols[0].sub(&o.cols[0]), self.cols[1].sub(&o.cols[1]))
    }

    pub fn scale(&self, s: f64) -> Mat32 {
        Mat32::from_cols(self.cols[0].scale(s), self.cols[1].scale(s))
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.cols[0].dot(&self.cols[0]) + self.cols[1].dot(&self.cols[1])
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.0.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Singular values in ascending order, from the 2x2 quadratic form.
    pub fn singular_values(&self) -> [f64; 2] {
        let a = self.cols[0].dot(&self.cols[0]);
        let b = self.cols[0].dot(&self.cols[1]);
        let c = self.cols[1].dot(&self.cols[1]);
        let half_tr = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).max(0.0).sqrt();
        let lo = (half_tr - disc).max(0.0);
        let hi = (half_tr + disc).max(0.0);
        [lo.sqrt(), hi.sqrt()]
    }

    /// Product of the singular values; equals `|xi_1 ^ xi_2|`.
    pub fn sv_product(&self) -> f64 {
        let s = self.singular_values();
        s[0] * s[1]
    }
}

/// Either ambient matrix shape used by the densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mat {
    M33(Mat33),
    M32(Mat32),
}

impl Mat {
    pub fn norm(&self) -> f64 {
        match self {
            Mat::M33(m) => m.norm(),
            Mat::M32(m) => m.norm(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        match self {
            Mat::M33(m) => m.norm_squared(),
            Mat::M32(m) => m.norm_squared(),
        }
    }

    pub fn add(&self, o: &Mat) -> Mat {
        match (self, o) {
            (Mat::M33(a), Mat::M33(b)) => Mat::M33(a.add(b)),
            (Mat::M32(a), Mat::M32(b)) => Mat::M32(a.add(b)),
            _ => panic!("matrix shape mismatch"),
        }
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        match (self, o) {
            (Mat::M33(a), Mat::M33(b)) => Mat::M33(a.sub(b)),
            (Mat::M32(a), Mat::M32(b)) => Mat::M32(a.sub(b)),
            _ => panic!("matrix shape mismatch"),
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        match self {
            Mat::M33(m) => Mat::M33(m.scale(s)),
            Mat::M32(m) => Mat::M32(m.scale(s)),
        }
    }

    pub fn zero_like(&self) -> Mat {
        match self {
            Mat::M33(_) => Mat::M33(Mat33::ZERO),
            Mat::M32(_) => Mat::M32(Mat32::ZERO),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        match self {
            Mat::M33(m) => m.max_abs_entry(),
            Mat::M32(m) => m.max_abs_entry(),
        }
    }

    pub fn entries(&self) -> Vec<f64> {
        match self {
            Mat::M33(m) => (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .map(|(r, c)| m.entry(r, c))
                .collect(),
            Mat::M32(m) => (0..3)
                .flat_map(|r| (0..2).map(move |c| (r, c)))
                .map(|(r, c)| m.entry(r, c))
                .collect(),
        }
    }

    pub fn as_m33(&self) -> Option<&Mat33> {
        match self {
            Mat::M33(m) => Some(m),
            Mat::M32(_) => None,
        }
    }

    pub fn as_m32(&self) -> Option<&Mat32> {
        match self {
            Mat::M32(m) => Some(m),
            Mat::M33(_) => None,
        }
    }

    /// Product of singular values (`|det|` for 3x3, `|xi_1 ^ xi_2|` for 3x2).
    pub fn sv_product(&self) -> f64 {
        match self {
            Mat::M33(m) => m.sv_product(),
            Mat::M32(m) => m.sv_product(),
        }
    }
}

// ---------------------------------------------------------------------------
// spec operations
// ---------------------------------------------------------------------------

/// Cross product of the two columns of a 3x2 matrix.
pub fn cross_columns(xi: &Mat32) -> Vec3 {
    xi.cols[0].cross(&xi.cols[1])
}

/// Cofactor-expansion determinant of a 3x3 matrix.
pub fn det3(f: &Mat33) -> f64 {
    f.cols[0].dot(&f.cols[1].cross(&f.cols[2]))
}

/// Append `zeta` as third column: `(xi | zeta)`.
pub fn adjoin_column(xi: &Mat32, zeta: &Vec3) -> Mat33 {
    Mat33::from_cols(xi.cols[0], xi.cols[1], *zeta)
}

/// Left factor of a rank-one dyad: a 2-vector for 3x2 ambients, 3-vector for 3x3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DyadLeft {
    Planar(Vec2),
    Full(Vec3),
}

/// The dyad `a (x) b`, acting as `x -> <a, x> b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOneDyad {
    pub a: DyadLeft,
    pub b: Vec3,
}

impl RankOneDyad {
    pub fn planar(a: Vec2, b: Vec3) -> RankOneDyad {
        RankOneDyad {
            a: DyadLeft::Planar(a),
            b,
        }
    }

    pub fn full(a: Vec3, b: Vec3) -> RankOneDyad {
        RankOneDyad {
            a: DyadLeft::Full(a),
            b,
        }
    }
}

/// Materialize the dyad: column `j` is `a_j * b`.
pub fn rank_one_matrix(d: &RankOneDyad) -> Mat {
    match d.a {
        DyadLeft::Planar(a) => Mat::M32(Mat32::from_cols(d.b.scale(a.0[0]), d.b.scale(a.0[1]))),
        DyadLeft::Full(a) => Mat::M33(Mat33::from_cols(
            d.b.scale(a.0[0]),
            d.b.scale(a.0[1]),
            d.b.scale(a.0[2]),
        )),
    }
}

/// Rotation-valued SVD of an invertible 3x3 matrix: `F = P * Q^T * G * Q`.
///
/// `G` carries the singular values; when `det F < 0` all three diagonal
/// entries are negated (the `-sqrt(F^T F)` branch) so that `P` stays in SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedSvd {
    pub p: Mat33,
    pub q: Mat33,
    pub g: Mat33,
}

impl SignedSvd {
    pub fn reconstruct(&self) -> Mat33 {
        self.p
            .mul_mat(&self.q.transpose())
            .mul_mat(&self.g)
            .mul_mat(&self.q)
    }
}

/// Signed SVD for invertible input; errors on singular matrices.
pub fn signed_svd(f: &Mat33) -> Result<SignedSvd, MatError> {
    if !is_invertible(f) {
        return Err(MatError::SingularInput);
    }
    Ok(rotation_svd(f))
}

/// Rotation-valued SVD defined for every 3x3 matrix (singular included).
///
/// For invertible `F` this is the signed branch above; for singular `F` the
/// diagonal is nonnegative and `P` is completed to a rotation on the null
/// directions.
pub fn rotation_svd(f: &Mat33) -> SignedSvd {
    let a = f.transpose().mul_mat(f);
    let (vals, mut vecs) = sym_eigen3(&a);
    // eigenvector basis as columns of V, det +1
    if det3(&Mat33::from_cols(vecs[0], vecs[1], vecs[2])) < 0.0 {
        vecs[2] = vecs[2].scale(-1.0);
    }
    let v = Mat33::from_cols(vecs[0], vecs[1], vecs[2]);
    let sv = [
        vals[0].max(0.0).sqrt(),
        vals[1].max(0.0).sqrt(),
        vals[2].max(0.0).sqrt(),
    ];
    let det = det3(f);
    let scale = f.norm();
    if is_invertible(f) {
        let s = if det > 0.0 { 1.0 } else { -1.0 };
        let g = Mat33::from_diag(s * sv[0], s * sv[1], s * sv[2]);
        // P = F * V * G^{-1} * V^T
        let g_inv = Mat33::from_diag(
            1.0 / g.entry(0, 0),
            1.0 / g.entry(1, 1),
            1.0 / g.entry(2, 2),
        );
        let p = f.mul_mat(&v).mul_mat(&g_inv).mul_mat(&v.transpose());
        return SignedSvd {
            p,
            q: v.transpose(),
            g,
        };
    }
    // Singular branch: classic U from the range, orthonormal completion elsewhere.
    let tol = 1e-12 * (1.0 + scale);
    let mut u_cols: [Option<Vec3>; 3] = [None, None, None];
    for i in 0..3 {
        if sv[i] > tol {
            u_cols[i] = Some(f.mul_vec(&v.cols[i]).scale(1.0 / sv[i]));
        }
    }
    let mut fixed: Vec<Vec3> = u_cols.iter().flatten().copied().collect();
    let mut null_slots = Vec::new();
    for (i, slot) in u_cols.iter_mut().enumerate() {
        if slot.is_none() {
            null_slots.push(i);
            let mut cand = None;
            for seed in [Vec3::E1, Vec3::E2, Vec3::E3] {
                let mut w = seed;
                for f_col in &fixed {
                    w = w.sub(&f_col.scale(f_col.dot(&w)));
                }
                if w.norm() > 0.5 {
                    cand = w.normalized();
                    break;
                }
            }
            // Gram-Schmidt against three orthonormal seeds always leaves one
            // seed with norm >= 1/2 when fewer than three columns are fixed.
            let w = cand.expect("orthonormal completion");
            *slot = Some(w);
            fixed.push(w);
        }
    }
    let mut u = Mat33::from_cols(u_cols[0].unwrap(), u_cols[1].unwrap(), u_cols[2].unwrap());
    if det3(&u) < 0.0 {
        // flip a null column; the matching singular value is zero so the
        // reconstruction is unchanged
        let k = *null_slots
            .first()
            .expect("singular matrix has a null singular direction");
        u.cols[k] = u.cols[k].scale(-1.0);
    }
    SignedSvd {
        p: u.mul_mat(&v.transpose()),
        q: v.transpose(),
        g: Mat33::from_diag(sv[0], sv[1], sv[2]),
    }
}

// ---------------------------------------------------------------------------
// symmetric 3x3 eigen-decomposition (closed form)
// ---------------------------------------------------------------------------

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric 3x3
/// matrix. Cardano for the characteristic cubic, row-cross extraction for the
/// most isolated eigenvector, 2x2 reduction for the rest.
pub fn sym_eigen3(a: &Mat33) -> ([f64; 3], [Vec3; 3]) {
    let m00 = a.entry(0, 0);
    let m11 = a.entry(1, 1);
    let m22 = a.entry(2, 2);
    let m01 = 0.5 * (a.entry(0, 1) + a.entry(1, 0));
    let m02 = 0.5 * (a.entry(0, 2) + a.entry(2, 0));
    let m12 = 0.5 * (a.entry(1, 2) + a.entry(2, 1));

    let q = (m00 + m11 + m22) / 3.0;
    let off = m01 * m01 + m02 * m02 + m12 * m12;
    let p2 =
        ((m00 - q) * (m00 - q) + (m11 - q) * (m11 - q) + (m22 - q) * (m22 - q) + 2.0 * off) / 6.0;
    let p = p2.sqrt();

    let scale = m00.abs().max(m11.abs()).max(m22.abs()).max(off.sqrt());
    if p <= 1e-14 * (1.0 + scale) {
        return ([q, q, q], [Vec3::E1, Vec3::E2, Vec3::E3]);
    }

    let b00 = (m00 - q) / p;
    let b11 = (m11 - q) / p;
    let b22 = (m22 - q) / p;
    let b01 = m01 / p;
    let b02 = m02 / p;
    let b12 = m12 / p;
    let half_det = 0.5
        * (b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
            + b02 * (b01 * b12 - b11 * b02));
    let phi = half_det.clamp(-1.0, 1.0).acos() / 3.0;

    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let mid = 3.0 * q - hi - lo;
    let vals = [lo, mid, hi];

    let sym = Mat33::from_rows([[m00, m01, m02], [m01, m11, m12], [m02, m12, m22]]);
    // extract the best-separated eigenvector first
    let iso_idx = if vals[1] - vals[0] >= vals[2] - vals[1] {
        0
    } else {
        2
    };
    let v_iso = eigvec_row_cross(&sym, vals[iso_idx]);
    let mid_idx = 1;
    let u = v_iso.any_orthogonal();
    let w = v_iso.cross(&u);
    // restrict to span{u, w} and solve the 2x2 problem at vals[mid_idx]
    let au = sym.mul_vec(&u);
    let aw = sym.mul_vec(&w);
    let r00 = u.dot(&au);
    let r01 = u.dot(&aw);
    let r11 = w.dot(&aw);
    let lam = vals[mid_idx];
    // kernel of [[r00-lam, r01], [r01, r11-lam]]
    let c0 = (r00 - lam).hypot(r01);
    let c1 = (r11 - lam).hypot(r01);
    let (cu, cw) = if c0 >= c1 {
        if c0 > 0.0 {
            (-r01 / c0, (r00 - lam) / c0)
        } else {
            (1.0, 0.0)
        }
    } else if c1 > 0.0 {
        (-(r11 - lam) / c1, r01 / c1)
    } else {
        (1.0, 0.0)
    };
    let v_mid = u.scale(cu).add(&w.scale(cw));
    let v_mid = orthonormal_against(&v_mid, &v_iso);
    let v_other = v_iso.cross(&v_mid);

    let mut vecs = [Vec3::ZERO; 3];
    vecs[iso_idx] = v_iso;
    vecs[mid_idx] = v_mid;
    vecs[2 - iso_idx] = v_other;
    // orientation is the caller's concern (rotation_svd flips a column)
    jacobi_polish(&sym, Mat33::from_cols(vecs[0], vecs[1], vecs[2]))
}

/// A few cyclic Jacobi sweeps seeded with the closed-form basis: kills the
/// residual off-diagonal mass that the cross-product extraction leaves for
/// clustered spectra. Returns eigenvalues ascending.
fn jacobi_polish(a: &Mat33, v0: Mat33) -> ([f64; 3], [Vec3; 3]) {
    let mut v = v0;
    let mut b = v.transpose().mul_mat(a).mul_mat(&v);
    for _ in 0..3 {
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = 0.5 * (b.entry(p, q) + b.entry(q, p));
            let app = b.entry(p, p);
            let aqq = b.entry(q, q);
            if apq.abs() <= 1e-300 || apq.abs() <= 1e-16 * (app.abs() + aqq.abs()) {
                continue;
            }
            let theta = (aqq - app) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let rot = |m: &Mat33| -> Mat33 {
                // right-multiply by the (p, q) plane rotation
                let mut cols = m.cols;
                let cp = cols[p];
                let cq = cols[q];
                cols[p] = cp.scale(c).sub(&cq.scale(s));
                cols[q] = cp.scale(s).add(&cq.scale(c));
                Mat33::from_cols(cols[0], cols[1], cols[2])
            };
            v = rot(&v);
            b = rot(&rot(&b).transpose());
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| b.entry(i, i).total_cmp(&b.entry(j, j)));
    (
        [
            b.entry(order[0], order[0]),
            b.entry(order[1], order[1]),
            b.entry(order[2], order[2]),
        ],
        [v.cols[order[0]], v.cols[order[1]], v.cols[order[2]]],
    )
}

fn orthonormal_against(v: &Vec3, fixed: &Vec3) -> Vec3 {
    let w = v.sub(&fixed.scale(fixed.dot(v)));
    w.normalized().unwrap_or_else(|| fixed.any_orthogonal())
}

fn eigvec_row_cross(a: &Mat33, lam: f64) -> Vec3 {
    let m = a.sub(&Mat33::from_diag(lam, lam, lam));
    let r0 = m.row(0);
    let r1 = m.row(1);
    let r2 = m.row(2);
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let mut best = cands[0];
    let mut best_n = best.norm();
    for c in &cands[1..] {
        let n = c.norm();
        if n > best_n {
            best = *c;
            best_n = n;
        }
    }
    if best_n > 0.0 {
        best.scale(1.0 / best_n)
    } else {
        // (near-)repeated eigenvalue: any direction orthogonal to the
        // strongest row works
        let rows = [r0, r1, r2];
        let strongest = rows
            .iter()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap();
        if strongest.norm() > 0.0 {
            strongest.any_orthogonal()
        } else {
            Vec3::E1
        }
    }
}

// ---------------------------------------------------------------------------
// direction designs
// ---------------------------------------------------------------------------

/// `k` unit directions on the half circle (angles `pi * i / k`).
pub fn circle_directions(k: usize) -> Vec<Vec2> {
    (0..k)
        .map(|i| {
            let th = std::f64::consts::PI * (i as f64) / (k as f64);
            Vec2([th.cos(), th.sin()])
        })
        .collect()
}

/// Geodesic sphere design with `10 q^2 + 2` points (frequency-`q` icosahedron
/// subdivision). `q = 3` gives the 92-point set. Small frequencies are
/// cached: the inner lamination loops request them constantly.
pub fn sphere_design(freq: usize) -> Vec<Vec3> {
    static CACHE: std::sync::OnceLock<Vec<Vec<Vec3>>> = std::sync::OnceLock::new();
    let q = freq.max(1);
    if q <= 6 {
        let all = CACHE.get_or_init(|| (1..=6).map(sphere_design_uncached).collect());
        return all[q - 1].clone();
    }
    sphere_design_uncached(q)
}

fn sphere_design_uncached(freq: usize) -> Vec<Vec3> {
    let q = freq.max(1);
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let norm = (1.0 + phi * phi).sqrt();
    let a = 1.0 / norm;
    let b = phi / norm;
    let verts = [
        Vec3([-a, b, 0.0]),
        Vec3([a, b, 0.0]),
        Vec3([-a, -b, 0.0]),
        Vec3([a, -b, 0.0]),
        Vec3([0.0, -a, b]),
        Vec3([0.0, a, b]),
        Vec3([0.0, -a, -b]),
        Vec3([0.0, a, -b]),
        Vec3([b, 0.0, -a]),
        Vec3([b, 0.0, a]),
        Vec3([-b, 0.0, -a]),
        Vec3([-b, 0.0, a]),
    ];
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut set = std::collections::BTreeMap::new();
    let key = |v: &Vec3| {
        let r = |x: f64| (x * 1e9).round() as i64;
        (r(v.0[0]), r(v.0[1]), r(v.0[2]))
    };
    for f in faces {
        let (va, vb, vc) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        for i in 0..=q {
            for j in 0..=(q - i) {
                let k = q - i - j;
                let p = va
                    .scale(i as f64 / q as f64)
                    .add(&vb.scale(j as f64 / q as f64))
                    .add(&vc.scale(k as f64 / q as f64));
                if let Some(u) = p.normalized() {
                    set.entry(key(&u)).or_insert(u);
                }
            }
        }
    }
    set.into_values().collect()
}

/// Canonical open hemisphere filter; `dirs` and `-dirs` are equivalent as
/// dyad directions so half the design suffices.
pub fn hemisphere(dirs: &[Vec3]) -> Vec<Vec3> {
    let tol = 1e-12;
    dirs.iter()
        .copied()
        .filter(|v| {
            v.0[2] > tol
                || (v.0[2].abs() <= tol && (v.0[1] > tol || (v.0[1].abs() <= tol && v.0[0] > tol)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m32(c1: Vec3, c2: Vec3) -> Mat32 {
        Mat32::from_cols(c1, c2)
    }

    #[test]
    fn cross_columns_canonical_basis() {
        let xi = m32(Vec3::E1, Vec3::E2);
        assert_eq!(cross_columns(&xi), Vec3::E3);
    }

    #[test]
    fn cross_columns_parallel_is_zero() {
        let xi = m32(Vec3::E1, Vec3::E1);
        assert_eq!(cross_columns(&xi), Vec3::ZERO);
    }

    #[test]
    fn cross_norm_matches_sv_product() {
        let mut rng = crate::sampling::rng_for(7, 0);
        for i in 0..200 {
            let xi = crate::sampling::gaussian_mat32(&mut rng);
            let _ = i;
            let cross = cross_columns(&xi).norm();
            assert_abs_diff_eq!(cross, xi.sv_product(), epsilon = 1e-10 * (1.0 + cross));
        }
    }

    #[test]
    fn det3_examples() {
        assert_eq!(det3(&Mat33::identity()), 1.0);
        assert_eq!(det3(&Mat33::from_diag(1.0, 2.0, 3.0)), 6.0);
        let two_equal = Mat33::from_cols(Vec3::E1, Vec3::E1, Vec3::E3);
        assert_eq!(det3(&two_equal), 0.0);
    }

    #[test]
    fn adjoin_examples() {
        let xi = m32(Vec3::E1, Vec3::E2);
        assert_eq!(adjoin_column(&xi, &Vec3::E3), Mat33::identity());
        assert_eq!(det3(&adjoin_column(&xi, &Vec3::E3.scale(-1.0))), -1.0);
        let degenerate = m32(Vec3::E1, Vec3::E1);
        assert_eq!(
            det3(&adjoin_column(&degenerate, &Vec3([0.3, -0.7, 2.0]))),
            0.0
        );
    }

    #[test]
    fn adjoin_det_is_cross_dot() {
        let mut rng = crate::sampling::rng_for(11, 0);
        for _ in 0..200 {
            let xi = crate::sampling::gaussian_mat32(&mut rng);
            let z = crate::sampling::gaussian_vec3(&mut rng);
            let d = det3(&adjoin_column(&xi, &z));
            let c = cross_columns(&xi).dot(&z);
            assert_abs_diff_eq!(d, c, epsilon = 1e-12 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn rank_one_matrix_examples() {
        let d = RankOneDyad::planar(Vec2([1.0, 0.0]), Vec3::E3);
        let m = rank_one_matrix(&d);
        let m = m.as_m32().unwrap();
        assert_eq!(m.entry(2, 0), 1.0);
        assert_eq!(m.norm(), 1.0);

        let z = rank_one_matrix(&RankOneDyad::planar(Vec2::ZERO, Vec3::E1));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn rank_one_matrix_has_rank_at_most_one() {
        let mut rng = crate::sampling::rng_for(13, 0);
        for _ in 0..100 {
            let a = crate::sampling::gaussian_vec3(&mut rng);
            let b = crate::sampling::gaussian_vec3(&mut rng);
            let m = rank_one_matrix(&RankOneDyad::full(a, b));
            let m = m.as_m33().unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let c = m.cols[i].cross(&m.cols[j]).norm();
                    assert!(c <= 1e-12 * (1.0 + m.norm() * m.norm()), "minor {c}");
                }
            }
        }
    }

    #[test]
    fn signed_svd_diagonal() {
        let f = Mat33::from_diag(1.0, 2.0, 3.0);
        let s = signed_svd(&f).unwrap();
        assert_abs_diff_eq!(s.p.sub(&Mat33::identity()).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.g.sub(&f).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.reconstruct().sub(&f).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn signed_svd_negative_branch() {
        let f = Mat33::from_diag(-1.0, 1.0, 1.0);
        let s = signed_svd(&f).unwrap();
        let pt_p = s.p.transpose().mul_mat(&s.p);
        assert_abs_diff_eq!(pt_p.sub(&Mat33::identity()).norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(det3(&s.p), 1.0, epsilon = 1e-10);
        assert!(s.g.entry(0, 0) < 0.0 && s.g.entry(1, 1) < 0.0 && s.g.entry(2, 2) < 0.0);
        assert!(s.reconstruct().sub(&f).norm() <= 1e-12 * (1.0 + f.norm()));
    }

    #[test]
    fn signed_svd_random_reconstruction() {
        let mut rng = crate::sampling::rng_for(17, 0);
        let mut done = 0;
        while done < 1000 {
            let f = crate::sampling::gaussian_mat33(&mut rng);
            if !is_invertible(&f) {
                continue;
            }
            done += 1;
            let s = signed_svd(&f).unwrap();
            assert!(
                s.reconstruct().sub(&f).norm() <= 1e-12 * f.norm(),
                "reconstruction failed: {:e}",
                s.reconstruct().sub(&f).norm() / f.norm()
            );
            assert_abs_diff_eq!(s.g.norm(), f.norm(), epsilon = 1e-10 * (1.0 + f.norm()));
            // P = F M^{-1} sits in SO(3) up to a condition-square factor
            let sv = f.singular_values();
            let kappa = sv[2] / sv[0].max(1e-30);
            let tol = 1e-12 * (1.0 + kappa * kappa);
            assert_abs_diff_eq!(det3(&s.p), 1.0, epsilon = tol);
            let pt_p = s.p.transpose().mul_mat(&s.p);
            assert!(pt_p.sub(&Mat33::identity()).norm() <= tol);
            assert_abs_diff_eq!(det3(&s.q), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn signed_svd_rejects_singular() {
        let f = Mat33::from_cols(Vec3::E1, Vec3::E1, Vec3::E3);
        assert_eq!(signed_svd(&f), Err(MatError::SingularInput));
    }

    #[test]
    fn rotation_svd_handles_zero_and_rank_deficient() {
        let z = rotation_svd(&Mat33::ZERO);
        assert_abs_diff_eq!(det3(&z.p), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.reconstruct().norm(), 0.0, epsilon = 1e-14);

        let f = Mat33::from_cols(Vec3::E1, Vec3::E2, Vec3::ZERO);
        let s = rotation_svd(&f);
        assert!(s.reconstruct().sub(&f).norm() <= 1e-12 * (1.0 + f.norm()));
        assert_abs_diff_eq!(det3(&s.p), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn sphere_design_sizes() {
        assert_eq!(sphere_design(1).len(), 12);
        assert_eq!(sphere_design(2).len(), 42);
        assert_eq!(sphere_design(3).len(), 92);
        for v in sphere_design(3) {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(hemisphere(&sphere_design(3)).len(), 46);
    }
}
