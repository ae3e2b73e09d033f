//! Seeded sample generation. One counter-based generator keyed by
//! `(seed, stream)` so sweeps stay deterministic under any parallel split.

use crate::mat::{det3, Mat32, Mat33, Vec3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator for stream `stream` of experiment seed `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_vec3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3([
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ])
}

pub fn gaussian_mat33(rng: &mut ChaCha8Rng) -> Mat33 {
    Mat33::from_cols(gaussian_vec3(rng), gaussian_vec3(rng), gaussian_vec3(rng))
}

pub fn gaussian_mat32(rng: &mut ChaCha8Rng) -> Mat32 {
    Mat32::from_cols(gaussian_vec3(rng), gaussian_vec3(rng))
}

/// Random rotation from the QR-style orthonormalization of a Gaussian frame.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Mat33 {
    loop {
        let a = gaussian_vec3(rng);
        let Some(u) = a.normalized() else { continue };
        let b = gaussian_vec3(rng);
        let w = b.sub(&u.scale(u.dot(&b)));
        let Some(v) = w.normalized() else { continue };
        return Mat33::from_cols(u, v, u.cross(&v));
    }
}

/// Gaussian 3x3 matrix conditioned on `det > 0`.
pub fn gaussian_mat33_detpos(rng: &mut ChaCha8Rng) -> Mat33 {
    loop {
        let f = gaussian_mat33(rng);
        if det3(&f) > 1e-6 {
            return f;
        }
    }
}

/// Rank-deficient 3x2 matrix: second column a multiple of the first.
pub fn rank_deficient_mat32(rng: &mut ChaCha8Rng) -> Mat32 {
    let c = gaussian_vec3(rng);
    let lam: f64 = rng.sample(StandardNormal);
    Mat32::from_cols(c, c.scale(lam))
}

/// Rank-2 (full-rank) 3x2 matrix.
pub fn rank2_mat32(rng: &mut ChaCha8Rng) -> Mat32 {
    loop {
        let xi = gaussian_mat32(rng);
        if crate::mat::cross_columns(&xi).norm() > 0.1 {
            return xi;
        }
    }
}
