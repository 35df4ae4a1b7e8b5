//! Seeded random matrix generators shared by probe construction, optimizer
//! seeding, and tests. All draws go through a counter-based ChaCha stream so
//! results are reproducible across platforms and thread schedules.

use crate::smallmat::{det3, diag, rotation_about, Mat3, Vec3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splits a global seed into an independent per-stream generator.
/// Stream 0 with seed 0 is still a valid, distinct stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mixed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
    // Box-Muller; clamp away from 0 to keep ln finite.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    (r * u2.cos(), r * u2.sin())
}

pub fn random_unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let (a, b) = normal_pair(rng);
        let (c, _) = normal_pair(rng);
        let v = Vec3::new(a, b, c);
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Uniformly distributed rotation (unit quaternion method).
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let (a, b) = normal_pair(rng);
    let (c, d) = normal_pair(rng);
    let q = nalgebra::Quaternion::new(a, b, c, d);
    if q.norm() < 1e-9 {
        return Mat3::identity();
    }
    *nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
}

/// Symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut impl Rng, lo: f64, hi: f64) -> Mat3 {
    let q = random_rotation(rng);
    let d = diag(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    q * d * q.transpose()
}

/// Positive diagonal stretch in a random orthonormal frame (alias kept
/// separate from `random_spd` for intent at call sites).
pub fn random_stretch(rng: &mut impl Rng, lo: f64, hi: f64) -> Mat3 {
    random_spd(rng, lo, hi)
}

/// Random orientation-preserving map with determinant exactly scaled to +1.
pub fn random_unimodular(rng: &mut impl Rng) -> Mat3 {
    loop {
        let mut m = Mat3::from_fn(|_, _| rng.gen_range(-1.5..1.5));
        let d = det3(&m);
        if d.abs() < 1e-2 {
            continue;
        }
        if d < 0.0 {
            // Flip one row to restore orientation before normalizing scale.
            for j in 0..3 {
                m[(0, j)] = -m[(0, j)];
            }
        }
        return m * det3(&m).powf(-1.0 / 3.0);
    }
}

/// Product of a bounded SPD stretch and a rotation; entries rejected until
/// every magnitude is at most `bound`. Determinant is positive.
pub fn random_spd_rotation(rng: &mut impl Rng, bound: f64) -> Mat3 {
    loop {
        let m = random_spd(rng, 0.6, 1.6) * random_rotation(rng);
        if m.iter().all(|x| x.abs() <= bound) {
            return m;
        }
    }
}

/// Invertible map with condition number at most `max_cond` and positive
/// determinant: two random rotations around a bounded singular spectrum.
pub fn random_invertible_cond_bounded(rng: &mut impl Rng, max_cond: f64) -> Mat3 {
    let hi = max_cond.sqrt();
    let lo = 1.0 / hi;
    let u = random_rotation(rng);
    let v = random_rotation(rng);
    let d = diag(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    u * d * v.transpose()
}

/// Rotation about `axis` by a uniformly random angle in `(0.25, pi)`.
pub fn random_axis_rotation(rng: &mut impl Rng, axis: &Vec3) -> Mat3 {
    rotation_about(axis, rng.gen_range(0.25..std::f64::consts::PI))
}
