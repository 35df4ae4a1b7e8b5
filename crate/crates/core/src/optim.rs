//! Damped Gauss-Newton on 9-parameter matrix residual problems.
//!
//! Both the per-point symmetry sampler and the material isomorphism search
//! minimize a stacked residual vector over the entries of a 3x3 map. The
//! residual closure returns `false` when the trial map leaves the model's
//! domain (non-invertible, wrong determinant sign); such steps are rejected
//! and the damping raised, which acts as a soft barrier.

use crate::smallmat::Mat3;
use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct GnOptions {
    pub max_iters: usize,
    /// Central-difference step for the numerical Jacobian.
    pub fd_step: f64,
    /// Stop as converged once the max-norm residual drops to this.
    pub target_residual: f64,
    /// Initial Levenberg damping.
    pub lambda0: f64,
}

impl Default for GnOptions {
    fn default() -> Self {
        GnOptions {
            max_iters: 200,
            fd_step: 1e-6,
            target_residual: 1e-10,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GnOutcome {
    pub map: Mat3,
    /// Max-norm of the residual vector at the returned map.
    pub residual_linf: f64,
    pub iters: usize,
    /// Whether the target residual was reached.
    pub converged: bool,
}

pub fn mat_to_params(m: &Mat3) -> [f64; 9] {
    let mut p = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            p[3 * i + j] = m[(i, j)];
        }
    }
    p
}

pub fn params_to_mat(p: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(p)
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Minimizes `|r(x)|^2` from `start`, where `residual` fills `out` and
/// returns `false` off the admissible domain.
pub fn damped_gauss_newton<F>(mut residual: F, start: &Mat3, opts: &GnOptions) -> GnOutcome
where
    F: FnMut(&[f64; 9], &mut Vec<f64>) -> bool,
{
    let mut x = mat_to_params(start);
    let mut r = Vec::new();
    if !residual(&x, &mut r) {
        return GnOutcome {
            map: *start,
            residual_linf: f64::INFINITY,
            iters: 0,
            converged: false,
        };
    }
    let m = r.len();
    let mut best_sq: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = opts.lambda0;
    let mut iters = 0;
    let mut r_plus = Vec::with_capacity(m);
    let mut r_minus = Vec::with_capacity(m);
    let mut stall = 0;

    for _ in 0..opts.max_iters {
        iters += 1;
        if linf(&r) <= opts.target_residual {
            break;
        }

        // Numerical Jacobian, central differences column by column. A column
        // whose probes leave the domain is frozen (zeroed).
        let mut jac = DMatrix::<f64>::zeros(m, 9);
        for k in 0..9 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += opts.fd_step;
            xm[k] -= opts.fd_step;
            let ok_p = residual(&xp, &mut r_plus);
            let ok_m = residual(&xm, &mut r_minus);
            match (ok_p, ok_m) {
                (true, true) => {
                    for i in 0..m {
                        jac[(i, k)] = (r_plus[i] - r_minus[i]) / (2.0 * opts.fd_step);
                    }
                }
                (true, false) => {
                    for i in 0..m {
                        jac[(i, k)] = (r_plus[i] - r[i]) / opts.fd_step;
                    }
                }
                (false, true) => {
                    for i in 0..m {
                        jac[(i, k)] = (r[i] - r_minus[i]) / opts.fd_step;
                    }
                }
                (false, false) => {}
            }
        }

        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;

        // Levenberg loop: retry with stronger damping until a step helps.
        let mut accepted = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..9 {
                a[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
            }
            let step = match Cholesky::new(a) {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = x;
            for d in 0..9 {
                trial[d] -= step[d];
            }
            if residual(&trial, &mut r_plus) {
                let sq: f64 = r_plus.iter().map(|v| v * v).sum();
                if sq < best_sq {
                    let rel_gain = (best_sq - sq) / best_sq.max(1e-300);
                    x = trial;
                    std::mem::swap(&mut r, &mut r_plus);
                    best_sq = sq;
                    lambda = (lambda * 0.35).max(1e-12);
                    accepted = true;
                    stall = if rel_gain < 1e-14 { stall + 1 } else { 0 };
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
        if stall >= 3 {
            break;
        }
    }

    let residual_linf = linf(&r);
    GnOutcome {
        map: params_to_mat(&x),
        residual_linf,
        iters,
        converged: residual_linf <= opts.target_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::{max_abs_diff, Mat3};

    #[test]
    fn recovers_a_known_matrix_from_linear_residuals() {
        let target = Mat3::new(1.0, 0.2, -0.1, 0.0, 0.9, 0.3, 0.1, 0.0, 1.1);
        let t = mat_to_params(&target);
        let out = damped_gauss_newton(
            |p, r| {
                r.clear();
                for k in 0..9 {
                    r.push(p[k] - t[k]);
                }
                true
            },
            &Mat3::identity(),
            &GnOptions::default(),
        );
        assert!(out.converged);
        assert!(max_abs_diff(&out.map, &target) < 1e-9);
    }

    #[test]
    fn respects_domain_rejection() {
        // Residual undefined for part of the parameter space; the minimum
        // at the identity is still found.
        let out = damped_gauss_newton(
            |p, r| {
                let m = params_to_mat(p);
                if m[(0, 0)] <= 0.0 {
                    return false;
                }
                r.clear();
                r.push((m[(0, 0)] - 1.0) * (m[(0, 0)] + 3.0));
                for k in 1..9 {
                    r.push(p[k] - mat_to_params(&Mat3::identity())[k]);
                }
                true
            },
            &(Mat3::identity() * 0.5),
            &GnOptions::default(),
        );
        assert!(out.converged);
        assert!((out.map[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reports_failure_from_invalid_start() {
        let out = damped_gauss_newton(|_, _| false, &Mat3::identity(), &GnOptions::default());
        assert!(!out.converged);
        assert!(out.residual_linf.is_infinite());
    }
}
