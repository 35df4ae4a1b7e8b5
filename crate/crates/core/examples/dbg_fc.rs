use matsym_core::classify::{sample_symmetries, ClassifyOptions};
use matsym_core::constitutive::{ConstitutiveModel, Param};
use matsym_core::smallmat::{det3, max_abs_diff, Mat3, Vec3};

fn candidates(mats: &[Mat3]) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    let push_line = |out: &mut Vec<Vec3>, v: Vec3| {
        let norm = v.norm();
        if norm < 1e-9 {
            return;
        }
        let unit = v / norm;
        if !out.iter().any(|w| w.dot(&unit).abs() > 1.0 - 1e-6) {
            out.push(unit);
        }
    };
    for m in mats {
        if max_abs_diff(m, &Mat3::identity()) < 1e-7
            || max_abs_diff(m, &(-Mat3::identity())) < 1e-7
        {
            continue;
        }
        println!("  map eigs {:?}", m.complex_eigenvalues().iter().map(|l| (l.re, l.im)).collect::<Vec<_>>());
        for lambda in m.complex_eigenvalues().iter() {
            if lambda.im.abs() > 1e-7 * (1.0 + lambda.re.abs()) {
                continue;
            }
            let shifted = m - Mat3::identity() * lambda.re;
            let svd = shifted.svd(true, true);
            let sigma = svd.singular_values;
            let sigma_max = sigma.max().max(1.0);
            let v_t = svd.v_t.expect("requested");
            for i in 0..3 {
                if sigma[i] <= 1e-6 * sigma_max {
                    let v = Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]);
                    println!("    lambda {:+.4} sigma {:.2e} v ({:+.3e},{:+.3e},{:+.3e})", lambda.re, sigma[i], v[0], v[1], v[2]);
                    push_line(&mut out, v);
                }
            }
        }
    }
    let primaries = out.clone();
    for (i, a) in primaries.iter().enumerate() {
        for b in primaries.iter().skip(i + 1) {
            push_line(&mut out, a.cross(b));
        }
    }
    out
}

fn main() {
    let model = ConstitutiveModel::FluidCrystal1 {
        kappa: Param::Constant(1.0),
        coupling: Param::Constant(0.6),
    };
    let id = 61u32;
    let x = Vec3::new((id / 25) as f64 * 0.25, ((id / 5) % 5) as f64 * 0.25, (id % 5) as f64 * 0.25);
    let mut opts = ClassifyOptions::default();
    opts.seed = 5 ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let sample = sample_symmetries(&model, &x, &opts).unwrap();
    let unimodular: Vec<Mat3> = sample
        .accepted
        .iter()
        .filter(|p| (det3(p).abs() - 1.0).abs() <= 1e-6)
        .filter(|p| max_abs_diff(p, &Mat3::identity()) > 1e-7)
        .copied()
        .collect();
    println!("unimodular: {}", unimodular.len());
    let cands = candidates(&unimodular);
    println!("candidates:");
    for c in &cands {
        println!("  ({:+.4e}, {:+.4e}, {:+.4e})", c[0], c[1], c[2]);
    }
}
