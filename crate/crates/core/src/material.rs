//! Material and unisymmetric isomorphism search over gridded bodies.
//!
//! A material isomorphism `P: X -> Y` makes the responses agree,
//! `W(F . P, X) = W(F, Y)` for every deformation `F`; a body is uniform
//! when the archetype connects to every point this way. A unisymmetric
//! isomorphism only conjugates the symmetry groups, `G(Y) = A G(X) A^-1`,
//! which is weaker: graded bodies with rigidly varying symmetry structure
//! (functionally graded materials) stay unisymmetric after uniformity is
//! lost. This module searches for both, plus the normalizer families that
//! describe all unisymmetric self-maps, and the orthogonal/unimodular
//! reductions of those families.

use crate::classify::{
    classify_point, sign_normalized_axis, ClassifyError, ClassifyOptions, SymmetryDescriptor,
    SymmetryKind,
};
pub use crate::constitutive::isomorphism_residual;
use crate::constitutive::{is_symmetry, ConstitutiveModel, DeformationSample, ModelError};
use crate::geometry::grid::{BodyGrid, GridError};
use crate::groupoid::frame::{FrameArrowSet, FrameError};
use crate::optim::{damped_gauss_newton, params_to_mat, GnOptions};
use crate::randmat;
use crate::smallmat::{
    basis_with_third as orthonormal_basis_with_third, det3, diag, invert, is_finite,
    max_abs_diff, rotation_about, FrameArrow, Mat3, PointId, Vec3,
};
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

const STREAM_ISO_SEARCH_STARTS: u64 = 0x21;
const STREAM_REDUCED_CHECK: u64 = 0x23;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MaterialError {
    #[error("symmetry kinds differ: {x:?} vs {y:?}")]
    KindMismatch { x: SymmetryKind, y: SymmetryKind },
    #[error("descriptor carries a degenerate frame or axis: {0}")]
    DegenerateDescriptor(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone)]
pub struct MaterialOpts {
    pub seed: u64,
    /// Acceptance tolerance on the isomorphism residual.
    pub tol: f64,
    /// Random extra starts for the Gauss-Newton search.
    pub random_starts: usize,
    /// Tolerance for conjugated-generator symmetry checks.
    pub conjugation_tol: f64,
    /// Emit the full pairwise arrow closure in positive verdicts. The
    /// closure is O(n^2) arrows; switch it off on large grids and work
    /// from the generating star (archetype <-> point) instead.
    pub emit_closure: bool,
    pub classify: ClassifyOptions,
}

impl Default for MaterialOpts {
    fn default() -> Self {
        MaterialOpts {
            seed: 0,
            tol: 1e-7,
            random_starts: 6,
            conjugation_tol: 1e-6,
            emit_closure: true,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsomorphismResult {
    pub found: bool,
    /// The accepted map, present iff `found`.
    pub map: Option<Mat3>,
    /// Best residual seen, whether or not it was accepted.
    pub residual: f64,
    pub starts_used: usize,
}

impl IsomorphismResult {
    fn not_found(residual: f64, starts_used: usize) -> Self {
        IsomorphismResult { found: false, map: None, residual, starts_used }
    }
}

#[derive(Debug, Clone)]
pub struct UniformityVerdict {
    pub uniform: bool,
    pub archetype: PointId,
    /// Arrow set witnessing transitivity, present iff uniform: the full
    /// pairwise closure under [`MaterialOpts::emit_closure`], otherwise
    /// the generating star (archetype <-> point, plus unities).
    pub arrows: Option<FrameArrowSet>,
    /// Accepted implants archetype -> point (identity at the archetype),
    /// covering every reached point even when the verdict is negative.
    pub implants: BTreeMap<PointId, Mat3>,
    pub failures: Vec<PointId>,
    /// Best isomorphism residual per point (zero at the archetype).
    pub residuals: BTreeMap<PointId, f64>,
}

#[derive(Debug, Clone)]
pub struct FgmGroupoidVerdict {
    pub unisymmetric: bool,
    pub archetype: PointId,
    /// Verified conjugator arrows archetype -> point, present iff
    /// unisymmetric.
    pub conjugators: Option<FrameArrowSet>,
    pub descriptors: BTreeMap<PointId, SymmetryDescriptor>,
    /// Points with no verified conjugator, with the reason.
    pub failures: Vec<(PointId, String)>,
}

/// Rotation carrying the line of `u` onto the line of `w` along the
/// shorter arc; identity when they already agree.
pub fn rotation_between_lines(u: &Vec3, w: &Vec3) -> Mat3 {
    let a = u.normalize();
    let mut b = w.normalize();
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    let cross = a.cross(&b);
    let sin = cross.norm();
    if sin < 1e-12 {
        return Mat3::identity();
    }
    rotation_about(&cross, sin.atan2(a.dot(&b)))
}

/// How far `h` sits from the symmetry-group template of `desc`,
/// model-free: orthogonality in the undistorted frame for solids,
/// determinant and axis-line preservation for the fluid kinds.
fn template_defect(desc: &SymmetryDescriptor, h: &Mat3) -> Result<f64, MaterialError> {
    let line_defect = |axis: &Vec3, m: &Mat3| -> f64 {
        let unit = axis.normalize();
        let image = m * unit;
        let off = image - unit * unit.dot(&image);
        off.amax() / image.amax().max(1.0)
    };
    match desc.kind {
        SymmetryKind::TriclinicSolid => Ok(0.0),
        SymmetryKind::FullyIsotropicSolid | SymmetryKind::TransverselyIsotropicSolid => {
            let z_inv = invert(&desc.undistorted_frame)
                .map_err(|e| MaterialError::DegenerateDescriptor(e.to_string()))?;
            let q = z_inv * h * desc.undistorted_frame;
            let orth = max_abs_diff(&(q.transpose() * q), &Mat3::identity());
            match desc.axis {
                Some(axis) => {
                    let v = (z_inv * axis).normalize();
                    Ok(orth.max(line_defect(&v, &q)))
                }
                None => Ok(orth),
            }
        }
        SymmetryKind::Fluid => Ok((det3(h) - 1.0).abs()),
        SymmetryKind::FluidCrystalFirstKind => {
            let axis = desc
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            Ok((det3(h) - 1.0).abs().max(line_defect(&axis, h)))
        }
    }
}

/// Closed-form unisymmetric isomorphism between two classified points:
/// a kind-matched map `A` with `G(Y) = A G(X) A^-1`, verified model-free
/// by conjugating both generator lists into the other point's template.
pub fn find_unisymmetric_isomorphism(
    desc_x: &SymmetryDescriptor,
    desc_y: &SymmetryDescriptor,
) -> Result<IsomorphismResult, MaterialError> {
    if desc_x.kind != desc_y.kind {
        return Err(MaterialError::KindMismatch { x: desc_x.kind, y: desc_y.kind });
    }
    let degenerate = |e: crate::smallmat::MatError| MaterialError::DegenerateDescriptor(e.to_string());
    let a = match desc_x.kind {
        SymmetryKind::TriclinicSolid | SymmetryKind::Fluid => Mat3::identity(),
        SymmetryKind::FullyIsotropicSolid => {
            desc_y.undistorted_frame * invert(&desc_x.undistorted_frame).map_err(degenerate)?
        }
        SymmetryKind::TransverselyIsotropicSolid => {
            let zx_inv = invert(&desc_x.undistorted_frame).map_err(degenerate)?;
            let zy_inv = invert(&desc_y.undistorted_frame).map_err(degenerate)?;
            let ax = desc_x
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            let ay = desc_y
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            let vx = zx_inv * ax;
            let vy = zy_inv * ay;
            desc_y.undistorted_frame * rotation_between_lines(&vx, &vy) * zx_inv
        }
        SymmetryKind::FluidCrystalFirstKind => {
            let ax = desc_x
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            let ay = desc_y
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            rotation_between_lines(&ax, &ay)
        }
    };
    let a_inv = invert(&a).map_err(degenerate)?;
    let mut residual = 0.0_f64;
    for g in &desc_x.generators {
        residual = residual.max(template_defect(desc_y, &(a * g * a_inv))?);
    }
    for h in &desc_y.generators {
        residual = residual.max(template_defect(desc_x, &(a_inv * h * a))?);
    }
    let found = residual <= 1e-7;
    Ok(IsomorphismResult { found, map: found.then_some(a), residual, starts_used: 1 })
}

/// Does `p` conjugate the symmetry groups of the two points into each
/// other? Checks `p g p^-1` as a symmetry at `y` for each generator of
/// `x`, and the reverse direction.
pub fn symmetry_conjugation_check(
    model: &ConstitutiveModel,
    x: &Vec3,
    y: &Vec3,
    p: &Mat3,
    desc_x: &SymmetryDescriptor,
    desc_y: &SymmetryDescriptor,
    tol: f64,
    sample: &DeformationSample,
) -> Result<bool, MaterialError> {
    let p_inv = invert(p).map_err(|e| MaterialError::DegenerateDescriptor(e.to_string()))?;
    for g in &desc_x.generators {
        if !is_symmetry(model, y, &(p * g * p_inv), tol, sample)? {
            return Ok(false);
        }
    }
    for h in &desc_y.generators {
        if !is_symmetry(model, x, &(p_inv * h * p), tol, sample)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn material_iso_starts(opts: &MaterialOpts, extra: &[Mat3]) -> Vec<Mat3> {
    let mut starts: Vec<Mat3> = extra.to_vec();
    starts.push(Mat3::identity());
    let mut rng = randmat::rng_for(opts.seed, STREAM_ISO_SEARCH_STARTS);
    for _ in 0..opts.random_starts {
        if rng.gen_bool(0.5) {
            starts.push(randmat::random_rotation(&mut rng));
        } else {
            starts.push(randmat::random_spd_rotation(&mut rng, 2.0));
        }
    }
    starts
}

/// Multi-start Gauss-Newton search for a material isomorphism from `x`
/// to `y`. `found` means the best residual beat `opts.tol`; a negative
/// outcome is only "no isomorphism found", never a proof of absence.
pub fn find_material_isomorphism(
    model: &ConstitutiveModel,
    x: &Vec3,
    y: &Vec3,
    opts: &MaterialOpts,
) -> Result<IsomorphismResult, MaterialError> {
    find_material_isomorphism_seeded(model, x, y, opts, &[])
}

/// As [`find_material_isomorphism`], trying caller-supplied starts first
/// (classification-derived conjugators are excellent seeds).
pub fn find_material_isomorphism_seeded(
    model: &ConstitutiveModel,
    x: &Vec3,
    y: &Vec3,
    opts: &MaterialOpts,
    extra_starts: &[Mat3],
) -> Result<IsomorphismResult, MaterialError> {
    let sample = DeformationSample::standard(opts.seed);
    let base: Vec<f64> = sample
        .probes
        .iter()
        .map(|f| model.energy(y, f))
        .collect::<Result<_, _>>()?;

    let gn_opts = GnOptions::default();
    let mut residual_fn = |params: &[f64; 9], out: &mut Vec<f64>| -> bool {
        let p = params_to_mat(params);
        if !is_finite(&p) {
            return false;
        }
        out.clear();
        for (f, w_y) in sample.probes.iter().zip(&base) {
            match model.energy(x, &(f * p)) {
                Ok(w) => out.push(w - w_y),
                Err(_) => return false,
            }
        }
        true
    };

    let mut best = f64::INFINITY;
    let mut starts_used = 0;
    for start in material_iso_starts(opts, extra_starts) {
        starts_used += 1;
        let outcome = damped_gauss_newton(&mut residual_fn, &start, &gn_opts);
        if !outcome.residual_linf.is_finite() {
            continue;
        }
        best = best.min(outcome.residual_linf);
        if outcome.residual_linf <= opts.tol && det3(&outcome.map).abs() > 1e-9 {
            // Accept only what the public residual confirms.
            let confirmed = isomorphism_residual(model, x, y, &outcome.map, &sample)?;
            if confirmed <= opts.tol {
                return Ok(IsomorphismResult {
                    found: true,
                    map: Some(outcome.map),
                    residual: confirmed,
                    starts_used,
                });
            }
        }
    }
    Ok(IsomorphismResult::not_found(best, starts_used))
}

/// Coarse-to-fine grid search over `P = R_axis(angle) . diag(s)`,
/// returning the smallest isomorphism residual found. Used as an
/// independent oracle: a large minimum over this family is evidence that
/// no isomorphism exists nearby, without trusting the local search.
pub fn isomorphism_oracle_min(
    model: &ConstitutiveModel,
    x: &Vec3,
    y: &Vec3,
    sample: &DeformationSample,
) -> Result<f64, MaterialError> {
    let axes: Vec<Vec3> = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(1.0, -1.0, 0.0),
        Vec3::new(1.0, 0.0, 1.0),
        Vec3::new(1.0, 0.0, -1.0),
        Vec3::new(0.0, 1.0, 1.0),
        Vec3::new(0.0, 1.0, -1.0),
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(-1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, 1.0),
        Vec3::new(1.0, 1.0, -1.0),
    ];
    let eval = |axis: &Vec3, angle: f64, s: &[f64; 3]| -> Result<f64, MaterialError> {
        let p = rotation_about(axis, angle) * diag(s[0], s[1], s[2]);
        Ok(isomorphism_residual(model, x, y, &p, sample)?)
    };

    let mut best = f64::INFINITY;
    let mut best_at = (Vec3::new(1.0, 0.0, 0.0), 0.0_f64, [1.0_f64; 3]);
    let coarse = [0.5, 1.0, 2.0];
    for axis in &axes {
        for k in 0..8 {
            let angle = k as f64 * std::f64::consts::FRAC_PI_4;
            for &s0 in &coarse {
                for &s1 in &coarse {
                    for &s2 in &coarse {
                        let r = eval(axis, angle, &[s0, s1, s2])?;
                        if r < best {
                            best = r;
                            best_at = (*axis, angle, [s0, s1, s2]);
                        }
                    }
                }
            }
        }
    }

    // Two refinement levels around the best cell.
    let mut angle_step = std::f64::consts::FRAC_PI_8;
    let mut stretch_factor = 1.3_f64;
    for _ in 0..2 {
        let (axis0, angle0, s0) = best_at;
        let perp = sign_normalized_axis(&axis0);
        let seed =
            if perp[0].abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let t1 = (seed - perp * perp.dot(&seed)).normalize();
        let t2 = perp.cross(&t1);
        for da in [-1.0, 0.0, 1.0] {
            for db in [-1.0, 0.0, 1.0] {
                let axis = (axis0.normalize() + t1 * (0.25 * da) + t2 * (0.25 * db)).normalize();
                for dk in [-1.0, 0.0, 1.0] {
                    let angle = angle0 + dk * angle_step;
                    for f0 in [-1.0, 0.0, 1.0] {
                        for f1 in [-1.0, 0.0, 1.0] {
                            for f2 in [-1.0, 0.0, 1.0] {
                                let s = [
                                    s0[0] * stretch_factor.powf(f0),
                                    s0[1] * stretch_factor.powf(f1),
                                    s0[2] * stretch_factor.powf(f2),
                                ];
                                let r = eval(&axis, angle, &s)?;
                                if r < best {
                                    best = r;
                                    best_at = (axis, angle, s);
                                }
                            }
                        }
                    }
                }
            }
        }
        angle_step *= 0.35;
        stretch_factor = stretch_factor.powf(0.35);
    }
    Ok(best)
}

fn center_point(grid: &BodyGrid) -> PointId {
    let d = grid.dims();
    grid.linear([d[0] / 2, d[1] / 2, d[2] / 2])
}

fn classify_seed(base: u64, id: PointId) -> u64 {
    base ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-point classification outcomes over a grid, keyed by point id.
pub type ClassifiedGrid = BTreeMap<PointId, Result<SymmetryDescriptor, ClassifyError>>;

/// Classifies every grid point in parallel, with a per-point seed derived
/// deterministically from the point id.
pub fn classify_grid(
    model: &ConstitutiveModel,
    grid: &BodyGrid,
    opts: &MaterialOpts,
) -> ClassifiedGrid {
    grid.points()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let mut copts = opts.classify.clone();
            copts.seed = classify_seed(opts.classify.seed, p.id);
            (p.id, classify_point(model, &p.coords, &copts))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Arrow set generated by star maps archetype -> point: the explicit
/// pairwise closure `a_q . a_p^-1`, or just the star plus inverses and
/// unities when `closure` is off.
fn arrow_witness(
    ids: &[PointId],
    archetype: PointId,
    star: &BTreeMap<PointId, Mat3>,
    closure: bool,
) -> Result<FrameArrowSet, MaterialError> {
    let mut set = FrameArrowSet::with_unities(ids);
    if closure {
        for (&p, ap) in star {
            let ap_inv =
                invert(ap).map_err(|e| MaterialError::DegenerateDescriptor(e.to_string()))?;
            for (&q, aq) in star {
                if p != q {
                    set.insert(FrameArrow::new(p, q, aq * ap_inv))?;
                }
            }
        }
    } else {
        for (&p, ap) in star {
            if p == archetype {
                continue;
            }
            let ap_inv =
                invert(ap).map_err(|e| MaterialError::DegenerateDescriptor(e.to_string()))?;
            set.insert(FrameArrow::new(archetype, p, *ap))?;
            set.insert(FrameArrow::new(p, archetype, ap_inv))?;
        }
    }
    Ok(set)
}

/// Uniformity verdict: the body is uniform when a material isomorphism
/// from the central archetype reaches every point. Accepted arrows are
/// additionally required to conjugate the symmetry groups whenever both
/// endpoints classified.
pub fn is_uniform(
    model: &ConstitutiveModel,
    grid: &BodyGrid,
    opts: &MaterialOpts,
) -> Result<UniformityVerdict, MaterialError> {
    let classified = classify_grid(model, grid, opts);
    is_uniform_with(model, grid, opts, &classified)
}

/// [`is_uniform`] over descriptors already computed by [`classify_grid`],
/// so one classification pass can feed several verdicts.
pub fn is_uniform_with(
    model: &ConstitutiveModel,
    grid: &BodyGrid,
    opts: &MaterialOpts,
    descriptors: &ClassifiedGrid,
) -> Result<UniformityVerdict, MaterialError> {
    let archetype = center_point(grid);
    let x = grid.coords(archetype)?;
    let sample = DeformationSample::standard(opts.seed);

    let points: Vec<_> = grid.points().collect();
    let per_point: Vec<(PointId, Result<(Option<Mat3>, f64), MaterialError>)> = points
        .par_iter()
        .map(|p| {
            if p.id == archetype {
                return (p.id, Ok((Some(Mat3::identity()), 0.0)));
            }
            let mut extra = Vec::new();
            if let (Some(Ok(dx)), Some(Ok(dy))) =
                (descriptors.get(&archetype), descriptors.get(&p.id))
            {
                if dx.kind == dy.kind {
                    if let Ok(r) = find_unisymmetric_isomorphism(dx, dy) {
                        if let Some(a) = r.map {
                            extra.push(a);
                        }
                    }
                }
            }
            let outcome = (|| -> Result<(Option<Mat3>, f64), MaterialError> {
                let result =
                    find_material_isomorphism_seeded(model, &x, &p.coords, opts, &extra)?;
                let Some(map) = result.map else {
                    return Ok((None, result.residual));
                };
                if let (Some(Ok(dx)), Some(Ok(dy))) =
                    (descriptors.get(&archetype), descriptors.get(&p.id))
                {
                    let conjugates = symmetry_conjugation_check(
                        model,
                        &x,
                        &p.coords,
                        &map,
                        dx,
                        dy,
                        opts.conjugation_tol,
                        &sample,
                    )?;
                    if !conjugates {
                        return Ok((None, result.residual));
                    }
                }
                Ok((Some(map), result.residual))
            })();
            (p.id, outcome)
        })
        .collect();

    let mut implants = BTreeMap::new();
    let mut failures = Vec::new();
    let mut residuals = BTreeMap::new();
    for (id, outcome) in per_point {
        let (map, residual) = outcome?;
        residuals.insert(id, residual);
        match map {
            Some(m) => {
                implants.insert(id, m);
            }
            None => failures.push(id),
        }
    }
    failures.sort_unstable();
    let uniform = failures.is_empty();

    // Implants from the archetype generate the whole transitive
    // groupoid: the arrow p -> q is A_q . A_p^-1.
    let arrows = if uniform {
        let ids: Vec<PointId> = points.iter().map(|p| p.id).collect();
        Some(arrow_witness(&ids, archetype, &implants, opts.emit_closure)?)
    } else {
        None
    };
    Ok(UniformityVerdict { uniform, archetype, arrows, implants, failures, residuals })
}

/// Unisymmetry verdict: every point classifies to the archetype's kind
/// and a closed-form conjugator, verified against the model, reaches it.
pub fn fgm_verdict(
    model: &ConstitutiveModel,
    grid: &BodyGrid,
    opts: &MaterialOpts,
) -> Result<FgmGroupoidVerdict, MaterialError> {
    let classified = classify_grid(model, grid, opts);
    fgm_verdict_with(model, grid, opts, &classified)
}

/// [`fgm_verdict`] over descriptors already computed by [`classify_grid`].
pub fn fgm_verdict_with(
    model: &ConstitutiveModel,
    grid: &BodyGrid,
    opts: &MaterialOpts,
    classified: &ClassifiedGrid,
) -> Result<FgmGroupoidVerdict, MaterialError> {
    let archetype = center_point(grid);
    let x = grid.coords(archetype)?;
    let sample = DeformationSample::standard(opts.seed);

    let mut descriptors = BTreeMap::new();
    let mut failures: Vec<(PointId, String)> = Vec::new();
    for (&id, outcome) in classified {
        match outcome {
            Ok(d) => {
                descriptors.insert(id, d.clone());
            }
            Err(e) => failures.push((id, e.to_string())),
        }
    }

    let ids: Vec<PointId> = grid.points().map(|p| p.id).collect();
    let mut conjugators = BTreeMap::new();
    if let Some(arch_desc) = descriptors.get(&archetype) {
        // Per point: Ok(Ok(a)) verified conjugator, Ok(Err(reason)) a
        // verdict failure, Err(_) a hard evaluation error.
        let checks: Vec<(PointId, Result<Result<Mat3, String>, MaterialError>)> = descriptors
            .par_iter()
            .filter(|(id, _)| **id != archetype)
            .map(|(id, desc)| {
                let run = || -> Result<Result<Mat3, String>, MaterialError> {
                    let conj = match find_unisymmetric_isomorphism(arch_desc, desc) {
                        Ok(r) => r,
                        Err(MaterialError::KindMismatch { x, y }) => {
                            return Ok(Err(format!("kind mismatch: {x:?} vs {y:?}")))
                        }
                        Err(e) => return Err(e),
                    };
                    let Some(a) = conj.map else {
                        return Ok(Err(format!(
                            "conjugator residual {:.3e} above tolerance",
                            conj.residual
                        )));
                    };
                    let y = grid.coords(*id)?;
                    let ok = symmetry_conjugation_check(
                        model,
                        &x,
                        &y,
                        &a,
                        arch_desc,
                        desc,
                        opts.conjugation_tol,
                        &sample,
                    )?;
                    if ok {
                        Ok(Ok(a))
                    } else {
                        Ok(Err("conjugated generators rejected".into()))
                    }
                };
                (*id, run())
            })
            .collect();
        for (id, res) in checks {
            match res? {
                Ok(a) => {
                    conjugators.insert(id, a);
                }
                Err(reason) => failures.push((id, reason)),
            }
        }
    } else if failures.iter().all(|(id, _)| *id != archetype) {
        failures.push((archetype, "archetype did not classify".into()));
    }

    failures.sort();
    let unisymmetric = failures.is_empty()
        && descriptors.len() == ids.len()
        && descriptors.contains_key(&archetype);
    let arrows = if unisymmetric {
        // Star conjugators generate the transitive closure exactly as
        // material implants do.
        conjugators.insert(archetype, Mat3::identity());
        Some(arrow_witness(&ids, archetype, &conjugators, opts.emit_closure)?)
    } else {
        None
    };
    Ok(FgmGroupoidVerdict {
        unisymmetric,
        archetype,
        conjugators: arrows,
        descriptors,
        failures,
    })
}

/// Parametrized family of unisymmetric self-maps (the normalizer of the
/// symmetry group inside the general linear group), carried in the body
/// frame of its descriptor. Membership is a closed-form shape test in the
/// undistorted frame; `sample` draws random members.
#[derive(Debug, Clone)]
pub struct NormalizerFamily {
    pub kind: SymmetryKind,
    /// Frame that carries canonical members to the body frame.
    frame: Mat3,
    frame_inv: Mat3,
    /// Canonical-frame axis for the axis-bearing kinds.
    axis: Option<Vec3>,
    /// Orthonormal basis with the canonical axis third, for block tests.
    basis: Option<Mat3>,
}


/// Builds the normalizer family for a classified descriptor.
pub fn normalizer_generators(desc: &SymmetryDescriptor) -> Result<NormalizerFamily, MaterialError> {
    let frame = desc.undistorted_frame;
    let frame_inv =
        invert(&frame).map_err(|e| MaterialError::DegenerateDescriptor(e.to_string()))?;
    let axis = match desc.kind {
        SymmetryKind::TransverselyIsotropicSolid => {
            let a = desc
                .axis
                .ok_or_else(|| MaterialError::DegenerateDescriptor("missing axis".into()))?;
            Some((frame_inv * a).normalize())
        }
        SymmetryKind::FluidCrystalFirstKind => {
            // The fluid-crystal frame is the orthonormal axis-adapted
            // basis itself, so the canonical axis is e3.
            Some(Vec3::new(0.0, 0.0, 1.0))
        }
        _ => None,
    };
    let basis = axis.as_ref().map(orthonormal_basis_with_third);
    Ok(NormalizerFamily { kind: desc.kind, frame, frame_inv, axis, basis })
}

impl NormalizerFamily {
    /// Is the body-frame map `a` a member?
    pub fn contains(&self, a: &Mat3, tol: f64) -> bool {
        let m = self.frame_inv * a * self.frame;
        if !is_finite(&m) || det3(&m).abs() <= 1e-9 {
            return false;
        }
        match self.kind {
            // Any invertible map conjugates the trivial group to itself,
            // and conjugation preserves determinant-one maps.
            SymmetryKind::TriclinicSolid | SymmetryKind::Fluid => true,
            // Scaled orthogonal maps: M^T M = c^2 I with c > 0.
            SymmetryKind::FullyIsotropicSolid => {
                let mtm = m.transpose() * m;
                let c2 = (mtm[(0, 0)] + mtm[(1, 1)] + mtm[(2, 2)]) / 3.0;
                c2 > tol && max_abs_diff(&mtm, &(Mat3::identity() * c2)) <= tol * c2.max(1.0)
            }
            // Conformal on the transverse plane, any nonzero axial scale,
            // no mixing: block diag(c Q2, d) in the axis-adapted basis.
            SymmetryKind::TransverselyIsotropicSolid => {
                let b = self.basis.expect("axis-bearing kind");
                let w = b.transpose() * m * b;
                let mixing = w[(0, 2)]
                    .abs()
                    .max(w[(1, 2)].abs())
                    .max(w[(2, 0)].abs())
                    .max(w[(2, 1)].abs());
                if mixing > tol || w[(2, 2)].abs() <= tol {
                    return false;
                }
                let a2 = [w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]];
                let g00 = a2[0] * a2[0] + a2[2] * a2[2];
                let g11 = a2[1] * a2[1] + a2[3] * a2[3];
                let g01 = a2[0] * a2[1] + a2[2] * a2[3];
                let c2 = 0.5 * (g00 + g11);
                c2 > tol && (g00 - g11).abs().max(2.0 * g01.abs()) <= tol * c2.max(1.0)
            }
            // Invertible maps keeping the axis line: third column
            // proportional to e3 in the adapted basis.
            SymmetryKind::FluidCrystalFirstKind => {
                let b = self.basis.expect("axis-bearing kind");
                let w = b.transpose() * m * b;
                w[(0, 2)].abs().max(w[(1, 2)].abs()) <= tol * w[(2, 2)].abs().max(1.0)
                    && w[(2, 2)].abs() > tol
            }
        }
    }

    /// Random member, in the body frame.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Mat3 {
        let canonical = match self.kind {
            SymmetryKind::TriclinicSolid | SymmetryKind::Fluid => {
                randmat::random_invertible_cond_bounded(rng, 10.0)
            }
            SymmetryKind::FullyIsotropicSolid => {
                let c = rng.gen_range(0.5..2.0);
                randmat::random_rotation(rng) * c
            }
            SymmetryKind::TransverselyIsotropicSolid => {
                let b = self.basis.expect("axis-bearing kind");
                let c = rng.gen_range(0.5..2.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let reflect = rng.gen_bool(0.5);
                let d: f64 = rng.gen_range(0.5..2.0);
                let d = if rng.gen_bool(0.5) { d } else { -d };
                let (cp, sp) = (phi.cos(), phi.sin());
                let mut w = Mat3::zeros();
                w[(0, 0)] = c * cp;
                w[(1, 0)] = c * sp;
                if reflect {
                    w[(0, 1)] = c * sp;
                    w[(1, 1)] = -c * cp;
                } else {
                    w[(0, 1)] = -c * sp;
                    w[(1, 1)] = c * cp;
                }
                w[(2, 2)] = d;
                b * w * b.transpose()
            }
            SymmetryKind::FluidCrystalFirstKind => {
                let b = self.basis.expect("axis-bearing kind");
                loop {
                    let mut w = Mat3::zeros();
                    for i in 0..3 {
                        for j in 0..3 {
                            w[(i, j)] = rng.gen_range(-1.5..1.5);
                        }
                    }
                    w[(0, 2)] = 0.0;
                    w[(1, 2)] = 0.0;
                    if w[(2, 2)].abs() < 0.2 {
                        w[(2, 2)] = if w[(2, 2)] < 0.0 { -0.7 } else { 0.7 };
                    }
                    if det3(&w).abs() > 0.05 {
                        break b * w * b.transpose();
                    }
                }
            }
        };
        self.frame * canonical * self.frame_inv
    }

    /// Random orthogonal member (orthogonal in the undistorted frame),
    /// used to sample the orthogonal reduction of the family.
    pub fn sample_orthogonal<R: Rng>(&self, rng: &mut R) -> Mat3 {
        let canonical = match self.kind {
            SymmetryKind::TriclinicSolid
            | SymmetryKind::Fluid
            | SymmetryKind::FullyIsotropicSolid => randmat::random_rotation(rng),
            SymmetryKind::TransverselyIsotropicSolid => {
                let b = self.basis.expect("axis-bearing kind");
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let axis = self.axis.expect("axis-bearing kind");
                if rng.gen_bool(0.5) {
                    rotation_about(&axis, phi)
                } else {
                    // Proper flip: rotation by pi about a transverse line.
                    let t = b.column(0).into_owned() * phi.cos() + b.column(1).into_owned() * phi.sin();
                    rotation_about(&t, std::f64::consts::PI)
                }
            }
            SymmetryKind::FluidCrystalFirstKind => {
                let axis = self.axis.expect("axis-bearing kind");
                rotation_about(&axis, rng.gen_range(0.0..std::f64::consts::TAU))
            }
        };
        self.frame * canonical * self.frame_inv
    }

}

/// What the orthogonal (or unimodular, for the volume kinds) reduction of
/// the normalizer family collapses to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedGroupClaim {
    /// The reduction is the full orthogonal group in the undistorted
    /// frame (strictly larger than the symmetry group for triclinic).
    FullOrthogonal,
    /// The reduction collapses onto the symmetry group itself.
    OriginalSymmetryGroup,
    /// The reduction is the full volume-preserving group.
    FullUnimodular,
}

#[derive(Debug, Clone)]
pub struct ReducedVertexGroup {
    pub source: SymmetryKind,
    pub claim: ReducedGroupClaim,
    pub axis: Option<Vec3>,
    pub frame: Mat3,
}

/// The reduction table: intersecting the normalizer family with the
/// orthogonal maps (solids) or volume-preserving maps (fluid kinds) of
/// the undistorted frame.
pub fn reduced_vertex_group(desc: &SymmetryDescriptor) -> ReducedVertexGroup {
    let claim = match desc.kind {
        SymmetryKind::FullyIsotropicSolid | SymmetryKind::TriclinicSolid => {
            ReducedGroupClaim::FullOrthogonal
        }
        SymmetryKind::TransverselyIsotropicSolid | SymmetryKind::FluidCrystalFirstKind => {
            ReducedGroupClaim::OriginalSymmetryGroup
        }
        SymmetryKind::Fluid => ReducedGroupClaim::FullUnimodular,
    };
    ReducedVertexGroup {
        source: desc.kind,
        claim,
        axis: desc.axis,
        frame: desc.undistorted_frame,
    }
}

/// Recomputes the reduction claim against the model: samples reduced
/// members and checks their symmetry status point-blank. For
/// `OriginalSymmetryGroup` and `FullUnimodular` every sampled reduced
/// member must be a symmetry; for `FullOrthogonal` every sampled rotation
/// must be a normalizer member, and for the triclinic source a generic
/// rotation must fail to be a symmetry (the reduction is strictly larger
/// than the group there).
pub fn verify_reduced_group(
    model: &ConstitutiveModel,
    x: &Vec3,
    desc: &SymmetryDescriptor,
    seed: u64,
    trials: usize,
) -> Result<bool, MaterialError> {
    let family = normalizer_generators(desc)?;
    let reduced = reduced_vertex_group(desc);
    let sample = DeformationSample::standard(seed);
    let mut rng = randmat::rng_for(seed, STREAM_REDUCED_CHECK);
    let tol = 1e-6;
    match reduced.claim {
        ReducedGroupClaim::FullOrthogonal => {
            let mut saw_non_symmetry = false;
            for _ in 0..trials {
                let member = family.sample_orthogonal(&mut rng);
                if !family.contains(&member, 1e-7) {
                    return Ok(false);
                }
                let symmetric = is_symmetry(model, x, &member, tol, &sample)?;
                match desc.kind {
                    SymmetryKind::FullyIsotropicSolid if !symmetric => return Ok(false),
                    SymmetryKind::TriclinicSolid if !symmetric => saw_non_symmetry = true,
                    _ => {}
                }
            }
            // The triclinic reduction must be strictly larger than {I}.
            Ok(desc.kind != SymmetryKind::TriclinicSolid || saw_non_symmetry)
        }
        ReducedGroupClaim::OriginalSymmetryGroup => {
            for _ in 0..trials {
                let member = match desc.kind {
                    SymmetryKind::FluidCrystalFirstKind => {
                        // Unimodular axis-keeping member: flip orientation
                        // if needed, then strip the volume part.
                        let axis = desc.axis.expect("fluid crystal carries an axis");
                        let b = orthonormal_basis_with_third(&axis);
                        let mut m = family.sample(&mut rng);
                        let mut d = det3(&m);
                        if d < 0.0 {
                            // Reflect across a transverse plane: keeps the
                            // axis line, flips orientation.
                            m *= b * diag(-1.0, 1.0, 1.0) * b.transpose();
                            d = -d;
                        }
                        m / d.cbrt()
                    }
                    _ => family.sample_orthogonal(&mut rng),
                };
                if !family.contains(&member, 1e-7)
                    || !is_symmetry(model, x, &member, tol, &sample)?
                {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ReducedGroupClaim::FullUnimodular => {
            for _ in 0..trials {
                let u = randmat::random_unimodular(&mut rng);
                if !family.contains(&u, 1e-7) || !is_symmetry(model, x, &u, tol, &sample)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}
