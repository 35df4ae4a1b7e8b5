//! Per-point tensor fields over a body grid: cross-section frames, the
//! intrinsic (pullback) metric, fluid volume densities, and the checks
//! that tie them back to the material structure.

use crate::classify::{SymmetryDescriptor, SymmetryKind};
use crate::constitutive::{ConstitutiveModel, DeformationSample, ModelError};
use crate::geometry::grid::{BodyGrid, GridError};
use crate::groupoid::frame::{FrameArrowSet, FrameError};
use crate::smallmat::{det3, invert, is_finite, is_orthogonal, is_spd, max_abs_diff, Mat3, PointId};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("frame at point {0} is singular or non-finite")]
    SingularFrame(PointId),
    #[error("metric at point {0} is singular")]
    SingularMetric(PointId),
    #[error("metric at point {0} is not symmetric positive definite")]
    NotSpd(PointId),
    #[error("grid dims {dims:?} too small, need at least {needed} per axis")]
    GridTooSmall { dims: [usize; 3], needed: usize },
    #[error("field defined on a different grid")]
    GridMismatch,
    #[error("points carry mixed symmetry kinds: {0:?} and {1:?}")]
    MixedKinds(SymmetryKind, SymmetryKind),
    #[error("point {0} has no classification")]
    MissingDescriptor(PointId),
    #[error("point {0} carries no symmetry axis")]
    MissingAxis(PointId),
    #[error("no frame patches supplied")]
    NoPatches,
    #[error("descriptor kind {0:?} is not a solid")]
    NotSolid(SymmetryKind),
    #[error("no arrow from the archetype to point {0}")]
    MissingArrow(PointId),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Cross-section of a frame bundle over the grid: one invertible matrix
/// per point, columns holding the frame vectors, labelled by the
/// structure-group kind it is adapted to.
#[derive(Debug, Clone)]
pub struct FrameField {
    grid: BodyGrid,
    kind: SymmetryKind,
    mats: Vec<Mat3>,
}

impl FrameField {
    pub fn from_fn(
        grid: &BodyGrid,
        kind: SymmetryKind,
        f: impl Fn(&crate::smallmat::Vec3) -> Mat3,
    ) -> Result<FrameField, GeometryError> {
        let mut mats = Vec::with_capacity(grid.point_count());
        for p in grid.points() {
            let m = f(&p.coords);
            if !is_finite(&m) || det3(&m).abs() <= 1e-12 {
                return Err(GeometryError::SingularFrame(p.id));
            }
            mats.push(m);
        }
        Ok(FrameField { grid: grid.clone(), kind, mats })
    }

    pub fn identity(grid: &BodyGrid, kind: SymmetryKind) -> FrameField {
        FrameField {
            grid: grid.clone(),
            kind,
            mats: vec![Mat3::identity(); grid.point_count()],
        }
    }

    /// Pushes a base frame at the archetype along a transitive arrow set:
    /// `sigma(p) = map(archetype -> p) . base`. This is how a uniform
    /// body's arrows induce a global cross-section.
    pub fn from_arrows(
        grid: &BodyGrid,
        arrows: &FrameArrowSet,
        archetype: PointId,
        kind: SymmetryKind,
        base: &Mat3,
    ) -> Result<FrameField, GeometryError> {
        let mut mats = Vec::with_capacity(grid.point_count());
        for p in grid.points() {
            let m = if p.id == archetype {
                *base
            } else {
                let hom = arrows.hom(archetype, p.id);
                let arrow = hom.first().ok_or(GeometryError::MissingArrow(p.id))?;
                arrow.map * base
            };
            if !is_finite(&m) || det3(&m).abs() <= 1e-12 {
                return Err(GeometryError::SingularFrame(p.id));
            }
            mats.push(m);
        }
        Ok(FrameField { grid: grid.clone(), kind, mats })
    }

    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn kind(&self) -> SymmetryKind {
        self.kind
    }

    pub fn frame(&self, id: PointId) -> Result<&Mat3, GeometryError> {
        self.mats.get(id).ok_or(GeometryError::Grid(GridError::UnknownPoint(id)))
    }

    pub fn frame_at(&self, index: [usize; 3]) -> &Mat3 {
        &self.mats[self.grid.linear(index)]
    }

    /// Point-wise right modification `sigma -> sigma . a(X)`.
    pub fn modified(
        &self,
        a: impl Fn(&crate::smallmat::Vec3) -> Mat3,
    ) -> Result<FrameField, GeometryError> {
        let grid = self.grid.clone();
        let mut mats = Vec::with_capacity(self.mats.len());
        for p in grid.points() {
            let m = self.mats[p.id] * a(&p.coords);
            if !is_finite(&m) || det3(&m).abs() <= 1e-12 {
                return Err(GeometryError::SingularFrame(p.id));
            }
            mats.push(m);
        }
        Ok(FrameField { grid, kind: self.kind, mats })
    }
}

/// Riemannian metric sampled over the grid: one SPD matrix per point.
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: BodyGrid,
    mats: Vec<Mat3>,
}

impl MetricField {
    pub fn from_fn(
        grid: &BodyGrid,
        f: impl Fn(&crate::smallmat::Vec3) -> Mat3,
    ) -> Result<MetricField, GeometryError> {
        let mut mats = Vec::with_capacity(grid.point_count());
        for p in grid.points() {
            let g = f(&p.coords);
            if !is_finite(&g) {
                return Err(GeometryError::NotSpd(p.id));
            }
            if !is_spd(&g, 1e-12) {
                return Err(GeometryError::NotSpd(p.id));
            }
            mats.push(g);
        }
        Ok(MetricField { grid: grid.clone(), mats })
    }

    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn at(&self, id: PointId) -> Result<&Mat3, GeometryError> {
        self.mats.get(id).ok_or(GeometryError::Grid(GridError::UnknownPoint(id)))
    }

    pub fn at_index(&self, index: [usize; 3]) -> &Mat3 {
        &self.mats[self.grid.linear(index)]
    }
}

/// Scalar density sampled over the grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: BodyGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn at(&self, id: PointId) -> Result<f64, GeometryError> {
        self.values.get(id).copied().ok_or(GeometryError::Grid(GridError::UnknownPoint(id)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Pullback of the Euclidean metric through the frame field:
/// `g = sigma^-T . sigma^-1`, so the frame vectors are orthonormal in
/// `g`. Independent of the choice of cross-section within one
/// orthogonal structure group.
pub fn intrinsic_metric(frames: &FrameField) -> Result<MetricField, GeometryError> {
    let mut mats = Vec::with_capacity(frames.mats.len());
    for (id, sigma) in frames.mats.iter().enumerate() {
        let inv = invert(sigma).map_err(|_| GeometryError::SingularFrame(id))?;
        mats.push(inv.transpose() * inv);
    }
    Ok(MetricField { grid: frames.grid.clone(), mats })
}

/// Volume density of the frame coframe against the chart volume
/// element: `rho = 1/det sigma`. Signed; unchanged by any unimodular
/// right modification of the cross-section.
pub fn volume_form(frames: &FrameField) -> Result<ScalarField, GeometryError> {
    let mut values = Vec::with_capacity(frames.mats.len());
    for (id, sigma) in frames.mats.iter().enumerate() {
        let d = det3(sigma);
        if d.abs() <= 1e-12 || !d.is_finite() {
            return Err(GeometryError::SingularFrame(id));
        }
        values.push(1.0 / d);
    }
    Ok(ScalarField { grid: frames.grid.clone(), values })
}

/// Wang invariance of a metric under a set of arrows: every arrow
/// `P: src -> dst` must be an isometry, `P^T . g_dst . P = g_src`.
pub fn metric_invariance_check(
    metric: &MetricField,
    arrows: &FrameArrowSet,
    tol: f64,
) -> Result<bool, GeometryError> {
    for arrow in arrows.arrows() {
        let g_src = metric.at(arrow.src)?;
        let g_dst = metric.at(arrow.dst)?;
        let pulled = arrow.map.transpose() * g_dst * arrow.map;
        if max_abs_diff(&pulled, g_src) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Is a configuration with gradient field `config_grad` uniform for the
/// model? True when (a) the response written in the configuration's
/// components is the same at every grid point and (b) it is invariant
/// under right multiplication by the structure-group generators.
pub fn uniform_configuration_check(
    model: &ConstitutiveModel,
    config_grad: &FrameField,
    generators: &[Mat3],
    tol: f64,
    sample: &DeformationSample,
) -> Result<bool, GeometryError> {
    let grid = &config_grad.grid;
    for f in &sample.probes {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in grid.points() {
            let h = config_grad.frame(p.id)?;
            let w = model.energy(&p.coords, &(f * h))?;
            lo = lo.min(w);
            hi = hi.max(w);
            for g in generators {
                let wg = model.energy(&p.coords, &(f * g * h))?;
                if (wg - w).abs() > tol {
                    return Ok(false);
                }
            }
        }
        if hi - lo > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The two conditions for a solid metric compatible with the material
/// structure: every symmetry generator conjugated into the frame is
/// orthogonal, and transitions between overlapping cross-sections are
/// orthogonal.
pub fn material_metric_conditions_check(
    patches: &[FrameField],
    descriptors: &std::collections::BTreeMap<PointId, SymmetryDescriptor>,
    tol: f64,
) -> Result<bool, GeometryError> {
    let Some(first) = patches.first() else {
        return Err(GeometryError::NoPatches);
    };
    for patch in patches {
        if patch.grid != first.grid {
            return Err(GeometryError::GridMismatch);
        }
    }
    for (&id, desc) in descriptors {
        if !desc.kind.is_solid() {
            return Err(GeometryError::NotSolid(desc.kind));
        }
        for patch in patches {
            let sigma = patch.frame(id)?;
            let sigma_inv = invert(sigma).map_err(|_| GeometryError::SingularFrame(id))?;
            for g in &desc.generators {
                if !is_orthogonal(&(sigma_inv * g * sigma), tol) {
                    return Ok(false);
                }
            }
        }
    }
    for (i, a) in patches.iter().enumerate() {
        for b in &patches[i + 1..] {
            for p in first.grid.points() {
                let sigma_inv =
                    invert(a.frame(p.id)?).map_err(|_| GeometryError::SingularFrame(p.id))?;
                if !is_orthogonal(&(sigma_inv * b.frame(p.id)?), tol) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_point, ClassifyOptions};
    use crate::constitutive::Param;
    use crate::randmat;
    use crate::smallmat::{diag, rotation_about, Vec3};
    use approx::assert_abs_diff_eq;

    fn grid() -> BodyGrid {
        BodyGrid::cube(5, [0.0, 0.0, 0.0], 0.1).unwrap()
    }

    #[test]
    fn identity_frames_give_identity_metric_and_unit_volume() {
        let frames = FrameField::identity(&grid(), SymmetryKind::FullyIsotropicSolid);
        let g = intrinsic_metric(&frames).unwrap();
        let rho = volume_form(&frames).unwrap();
        for p in grid().points() {
            assert_abs_diff_eq!(*g.at(p.id).unwrap(), Mat3::identity(), epsilon = 1e-15);
            assert_abs_diff_eq!(rho.at(p.id).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn conformal_frames_pull_back_to_the_conformal_metric() {
        let frames = FrameField::from_fn(&grid(), SymmetryKind::FullyIsotropicSolid, |x| {
            Mat3::identity() * (1.0 + x[0])
        })
        .unwrap();
        let g = intrinsic_metric(&frames).unwrap();
        for p in grid().points() {
            let expect = Mat3::identity() / (1.0 + p.coords[0]).powi(2);
            assert_abs_diff_eq!(*g.at(p.id).unwrap(), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn metric_ignores_left_rotations_of_the_frame() {
        let base = FrameField::from_fn(&grid(), SymmetryKind::FullyIsotropicSolid, |_| {
            diag(2.0, 1.0, 1.0)
        })
        .unwrap();
        let rotated = FrameField::from_fn(&grid(), SymmetryKind::FullyIsotropicSolid, |x| {
            rotation_about(&Vec3::new(0.3, 1.0, 0.2), 0.7 + x[1]) * diag(2.0, 1.0, 1.0)
        })
        .unwrap();
        let g0 = intrinsic_metric(&base).unwrap();
        let g1 = intrinsic_metric(&rotated).unwrap();
        for p in grid().points() {
            // A left rotation is NOT a change of cross-section; it changes
            // the metric by conjugation, so only norms survive here.
            let a = g1.at(p.id).unwrap();
            let b = g0.at(p.id).unwrap();
            assert_abs_diff_eq!(a.trace(), b.trace(), epsilon = 1e-12);
        }
    }

    #[test]
    fn metric_is_cross_section_independent() {
        let g = grid();
        let frames = FrameField::from_fn(&g, SymmetryKind::FullyIsotropicSolid, |x| {
            diag(1.0 + x[0], 1.0, 1.0 / (1.0 + x[0]))
        })
        .unwrap();
        // Right-multiplying by a point-dependent structure-group element
        // (orthogonal for a solid metric) leaves the pullback untouched.
        let modified = frames
            .modified(|x| rotation_about(&Vec3::new(0.1, 0.9, 0.4), 1.3 * x[2] - 0.4 * x[1]))
            .unwrap();
        let g0 = intrinsic_metric(&frames).unwrap();
        let g1 = intrinsic_metric(&modified).unwrap();
        for p in g.points() {
            assert!(max_abs_diff(g0.at(p.id).unwrap(), g1.at(p.id).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn volume_form_is_unimodular_invariant() {
        let g = grid();
        let frames = FrameField::from_fn(&g, SymmetryKind::Fluid, |x| {
            diag(1.0 + x[0], 1.0, 2.0)
        })
        .unwrap();
        let mut shear = Mat3::identity();
        shear[(0, 1)] = 0.8;
        let modified = frames
            .modified(|x| {
                let mut m = shear;
                m[(1, 2)] = x[0] - 0.3;
                m
            })
            .unwrap();
        let r0 = volume_form(&frames).unwrap();
        let r1 = volume_form(&modified).unwrap();
        for p in g.points() {
            assert!((r0.at(p.id).unwrap() - r1.at(p.id).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn singular_frame_is_rejected() {
        let err = FrameField::from_fn(&grid(), SymmetryKind::TriclinicSolid, |x| {
            diag(x[0], 1.0, 1.0) // vanishes on the x1 = 0 face
        })
        .unwrap_err();
        assert!(matches!(err, GeometryError::SingularFrame(_)));
    }

    #[test]
    fn unity_arrows_pass_invariance_trivially() {
        let g = grid();
        let ids: Vec<PointId> = g.points().map(|p| p.id).collect();
        let arrows = FrameArrowSet::with_unities(&ids);
        let metric = MetricField::from_fn(&g, |x| {
            diag(1.0 + x[0], 1.0, 1.0 / (1.0 + x[0]))
        })
        .unwrap();
        assert!(metric_invariance_check(&metric, &arrows, 1e-12).unwrap());
    }

    #[test]
    fn stretch_arrow_breaks_invariance() {
        let g = grid();
        let ids: Vec<PointId> = g.points().map(|p| p.id).collect();
        let mut arrows = FrameArrowSet::with_unities(&ids);
        arrows
            .insert(crate::smallmat::FrameArrow::new(0, 1, diag(2.0, 1.0, 1.0)))
            .unwrap();
        let metric = MetricField::from_fn(&g, |_| Mat3::identity()).unwrap();
        assert!(!metric_invariance_check(&metric, &arrows, 1e-6).unwrap());
    }

    #[test]
    fn rotation_arrows_on_flat_metric_pass() {
        let g = grid();
        let ids: Vec<PointId> = g.points().map(|p| p.id).collect();
        let mut arrows = FrameArrowSet::with_unities(&ids);
        let mut rng = randmat::rng_for(5, 0);
        for id in 1..8 {
            arrows
                .insert(crate::smallmat::FrameArrow::new(
                    0,
                    id,
                    randmat::random_rotation(&mut rng),
                ))
                .unwrap();
        }
        let metric = MetricField::from_fn(&g, |_| Mat3::identity()).unwrap();
        assert!(metric_invariance_check(&metric, &arrows, 1e-12).unwrap());
    }

    #[test]
    fn homogeneous_identity_configuration_is_uniform() {
        let model = ConstitutiveModel::NeoHookean {
            mu: Param::Constant(1.0),
            lambda: Param::Constant(1.0),
        };
        let frames = FrameField::identity(&grid(), SymmetryKind::FullyIsotropicSolid);
        let gens = vec![
            rotation_about(&Vec3::new(1.0, 0.0, 0.0), 1.0),
            rotation_about(&Vec3::new(0.0, 0.0, 1.0), 2.2),
        ];
        let sample = DeformationSample::standard(3);
        assert!(
            uniform_configuration_check(&model, &frames, &gens, 1e-9, &sample).unwrap()
        );
    }

    #[test]
    fn graded_body_fails_the_identity_configuration() {
        let model = ConstitutiveModel::NeoHookean {
            mu: Param::Linear { base: 1.0, gradient: [1.0, 0.0, 0.0] },
            lambda: Param::Constant(1.0),
        };
        let frames = FrameField::identity(&grid(), SymmetryKind::FullyIsotropicSolid);
        let sample = DeformationSample::standard(3);
        assert!(!uniform_configuration_check(&model, &frames, &[], 1e-6, &sample).unwrap());
    }

    #[test]
    fn metric_conditions_accept_rotation_transitions_and_reject_stretches() {
        let g = BodyGrid::cube(3, [0.0; 3], 0.1).unwrap();
        let model = ConstitutiveModel::NeoHookean {
            mu: Param::Constant(1.0),
            lambda: Param::Constant(1.0),
        };
        let desc = classify_point(&model, &Vec3::zeros(), &ClassifyOptions::default()).unwrap();
        let descriptors: std::collections::BTreeMap<PointId, SymmetryDescriptor> =
            g.points().map(|p| (p.id, desc.clone())).collect();
        let undistorted = FrameField::identity(&g, SymmetryKind::FullyIsotropicSolid);
        assert!(
            material_metric_conditions_check(&[undistorted.clone()], &descriptors, 1e-6).unwrap()
        );

        let rotated = undistorted
            .modified(|x| rotation_about(&Vec3::new(0.0, 1.0, 0.0), 0.4 + x[0]))
            .unwrap();
        assert!(material_metric_conditions_check(
            &[undistorted.clone(), rotated],
            &descriptors,
            1e-6
        )
        .unwrap());

        let stretched = undistorted.modified(|_| diag(2.0, 1.0, 1.0)).unwrap();
        assert!(!material_metric_conditions_check(
            &[undistorted, stretched],
            &descriptors,
            1e-6
        )
        .unwrap());
    }
}
