//! Sampled groupoids of frame arrows.
//!
//! A [`FrameArrowSet`] is a finite sample of invertible linear maps between
//! tangent spaces of body points. It supports the same structural queries
//! as the exact finite groupoid (hom sets, vertex groups, transitivity,
//! normalizoids) with matrix comparisons up to a tolerance, plus the two
//! reductions that matter for material symmetry: the orthogonal reduction
//! relative to a field of metrics, and the unimodular reduction relative to
//! a field of densities.

use crate::smallmat::{
    inv_sqrt_spd, invert, is_spd, max_abs_diff, polar_decompose, sqrt_spd, unimodular_part,
    FrameArrow, Mat3, MatError, PointId,
};
use std::collections::BTreeMap;
use thiserror::Error;

/// Two sampled arrows closer than this (entrywise, same endpoints) are
/// treated as the same arrow.
pub const DEDUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FrameError {
    #[error("point {0} is not part of the base")]
    UnknownPoint(PointId),
    #[error("arrow sets live over different bases")]
    BaseMismatch,
    #[error("no metric supplied for point {0}")]
    MissingMetric(PointId),
    #[error("metric at point {0} is not symmetric positive definite")]
    MetricNotPositiveDefinite(PointId),
    #[error("no density supplied for point {0}")]
    MissingDensity(PointId),
    #[error("density at point {0} must be positive")]
    NonpositiveDensity(PointId),
    #[error("no arrows from the base point to point {0}")]
    NotTransitiveFromBasepoint(PointId),
    #[error("frames at point {0} do not lie in a single structure-group coset")]
    InconsistentStructureGroup(PointId),
    #[error("not a sampled subgroupoid: {0}")]
    NotASubgroupoid(String),
    #[error(transparent)]
    Numeric(#[from] MatError),
}

/// `true` when every matrix of `a` matches one of `b` and vice versa,
/// entrywise within `tol`.
pub fn same_matrix_set(a: &[Mat3], b: &[Mat3], tol: f64) -> bool {
    let covered = |xs: &[Mat3], ys: &[Mat3]| {
        xs.iter().all(|x| ys.iter().any(|y| max_abs_diff(x, y) <= tol))
    };
    covered(a, b) && covered(b, a)
}

/// Finite sample of frame arrows over a fixed base of points.
#[derive(Debug, Clone, Default)]
pub struct FrameArrowSet {
    base: Vec<PointId>,
    arrows: Vec<FrameArrow>,
}

impl FrameArrowSet {
    /// Empty arrow set over the given points.
    pub fn new(base: &[PointId]) -> Self {
        let mut base = base.to_vec();
        base.sort_unstable();
        base.dedup();
        FrameArrowSet { base, arrows: Vec::new() }
    }

    /// Arrow set holding exactly the identity loop at each point.
    pub fn with_unities(base: &[PointId]) -> Self {
        let mut set = FrameArrowSet::new(base);
        for &p in &set.base.clone() {
            set.arrows.push(FrameArrow::unity(p));
        }
        set
    }

    pub fn base(&self) -> &[PointId] {
        &self.base
    }

    pub fn arrows(&self) -> &[FrameArrow] {
        &self.arrows
    }

    pub fn len(&self) -> usize {
        self.arrows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrows.is_empty()
    }

    fn check_point(&self, p: PointId) -> Result<(), FrameError> {
        if self.base.binary_search(&p).is_ok() {
            Ok(())
        } else {
            Err(FrameError::UnknownPoint(p))
        }
    }

    /// Adds an arrow unless an equal one (within [`DEDUP_TOL`]) is present.
    /// Returns `true` when the arrow was new.
    pub fn insert(&mut self, arrow: FrameArrow) -> Result<bool, FrameError> {
        self.check_point(arrow.src)?;
        self.check_point(arrow.dst)?;
        if self.contains(&arrow, DEDUP_TOL) {
            return Ok(false);
        }
        self.arrows.push(arrow);
        Ok(true)
    }

    pub fn contains(&self, arrow: &FrameArrow, tol: f64) -> bool {
        self.arrows.iter().any(|a| {
            a.src == arrow.src && a.dst == arrow.dst && max_abs_diff(&a.map, &arrow.map) <= tol
        })
    }

    /// Arrows from `x` to `y`.
    pub fn hom(&self, x: PointId, y: PointId) -> Vec<&FrameArrow> {
        self.arrows.iter().filter(|a| a.src == x && a.dst == y).collect()
    }

    /// Loop maps at `x`.
    pub fn vertex(&self, x: PointId) -> Vec<Mat3> {
        self.arrows
            .iter()
            .filter(|a| a.src == x && a.dst == x)
            .map(|a| a.map)
            .collect()
    }

    /// Every ordered pair of base points connected by at least one arrow.
    pub fn is_transitive(&self) -> bool {
        self.base
            .iter()
            .all(|&x| self.base.iter().all(|&y| !self.hom(x, y).is_empty()))
    }

    /// Inserts the inverse of every arrow (deduplicated).
    pub fn close_under_inverses(&mut self) -> Result<(), FrameError> {
        for arrow in self.arrows.clone() {
            let inv = arrow.inverse()?;
            self.insert(inv)?;
        }
        Ok(())
    }

    /// Checks that `sub` is a sampled subgroupoid of `self` over the same
    /// base: identical base, every arrow of `sub` present in `self`, the
    /// identity loop present at every point, and `sub` closed under inverse
    /// and composition within `tol`. Meaningful for samples that are
    /// algebraically closed, like finite symmetry sets.
    pub fn verify_subgroupoid(&self, sub: &FrameArrowSet, tol: f64) -> Result<(), FrameError> {
        if sub.base != self.base {
            return Err(FrameError::BaseMismatch);
        }
        for &p in &self.base {
            if !sub.contains(&FrameArrow::unity(p), tol) {
                return Err(FrameError::NotASubgroupoid(format!("missing unity at point {p}")));
            }
        }
        for a in &sub.arrows {
            if !self.contains(a, tol) {
                return Err(FrameError::NotASubgroupoid(format!(
                    "arrow {} -> {} is not in the ambient set",
                    a.src, a.dst
                )));
            }
            let inv = a.inverse()?;
            if !sub.contains(&inv, tol) {
                return Err(FrameError::NotASubgroupoid(format!(
                    "missing the inverse of an arrow {} -> {}",
                    a.src, a.dst
                )));
            }
            for b in &sub.arrows {
                if let Some(c) = a.compose(b) {
                    if !sub.contains(&c, tol) {
                        return Err(FrameError::NotASubgroupoid(format!(
                            "not closed under composition at {} -> {}",
                            c.src, c.dst
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sampled normalizoid of `sub` inside `self`: the arrows `g: x -> y`
    /// of `self` whose conjugation carries the sub vertex set at `x` onto
    /// the sub vertex set at `y` (as matrix sets, within `tol`).
    pub fn normalizoid(&self, sub: &FrameArrowSet, tol: f64) -> Result<FrameArrowSet, FrameError> {
        self.verify_subgroupoid(sub, tol)?;
        let vertex_sets: BTreeMap<PointId, Vec<Mat3>> =
            self.base.iter().map(|&p| (p, sub.vertex(p))).collect();
        let mut out = FrameArrowSet::new(&self.base);
        for g in &self.arrows {
            let gi = invert(&g.map)?;
            let conj: Vec<Mat3> =
                vertex_sets[&g.src].iter().map(|s| g.map * s * gi).collect();
            if same_matrix_set(&conj, &vertex_sets[&g.dst], tol) {
                out.insert(g.clone())?;
            }
        }
        Ok(out)
    }

    /// Orthogonal reduction relative to a metric at every point: each arrow
    /// `A: x -> y` is replaced by the unique metric-orthogonal map with the
    /// same "rotational part", namely
    /// `G_y^{-1/2} R G_x^{1/2}` where `R` is the polar rotation of
    /// `G_y^{1/2} A G_x^{-1/2}`. The result satisfies `A'^T G_y A' = G_x`.
    pub fn orthogonal_reduction(
        &self,
        metrics: &BTreeMap<PointId, Mat3>,
    ) -> Result<FrameArrowSet, FrameError> {
        let mut roots: BTreeMap<PointId, (Mat3, Mat3)> = BTreeMap::new();
        for &p in &self.base {
            let g = metrics.get(&p).ok_or(FrameError::MissingMetric(p))?;
            if !is_spd(g, 1e-9) {
                return Err(FrameError::MetricNotPositiveDefinite(p));
            }
            roots.insert(p, (sqrt_spd(g)?, inv_sqrt_spd(g)?));
        }
        let mut out = FrameArrowSet::new(&self.base);
        for a in &self.arrows {
            let (root_src, inv_root_src) = &roots[&a.src];
            let (root_dst, inv_root_dst) = &roots[&a.dst];
            let embedded = root_dst * a.map * inv_root_src;
            let rot = polar_decompose(&embedded)?.r;
            out.insert(FrameArrow::new(a.src, a.dst, inv_root_dst * rot * root_src))?;
        }
        Ok(out)
    }

    /// Unimodular reduction relative to a density at every point: each
    /// arrow is rescaled so its density-weighted determinant has modulus
    /// one.
    pub fn unimodular_reduction(
        &self,
        densities: &BTreeMap<PointId, f64>,
    ) -> Result<FrameArrowSet, FrameError> {
        for &p in &self.base {
            let rho = densities.get(&p).ok_or(FrameError::MissingDensity(p))?;
            if !(*rho > 0.0) {
                return Err(FrameError::NonpositiveDensity(p));
            }
        }
        let mut out = FrameArrowSet::new(&self.base);
        for a in &self.arrows {
            let reduced = unimodular_part(a, densities[&a.src], densities[&a.dst])?;
            out.insert(reduced)?;
        }
        Ok(out)
    }

    /// Arrows present in both sets (within `tol`). Both sets must live
    /// over the same base.
    pub fn intersect(&self, other: &FrameArrowSet, tol: f64) -> Result<FrameArrowSet, FrameError> {
        if self.base != other.base {
            return Err(FrameError::BaseMismatch);
        }
        let mut out = FrameArrowSet::new(&self.base);
        for a in &self.arrows {
            if other.contains(a, tol) {
                out.insert(a.clone())?;
            }
        }
        Ok(out)
    }
}

/// A linear frame at a body point: `mat` maps reference coordinates into
/// the tangent space at `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub point: PointId,
    pub mat: Mat3,
}

impl Frame {
    pub fn new(point: PointId, mat: Mat3) -> Self {
        Frame { point, mat }
    }
}

/// The orbit of one frame under a transitive arrow set: all frames
/// `a . z` for arrows `a` out of the base point, together with the
/// structure group `z^{-1} (vertex loops) z` read in reference
/// coordinates.
#[derive(Debug, Clone)]
pub struct AdaptedOrbit {
    pub base: Vec<PointId>,
    pub basepoint: PointId,
    pub frames: Vec<Frame>,
    pub structure_group: Vec<Mat3>,
}

/// Computes the adapted orbit of `z` under `set`. Fails when some base
/// point cannot be reached from `z.point`.
pub fn adapted_orbit(set: &FrameArrowSet, z: &Frame) -> Result<AdaptedOrbit, FrameError> {
    if set.base().binary_search(&z.point).is_err() {
        return Err(FrameError::UnknownPoint(z.point));
    }
    let z_inv = invert(&z.mat)?;
    let loops = set.vertex(z.point);
    let structure_group: Vec<Mat3> = loops.iter().map(|p| z_inv * p * z.mat).collect();

    let mut frames = vec![z.clone()];
    for &y in set.base() {
        let homs = set.hom(z.point, y);
        if homs.is_empty() {
            return Err(FrameError::NotTransitiveFromBasepoint(y));
        }
        for a in homs {
            let candidate = Frame::new(y, a.map * z.mat);
            if !frames
                .iter()
                .any(|f| f.point == y && max_abs_diff(&f.mat, &candidate.mat) <= DEDUP_TOL)
            {
                frames.push(candidate);
            }
        }
    }
    Ok(AdaptedOrbit {
        base: set.base().to_vec(),
        basepoint: z.point,
        frames,
        structure_group,
    })
}

impl AdaptedOrbit {
    /// Rebuilds the arrow set from the adapted frames: every map
    /// `q . p^{-1}` for frames `p` at `x` and `q` at `y`. Before building,
    /// verifies the coset property: any two frames at the same point must
    /// differ by a structure-group element (within `tol`).
    pub fn arrows(&self, tol: f64) -> Result<FrameArrowSet, FrameError> {
        let frames_at = |p: PointId| -> Vec<&Frame> {
            self.frames.iter().filter(|f| f.point == p).collect()
        };
        for &p in &self.base {
            let here = frames_at(p);
            let first = here.first().ok_or(FrameError::NotTransitiveFromBasepoint(p))?;
            let first_inv = invert(&first.mat)?;
            for f in &here {
                let rel = first_inv * f.mat;
                if !self
                    .structure_group
                    .iter()
                    .any(|g| max_abs_diff(g, &rel) <= tol)
                {
                    return Err(FrameError::InconsistentStructureGroup(p));
                }
            }
        }
        let mut out = FrameArrowSet::new(&self.base);
        for &x in &self.base {
            for &y in &self.base {
                for p in frames_at(x) {
                    let p_inv = invert(&p.mat)?;
                    for q in frames_at(y) {
                        out.insert(FrameArrow::new(x, y, q.mat * p_inv))?;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::{det_rho, diag, rotation_about, Vec3};
    use approx::assert_abs_diff_eq;

    fn rot_z(angle: f64) -> Mat3 {
        rotation_about(&Vec3::new(0.0, 0.0, 1.0), angle)
    }

    #[test]
    fn unities_make_a_transitive_set_only_on_one_point() {
        let single = FrameArrowSet::with_unities(&[3]);
        assert!(single.is_transitive());
        let double = FrameArrowSet::with_unities(&[0, 1]);
        assert!(!double.is_transitive());
    }

    #[test]
    fn insert_dedups_and_rejects_unknown_points() {
        let mut set = FrameArrowSet::with_unities(&[0, 1]);
        assert!(!set.insert(FrameArrow::unity(0)).unwrap());
        assert!(set.insert(FrameArrow::new(0, 1, diag(2.0, 1.0, 1.0))).unwrap());
        assert!(!set
            .insert(FrameArrow::new(0, 1, diag(2.0 + 1e-12, 1.0, 1.0)))
            .unwrap());
        assert_eq!(
            set.insert(FrameArrow::unity(7)),
            Err(FrameError::UnknownPoint(7))
        );
    }

    #[test]
    fn inverse_closure_connects_both_directions() {
        let mut set = FrameArrowSet::with_unities(&[0, 1]);
        set.insert(FrameArrow::new(0, 1, diag(2.0, 1.0, 0.5))).unwrap();
        assert!(set.hom(1, 0).is_empty());
        set.close_under_inverses().unwrap();
        let back = set.hom(1, 0);
        assert_eq!(back.len(), 1);
        assert_abs_diff_eq!(back[0].map, diag(0.5, 1.0, 2.0), epsilon = 1e-12);
        assert!(set.is_transitive());
    }

    #[test]
    fn orthogonal_reduction_is_metric_orthogonal_and_idempotent() {
        let mut set = FrameArrowSet::with_unities(&[0, 1]);
        // A deliberately non-orthogonal arrow with a shear.
        let mut a = diag(2.0, 1.0, 0.7);
        a[(0, 1)] = 0.4;
        set.insert(FrameArrow::new(0, 1, a)).unwrap();
        set.close_under_inverses().unwrap();

        let mut g0 = diag(0.25, 1.0, 1.0);
        g0[(0, 1)] = 0.1;
        g0[(1, 0)] = 0.1;
        let metrics: BTreeMap<_, _> = [(0, g0), (1, diag(1.0, 2.0, 0.5))].into();
        let reduced = set.orthogonal_reduction(&metrics).unwrap();
        assert_eq!(reduced.len(), set.len());
        for arrow in reduced.arrows() {
            let gs = metrics[&arrow.src];
            let gd = metrics[&arrow.dst];
            assert_abs_diff_eq!(arrow.map.transpose() * gd * arrow.map, gs, epsilon = 1e-10);
        }
        let twice = reduced.orthogonal_reduction(&metrics).unwrap();
        for (a, b) in reduced.arrows().iter().zip(twice.arrows()) {
            assert_abs_diff_eq!(a.map, b.map, epsilon = 1e-10);
        }
    }

    #[test]
    fn orthogonal_reduction_with_identity_metrics_is_the_polar_rotation() {
        let mut set = FrameArrowSet::new(&[0, 1]);
        let f = Mat3::new(0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0);
        set.insert(FrameArrow::new(0, 1, f)).unwrap();
        let metrics: BTreeMap<_, _> =
            [(0, Mat3::identity()), (1, Mat3::identity())].into();
        let reduced = set.orthogonal_reduction(&metrics).unwrap();
        let expected = rot_z(std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(reduced.arrows()[0].map, expected, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_reduction_requires_spd_metrics() {
        let set = FrameArrowSet::with_unities(&[0]);
        let metrics: BTreeMap<_, _> = [(0, diag(1.0, -1.0, 1.0))].into();
        assert_eq!(
            set.orthogonal_reduction(&metrics).unwrap_err(),
            FrameError::MetricNotPositiveDefinite(0)
        );
        assert_eq!(
            set.orthogonal_reduction(&BTreeMap::new()).unwrap_err(),
            FrameError::MissingMetric(0)
        );
    }

    #[test]
    fn unimodular_reduction_balances_density_transport() {
        let mut set = FrameArrowSet::new(&[0, 1]);
        // Density halves, volume doubles: already density-unimodular.
        set.insert(FrameArrow::new(0, 1, diag(2.0, 1.0, 1.0))).unwrap();
        // Same map against uniform density is not.
        set.insert(FrameArrow::new(1, 0, diag(2.0, 1.0, 1.0))).unwrap();
        let densities: BTreeMap<_, _> = [(0, 1.0), (1, 0.5)].into();
        let reduced = set.unimodular_reduction(&densities).unwrap();
        let fwd = &reduced.hom(0, 1)[0].map;
        assert_abs_diff_eq!(*fwd, diag(2.0, 1.0, 1.0), epsilon = 1e-12);
        let bwd = &reduced.hom(1, 0)[0].map;
        // det_rho of the reduced arrow must be one.
        let d = det_rho(&FrameArrow::new(1, 0, *bwd), 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);

        let bad: BTreeMap<_, _> = [(0, 1.0), (1, -2.0)].into();
        assert_eq!(
            set.unimodular_reduction(&bad).unwrap_err(),
            FrameError::NonpositiveDensity(1)
        );
    }

    #[test]
    fn intersection_requires_matching_bases() {
        let a = FrameArrowSet::with_unities(&[0, 1]);
        let b = FrameArrowSet::with_unities(&[0, 2]);
        assert_eq!(a.intersect(&b, 1e-9).unwrap_err(), FrameError::BaseMismatch);
        let c = FrameArrowSet::with_unities(&[0, 1]);
        let inter = a.intersect(&c, 1e-9).unwrap();
        assert_eq!(inter.len(), 2);
    }

    /// Quarter-turn loops about the vertical axis at one point, plus a flip
    /// that normalizes them and a skew rotation that does not.
    #[test]
    fn normalizoid_keeps_exactly_the_normalizing_loops() {
        let base = [0_usize];
        let mut sub = FrameArrowSet::new(&base);
        for k in 0..4 {
            sub.insert(FrameArrow::new(0, 0, rot_z(k as f64 * std::f64::consts::FRAC_PI_2)))
                .unwrap();
        }
        let mut ambient = sub.clone();
        let flip = rotation_about(&Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI);
        ambient.insert(FrameArrow::new(0, 0, flip)).unwrap();
        let skew = rotation_about(&Vec3::new(1.0, 1.0, 1.0), 2.0 * std::f64::consts::FRAC_PI_3);
        ambient.insert(FrameArrow::new(0, 0, skew)).unwrap();

        let n = ambient.normalizoid(&sub, 1e-9).unwrap();
        assert_eq!(n.len(), 5);
        assert!(n.contains(&FrameArrow::new(0, 0, flip), 1e-9));
        assert!(!n.contains(&FrameArrow::new(0, 0, skew), 1e-9));
    }

    #[test]
    fn normalizoid_rejects_non_subgroupoids() {
        let ambient = FrameArrowSet::with_unities(&[0]);
        let mut no_unity = FrameArrowSet::new(&[0]);
        no_unity.insert(FrameArrow::new(0, 0, rot_z(1.0))).unwrap();
        assert!(matches!(
            ambient.normalizoid(&no_unity, 1e-9),
            Err(FrameError::NotASubgroupoid(_))
        ));

        // Unity present but not closed under composition.
        let mut ambient2 = FrameArrowSet::with_unities(&[0]);
        for k in 1..4 {
            ambient2
                .insert(FrameArrow::new(0, 0, rot_z(k as f64 * std::f64::consts::FRAC_PI_2)))
                .unwrap();
        }
        let mut sub2 = FrameArrowSet::with_unities(&[0]);
        sub2.insert(FrameArrow::new(0, 0, rot_z(std::f64::consts::FRAC_PI_2))).unwrap();
        assert!(matches!(
            ambient2.normalizoid(&sub2, 1e-9),
            Err(FrameError::NotASubgroupoid(_))
        ));
    }

    /// Builds a transitive two-point set from a known structure group and a
    /// section, then reads the orbit back off.
    #[test]
    fn adapted_orbit_round_trip() {
        let group = vec![Mat3::identity(), rot_z(std::f64::consts::PI)];
        let mut section = diag(1.0, 2.0, 1.0);
        section[(0, 2)] = 0.3;
        let frames = [Mat3::identity(), section];

        let mut set = FrameArrowSet::new(&[0, 1]);
        for (x, zx) in frames.iter().enumerate() {
            let zx_inv = invert(zx).unwrap();
            for (y, zy) in frames.iter().enumerate() {
                for g in &group {
                    set.insert(FrameArrow::new(x, y, zy * g * zx_inv)).unwrap();
                }
            }
        }
        assert_eq!(set.len(), 8);

        let orbit = adapted_orbit(&set, &Frame::new(0, Mat3::identity())).unwrap();
        assert!(same_matrix_set(&orbit.structure_group, &group, 1e-12));
        assert_eq!(orbit.frames.len(), 4);

        let rebuilt = orbit.arrows(1e-9).unwrap();
        assert_eq!(rebuilt.len(), set.len());
        for a in set.arrows() {
            assert!(rebuilt.contains(a, 1e-9));
        }

        // Seen from an adapted frame at the other point, the structure
        // group comes out the same: adapted frames conjugate the vertex
        // loops back onto the reference group.
        let other = adapted_orbit(&set, &Frame::new(1, section)).unwrap();
        assert!(same_matrix_set(&other.structure_group, &group, 1e-9));
    }

    #[test]
    fn adapted_orbit_requires_reachability() {
        let set = FrameArrowSet::with_unities(&[0, 1]);
        assert_eq!(
            adapted_orbit(&set, &Frame::new(0, Mat3::identity())).unwrap_err(),
            FrameError::NotTransitiveFromBasepoint(1)
        );
    }

    #[test]
    fn mixed_frames_fail_the_coset_check() {
        let orbit = AdaptedOrbit {
            base: vec![0],
            basepoint: 0,
            frames: vec![
                Frame::new(0, Mat3::identity()),
                Frame::new(0, diag(1.3, 1.0, 1.0)),
            ],
            structure_group: vec![Mat3::identity()],
        };
        assert!(matches!(
            orbit.arrows(1e-9),
            Err(FrameError::InconsistentStructureGroup(0))
        ));
    }
}
