//! Homogeneity verdicts per material kind, assembled from the geometric
//! obstructions a kind's structure group admits: holonomic frames for
//! triclinic bodies, flat intrinsic metric for isotropic solids, a
//! necessary-condition battery for transversely isotropic solids, and
//! volume standardization for the fluid sector.

use crate::classify::{SymmetryDescriptor, SymmetryKind};
use crate::geometry::curvature::{christoffels, riemann, structure_functions};
use crate::geometry::fields::{intrinsic_metric, volume_form, FrameField, GeometryError};
use crate::geometry::grid::BodyGrid;
use crate::smallmat::{basis_with_third, PointId, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogeneityStatus {
    /// The kind's full computable criterion passed.
    Homogeneous,
    /// A necessary condition failed; the body cannot be homogeneous.
    NotHomogeneous,
    /// Every computable necessary condition passed, but the kind admits
    /// no sufficient finite test here.
    NecessaryConditionsPassed,
    /// Fluid sector: the volume structure is always locally
    /// standardizable; the density is the only invariant to report.
    LocallyHomogeneousByVolume,
}

/// Defect numbers behind a transverse verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AxisBattery {
    pub curvature_max: f64,
    /// Out-of-plane component of the bracket of the transverse plane
    /// fields (Frobenius integrability of the plane distribution).
    pub frobenius_defect: f64,
    /// Max component of the axis field's covariant derivative in the
    /// intrinsic metric.
    pub covariant_derivative_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityVerdict {
    pub kind: SymmetryKind,
    pub status: HomogeneityStatus,
    pub tol: f64,
    pub max_curvature: Option<f64>,
    pub max_structure_function: Option<f64>,
    pub axis_battery: Option<AxisBattery>,
    /// (min, max) of the fluid volume density over the grid.
    pub volume_range: Option<(f64, f64)>,
}

/// The single kind shared by all descriptors, or the offending pair.
fn common_kind(
    descriptors: &BTreeMap<PointId, SymmetryDescriptor>,
) -> Result<SymmetryKind, GeometryError> {
    let mut kinds = descriptors.values().map(|d| d.kind);
    let Some(first) = kinds.next() else {
        return Err(GeometryError::MissingDescriptor(0));
    };
    for k in kinds {
        if k != first {
            return Err(GeometryError::MixedKinds(first, k));
        }
    }
    Ok(first)
}

/// Per-point unit axis field with signs aligned along a grid sweep, so
/// finite differences see a smooth field rather than sign flips.
fn aligned_axis_field(
    grid: &BodyGrid,
    descriptors: &BTreeMap<PointId, SymmetryDescriptor>,
) -> Result<Vec<Vec3>, GeometryError> {
    let mut axes = vec![Vec3::zeros(); grid.point_count()];
    for p in grid.points() {
        let desc = descriptors.get(&p.id).ok_or(GeometryError::MissingDescriptor(p.id))?;
        let a = desc.axis.ok_or(GeometryError::MissingAxis(p.id))?;
        axes[p.id] = a.normalize();
    }
    let dims = grid.dims();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let prev = if i > 0 {
                    Some([i - 1, j, k])
                } else if j > 0 {
                    Some([i, j - 1, k])
                } else if k > 0 {
                    Some([i, j, k - 1])
                } else {
                    None
                };
                if let Some(prev) = prev {
                    let id = grid.linear([i, j, k]);
                    if axes[id].dot(&axes[grid.linear(prev)]) < 0.0 {
                        axes[id] = -axes[id];
                    }
                }
            }
        }
    }
    Ok(axes)
}

fn central_vec(grid: &BodyGrid, field: &[Vec3], index: [usize; 3], axis: usize) -> Vec3 {
    let fwd = grid.neighbor(index, axis, 1).expect("interior point");
    let bwd = grid.neighbor(index, axis, -1).expect("interior point");
    (field[grid.linear(fwd)] - field[grid.linear(bwd)]) / (2.0 * grid.spacing())
}

/// Homogeneity verdict for a single-kind body over `frames`, the
/// cross-section adapted to its structure (undistorted frames pushed
/// along the body's arrows). `tol` is the finite-difference defect
/// budget, typically `sampled_field_tol(h)`.
pub fn homogeneity_verdict(
    descriptors: &BTreeMap<PointId, SymmetryDescriptor>,
    frames: &FrameField,
    tol: f64,
) -> Result<HomogeneityVerdict, GeometryError> {
    let kind = common_kind(descriptors)?;
    let grid = frames.grid().clone();
    match kind {
        SymmetryKind::TriclinicSolid => {
            let c = structure_functions(frames)?;
            let status = if c.max_abs() <= tol {
                HomogeneityStatus::Homogeneous
            } else {
                HomogeneityStatus::NotHomogeneous
            };
            Ok(HomogeneityVerdict {
                kind,
                status,
                tol,
                max_curvature: None,
                max_structure_function: Some(c.max_abs()),
                axis_battery: None,
                volume_range: None,
            })
        }
        SymmetryKind::FullyIsotropicSolid => {
            let metric = intrinsic_metric(frames)?;
            let curv = riemann(&metric)?;
            let status = if curv.max_norm() <= tol {
                HomogeneityStatus::Homogeneous
            } else {
                HomogeneityStatus::NotHomogeneous
            };
            Ok(HomogeneityVerdict {
                kind,
                status,
                tol,
                max_curvature: Some(curv.max_norm()),
                max_structure_function: None,
                axis_battery: None,
                volume_range: None,
            })
        }
        SymmetryKind::TransverselyIsotropicSolid => {
            let metric = intrinsic_metric(frames)?;
            let curv = riemann(&metric)?;
            let gammas = christoffels(&metric)?;
            let axes = aligned_axis_field(&grid, descriptors)?;

            // Transverse-plane fields from the axis completion; their
            // bracket must stay in the plane (Frobenius), and the axis
            // itself must be covariantly constant. Both are necessary
            // for a configuration with constant material data.
            let planes: Vec<(Vec3, Vec3)> = axes
                .iter()
                .map(|a| {
                    let b = basis_with_third(a);
                    (b.column(0).into(), b.column(1).into())
                })
                .collect();
            let us: Vec<Vec3> = planes.iter().map(|p| p.0).collect();
            let vs: Vec<Vec3> = planes.iter().map(|p| p.1).collect();

            let mut frobenius = 0.0_f64;
            let mut covariant = 0.0_f64;
            for id in grid.interior(1) {
                let index = grid.index(id)?;
                let mut bracket = Vec3::zeros();
                for b in 0..3 {
                    let du = central_vec(&grid, &us, index, b);
                    let dv = central_vec(&grid, &vs, index, b);
                    bracket += dv * us[id][b] - du * vs[id][b];
                }
                frobenius = frobenius.max(axes[id].dot(&bracket).abs());

                let gamma = gammas.at(id).expect("interior point");
                for j in 0..3 {
                    let da = central_vec(&grid, &axes, index, j);
                    for i in 0..3 {
                        let mut nabla = da[i];
                        for m in 0..3 {
                            nabla += gamma[i][j][m] * axes[id][m];
                        }
                        covariant = covariant.max(nabla.abs());
                    }
                }
            }

            let battery = AxisBattery {
                curvature_max: curv.max_norm(),
                frobenius_defect: frobenius,
                covariant_derivative_defect: covariant,
            };
            let passed =
                battery.curvature_max <= tol && frobenius <= tol && covariant <= tol;
            Ok(HomogeneityVerdict {
                kind,
                status: if passed {
                    HomogeneityStatus::NecessaryConditionsPassed
                } else {
                    HomogeneityStatus::NotHomogeneous
                },
                tol,
                max_curvature: Some(battery.curvature_max),
                max_structure_function: None,
                axis_battery: Some(battery),
                volume_range: None,
            })
        }
        SymmetryKind::Fluid | SymmetryKind::FluidCrystalFirstKind => {
            let rho = volume_form(frames)?;
            Ok(HomogeneityVerdict {
                kind,
                status: HomogeneityStatus::LocallyHomogeneousByVolume,
                tol,
                max_curvature: None,
                max_structure_function: None,
                axis_battery: None,
                volume_range: Some(rho.range()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curvature::sampled_field_tol;
    use crate::smallmat::{diag, rotation_about, Mat3};

    fn synth(kind: SymmetryKind, axis: Option<Vec3>) -> SymmetryDescriptor {
        SymmetryDescriptor {
            kind,
            axis,
            undistorted_frame: Mat3::identity(),
            residual: 0.0,
            generators: Vec::new(),
        }
    }

    fn all_points(
        grid: &BodyGrid,
        f: impl Fn(&Vec3) -> SymmetryDescriptor,
    ) -> BTreeMap<PointId, SymmetryDescriptor> {
        grid.points().map(|p| (p.id, f(&p.coords))).collect()
    }

    #[test]
    fn constant_isotropic_body_is_homogeneous() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        let descriptors = all_points(&grid, |_| synth(SymmetryKind::FullyIsotropicSolid, None));
        let frames = FrameField::identity(&grid, SymmetryKind::FullyIsotropicSolid);
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::Homogeneous);
        assert!(v.max_curvature.unwrap() <= 1e-12);
    }

    #[test]
    fn conformally_shrinking_frames_are_obstructed_by_curvature() {
        let grid = BodyGrid::cube(7, [0.0; 3], 0.1).unwrap();
        let descriptors = all_points(&grid, |_| synth(SymmetryKind::FullyIsotropicSolid, None));
        let frames = FrameField::from_fn(&grid, SymmetryKind::FullyIsotropicSolid, |x| {
            Mat3::identity() / (1.0 + x[0])
        })
        .unwrap();
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::NotHomogeneous);
        // Intrinsic metric (1+x1)^2 I has |R_1212| = 1 exactly.
        let c = v.max_curvature.unwrap();
        assert!(c > 0.5 && c < 1.5, "curvature scale {c}");
    }

    #[test]
    fn triclinic_holonomy_separates_constant_from_sheared_frames() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        let descriptors = all_points(&grid, |_| synth(SymmetryKind::TriclinicSolid, None));

        let constant = FrameField::from_fn(&grid, SymmetryKind::TriclinicSolid, |_| {
            Mat3::new(1.0, 0.3, 0.0, 0.0, 1.0, 0.1, 0.2, 0.0, 1.0)
        })
        .unwrap();
        let v = homogeneity_verdict(&descriptors, &constant, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::Homogeneous);

        let sheared = FrameField::from_fn(&grid, SymmetryKind::TriclinicSolid, |x| {
            let mut m = Mat3::identity();
            m[(1, 2)] = x[0];
            m
        })
        .unwrap();
        let v = homogeneity_verdict(&descriptors, &sheared, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::NotHomogeneous);
        assert!((v.max_structure_function.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_axis_transverse_body_passes_the_battery() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        let axis = Vec3::new(1.0, 0.0, 0.0);
        let descriptors = all_points(&grid, |_| {
            synth(SymmetryKind::TransverselyIsotropicSolid, Some(axis))
        });
        let frames = FrameField::identity(&grid, SymmetryKind::TransverselyIsotropicSolid);
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::NecessaryConditionsPassed);
        let b = v.axis_battery.unwrap();
        assert!(b.curvature_max <= 1e-12);
        assert!(b.frobenius_defect <= 1e-12);
        assert!(b.covariant_derivative_defect <= 1e-12);
    }

    #[test]
    fn twisting_axis_fails_the_covariant_derivative_condition() {
        let grid = BodyGrid::cube(5, [-0.2; 3], 0.1).unwrap();
        let rate = 0.9;
        let descriptors = all_points(&grid, |x| {
            let a = rotation_about(&Vec3::new(0.0, 0.0, 1.0), rate * x[0])
                * Vec3::new(1.0, 0.0, 0.0);
            synth(SymmetryKind::TransverselyIsotropicSolid, Some(a))
        });
        // Uniform arrows push the identity frame around by the same
        // rotations, so the intrinsic metric is flat; only the axis
        // derivative obstructs.
        let frames =
            FrameField::from_fn(&grid, SymmetryKind::TransverselyIsotropicSolid, |x| {
                rotation_about(&Vec3::new(0.0, 0.0, 1.0), rate * x[0])
            })
            .unwrap();
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::NotHomogeneous);
        let b = v.axis_battery.unwrap();
        assert!(b.curvature_max <= 1e-10);
        assert!(
            (b.covariant_derivative_defect - rate).abs() < 0.01,
            "derivative defect {} vs twist rate {}",
            b.covariant_derivative_defect,
            rate
        );
    }

    #[test]
    fn fluid_bodies_report_the_volume_density() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        let descriptors = all_points(&grid, |_| synth(SymmetryKind::Fluid, None));
        let frames = FrameField::from_fn(&grid, SymmetryKind::Fluid, |x| {
            diag(1.0 + x[0], 1.0, 1.0)
        })
        .unwrap();
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::LocallyHomogeneousByVolume);
        let (lo, hi) = v.volume_range.unwrap();
        assert!((lo - 1.0 / 1.4).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        let mut descriptors = all_points(&grid, |_| synth(SymmetryKind::FullyIsotropicSolid, None));
        descriptors.insert(0, synth(SymmetryKind::TriclinicSolid, None));
        let frames = FrameField::identity(&grid, SymmetryKind::FullyIsotropicSolid);
        match homogeneity_verdict(&descriptors, &frames, 1e-3) {
            Err(GeometryError::MixedKinds(_, _)) => {}
            other => panic!("expected MixedKinds, got {other:?}"),
        }
    }

    #[test]
    fn axis_sign_flips_in_descriptors_do_not_fake_derivatives() {
        let grid = BodyGrid::cube(5, [0.0; 3], 0.1).unwrap();
        // Alternate raw signs point by point; alignment must recover the
        // constant line.
        let descriptors = all_points(&grid, |x| {
            let flip = if ((x[0] + x[1] + x[2]) / 0.1).round() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            synth(
                SymmetryKind::TransverselyIsotropicSolid,
                Some(Vec3::new(flip, 0.0, 0.0)),
            )
        });
        let frames = FrameField::identity(&grid, SymmetryKind::TransverselyIsotropicSolid);
        let v = homogeneity_verdict(&descriptors, &frames, sampled_field_tol(0.1)).unwrap();
        assert_eq!(v.status, HomogeneityStatus::NecessaryConditionsPassed);
    }
}
