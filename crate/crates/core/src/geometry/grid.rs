//! The body chart: a uniform axis-aligned grid of material points.
//!
//! Point ids are linear indices with the last coordinate fastest, so id
//! order, iteration order, and report order all agree.

use crate::smallmat::{PointId, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("grid must have at least one point per axis")]
    EmptyAxis,
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("grid origin must be finite")]
    BadOrigin,
    #[error("point id {0} out of range")]
    UnknownPoint(PointId),
}

/// Uniform grid over `[origin, origin + (dims - 1) * spacing]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyGrid {
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: f64,
}

/// One material point of the grid chart.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPoint {
    pub id: PointId,
    pub index: [usize; 3],
    pub coords: Vec3,
}

impl BodyGrid {
    pub fn new(dims: [usize; 3], origin: [f64; 3], spacing: f64) -> Result<BodyGrid, GridError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(GridError::EmptyAxis);
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(GridError::BadSpacing(spacing));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(GridError::BadOrigin);
        }
        Ok(BodyGrid { dims, origin, spacing })
    }

    /// Cube grid `n^3` starting at `origin`.
    pub fn cube(n: usize, origin: [f64; 3], spacing: f64) -> Result<BodyGrid, GridError> {
        BodyGrid::new([n, n, n], origin, spacing)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn point_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear id of an index triple; the last axis varies fastest.
    pub fn linear(&self, index: [usize; 3]) -> PointId {
        (index[0] * self.dims[1] + index[1]) * self.dims[2] + index[2]
    }

    pub fn index(&self, id: PointId) -> Result<[usize; 3], GridError> {
        if id >= self.point_count() {
            return Err(GridError::UnknownPoint(id));
        }
        let k = id % self.dims[2];
        let rest = id / self.dims[2];
        let j = rest % self.dims[1];
        let i = rest / self.dims[1];
        Ok([i, j, k])
    }

    pub fn coords_of_index(&self, index: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin[0] + index[0] as f64 * self.spacing,
            self.origin[1] + index[1] as f64 * self.spacing,
            self.origin[2] + index[2] as f64 * self.spacing,
        )
    }

    pub fn coords(&self, id: PointId) -> Result<Vec3, GridError> {
        Ok(self.coords_of_index(self.index(id)?))
    }

    pub fn point(&self, id: PointId) -> Result<BodyPoint, GridError> {
        let index = self.index(id)?;
        Ok(BodyPoint { id, index, coords: self.coords_of_index(index) })
    }

    /// All points in id order.
    pub fn points(&self) -> impl Iterator<Item = BodyPoint> + '_ {
        (0..self.point_count()).map(|id| self.point(id).expect("id in range"))
    }

    /// Whether the index sits at least `margin` layers away from every face.
    pub fn is_interior(&self, index: [usize; 3], margin: usize) -> bool {
        index
            .iter()
            .zip(self.dims.iter())
            .all(|(&i, &d)| i >= margin && i + margin < d)
    }

    /// Ids of all interior points for the given margin, in id order.
    pub fn interior(&self, margin: usize) -> Vec<PointId> {
        (0..self.point_count())
            .filter(|&id| self.is_interior(self.index(id).expect("id in range"), margin))
            .collect()
    }

    /// Index shifted by `offset` along `axis`, if it stays on the grid.
    pub fn neighbor(&self, index: [usize; 3], axis: usize, offset: isize) -> Option<[usize; 3]> {
        let moved = index[axis] as isize + offset;
        if moved < 0 || moved as usize >= self.dims[axis] {
            return None;
        }
        let mut out = index;
        out[axis] = moved as usize;
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn construction_validates_inputs() {
        assert_eq!(BodyGrid::new([0, 2, 2], [0.0; 3], 0.1).unwrap_err(), GridError::EmptyAxis);
        assert_eq!(
            BodyGrid::new([2, 2, 2], [0.0; 3], 0.0).unwrap_err(),
            GridError::BadSpacing(0.0)
        );
        assert_eq!(
            BodyGrid::new([2, 2, 2], [f64::NAN, 0.0, 0.0], 0.1).unwrap_err(),
            GridError::BadOrigin
        );
    }

    #[test]
    fn linear_index_round_trips_with_last_axis_fastest() {
        let grid = BodyGrid::new([2, 3, 4], [0.0; 3], 0.5).unwrap();
        assert_eq!(grid.point_count(), 24);
        assert_eq!(grid.linear([0, 0, 0]), 0);
        assert_eq!(grid.linear([0, 0, 1]), 1);
        assert_eq!(grid.linear([0, 1, 0]), 4);
        assert_eq!(grid.linear([1, 0, 0]), 12);
        for id in 0..grid.point_count() {
            assert_eq!(grid.linear(grid.index(id).unwrap()), id);
        }
        assert_eq!(grid.index(24).unwrap_err(), GridError::UnknownPoint(24));
    }

    #[test]
    fn coordinates_follow_origin_and_spacing() {
        let grid = BodyGrid::new([3, 3, 3], [1.0, -1.0, 0.5], 0.25).unwrap();
        let p = grid.point(grid.linear([2, 0, 1])).unwrap();
        assert_abs_diff_eq!(p.coords, Vec3::new(1.5, -1.0, 0.75), epsilon = 1e-15);
        assert_eq!(p.index, [2, 0, 1]);
    }

    #[test]
    fn interior_margins_trim_faces() {
        let grid = BodyGrid::cube(5, [0.0; 3], 1.0).unwrap();
        assert_eq!(grid.interior(0).len(), 125);
        assert_eq!(grid.interior(1).len(), 27);
        assert_eq!(grid.interior(2).len(), 1);
        assert_eq!(grid.interior(3).len(), 0);
        assert!(grid.is_interior([2, 2, 2], 2));
        assert!(!grid.is_interior([1, 2, 2], 2));
    }

    #[test]
    fn neighbors_respect_boundaries() {
        let grid = BodyGrid::cube(3, [0.0; 3], 1.0).unwrap();
        assert_eq!(grid.neighbor([0, 1, 1], 0, -1), None);
        assert_eq!(grid.neighbor([0, 1, 1], 0, 1), Some([1, 1, 1]));
        assert_eq!(grid.neighbor([2, 1, 1], 0, 1), None);
        assert_eq!(grid.neighbor([1, 1, 0], 2, 2), Some([1, 1, 2]));
    }

    #[test]
    fn grid_serializes_and_iterates_in_id_order() {
        let grid = BodyGrid::cube(2, [0.0; 3], 1.0).unwrap();
        let text = serde_json::to_string(&grid).unwrap();
        let back: BodyGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, grid);
        let ids: Vec<_> = grid.points().map(|p| p.id).collect();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
    }
}
