//! Discrete differential geometry over gridded bodies: the grid chart
//! itself, metric/frame fields, finite-difference connection and curvature,
//! and the homogeneity verdicts assembled from them.

pub mod curvature;
pub mod fields;
pub mod grid;
pub mod homogeneity;
