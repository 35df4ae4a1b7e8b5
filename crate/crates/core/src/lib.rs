//! Material symmetry, uniformity, and homogeneity analysis for simple
//! elastic bodies.
//!
//! The crate takes a constitutive description of a body (an energy density
//! per material point), recovers each point's symmetry group by numerical
//! search, classifies the points into solid/fluid/fluid-crystal kinds with
//! undistorted reference frames, searches for the material isomorphisms
//! that tie points together, and decides homogeneity questions through
//! intrinsic metrics, volume forms, and finite-difference curvature.
//!
//! Module map:
//! - [`smallmat`]: 3x3 kernels (polar decomposition, matrix predicates,
//!   frame arrows).
//! - [`groupoid`]: exact finite groupoids with composition tables, and
//!   sampled frame-arrow groupoids with orthogonal/unimodular reductions.
//! - [`constitutive`]: energy models and the symmetry/isomorphism
//!   residuals built from them.
//! - [`classify`]: per-point symmetry sampling and classification into
//!   material kinds with undistorted frames.
//! - [`material`]: body-level searches (uniformity, unisymmetry) and the
//!   groupoids they produce.
//! - [`geometry`]: grids, intrinsic metric/volume fields, Christoffel
//!   symbols, curvature, and the homogeneity verdicts.
//! - [`pipeline`]: the end-to-end body analysis used by the command-line
//!   tool, with deterministic report output.

pub mod classify;
pub mod constitutive;
pub mod geometry;
pub mod groupoid;
pub mod material;
pub mod optim;
pub mod pipeline;
pub mod randmat;
pub mod smallmat;

pub use smallmat::{FrameArrow, Mat3, MatError, PointId, PolarFactors, Vec3};
