//! Finite-difference connection, curvature, and holonomicity over grid
//! fields. Second-order central stencils on interior points only:
//! Christoffel symbols need one margin layer, Riemann two. Boundary
//! one-sided stencils are deliberately not used — they would pollute the
//! max norms the verdicts depend on.

use crate::geometry::fields::{FrameField, GeometryError, MetricField};
use crate::geometry::grid::BodyGrid;
use crate::smallmat::{invert, Mat3, PointId};
use rayon::prelude::*;

/// `gamma[i][j][k] = Γ^i_{jk}`, symmetric in (j, k).
pub type Gamma = [[[f64; 3]; 3]; 3];
/// `riem[i][j][k][l] = R^i_{jkl}`, antisymmetric in (k, l).
pub type Riem = [[[[f64; 3]; 3]; 3]; 3];
/// `c[i][j][k]` with `[e_j, e_k] = c^i_{jk} e_i`, antisymmetric in (j, k).
pub type Brackets = [[[f64; 3]; 3]; 3];

/// Curvature-scale tolerance for finite-difference verdicts on sampled
/// fields: the larger of an absolute floor and the stencil's own `h^2`
/// error scale.
pub fn sampled_field_tol(h: f64) -> f64 {
    (10.0 * h * h).max(1e-10)
}

/// Levi-Civita connection coefficients on the margin-1 interior.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    grid: BodyGrid,
    data: Vec<Option<Gamma>>,
}

impl ChristoffelField {
    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn at(&self, id: PointId) -> Option<&Gamma> {
        self.data.get(id).and_then(|g| g.as_ref())
    }
}

/// Riemann tensor on the margin-2 interior, with per-point and global
/// max-component norms.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    grid: BodyGrid,
    data: Vec<Option<Riem>>,
    norms: Vec<Option<f64>>,
    max_norm: f64,
}

impl CurvatureField {
    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn at(&self, id: PointId) -> Option<&Riem> {
        self.data.get(id).and_then(|r| r.as_ref())
    }

    pub fn norm_at(&self, id: PointId) -> Option<f64> {
        self.norms.get(id).and_then(|n| *n)
    }

    /// Largest |R^i_{jkl}| over the evaluated interior.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    pub fn interior(&self) -> Vec<PointId> {
        self.grid.interior(2)
    }

    /// Fully lowered components `R_{ijkl} = g_im R^m_{jkl}` at one point.
    pub fn lowered_at(&self, metric: &MetricField, id: PointId) -> Result<Option<Riem>, GeometryError> {
        let Some(r) = self.at(id) else {
            return Ok(None);
        };
        let g = metric.at(id)?;
        let mut low = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut s = 0.0;
                        for m in 0..3 {
                            s += g[(i, m)] * r[m][j][k][l];
                        }
                        low[i][j][k][l] = s;
                    }
                }
            }
        }
        Ok(Some(low))
    }
}

/// Frame-bracket structure functions on the margin-1 interior.
#[derive(Debug, Clone)]
pub struct StructureField {
    grid: BodyGrid,
    data: Vec<Option<Brackets>>,
    max_abs: f64,
}

impl StructureField {
    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn at(&self, id: PointId) -> Option<&Brackets> {
        self.data.get(id).and_then(|c| c.as_ref())
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }
}

fn require_interior(grid: &BodyGrid, margin: usize) -> Result<Vec<PointId>, GeometryError> {
    let interior = grid.interior(margin);
    if interior.is_empty() {
        return Err(GeometryError::GridTooSmall {
            dims: grid.dims(),
            needed: 2 * margin + 1,
        });
    }
    Ok(interior)
}

/// Central difference of a per-point matrix along one grid axis.
fn central_mat(
    grid: &BodyGrid,
    get: &impl Fn(PointId) -> Mat3,
    index: [usize; 3],
    axis: usize,
) -> Mat3 {
    let fwd = grid.neighbor(index, axis, 1).expect("interior point");
    let bwd = grid.neighbor(index, axis, -1).expect("interior point");
    (get(grid.linear(fwd)) - get(grid.linear(bwd))) / (2.0 * grid.spacing())
}

/// Levi-Civita symbols `Γ^i_{jk} = ½ g^{il}(∂_j g_{lk} + ∂_k g_{jl} − ∂_l g_{jk})`
/// by second-order central differences, on the margin-1 interior.
pub fn christoffels(metric: &MetricField) -> Result<ChristoffelField, GeometryError> {
    let grid = metric.grid().clone();
    let interior = require_interior(&grid, 1)?;
    let get = |id: PointId| *metric.at_index(grid.index(id).expect("valid id"));

    let computed: Vec<(PointId, Result<Gamma, GeometryError>)> = interior
        .par_iter()
        .map(|&id| {
            let index = grid.index(id).expect("interior id");
            let g = get(id);
            let g_inv = match invert(&g) {
                Ok(m) => m,
                Err(_) => return (id, Err(GeometryError::SingularMetric(id))),
            };
            let dg: Vec<Mat3> = (0..3).map(|a| central_mat(&grid, &get, index, a)).collect();
            let mut gamma = [[[0.0; 3]; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut s = 0.0;
                        for l in 0..3 {
                            s += g_inv[(i, l)]
                                * (dg[j][(l, k)] + dg[k][(j, l)] - dg[l][(j, k)]);
                        }
                        gamma[i][j][k] = 0.5 * s;
                    }
                }
            }
            (id, Ok(gamma))
        })
        .collect();

    let mut data = vec![None; grid.point_count()];
    for (id, gamma) in computed {
        data[id] = Some(gamma?);
    }
    Ok(ChristoffelField { grid, data })
}

/// Riemann tensor
/// `R^i_{jkl} = ∂_k Γ^i_{lj} − ∂_l Γ^i_{kj} + Γ^i_{km}Γ^m_{lj} − Γ^i_{lm}Γ^m_{kj}`
/// on the margin-2 interior. Antisymmetry in the last index pair holds
/// bitwise by construction.
pub fn riemann(metric: &MetricField) -> Result<CurvatureField, GeometryError> {
    let grid = metric.grid().clone();
    let interior = require_interior(&grid, 2)?;
    let gammas = christoffels(metric)?;

    let computed: Vec<(PointId, Riem, f64)> = interior
        .par_iter()
        .map(|&id| {
            let index = grid.index(id).expect("interior id");
            let gamma = gammas.at(id).expect("margin-2 point has margin-1 coefficients");
            // dgamma[a][i][j][k] = ∂_a Γ^i_{jk}
            let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
            for (a, da) in dgamma.iter_mut().enumerate() {
                let fwd = grid.neighbor(index, a, 1).expect("interior");
                let bwd = grid.neighbor(index, a, -1).expect("interior");
                let gf = gammas.at(grid.linear(fwd)).expect("neighbor inside margin-1");
                let gb = gammas.at(grid.linear(bwd)).expect("neighbor inside margin-1");
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            da[i][j][k] =
                                (gf[i][j][k] - gb[i][j][k]) / (2.0 * grid.spacing());
                        }
                    }
                }
            }
            let mut riem = [[[[0.0; 3]; 3]; 3]; 3];
            let mut norm = 0.0_f64;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let mut v = dgamma[k][i][l][j] - dgamma[l][i][k][j];
                            for m in 0..3 {
                                v += gamma[i][k][m] * gamma[m][l][j]
                                    - gamma[i][l][m] * gamma[m][k][j];
                            }
                            riem[i][j][k][l] = v;
                            norm = norm.max(v.abs());
                        }
                    }
                }
            }
            (id, riem, norm)
        })
        .collect();

    let mut data = vec![None; grid.point_count()];
    let mut norms = vec![None; grid.point_count()];
    let mut max_norm = 0.0_f64;
    for (id, riem, norm) in computed {
        data[id] = Some(riem);
        norms[id] = Some(norm);
        max_norm = max_norm.max(norm);
    }
    Ok(CurvatureField { grid, data, norms, max_norm })
}

/// The metric is flat to tolerance: max Riemann component norm at or
/// below `tol`. This is the integrability test for the orthogonal
/// structure a solid metric defines.
pub fn is_relaxable(metric: &MetricField, tol: f64) -> Result<bool, GeometryError> {
    Ok(riemann(metric)?.max_norm() <= tol)
}

/// Structure functions of the frame field: `[e_j, e_k] = c^i_{jk} e_i`
/// with the bracket expanded by central differences on the margin-1
/// interior. The frame is holonomic (a coordinate frame up to constant
/// maps) exactly when all of them vanish.
pub fn structure_functions(frames: &FrameField) -> Result<StructureField, GeometryError> {
    let grid = frames.grid().clone();
    let interior = require_interior(&grid, 1)?;
    let get = |id: PointId| *frames.frame_at(grid.index(id).expect("valid id"));

    let computed: Vec<(PointId, Result<Brackets, GeometryError>)> = interior
        .par_iter()
        .map(|&id| {
            let index = grid.index(id).expect("interior id");
            let sigma = get(id);
            let sigma_inv = match invert(&sigma) {
                Ok(m) => m,
                Err(_) => return (id, Err(GeometryError::SingularFrame(id))),
            };
            // dsig[b] holds ∂_b of the frame matrix; column k is ∂_b e_k.
            let dsig: Vec<Mat3> = (0..3).map(|b| central_mat(&grid, &get, index, b)).collect();
            let mut c = [[[0.0; 3]; 3]; 3];
            for j in 0..3 {
                for k in 0..3 {
                    if j == k {
                        continue;
                    }
                    let mut w = crate::smallmat::Vec3::zeros();
                    for comp in 0..3 {
                        let mut v = 0.0;
                        for b in 0..3 {
                            v += sigma[(b, j)] * dsig[b][(comp, k)]
                                - sigma[(b, k)] * dsig[b][(comp, j)];
                        }
                        w[comp] = v;
                    }
                    let coeffs = sigma_inv * w;
                    for i in 0..3 {
                        c[i][j][k] = coeffs[i];
                    }
                }
            }
            (id, Ok(c))
        })
        .collect();

    let mut data = vec![None; grid.point_count()];
    let mut max_abs = 0.0_f64;
    for (id, c) in computed {
        let c = c?;
        for plane in &c {
            for row in plane {
                for &v in row {
                    max_abs = max_abs.max(v.abs());
                }
            }
        }
        data[id] = Some(c);
    }
    Ok(StructureField { grid, data, max_abs })
}
