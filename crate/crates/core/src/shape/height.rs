//! Height from normals by a Dirichlet least-squares solve.

use crate::error::{Error, Result};
use crate::mask::is_boundary;
use crate::raster::{HeightField, Mask, NormalField};
use crate::solver::GridLaplacian;

pub const DEFAULT_EPSILON: f64 = 0.01;
const CG_TOLERANCE: f64 = 1e-8;

/// Gradient targets `(p, q) = (N_x, N_y) / max(ε, N_z)` per pixel.
fn slopes(normals: &NormalField, eps: f64) -> Vec<(f64, f64)> {
    normals
        .as_slice()
        .iter()
        .map(|n| {
            let d = n[2].max(eps);
            (n[0] / d, n[1] / d)
        })
        .collect()
}

/// Directed grid edges `(from, to, target)` between Ω pixels, where the
/// forward difference `Z_to − Z_from` should equal `−target`. Each target is
/// the mean of the slopes at the two endpoints.
pub(crate) fn height_edges(normals: &NormalField, mask: &Mask, eps: f64) -> Vec<(usize, usize, f64)> {
    let dims = mask.dims();
    let s = slopes(normals, eps);
    let mut edges = Vec::new();
    for i in mask.pixels() {
        let (x, y) = dims.coords(i);
        if x + 1 < dims.width && mask.inside(i + 1) {
            edges.push((i, i + 1, 0.5 * (s[i].0 + s[i + 1].0)));
        }
        if y + 1 < dims.height && mask.inside(i + dims.width) {
            let j = i + dims.width;
            edges.push((i, j, 0.5 * (s[i].1 + s[j].1)));
        }
    }
    edges
}

/// Least-squares height with `Z = 0` held on ∂Ω, solved by conjugate
/// gradient and clamped at zero from below.
pub fn reconstruct_height(normals: &NormalField, mask: &Mask, eps: f64) -> Result<HeightField> {
    let dims = mask.dims();
    if normals.dims() != dims {
        return Err(Error::mismatch("normal field and mask differ in size"));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    let lap = GridLaplacian::new(mask, |i| !is_boundary(mask, i));
    let mut z = vec![0.0; dims.len()];
    if lap.is_empty() {
        return HeightField::new(dims, z);
    }
    let mut b = vec![0.0; lap.len()];
    for (from, to, t) in height_edges(normals, mask, eps) {
        if let Some(v) = lap.var(from) {
            b[v] += t;
        }
        if let Some(v) = lap.var(to) {
            b[v] -= t;
        }
    }
    let mut x = vec![0.0; lap.len()];
    let rep = lap.solve(0.0, &b, &mut x, CG_TOLERANCE, 20 * lap.len().max(500));
    if !rep.relative_residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("height solve diverged".into()));
    }
    if !rep.converged {
        log::warn!(
            "height solve stopped at relative residual {:.3e}",
            rep.relative_residual
        );
    }
    for (v, &i) in lap.pixels().iter().enumerate() {
        z[i] = x[v].max(0.0);
    }
    HeightField::new(dims, z)
}
