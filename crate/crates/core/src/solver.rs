//! Conjugate gradient and the masked grid Laplacian it is used with.

use crate::exec;
use crate::raster::{Dims, Mask};

/// Outcome of a conjugate-gradient run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive (semi-)definite `A`, starting
/// from the contents of `x`. `apply(v, out)` must write `A v` into `out`.
/// Stops once `‖b − A x‖ ≤ tol · ‖b‖` or after `max_iter` iterations.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgReport
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    assert_eq!(x.len(), n);
    let b_norm = exec::dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rs = exec::dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter && rs.sqrt() > tol * b_norm {
        apply(&p, &mut ap);
        let pap = exec::dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = exec::dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iterations += 1;
    }
    let relative_residual = rs.sqrt() / b_norm;
    CgReport {
        iterations,
        relative_residual,
        converged: relative_residual <= tol,
    }
}

const NONE: u32 = u32::MAX;

/// Graph Laplacian of the 4-neighbour grid restricted to Ω.
///
/// Pixels of Ω are either free variables or held fixed (Dirichlet). Every
/// edge joins two Ω pixels; edges to fixed pixels contribute to the diagonal
/// only, so their values belong on the right-hand side.
#[derive(Clone, Debug)]
pub struct GridLaplacian {
    dims: Dims,
    var_of: Vec<u32>,
    pixel_of: Vec<usize>,
    neighbors: Vec<[u32; 4]>,
    degree: Vec<f64>,
}

impl GridLaplacian {
    /// `free(i)` selects the variables among the pixels of Ω.
    pub fn new(mask: &Mask, free: impl Fn(usize) -> bool) -> Self {
        let dims = mask.dims();
        let mut var_of = vec![NONE; dims.len()];
        let mut pixel_of = Vec::new();
        for i in mask.pixels() {
            if free(i) {
                var_of[i] = pixel_of.len() as u32;
                pixel_of.push(i);
            }
        }
        let mut neighbors = Vec::with_capacity(pixel_of.len());
        let mut degree = Vec::with_capacity(pixel_of.len());
        for &i in &pixel_of {
            let mut nb = [NONE; 4];
            let mut deg = 0.0;
            for (k, j) in dims.neighbors4(i).enumerate() {
                if mask.inside(j) {
                    deg += 1.0;
                    nb[k] = var_of[j];
                }
            }
            neighbors.push(nb);
            degree.push(deg);
        }
        Self {
            dims,
            var_of,
            pixel_of,
            neighbors,
            degree,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.pixel_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_of.is_empty()
    }

    /// Variable index of pixel `i`, if it is free.
    #[inline]
    pub fn var(&self, pixel: usize) -> Option<usize> {
        let v = self.var_of[pixel];
        (v != NONE).then_some(v as usize)
    }

    pub fn pixels(&self) -> &[usize] {
        &self.pixel_of
    }

    /// `out = (screen · I + L) x`.
    pub fn apply(&self, screen: f64, x: &[f64], out: &mut [f64]) {
        exec::for_each_chunk_mut(out, 2048, |ci, chunk| {
            let base = ci * 2048;
            for (k, o) in chunk.iter_mut().enumerate() {
                let v = base + k;
                let mut acc = (screen + self.degree[v]) * x[v];
                for &n in &self.neighbors[v] {
                    if n != NONE {
                        acc -= x[n as usize];
                    }
                }
                *o = acc;
            }
        });
    }

    /// Solves `(screen · I + L) x = b` with CG, warm-started from `x`.
    pub fn solve(&self, screen: f64, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgReport {
        conjugate_gradient(|v, out| self.apply(screen, v, out), b, x, tol, max_iter)
    }
}
