//! Color Retinex: split a fragment into albedo and shading, `I = A · S`.
//!
//! Neighbouring pixels whose chromaticities differ by more than a threshold
//! are treated as reflectance edges; all other log-luminance differences are
//! attributed to shading and integrated with a Neumann Poisson solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{snap, LinearImage, Mask};
use crate::solver::GridLaplacian;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetinexParams {
    /// L2 distance between unit-norm RGB chromaticities above which an edge
    /// is a reflectance edge.
    pub chroma_threshold: f64,
    /// Samples are floored here before taking logarithms.
    pub floor: f64,
    /// The shading is scaled so this percentile over Ω equals 1.
    pub gauge_percentile: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RetinexParams {
    fn default() -> Self {
        Self {
            chroma_threshold: 0.075,
            floor: 1e-4,
            gauge_percentile: 0.95,
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Albedo (3 channels) and shading (1 channel), zero outside Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicPair {
    pub albedo: LinearImage,
    pub shading: LinearImage,
}

/// A 4-neighbour edge `from → to` inside Ω (`to` is right of or below `from`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

fn interior_edges(mask: &Mask) -> Vec<Edge> {
    let dims = mask.dims();
    let mut edges = Vec::new();
    for i in mask.pixels() {
        let (x, y) = dims.coords(i);
        if x + 1 < dims.width && mask.inside(i + 1) {
            edges.push(Edge { from: i, to: i + 1 });
        }
        if y + 1 < dims.height && mask.inside(i + dims.width) {
            edges.push(Edge {
                from: i,
                to: i + dims.width,
            });
        }
    }
    edges
}

fn chromaticity(p: &[f64], floor: f64) -> [f64; 3] {
    let v = [p[0].max(floor), p[1].max(floor), p[2].max(floor)];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn log_luminance(p: &[f64], floor: f64) -> f64 {
    ((p[0].max(floor) + p[1].max(floor) + p[2].max(floor)) / 3.0).ln()
}

fn validate(img: &LinearImage, mask: &Mask) -> Result<()> {
    img.require_channels(3, "retinex input")?;
    img.require_dims(mask.dims(), "retinex input")?;
    if mask.area() == 0 {
        return Err(Error::DegenerateMask("empty object region".into()));
    }
    let mut any_positive = false;
    for i in mask.pixels() {
        for &v in img.pixel(i) {
            if v < 0.0 {
                return Err(Error::InvalidInput("non-positive image: negative sample".into()));
            }
            any_positive |= v > 0.0;
        }
    }
    if !any_positive {
        return Err(Error::InvalidInput("non-positive image: all zero on the object".into()));
    }
    Ok(())
}

/// Edges of Ω classified as reflectance (albedo) edges.
pub fn albedo_edges(img: &LinearImage, mask: &Mask, params: &RetinexParams) -> Result<Vec<Edge>> {
    validate(img, mask)?;
    Ok(interior_edges(mask)
        .into_iter()
        .filter(|e| is_albedo_edge(img, *e, params))
        .collect())
}

fn is_albedo_edge(img: &LinearImage, e: Edge, params: &RetinexParams) -> bool {
    let a = chromaticity(img.pixel(e.from), params.floor);
    let b = chromaticity(img.pixel(e.to), params.floor);
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    d > params.chroma_threshold
}

fn percentile(mut values: Vec<f64>, q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// Decomposes `img` over `mask` into albedo and shading.
pub fn color_retinex(img: &LinearImage, mask: &Mask, params: &RetinexParams) -> Result<IntrinsicPair> {
    validate(img, mask)?;
    let dims = mask.dims();
    let lap = GridLaplacian::new(mask, |_| true);
    let mut rhs = vec![0.0; lap.len()];
    for e in interior_edges(mask) {
        if is_albedo_edge(img, e, params) {
            continue;
        }
        let g = log_luminance(img.pixel(e.to), params.floor) - log_luminance(img.pixel(e.from), params.floor);
        rhs[lap.var(e.to).unwrap()] += g;
        rhs[lap.var(e.from).unwrap()] -= g;
    }
    // The Neumann system is singular; keep the right-hand side in its range.
    let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
    rhs.iter_mut().for_each(|v| *v -= mean);
    let mut log_s = vec![0.0; lap.len()];
    let report = lap.solve(0.0, &rhs, &mut log_s, params.tolerance, params.max_iterations);
    if !report.converged {
        log::warn!(
            "retinex poisson solve stopped at relative residual {:.3e}",
            report.relative_residual
        );
    }
    let raw: Vec<f64> = log_s.iter().map(|v| v.exp()).collect();
    let gauge = percentile(raw.clone(), params.gauge_percentile);
    if !(gauge > 0.0 && gauge.is_finite()) {
        return Err(Error::Solver("retinex gauge is not positive".into()));
    }
    let mut shading = LinearImage::zeros(dims.width, dims.height, 1)?;
    let mut albedo = LinearImage::zeros(dims.width, dims.height, 3)?;
    for (v, &i) in lap.pixels().iter().enumerate() {
        let s = snap(raw[v] / gauge);
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::Solver("shading underflowed".into()));
        }
        shading.set(i, 0, s);
        for c in 0..3 {
            albedo.set(i, c, snap(img.get(i, c) / s));
        }
    }
    Ok(IntrinsicPair { albedo, shading })
}
