//! Levenberg–Marquardt fit of a five-source point-light mixture to an
//! observed shading image over a fixed shape.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lighting::{PointLight, PointLightMix, SOURCE_COUNT};
use crate::raster::{HeightField, LinearImage, Mask, NormalField};

pub const PARAMETER_COUNT: usize = 4 * SOURCE_COUNT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_decrease: f64,
    /// Forward-difference step relative to `max(|θ|, 1)`.
    pub fd_step: f64,
    pub initial_damping: f64,
    /// Side sources are lifted this far toward the viewer, in degrees.
    pub side_elevation: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_decrease: 1e-6,
            fd_step: 1e-4,
            initial_damping: 1e-3,
            side_elevation: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub fitted: PointLightMix,
    pub initial_rmse: f64,
    pub final_rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared residuals: the initial value, then one entry per
    /// iteration.
    pub cost_history: Vec<f64>,
}

/// Surface samples the fit runs over.
struct Samples {
    points: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    target: Vec<f64>,
}

impl Samples {
    fn new(shading: &LinearImage, height: &HeightField, normals: &NormalField, mask: &Mask) -> Result<Self> {
        let dims = mask.dims();
        if shading.dims() != dims || height.dims() != dims || normals.dims() != dims {
            return Err(Error::mismatch("shading, height, normals and mask differ in size"));
        }
        shading.require_channels(1, "shading")?;
        let mut s = Samples {
            points: Vec::new(),
            normals: Vec::new(),
            target: Vec::new(),
        };
        for i in mask.pixels() {
            let (x, y) = dims.coords(i);
            s.points.push([x as f64, y as f64, height.get(i)]);
            s.normals.push(normals.get(i));
            s.target.push(shading.get(i, 0));
        }
        Ok(s)
    }

    /// Unsnapped mixture shading at every sample, or `None` if a light sits
    /// on a sample.
    fn render(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let out = exec::map_indexed(self.points.len(), |k| {
            let q = self.points[k];
            let n = self.normals[k];
            let mut s = 0.0;
            for l in theta.chunks_exact(4) {
                let d = [l[0] - q[0], l[1] - q[1], l[2] - q[2]];
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if len < 1e-6 {
                    return f64::NAN;
                }
                s += l[3] * l[3] * ((n[0] * d[0] + n[1] * d[1] + n[2] * d[2]) / len).max(0.0);
            }
            s
        });
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    fn residuals(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let f = self.render(theta)?;
        Some(self.target.iter().zip(&f).map(|(s, v)| s - v).collect())
    }
}

fn cost(r: &[f64]) -> f64 {
    exec::dot(r, r)
}

fn to_theta(mix: &PointLightMix) -> Vec<f64> {
    mix.sources
        .iter()
        .flat_map(|s| [s.position[0], s.position[1], s.position[2], s.intensity.sqrt()])
        .collect()
}

fn from_theta(theta: &[f64]) -> Result<PointLightMix> {
    let mut sources = [PointLight {
        position: [0.0; 3],
        intensity: 0.0,
    }; SOURCE_COUNT];
    for (s, l) in sources.iter_mut().zip(theta.chunks_exact(4)) {
        *s = PointLight {
            position: [l[0], l[1], l[2]],
            intensity: l[3] * l[3],
        };
    }
    PointLightMix::new(sources)
}

/// Frontal source plus four side sources lifted toward the viewer, all at
/// twice the larger image side from the 3D centroid of the surface. Each
/// intensity gives a flat facing surface a fifth of the mean shading.
pub fn default_init(
    shading: &LinearImage,
    height: &HeightField,
    mask: &Mask,
    side_elevation_deg: f64,
) -> Result<PointLightMix> {
    let (cx, cy) = mask
        .centroid()
        .ok_or_else(|| Error::DegenerateMask("empty mask".into()))?;
    let area = mask.area() as f64;
    let cz = mask.pixels().map(|i| height.get(i)).sum::<f64>() / area;
    let mean_s = mask.pixels().map(|i| shading.get(i, 0)).sum::<f64>() / area;
    let dist = 2.0 * mask.width().max(mask.height()) as f64;
    let (c, s) = {
        let e = side_elevation_deg.to_radians();
        (e.cos(), e.sin())
    };
    let dirs = [[0.0, 0.0, 1.0], [c, 0.0, s], [-c, 0.0, s], [0.0, c, s], [0.0, -c, s]];
    let sources = dirs.map(|d| PointLight {
        position: [cx + dist * d[0], cy + dist * d[1], cz + dist * d[2]],
        intensity: (mean_s / SOURCE_COUNT as f64 / d[2]).max(0.0),
    });
    PointLightMix::new(sources)
}

/// Fits the mixture to `shading` over Ω. Intensities are optimized through
/// their square roots so they stay non-negative; only improving steps are
/// accepted.
pub fn fit_lights(
    shading: &LinearImage,
    height: &HeightField,
    normals: &NormalField,
    mask: &Mask,
    init: Option<&PointLightMix>,
    params: &FitParams,
) -> Result<FitReport> {
    let samples = Samples::new(shading, height, normals, mask)?;
    if samples.target.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("shading must be non-negative on the mask".into()));
    }
    let init = match init {
        Some(m) => *m,
        None => default_init(shading, height, mask, params.side_elevation)?,
    };
    let n = samples.target.len() as f64;
    if samples.target.iter().all(|&v| v == 0.0) {
        let mut s = init.sources;
        s.iter_mut().for_each(|l| l.intensity = 0.0);
        return Ok(FitReport {
            fitted: PointLightMix::new(s)?,
            initial_rmse: 0.0,
            final_rmse: 0.0,
            iterations: 0,
            converged: true,
            cost_history: vec![0.0],
        });
    }

    let mut theta = to_theta(&init);
    let mut r = samples
        .residuals(&theta)
        .ok_or_else(|| Error::InvalidInput("initial light coincides with the surface".into()))?;
    let mut c = cost(&r);
    let initial_rmse = (c / n).sqrt();
    let mut history = vec![c];
    let mut damping = params.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        // Jacobian of the residual, one forward-difference column per parameter.
        let cols: Vec<Option<Vec<f64>>> = exec::map_indexed(PARAMETER_COUNT, |p| {
            let h = params.fd_step * theta[p].abs().max(1.0);
            let mut t = theta.clone();
            t[p] += h;
            let rp = samples.residuals(&t)?;
            Some(rp.iter().zip(&r).map(|(a, b)| (a - b) / h).collect())
        });
        let mut jtj = DMatrix::<f64>::zeros(PARAMETER_COUNT, PARAMETER_COUNT);
        let mut jtr = DVector::<f64>::zeros(PARAMETER_COUNT);
        for a in 0..PARAMETER_COUNT {
            let Some(ca) = &cols[a] else { continue };
            jtr[a] = -exec::dot(ca, &r);
            for b in a..PARAMETER_COUNT {
                if let Some(cb) = &cols[b] {
                    let v = exec::dot(ca, cb);
                    jtj[(a, b)] = v;
                    jtj[(b, a)] = v;
                }
            }
        }
        if jtr.iter().all(|&g| g == 0.0) {
            converged = true;
            history.push(c);
            break;
        }
        // Damped steps until one improves the cost.
        let mut accepted = None;
        while damping < 1e16 {
            let mut a = jtj.clone();
            for k in 0..PARAMETER_COUNT {
                a[(k, k)] += damping * jtj[(k, k)].max(1e-12);
            }
            let step = a.cholesky().map(|ch| ch.solve(&jtr));
            if let Some(step) = step {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
                if let Some(rt) = samples.residuals(&trial) {
                    let ct = cost(&rt);
                    if ct < c {
                        accepted = Some((trial, rt, ct));
                        damping = (damping / 3.0).max(1e-12);
                        break;
                    }
                }
            }
            damping *= 4.0;
        }
        let Some((t, rt, ct)) = accepted else {
            converged = true;
            history.push(c);
            break;
        };
        let decrease = (c - ct) / c;
        theta = t;
        r = rt;
        c = ct;
        history.push(c);
        if decrease < params.relative_decrease {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        fitted: from_theta(&theta)?,
        initial_rmse,
        final_rmse: (c / n).sqrt(),
        iterations,
        converged,
        cost_history: history,
    })
}
