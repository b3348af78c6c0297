//! Contour normals and their interpolation over the object region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::boundary_of;
use crate::raster::{Dims, Mask, NormalField};
use crate::solver::GridLaplacian;

/// Blur applied to the mask indicator before differentiating it.
pub const BOUNDARY_SIGMA: f64 = 1.5;

/// Outward in-plane normals on ∂Ω, lifted to `(n_x, n_y, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConstraints {
    pub pixels: Vec<usize>,
    pub normals: Vec<[f64; 3]>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur with zeros beyond the frame.
fn blur(dims: Dims, src: &[f64], sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (dims.width as isize, dims.height as isize);
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let xx = x + t as isize - r;
                if xx >= 0 && xx < w {
                    acc += kv * src[(y * w + xx) as usize];
                }
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let yy = y + t as isize - r;
                if yy >= 0 && yy < h {
                    acc += kv * tmp[(yy * w + x) as usize];
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

fn frame_normal(dims: Dims, i: usize) -> Option<[f64; 2]> {
    let (x, y) = dims.coords(i);
    let mut n = [0.0f64, 0.0];
    if x == 0 {
        n[0] -= 1.0;
    }
    if x + 1 == dims.width {
        n[0] += 1.0;
    }
    if y == 0 {
        n[1] -= 1.0;
    }
    if y + 1 == dims.height {
        n[1] += 1.0;
    }
    let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
    (len > 0.0).then(|| [n[0] / len, n[1] / len])
}

/// Outward contour normals from the negated gradient of the blurred mask
/// indicator. Pixels on the image frame take the outward frame normal.
pub fn boundary_normals(mask: &Mask) -> BoundaryConstraints {
    let dims = mask.dims();
    let indicator: Vec<f64> = (0..dims.len())
        .map(|i| if mask.inside(i) { 1.0 } else { 0.0 })
        .collect();
    let b = blur(dims, &indicator, BOUNDARY_SIGMA);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= dims.width as isize || y >= dims.height as isize {
            0.0
        } else {
            b[dims.index(x as usize, y as usize)]
        }
    };
    let pixels = boundary_of(mask);
    let mut dirs: Vec<Option<[f64; 2]>> = pixels
        .iter()
        .map(|&i| {
            if let Some(n) = frame_normal(dims, i) {
                return Some(n);
            }
            let (x, y) = dims.coords(i);
            let (x, y) = (x as isize, y as isize);
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let len = (gx * gx + gy * gy).sqrt();
            (len > 1e-9).then(|| [-gx / len, -gy / len])
        })
        .collect();

    // Degenerate gradients borrow the mean of nearby boundary normals.
    let pos: Vec<(isize, isize)> = pixels
        .iter()
        .map(|&i| {
            let (x, y) = dims.coords(i);
            (x as isize, y as isize)
        })
        .collect();
    for radius in 1..=8isize {
        let missing: Vec<usize> = (0..pixels.len()).filter(|&k| dirs[k].is_none()).collect();
        if missing.is_empty() {
            break;
        }
        let snapshot = dirs.clone();
        for k in missing {
            let mut acc = [0.0, 0.0];
            for (m, d) in snapshot.iter().enumerate() {
                if let Some(d) = d {
                    if (pos[m].0 - pos[k].0).abs() <= radius && (pos[m].1 - pos[k].1).abs() <= radius {
                        acc[0] += d[0];
                        acc[1] += d[1];
                    }
                }
            }
            let len = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
            if len > 1e-12 {
                dirs[k] = Some([acc[0] / len, acc[1] / len]);
            }
        }
    }
    // Last resort for isolated specks: point away from the centroid.
    let (cx, cy) = mask.centroid().unwrap_or((0.0, 0.0));
    let normals = pixels
        .iter()
        .zip(dirs)
        .map(|(&i, d)| {
            let [nx, ny] = d.unwrap_or_else(|| {
                let (x, y) = dims.coords(i);
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let len = (dx * dx + dy * dy).sqrt();
                if len > 0.0 {
                    [dx / len, dy / len]
                } else {
                    [1.0, 0.0]
                }
            });
            [nx, ny, 0.0]
        })
        .collect();
    BoundaryConstraints { pixels, normals }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolationParams {
    /// Proximal weight of the smoothing step; raised when a step would
    /// increase the energy.
    pub screen: f64,
    pub max_rounds: usize,
    /// Stop once no normal component moves by more than this in a round.
    pub change_tolerance: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            screen: 1.0,
            max_rounds: 500,
            change_tolerance: 1e-4,
            cg_tolerance: 1e-8,
            cg_max_iterations: 2_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationReport {
    pub rounds: usize,
    pub converged: bool,
    /// Discretized contour-normal energy: the initial value, then one entry
    /// per accepted round.
    pub energies: Vec<f64>,
}

/// `Σ_edges ‖N_i − N_j‖² + Σ_Ω (‖N‖² − 1)²` over 4-neighbour edges in Ω.
pub fn normal_energy(mask: &Mask, normals: &[[f64; 3]]) -> f64 {
    let dims = mask.dims();
    let mut e = 0.0;
    for i in mask.pixels() {
        let (x, y) = dims.coords(i);
        let n = normals[i];
        let len2 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
        e += (len2 - 1.0).powi(2);
        let mut edge = |j: usize| {
            let m = normals[j];
            e += (n[0] - m[0]).powi(2) + (n[1] - m[1]).powi(2) + (n[2] - m[2]).powi(2);
        };
        if x + 1 < dims.width && mask.inside(i + 1) {
            edge(i + 1);
        }
        if y + 1 < dims.height && mask.inside(i + dims.width) {
            edge(i + dims.width);
        }
    }
    e
}

fn normalize_upper(v: [f64; 3]) -> Option<[f64; 3]> {
    let v = [v[0], v[1], v[2].max(0.0)];
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (len > 1e-12).then(|| [v[0] / len, v[1] / len, v[2] / len])
}

/// Fills Ω with unit normals that match the contour constraints exactly and
/// minimize the contour-normal energy.
///
/// Starts from a membrane interpolation of the in-plane components with
/// `N_z = sqrt(1 − N_x² − N_y²)`, then alternates a screened smoothing
/// solve (constraints held fixed) with per-pixel renormalization onto the
/// upper hemisphere. A round that would raise the energy is retried with a
/// stronger screen, so the recorded energies never increase.
pub fn interpolate_normals(
    mask: &Mask,
    constraints: &BoundaryConstraints,
    params: &InterpolationParams,
) -> Result<(NormalField, InterpolationReport)> {
    let dims = mask.dims();
    let mut fixed = vec![None; dims.len()];
    for (&i, &n) in constraints.pixels.iter().zip(&constraints.normals) {
        if !mask.inside(i) {
            return Err(Error::InvalidInput(format!("constraint pixel {i} is outside the mask")));
        }
        fixed[i] = Some(n);
    }
    let lap = GridLaplacian::new(mask, |i| fixed[i].is_none());
    let mut normals: Vec<[f64; 3]> = (0..dims.len())
        .map(|i| fixed[i].unwrap_or([0.0; 3]))
        .collect();
    if lap.is_empty() {
        let e = normal_energy(mask, &normals);
        return Ok((
            NormalField::new(dims, normals)?,
            InterpolationReport {
                rounds: 0,
                converged: true,
                energies: vec![e],
            },
        ));
    }

    // Dirichlet contributions of the fixed pixels, per component.
    let mut dirichlet = vec![vec![0.0; lap.len()]; 3];
    for (v, &i) in lap.pixels().iter().enumerate() {
        for j in dims.neighbors4(i) {
            if let Some(n) = fixed[j] {
                for c in 0..3 {
                    dirichlet[c][v] += n[c];
                }
            }
        }
    }

    // Membrane initialization of the in-plane components.
    let mut comps = vec![vec![0.0; lap.len()]; 3];
    for c in 0..2 {
        lap.solve(0.0, &dirichlet[c], &mut comps[c], params.cg_tolerance, params.cg_max_iterations);
    }
    for (v, &i) in lap.pixels().iter().enumerate() {
        let (nx, ny) = (comps[0][v], comps[1][v]);
        let nz = (1.0 - nx * nx - ny * ny).max(0.0).sqrt();
        normals[i] = normalize_upper([nx, ny, nz]).unwrap_or([0.0, 0.0, 1.0]);
    }

    let mut energy = normal_energy(mask, &normals);
    let mut report = InterpolationReport {
        rounds: 0,
        converged: false,
        energies: vec![energy],
    };
    let mut screen = params.screen;
    while report.rounds < params.max_rounds {
        let mut accepted = None;
        for _ in 0..24 {
            let mut trial = normals.clone();
            let mut sol = vec![vec![0.0; lap.len()]; 3];
            for c in 0..3 {
                let rhs: Vec<f64> = lap
                    .pixels()
                    .iter()
                    .enumerate()
                    .map(|(v, &i)| screen * normals[i][c] + dirichlet[c][v])
                    .collect();
                for (v, &i) in lap.pixels().iter().enumerate() {
                    sol[c][v] = normals[i][c];
                }
                let rep = lap.solve(screen, &rhs, &mut sol[c], params.cg_tolerance, params.cg_max_iterations);
                if !rep.relative_residual.is_finite() {
                    return Err(Error::Solver("normal smoothing diverged".into()));
                }
            }
            for (v, &i) in lap.pixels().iter().enumerate() {
                trial[i] = normalize_upper([sol[0][v], sol[1][v], sol[2][v]]).unwrap_or(normals[i]);
            }
            let e = normal_energy(mask, &trial);
            if e <= energy {
                accepted = Some((trial, e));
                break;
            }
            screen *= 4.0;
        }
        let Some((trial, e)) = accepted else {
            // No descent left at any step size: stationary to working precision.
            report.converged = true;
            break;
        };
        let change = lap
            .pixels()
            .iter()
            .map(|&i| {
                (0..3)
                    .map(|c| (trial[i][c] - normals[i][c]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        normals = trial;
        energy = e;
        report.rounds += 1;
        report.energies.push(e);
        screen = (screen * 0.5).max(params.screen);
        if change < params.change_tolerance {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        log::warn!("normal interpolation stopped after {} rounds", report.rounds);
    }
    Ok((NormalField::new(dims, normals)?, report))
}

/// Normals of a height field by finite differences inside Ω: central
/// differences where both neighbours are in Ω, one-sided otherwise.
pub fn normals_from_height(height: &crate::raster::HeightField, mask: &Mask) -> Result<NormalField> {
    let dims = mask.dims();
    if height.dims() != dims {
        return Err(Error::mismatch("height field and mask differ in size"));
    }
    let z = height.as_slice();
    let slope = |i: usize, prev: Option<usize>, next: Option<usize>| -> f64 {
        let prev = prev.filter(|&j| mask.inside(j));
        let next = next.filter(|&j| mask.inside(j));
        match (prev, next) {
            (Some(p), Some(n)) => 0.5 * (z[n] - z[p]),
            (Some(p), None) => z[i] - z[p],
            (None, Some(n)) => z[n] - z[i],
            (None, None) => 0.0,
        }
    };
    let normals = (0..dims.len())
        .map(|i| {
            if !mask.inside(i) {
                return [0.0; 3];
            }
            let (x, y) = dims.coords(i);
            let dx = slope(
                i,
                (x > 0).then(|| i - 1),
                (x + 1 < dims.width).then(|| i + 1),
            );
            let dy = slope(
                i,
                (y > 0).then(|| i - dims.width),
                (y + 1 < dims.height).then(|| i + dims.width),
            );
            let len = (dx * dx + dy * dy + 1.0).sqrt();
            [-dx / len, -dy / len, 1.0 / len]
        })
        .collect();
    NormalField::new(dims, normals)
}

/// Convenience: contour constraints followed by interpolation.
pub fn contour_normals(mask: &Mask, params: &InterpolationParams) -> Result<(NormalField, InterpolationReport)> {
    let c = boundary_normals(mask);
    interpolate_normals(mask, &c, params)
}
