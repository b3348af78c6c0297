//! Synthetic ground truth: bumpy domes with piecewise-constant albedo, and
//! a corpus of smooth shading images for dictionary training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lighting::{shade_sh, Sh9, SH_COUNT};
use crate::raster::{snap, HeightField, LinearImage, Mask, NormalField};
use crate::shape::{contour_normals, normals_from_height, reconstruct_height, InterpolationParams, DEFAULT_EPSILON};

/// Smallest accepted object image side.
pub const MIN_SIZE: usize = 64;

/// One sinusoidal bump term `a · sin(ω · (x, y) + φ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub frequency: [f64; 2],
    pub phase: f64,
}

/// A dome of radius `0.4 · size` modulated by `1 + Σ bumps`, with analytic
/// normals and a three-colour Voronoi albedo.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticObject {
    pub seed: u64,
    pub albedo: LinearImage,
    pub height: HeightField,
    pub normals: NormalField,
    pub mask: Mask,
    pub bumps: Vec<Bump>,
}

impl SyntheticObject {
    /// `A ⊙ shade_sh(N, L)` on Ω.
    pub fn render(&self, light: &Sh9) -> Result<LinearImage> {
        let s = shade_sh(&self.normals, &self.mask, light)?;
        let dims = self.mask.dims();
        let data = (0..dims.len())
            .flat_map(|i| {
                let v = s.get(i, 0);
                (0..3).map(move |c| (i, c, v))
            })
            .map(|(i, c, v)| snap(self.albedo.get(i, c) * v))
            .collect();
        LinearImage::from_vec(dims.width, dims.height, 3, data)
    }

    /// The light the object's fragment is photographed under.
    pub fn capture_light(&self) -> Sh9 {
        capture_light(self.seed)
    }
}

/// Capture light of object `seed`: a constant term plus a moderate
/// directional component from the upper hemisphere.
pub fn capture_light(seed: u64) -> Sh9 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_11fe);
    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let elevation = rng.gen_range(20.0f64..50.0).to_radians();
    let d = [elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin()];
    let mut c = [0.0; SH_COUNT];
    c[0] = 1.0;
    c[1] = 0.6 * d[1];
    c[2] = 0.6 * d[2];
    c[3] = 0.6 * d[0];
    Sh9::new(c).expect("finite coefficients")
}

/// Random monochrome SH light: `c0 ∈ [0.5, 1.5]`, the rest in `[−0.3, 0.3]`.
pub fn random_sh(rng: &mut impl Rng) -> Sh9 {
    let mut c = [0.0; SH_COUNT];
    c[0] = rng.gen_range(0.5..1.5);
    for v in c.iter_mut().skip(1) {
        *v = rng.gen_range(-0.3..0.3);
    }
    Sh9::new(c).expect("finite coefficients")
}

/// Deterministic synthetic object.
pub fn synth_object(seed: u64, size: usize) -> Result<SyntheticObject> {
    synth_object_scaled(seed, size, 1.0)
}

/// As [`synth_object`] with every bump amplitude multiplied by `scale`.
pub fn synth_object_scaled(seed: u64, size: usize, scale: f64) -> Result<SyntheticObject> {
    if size < MIN_SIZE {
        return Err(Error::InvalidInput(format!("object size must be at least {MIN_SIZE}, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (size as f64 - 1.0) / 2.0;
    let r = 0.4 * size as f64;
    let mask = Mask::disk(size, size, c, c, r)?;
    let dims = mask.dims();

    let count = rng.gen_range(3..=8);
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let budget = rng.gen_range(0.05..0.1);
    let bumps: Vec<Bump> = weights
        .iter()
        .map(|w| {
            let wavelength = rng.gen_range(0.08..0.3) * size as f64;
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / wavelength;
            Bump {
                amplitude: scale * budget * w / total,
                frequency: [k * angle.cos(), k * angle.sin()],
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();

    let mut z = vec![0.0; dims.len()];
    let mut n = vec![[0.0; 3]; dims.len()];
    for i in mask.pixels() {
        let (x, y) = dims.coords(i);
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let h0 = (r * r - dx * dx - dy * dy).max(0.0).sqrt();
        let (mut b, mut bx, mut by) = (0.0, 0.0, 0.0);
        for t in &bumps {
            let arg = t.frequency[0] * dx + t.frequency[1] * dy + t.phase;
            b += t.amplitude * arg.sin();
            bx += t.amplitude * t.frequency[0] * arg.cos();
            by += t.amplitude * t.frequency[1] * arg.cos();
        }
        z[i] = h0 * (1.0 + b);
        n[i] = if h0 < 1e-9 {
            let l = (dx * dx + dy * dy).sqrt();
            [dx / l, dy / l, 0.0]
        } else {
            // ∇Z = ∇h0 (1 + b) + h0 ∇b with ∇h0 = −(dx, dy) / h0; scaled by h0.
            let gx = -dx * (1.0 + b) + h0 * h0 * bx;
            let gy = -dy * (1.0 + b) + h0 * h0 * by;
            let v = [-gx, -gy, h0];
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / l, v[1] / l, v[2] / l]
        };
    }

    let sites: Vec<([f64; 2], usize)> = (0..rng.gen_range(6..=12))
        .map(|_| ([rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64)], rng.gen_range(0..3)))
        .collect();
    let palette: Vec<[f64; 3]> = (0..3)
        .map(|_| [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9)])
        .collect();
    let albedo_data = (0..dims.len())
        .flat_map(|i| {
            let (x, y) = dims.coords(i);
            let nearest = sites
                .iter()
                .min_by(|a, b| {
                    let da = (a.0[0] - x as f64).powi(2) + (a.0[1] - y as f64).powi(2);
                    let db = (b.0[0] - x as f64).powi(2) + (b.0[1] - y as f64).powi(2);
                    da.total_cmp(&db)
                })
                .expect("at least one site");
            let col = if mask.inside(i) { palette[nearest.1] } else { [0.0; 3] };
            col.map(snap)
        })
        .collect();
    Ok(SyntheticObject {
        seed,
        albedo: LinearImage::from_vec(size, size, 3, albedo_data)?,
        height: HeightField::new(dims, z)?,
        normals: NormalField::new(dims, n)?,
        mask,
        bumps,
    })
}

const LIGHTS_PER_SHAPE: usize = 4;

/// Smooth shading images: random elliptical silhouettes given a
/// shape-from-contour height and shaded by random SH lights.
pub fn smooth_corpus(seed: u64, count: usize, size: usize) -> Result<Vec<(LinearImage, Mask)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let c = [
            size as f64 * rng.gen_range(0.4..0.6),
            size as f64 * rng.gen_range(0.4..0.6),
        ];
        let a = size as f64 * rng.gen_range(0.25..0.42);
        let b = a * rng.gen_range(0.55..1.0);
        let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let mask = Mask::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
            let u = dx * t.cos() + dy * t.sin();
            let v = -dx * t.sin() + dy * t.cos();
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })?;
        let (contour, _) = contour_normals(&mask, &InterpolationParams::default())?;
        let height = reconstruct_height(&contour, &mask, DEFAULT_EPSILON)?;
        let normals = normals_from_height(&height, &mask)?;
        for _ in 0..LIGHTS_PER_SHAPE {
            let light = random_sh(&mut rng);
            out.push((shade_sh(&normals, &mask, &light)?, mask.clone()));
        }
    }
    out.truncate(count);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::shade_sh_unclamped;

    #[test]
    fn objects_are_deterministic() {
        assert_eq!(synth_object(7, 64).unwrap(), synth_object(7, 64).unwrap());
        assert_ne!(synth_object(7, 64).unwrap(), synth_object(8, 64).unwrap());
        assert!(synth_object(1, 32).is_err());
    }

    #[test]
    fn flat_bumps_give_dome_normals() {
        let o = synth_object_scaled(3, 64, 0.0).unwrap();
        let c = 31.5;
        let r = 25.6;
        let dims = o.mask.dims();
        for i in o.mask.pixels() {
            let (x, y) = dims.coords(i);
            let (dx, dy) = ((x as f64 - c) / r, (y as f64 - c) / r);
            let want = [dx, dy, (1.0 - dx * dx - dy * dy).max(0.0).sqrt()];
            let got = o.normals.get(i);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-6, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn normals_agree_with_height_differences() {
        let o = synth_object(5, 96).unwrap();
        let dims = o.mask.dims();
        let interior: Vec<usize> = o
            .mask
            .pixels()
            .filter(|&i| {
                let (x, y) = dims.coords(i);
                ((x as f64 - 47.5).powi(2) + (y as f64 - 47.5).powi(2)).sqrt() < 0.6 * 38.4
            })
            .collect();
        for i in interior {
            let zx = 0.5 * (o.height.get(i + 1) - o.height.get(i - 1));
            let zy = 0.5 * (o.height.get(i + dims.width) - o.height.get(i - dims.width));
            let n = o.normals.get(i);
            assert!((zx + n[0] / n[2]).abs() < 0.05 && (zy + n[1] / n[2]).abs() < 0.05);
        }
    }

    #[test]
    fn amplitudes_respect_the_budget() {
        for seed in 0..20 {
            let o = synth_object(seed, 64).unwrap();
            assert!((3..=8).contains(&o.bumps.len()));
            assert!(o.bumps.iter().map(|b| b.amplitude.abs()).sum::<f64>() <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn constant_light_renders_constant_shading() {
        let o = synth_object(2, 64).unwrap();
        let mut c = [0.0; SH_COUNT];
        c[0] = 1.0;
        let s = shade_sh_unclamped(&o.normals, &o.mask, &Sh9::new(c).unwrap()).unwrap();
        for i in o.mask.pixels() {
            assert!((s.get(i, 0) - 0.282095).abs() < 1e-6);
        }
    }

    #[test]
    fn capture_light_faces_the_viewer() {
        for seed in 0..10 {
            let l = capture_light(seed);
            assert!(l.coefficients[2] > 0.0);
        }
    }
}
