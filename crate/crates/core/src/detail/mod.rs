//! Shading detail layers: the parametric residual and the geometric detail
//! left over by patch-dictionary filtering.

mod dictionary;
mod lasso;

pub use dictionary::{
    extract_patch, patch_objective, patch_origins, sample_patches, train_dictionary, train_on_patches,
    DictionaryConfig, DictionaryRecord, PatchDictionary, TrainingReport,
};
pub use lasso::{lasso_cd, lasso_objective, soft_threshold, LassoSettings};

use crate::error::{Error, Result};
use crate::exec;
use crate::raster::{snap, LinearImage, Mask};

fn difference(a: &LinearImage, b: &LinearImage, mask: &Mask) -> Result<LinearImage> {
    if a.dims() != mask.dims() || b.dims() != mask.dims() {
        return Err(Error::mismatch("shading layers and mask differ in size"));
    }
    a.require_channels(1, "shading")?;
    b.require_channels(1, "shading")?;
    let data = (0..mask.dims().len())
        .map(|i| if mask.inside(i) { a.get(i, 0) - b.get(i, 0) } else { 0.0 })
        .collect();
    LinearImage::from_vec(mask.width(), mask.height(), 1, data)
}

/// `S_p = S − S_fit` on Ω, zero elsewhere.
pub fn parametric_residual(shading: &LinearImage, fitted: &LinearImage, mask: &Mask) -> Result<LinearImage> {
    difference(shading, fitted, mask)
}

/// `S_g = S − filtered` on Ω, zero elsewhere.
pub fn geometric_detail(shading: &LinearImage, filtered: &LinearImage, mask: &Mask) -> Result<LinearImage> {
    difference(shading, filtered, mask)
}

/// Reconstructs every stride-aligned patch inside Ω from its sparse code
/// (mean removed before coding and added back after) and averages the
/// overlapping reconstructions. Pixels of Ω that no patch covers pass
/// through unchanged; pixels outside Ω are zero.
pub fn nonparametric_filter(shading: &LinearImage, mask: &Mask, dict: &PatchDictionary) -> Result<LinearImage> {
    if shading.dims() != mask.dims() {
        return Err(Error::mismatch("shading and mask differ in size"));
    }
    shading.require_channels(1, "shading")?;
    let size = dict.patch_size;
    let origins = patch_origins(mask, size, dict.stride);
    let settings = dict.lasso();
    let recon = exec::map_indexed(origins.len(), |k| {
        let (x, y) = origins[k];
        let (p, mean) = extract_patch(shading, x, y, size);
        let code = dict.encode(&p, &settings);
        let mut r = dict.decode(&code);
        r.iter_mut().for_each(|v| *v += mean);
        r
    });
    let dims = mask.dims();
    let mut acc = vec![0.0; dims.len()];
    let mut hits = vec![0u32; dims.len()];
    for (&(x0, y0), r) in origins.iter().zip(&recon) {
        for dy in 0..size {
            for dx in 0..size {
                let i = dims.index(x0 + dx, y0 + dy);
                acc[i] += r[dy * size + dx];
                hits[i] += 1;
            }
        }
    }
    let data = (0..dims.len())
        .map(|i| {
            if !mask.inside(i) {
                0.0
            } else if hits[i] == 0 {
                shading.get(i, 0)
            } else {
                snap(acc[i] / hits[i] as f64)
            }
        })
        .collect();
    LinearImage::from_vec(dims.width, dims.height, 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dict() -> PatchDictionary {
        // Two orthogonal ramps on 4x4 patches.
        let mut a: Vec<f64> = (0..16).map(|i| (i % 4) as f64 - 1.5).collect();
        let mut b: Vec<f64> = (0..16).map(|i| (i / 4) as f64 - 1.5).collect();
        for v in [&mut a, &mut b] {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
        }
        PatchDictionary::new(4, 2, 0.1, [a, b].concat()).unwrap()
    }

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> LinearImage {
        let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
        LinearImage::from_vec(w, h, 1, data).unwrap()
    }

    #[test]
    fn residual_identity_is_exact() {
        let m = Mask::disk(16, 16, 7.5, 7.5, 6.0).unwrap();
        let s = image(16, 16, |x, y| snap(0.1 * x as f64 + 0.37 * (y as f64).sin()));
        let f = image(16, 16, |x, y| snap(0.05 * (x * y) as f64 / 7.0));
        let sp = parametric_residual(&s, &f, &m).unwrap();
        for i in 0..256 {
            if m.inside(i) {
                assert_eq!(sp.get(i, 0) + f.get(i, 0), s.get(i, 0));
            } else {
                assert_eq!(sp.get(i, 0), 0.0);
            }
        }
        assert!(parametric_residual(&s, &s, &m).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_shading_passes_through() {
        let m = Mask::from_fn(12, 12, |x, y| x > 0 && y > 0).unwrap();
        let s = image(12, 12, |_, _| snap(0.3));
        let f = nonparametric_filter(&s, &m, &tiny_dict()).unwrap();
        for i in 0..144 {
            assert_eq!(f.get(i, 0), if m.inside(i) { s.get(i, 0) } else { 0.0 });
        }
    }

    #[test]
    fn ramps_are_reconstructed_and_detail_adds_back() {
        let m = Mask::from_values(12, 12, vec![1.0; 144]).unwrap();
        let s = image(12, 12, |x, y| snap(0.2 + 0.5 * x as f64 + 0.25 * y as f64));
        let f = nonparametric_filter(&s, &m, &tiny_dict()).unwrap();
        let g = geometric_detail(&s, &f, &m).unwrap();
        for i in 0..144 {
            assert_eq!(g.get(i, 0) + f.get(i, 0), s.get(i, 0));
        }
        // Shrinkage leaves a small, bounded residual on pure ramps.
        assert!(g.rms_over(&m) < 0.05 * s.rms_over(&m));
    }

    #[test]
    fn uncovered_pixels_pass_through() {
        let m = Mask::from_fn(10, 10, |x, y| (x < 6 && y < 6) || x == 8).unwrap();
        let s = image(10, 10, |x, y| snap(0.1 * (x + y) as f64));
        let f = nonparametric_filter(&s, &m, &tiny_dict()).unwrap();
        for y in 0..10 {
            assert_eq!(f.get(m.dims().index(8, y), 0), s.get(m.dims().index(8, y), 0));
        }
    }
}
