//! Re-rendering error, synthetic ground truth and the evaluation protocol.

mod mit;
mod protocol;
mod synth;

pub use mit::{load_mit_object, MitObject};
pub use protocol::{
    light_for_seed, run_protocol, EvalRecord, EvalReport, ModeSummary, ProtocolCase, ProtocolConfig, WeightMode,
};
pub use synth::{
    capture_light, random_sh, smooth_corpus, synth_object, synth_object_scaled, Bump, SyntheticObject, MIN_SIZE,
};

use std::path::Path;

use serde::Serialize;

use crate::detail::{parametric_residual, train_dictionary, DictionaryConfig, PatchDictionary, TrainingReport};
use crate::error::{Error, Result};
use crate::lightfit::fit_lights;
use crate::lighting::{shade_points, LightSpec};
use crate::io::decode_pfm_samples;
use crate::raster::{snap, Dims, HeightField, LinearImage, Mask, NormalField};
use crate::relight::{build_model, oracle_weights, reshade, BuildConfig, BuildReport, ObjectModel, Weights};
use crate::shape::normals_from_height;
use crate::solver::GridLaplacian;

/// Largest tolerated fraction of Ω without a finite depth sample.
pub const MAX_DEPTH_HOLES: f64 = 0.05;

/// Side of the square images in the default training corpus.
pub const CORPUS_SIZE: usize = 128;
/// Images in the default training corpus.
pub const CORPUS_IMAGES: usize = 36;

/// Closed-form scale `k = ⟨I, R⟩ / ⟨R, R⟩` over Ω and the mean of
/// `(I − kR)²` over every sample of Ω. A zero `R` gives `k = 0`.
pub fn imse(target: &LinearImage, render: &LinearImage, mask: &Mask) -> Result<(f64, f64)> {
    if !target.same_shape(render) || target.dims() != mask.dims() {
        return Err(Error::mismatch("re-rendering error inputs differ in size or channels"));
    }
    let c = target.channels();
    let (mut ir, mut rr) = (0.0, 0.0);
    for i in mask.pixels() {
        for ch in 0..c {
            let (a, b) = (target.get(i, ch), render.get(i, ch));
            ir += a * b;
            rr += b * b;
        }
    }
    let n = mask.area() * c;
    if n == 0 {
        return Err(Error::DegenerateMask("re-rendering error over an empty region".into()));
    }
    let k = if rr > 0.0 { ir / rr } else { 0.0 };
    let mut err = 0.0;
    for i in mask.pixels() {
        for ch in 0..c {
            err += (target.get(i, ch) - k * render.get(i, ch)).powi(2);
        }
    }
    Ok((k, err / n as f64))
}

/// How detail weights are chosen for one re-rendering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weighting {
    /// Joint least squares with the scale.
    Oracle,
    Fixed(Weights),
}

/// Outcome of one re-rendering comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Score {
    pub k: f64,
    pub weights: Weights,
    pub imse: f64,
    /// Pixels of Ω.
    pub n: usize,
}

/// `A ⊙ reshade(model, light, w)`, unclamped.
pub fn render_model(model: &ObjectModel, light: &LightSpec, w: Weights) -> Result<LinearImage> {
    let s = reshade(model, light, w)?;
    let c = model.albedo.channels();
    let data = (0..model.mask.dims().len())
        .flat_map(|i| {
            let v = s.get(i, 0);
            (0..c).map(move |ch| model.albedo.get(i, ch) * v)
        })
        .collect();
    LinearImage::from_vec(model.width(), model.height_px(), c, data)
}

/// Re-rendering error of `model` under `light` against `target`.
pub fn model_imse(target: &LinearImage, model: &ObjectModel, light: &LightSpec, weighting: Weighting) -> Result<Score> {
    let weights = match weighting {
        Weighting::Fixed(w) => w,
        Weighting::Oracle => {
            let coarse = model.coarse(light)?;
            oracle_weights(target, &model.albedo, &coarse, &model.sp, &model.sg, &model.mask)?.1
        }
    };
    let render = render_model(model, light, weights)?;
    let (k, imse) = imse(target, &render, &model.mask)?;
    Ok(Score {
        k,
        weights,
        imse,
        n: model.mask.area(),
    })
}

/// Corpus and configuration behind the dictionary used by the harness.
pub fn default_corpus(seed: u64) -> Result<Vec<(LinearImage, Mask)>> {
    smooth_corpus(seed, CORPUS_IMAGES, CORPUS_SIZE)
}

/// Trains a dictionary on [`default_corpus`].
pub fn train_default_dictionary(config: &DictionaryConfig) -> Result<(PatchDictionary, TrainingReport)> {
    train_dictionary(&default_corpus(config.seed)?, config)
}

/// Photographs `object` under its capture light and builds a model from the
/// fragment and its exact matte.
pub fn build_synthetic(
    object: &SyntheticObject,
    dict: &PatchDictionary,
    config: &BuildConfig,
) -> Result<(ObjectModel, BuildReport)> {
    let fragment = object.render(&object.capture_light())?;
    let (mut model, report) = build_model(&fragment, &object.mask, dict, config)?;
    model.metadata.source = Some(format!("synthetic:{}", object.seed));
    Ok((model, report))
}

/// A single-channel height raster that may have holes (non-finite samples).
/// Larger values are nearer the viewer.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    dims: Dims,
    samples: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if samples.len() != width * height {
            return Err(Error::mismatch("depth sample count"));
        }
        Ok(Self {
            dims: Dims::new(width, height),
            samples,
        })
    }

    pub fn from_image(img: &LinearImage) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::mismatch("depth raster must have one channel"));
        }
        Self::new(img.width(), img.height(), img.as_slice().to_vec())
    }

    /// Reads a one-channel PFM; NaN and infinite samples are holes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (w, h, c, data) = decode_pfm_samples(&bytes)?;
        if c != 1 {
            return Err(Error::mismatch("depth raster must have one channel"));
        }
        Self::new(w, h, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, i: usize) -> f64 {
        self.samples[i]
    }
}

impl From<&HeightField> for DepthMap {
    fn from(h: &HeightField) -> Self {
        Self {
            dims: h.dims(),
            samples: h.as_slice().to_vec(),
        }
    }
}

/// Fills non-finite samples inside Ω with the harmonic interpolant of the
/// finite ones. Samples outside Ω become zero.
fn fill_depth(depth: &DepthMap, mask: &Mask) -> Result<Vec<f64>> {
    let dims = mask.dims();
    let hole = |i: usize| !depth.get(i).is_finite();
    let missing = mask.pixels().filter(|&i| hole(i)).count();
    let total = mask.area();
    if total == 0 {
        return Err(Error::DegenerateMask("depth ingestion over an empty region".into()));
    }
    if missing as f64 > MAX_DEPTH_HOLES * total as f64 || missing == total {
        return Err(Error::DepthHoles { missing, total });
    }
    let mut z: Vec<f64> = (0..dims.len())
        .map(|i| if mask.inside(i) && !hole(i) { depth.get(i) } else { 0.0 })
        .collect();
    if missing == 0 {
        return Ok(z);
    }
    let lap = GridLaplacian::new(mask, hole);
    let mut b = vec![0.0; lap.len()];
    for (v, &i) in lap.pixels().iter().enumerate() {
        for j in dims.neighbors4(i) {
            if mask.inside(j) && !hole(j) {
                b[v] += z[j];
            }
        }
    }
    let mut x = vec![0.0; lap.len()];
    // A hole region cut off from every finite sample has no defined fill;
    // the small screen term pins it to zero.
    lap.solve(1e-9, &b, &mut x, 1e-10, 20 * lap.len().max(100));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("depth hole fill diverged".into()));
    }
    for (v, &i) in lap.pixels().iter().enumerate() {
        z[i] = x[v];
    }
    Ok(z)
}

/// Replaces the base shape of `model` with an external height raster
/// aligned with the matte.
/// Normals are rederived from it and the light fit and parametric residual
/// are redone. The geometric detail depends only on the shading and is kept.
pub fn ingest_external_shape(model: &ObjectModel, depth: &DepthMap) -> Result<ObjectModel> {
    if depth.dims() != model.mask.dims() {
        return Err(Error::mismatch("depth raster and model differ in size"));
    }
    let mask = &model.mask;
    let z = fill_depth(depth, mask)?;
    let height = HeightField::new(mask.dims(), z.into_iter().map(snap).collect())?;
    let normals = normals_from_height(&height, mask)?;
    let normals = NormalField::new(
        normals.dims(),
        normals.as_slice().iter().map(|n| n.map(snap)).collect(),
    )?;
    let config = &model.metadata.config;
    let fit = fit_lights(&model.shading, &height, &normals, mask, None, &config.fit).map_err(|e| e.in_stage("light fit"))?;
    let fitted = shade_points(&height, &normals, mask, &fit.fitted)?;
    let sp = parametric_residual(&model.shading, &fitted, mask)?;
    let mut metadata = model.metadata.clone();
    metadata.fit_initial_rmse = fit.initial_rmse;
    metadata.fit_final_rmse = fit.final_rmse;
    metadata.fit_iterations = fit.iterations;
    metadata.fit_converged = fit.converged;
    metadata.layer_rms.sp = sp.rms_over(mask);
    Ok(ObjectModel {
        albedo: model.albedo.clone(),
        shading: model.shading.clone(),
        height,
        normals,
        mask: mask.clone(),
        sp,
        sg: model.sg.clone(),
        fitted_light: fit.fitted,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detail::PatchDictionary;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> LinearImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LinearImage::from_vec(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    /// Small dictionary of centred 4×4 gradient atoms; enough for tests that
    /// do not depend on detail quality.
    pub(crate) fn tiny_dictionary() -> PatchDictionary {
        let mut atoms = Vec::new();
        for (gx, gy) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)] {
            let mut a: Vec<f64> = (0..16).map(|k| gx * (k % 4) as f64 + gy * (k / 4) as f64).collect();
            let m = a.iter().sum::<f64>() / 16.0;
            a.iter_mut().for_each(|v| *v -= m);
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            a.iter_mut().for_each(|v| *v /= n);
            atoms.extend(a);
        }
        PatchDictionary::new(4, 2, 0.1, atoms).unwrap()
    }

    #[test]
    fn half_scale_render() {
        let i = random_image(8, 8, 3, 1);
        let r = i.map(|v| 0.5 * v).unwrap();
        let m = Mask::disk(8, 8, 3.5, 3.5, 3.0).unwrap();
        let (k, e) = imse(&i, &r, &m).unwrap();
        assert!((k - 2.0).abs() < 1e-12 && e < 1e-24);
    }

    #[test]
    fn orthogonal_render() {
        let i = LinearImage::from_vec(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let r = LinearImage::from_vec(2, 1, 1, vec![0.0, 3.0]).unwrap();
        let m = Mask::from_values(2, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(imse(&i, &r, &m).unwrap(), (0.0, 0.5));
        let zero = LinearImage::zeros(2, 1, 1).unwrap();
        assert_eq!(imse(&i, &zero, &m).unwrap(), (0.0, 0.5));
    }

    #[test]
    fn closed_form_scale_beats_a_scan() {
        let m = Mask::disk(16, 16, 7.5, 7.5, 7.0).unwrap();
        for seed in 0..5 {
            let i = random_image(16, 16, 3, seed);
            let r = random_image(16, 16, 3, seed + 100);
            let (k, e) = imse(&i, &r, &m).unwrap();
            let err_at = |k: f64| {
                m.pixels()
                    .flat_map(|p| (0..3).map(move |c| (p, c)))
                    .map(|(p, c)| (i.get(p, c) - k * r.get(p, c)).powi(2))
                    .sum::<f64>()
                    / (3 * m.area()) as f64
            };
            let (best, _) = (0..10_000)
                .map(|s| {
                    let k = 2.0 * s as f64 / 9_999.0;
                    (k, err_at(k))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!((best - k).abs() < 1e-4, "{best} vs {k}");
            assert!((err_at(k) - e).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_holes() {
        let m = Mask::disk(20, 20, 9.5, 9.5, 8.0).unwrap();
        let dims = m.dims();
        let plane = |i: usize| {
            let (x, y) = dims.coords(i);
            2.0 + 0.5 * x as f64 - 0.25 * y as f64
        };
        let few: Vec<usize> = m
            .pixels()
            .filter(|&i| dims.neighbors4(i).filter(|&j| m.inside(j)).count() == 4)
            .step_by(40)
            .collect();
        let d = DepthMap::new(20, 20, (0..dims.len()).map(|i| if few.contains(&i) { f64::NAN } else { plane(i) }).collect()).unwrap();
        let z = fill_depth(&d, &m).unwrap();
        for &i in &few {
            assert!((z[i] - plane(i)).abs() < 1e-6, "harmonic fill reproduces planes");
        }
        let many: Vec<usize> = m.pixels().step_by(10).collect();
        let d = DepthMap::new(20, 20, (0..dims.len()).map(|i| if many.contains(&i) { f64::INFINITY } else { 1.0 }).collect()).unwrap();
        assert!(matches!(fill_depth(&d, &m), Err(Error::DepthHoles { .. })));
    }

    #[test]
    fn own_height_and_flat_ingestion() {
        let object = synth_object(0, 64).unwrap();
        let dict = tiny_dictionary();
        let (model, _) = build_synthetic(&object, &dict, &BuildConfig::default()).unwrap();
        let light = LightSpec::Sh(random_sh(&mut rand_chacha::ChaCha8Rng::seed_from_u64(4)));
        let target = object.render(match &light {
            LightSpec::Sh(s) => s,
            _ => unreachable!(),
        })
        .unwrap();
        let again = ingest_external_shape(&model, &DepthMap::from(&model.height)).unwrap();
        for weighting in [Weighting::Oracle, Weighting::Fixed(Weights::DEFAULT)] {
            let a = model_imse(&target, &model, &light, weighting).unwrap();
            let b = model_imse(&target, &again, &light, weighting).unwrap();
            assert!((a.imse - b.imse).abs() < 1e-6);
        }

        let flat = ingest_external_shape(&model, &DepthMap::new(64, 64, vec![0.0; 64 * 64]).unwrap()).unwrap();
        for i in flat.mask.pixels() {
            assert_eq!(flat.normals.get(i), [0.0, 0.0, 1.0]);
        }
        let fitted = flat.fitted_spec();
        let back = reshade(&flat, &fitted, Weights::new(1.0, 0.0)).unwrap();
        for i in flat.mask.pixels() {
            assert!((back.get(i, 0) - flat.shading.get(i, 0)).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_recovers_own_reconstruction() {
        let object = synth_object(1, 64).unwrap();
        let (model, _) = build_synthetic(&object, &tiny_dictionary(), &BuildConfig::default()).unwrap();
        let fitted = model.fitted_spec();
        let target = render_model(&model, &fitted, Weights::new(1.0, 0.0)).unwrap();
        let s = model_imse(&target, &model, &fitted, Weighting::Oracle).unwrap();
        assert!(s.imse < 1e-10, "{}", s.imse);
        assert_eq!(s.n, model.mask.area());
    }
}
