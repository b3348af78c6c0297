//! The relightable object model: building it from a fragment, reshading it
//! under new light and compositing the result.

mod store;
mod weights;

pub use store::{load_model, save_model, ModelMetadata, MODEL_FILES};
pub use weights::{light_features, oracle_weights, regress_weights, RegressionParams, Weights};

use serde::{Deserialize, Serialize};

use crate::detail::{geometric_detail, nonparametric_filter, parametric_residual, PatchDictionary};
use crate::error::{Error, Result};
use crate::intrinsic::{color_retinex, RetinexParams};
use crate::io::quantize_mask;
use crate::lightfit::{fit_lights, FitParams, FitReport};
use crate::lighting::{shade, shade_points, LightSpec, PointLightMix};
use crate::mask::cleanup_mask;
use crate::raster::{snap, HeightField, LinearImage, Mask, NormalField};
use crate::shape::{
    contour_normals, normals_from_height, reconstruct_height, InterpolationParams, InterpolationReport, DEFAULT_EPSILON,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub retinex: RetinexParams,
    pub interpolation: InterpolationParams,
    pub epsilon: f64,
    pub fit: FitParams,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            retinex: RetinexParams::default(),
            interpolation: InterpolationParams::default(),
            epsilon: DEFAULT_EPSILON,
            fit: FitParams::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("retinex.chroma_threshold", self.retinex.chroma_threshold),
            ("retinex.floor", self.retinex.floor),
            ("retinex.tolerance", self.retinex.tolerance),
            ("interpolation.screen", self.interpolation.screen),
            ("interpolation.change_tolerance", self.interpolation.change_tolerance),
            ("epsilon", self.epsilon),
            ("fit.fd_step", self.fit.fd_step),
            ("fit.initial_damping", self.fit.initial_damping),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything needed to reshade one object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel {
    pub albedo: LinearImage,
    /// Shading estimated from the fragment.
    pub shading: LinearImage,
    pub height: HeightField,
    pub normals: NormalField,
    pub mask: Mask,
    /// Parametric shading residual.
    pub sp: LinearImage,
    /// Geometric detail.
    pub sg: LinearImage,
    pub fitted_light: PointLightMix,
    pub metadata: ModelMetadata,
}

/// Diagnostics gathered while building a model.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildReport {
    pub fit: FitReport,
    pub interpolation: InterpolationReport,
}

fn snap_height(h: &HeightField) -> Result<HeightField> {
    HeightField::new(h.dims(), h.as_slice().iter().map(|&v| snap(v)).collect())
}

fn snap_normals(n: &NormalField) -> Result<NormalField> {
    NormalField::new(n.dims(), n.as_slice().iter().map(|v| v.map(snap)).collect())
}

/// Builds a model from a linear RGB fragment and its matte: intrinsic
/// decomposition, shape from contour, light fit and the two detail layers.
pub fn build_model(
    image: &LinearImage,
    matte: &Mask,
    dict: &PatchDictionary,
    config: &BuildConfig,
) -> Result<(ObjectModel, BuildReport)> {
    config.validate()?;
    let mask = quantize_mask(matte)
        .and_then(|m| cleanup_mask(&m))
        .map_err(|e| e.in_stage("mask cleanup"))?;
    let pair = color_retinex(image, &mask, &config.retinex).map_err(|e| e.in_stage("retinex"))?;
    let (contour, rep) =
        contour_normals(&mask, &config.interpolation).map_err(|e| e.in_stage("normal interpolation"))?;
    let height = reconstruct_height(&contour, &mask, config.epsilon)
        .and_then(|h| snap_height(&h))
        .map_err(|e| e.in_stage("height reconstruction"))?;
    let (model, fit) = assemble(pair.albedo, pair.shading, mask, height, dict, config)?;
    Ok((
        model,
        BuildReport {
            fit,
            interpolation: rep,
        },
    ))
}

/// Completes a model from albedo, shading and a base shape: normals from the
/// height, light fit, parametric residual and geometric detail.
pub fn assemble(
    albedo: LinearImage,
    shading: LinearImage,
    mask: Mask,
    height: HeightField,
    dict: &PatchDictionary,
    config: &BuildConfig,
) -> Result<(ObjectModel, FitReport)> {
    let normals = normals_from_height(&height, &mask)
        .and_then(|n| snap_normals(&n))
        .map_err(|e| e.in_stage("normals"))?;
    let fit = fit_lights(&shading, &height, &normals, &mask, None, &config.fit).map_err(|e| e.in_stage("light fit"))?;
    let fitted = shade_points(&height, &normals, &mask, &fit.fitted).map_err(|e| e.in_stage("light fit"))?;
    let sp = parametric_residual(&shading, &fitted, &mask).map_err(|e| e.in_stage("parametric residual"))?;
    let filtered = nonparametric_filter(&shading, &mask, dict).map_err(|e| e.in_stage("detail filter"))?;
    let sg = geometric_detail(&shading, &filtered, &mask).map_err(|e| e.in_stage("geometric detail"))?;
    let metadata = ModelMetadata::new(&albedo, &shading, &mask, &sp, &sg, &fit, config, dict);
    Ok((
        ObjectModel {
            albedo,
            shading,
            height,
            normals,
            mask,
            sp,
            sg,
            fitted_light: fit.fitted,
            metadata,
        },
        fit,
    ))
}

impl ObjectModel {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height_px(&self) -> usize {
        self.mask.height()
    }

    /// Coarse shading of the base shape under `light`.
    pub fn coarse(&self, light: &LightSpec) -> Result<LinearImage> {
        shade(&self.height, &self.normals, &self.mask, light)
    }

    pub fn fitted_spec(&self) -> LightSpec {
        LightSpec::Points(self.fitted_light)
    }
}

fn weighted_sum(base: &LinearImage, sp: &LinearImage, sg: &LinearImage, w: Weights) -> Result<LinearImage> {
    if base.dims() != sp.dims() || base.dims() != sg.dims() {
        return Err(Error::mismatch("shading layers differ in size"));
    }
    let data = (0..base.dims().len())
        .map(|i| base.get(i, 0) + w.wp * sp.get(i, 0) + w.wg * sg.get(i, 0))
        .collect();
    LinearImage::from_vec(base.width(), base.height(), 1, data)
}

/// `shade(Z, L) + w_p S_p + w_g S_g`, unclamped.
pub fn reshade(model: &ObjectModel, light: &LightSpec, w: Weights) -> Result<LinearImage> {
    let coarse = model.coarse(light)?;
    weighted_sum(&coarse, &model.sp, &model.sg, w)
}

/// `A ⊙ max(0, S + w_p S_p + w_g S_g)` per channel.
pub fn compose_detail(
    albedo: &LinearImage,
    shading: &LinearImage,
    sp: &LinearImage,
    sg: &LinearImage,
    w: Weights,
) -> Result<LinearImage> {
    if albedo.dims() != shading.dims() {
        return Err(Error::mismatch("albedo and shading differ in size"));
    }
    let s = weighted_sum(shading, sp, sg, w)?;
    let c = albedo.channels();
    let data = (0..albedo.dims().len())
        .flat_map(|i| {
            let v = s.get(i, 0);
            (0..c).map(move |ch| (albedo.get(i, ch) * v).max(0.0))
        })
        .collect();
    LinearImage::from_vec(albedo.width(), albedo.height(), c, data)
}

/// The object relit under `light`: [`compose_detail`] of the reshaded model.
pub fn relight(model: &ObjectModel, light: &LightSpec, w: Weights) -> Result<LinearImage> {
    let coarse = model.coarse(light)?;
    compose_detail(&model.albedo, &coarse, &model.sp, &model.sg, w)
}

/// `M ⊙ I_r + (1 − M) ⊙ (I_t + (I_r − I_e))`, clamped at zero.
pub fn final_composite(target: &LinearImage, with_object: &LinearImage, without: &LinearImage, matte: &Mask) -> Result<LinearImage> {
    if !target.same_shape(with_object) || !target.same_shape(without) || target.dims() != matte.dims() {
        return Err(Error::mismatch("composite inputs differ in size or channels"));
    }
    let c = target.channels();
    let data = (0..target.as_slice().len())
        .map(|k| {
            let m = matte.value(k / c);
            let (t, r, e) = (target.as_slice()[k], with_object.as_slice()[k], without.as_slice()[k]);
            (m * r + (1.0 - m) * (t + (r - e))).max(0.0)
        })
        .collect();
    LinearImage::from_vec(target.width(), target.height(), c, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dyadic(w: usize, h: usize, seed: u64) -> LinearImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.gen_range(0..1024) as f64 / 1024.0).collect();
        LinearImage::from_vec(w, h, 3, data).unwrap()
    }

    #[test]
    fn composite_algebra() {
        let (t, r, e) = (dyadic(6, 5, 1), dyadic(6, 5, 2), dyadic(6, 5, 3));
        let ones = Mask::from_values(6, 5, vec![1.0; 30]).unwrap();
        let zeros = Mask::from_values(6, 5, vec![0.0; 30]).unwrap();
        assert_eq!(final_composite(&t, &r, &e, &ones).unwrap(), r);
        assert_eq!(final_composite(&t, &e, &e, &zeros).unwrap(), t);
        let delta = dyadic(6, 5, 4);
        let shifted = LinearImage::from_vec(
            6,
            5,
            3,
            e.as_slice().iter().zip(delta.as_slice()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let want: Vec<f64> = t.as_slice().iter().zip(delta.as_slice()).map(|(a, b)| a + b).collect();
        assert_eq!(final_composite(&t, &shifted, &e, &zeros).unwrap().as_slice(), &want[..]);
    }

    #[test]
    fn compose_special_cases() {
        let s = LinearImage::from_vec(2, 1, 1, vec![0.5, 0.25]).unwrap();
        let sp = LinearImage::from_vec(2, 1, 1, vec![0.125, -0.5]).unwrap();
        let sg = LinearImage::from_vec(2, 1, 1, vec![0.0625, 0.125]).unwrap();
        let a = LinearImage::from_vec(2, 1, 3, vec![0.5, 1.0, 0.25, 1.0, 1.0, 1.0]).unwrap();
        let c = compose_detail(&a, &s, &sp, &sg, Weights::COARSE).unwrap();
        assert_eq!(c.as_slice(), &[0.25, 0.5, 0.125, 0.25, 0.25, 0.25]);
        let ones = LinearImage::from_vec(2, 1, 3, vec![1.0; 6]).unwrap();
        let c = compose_detail(&ones, &s, &sp, &sg, Weights::DEFAULT).unwrap();
        assert_eq!(c.get(0, 0), 0.6875);
        // 0.25 - 0.5 + 0.125 < 0 is clamped.
        assert_eq!(c.get(1, 0), 0.0);
    }
}
