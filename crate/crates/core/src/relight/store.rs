//! Model directory: PFM layers, the matte, the fitted light and metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BuildConfig, ObjectModel};
use crate::detail::{DictionaryRecord, PatchDictionary};
use crate::error::{Error, Result};
use crate::io;
use crate::lightfit::FitReport;
use crate::lighting::LightSpec;
use crate::raster::{HeightField, LinearImage, Mask, NormalField};

/// File names inside a model directory.
pub const MODEL_FILES: [&str; 9] = [
    "albedo.pfm",
    "shading.pfm",
    "height.pfm",
    "normals.pfm",
    "sp.pfm",
    "sg.pfm",
    "mask.png",
    "light.json",
    "model.json",
];

/// Root-mean-square of each layer over Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRms {
    pub albedo: f64,
    pub shading: f64,
    pub sp: f64,
    pub sg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format: u32,
    pub width: usize,
    pub height: usize,
    pub area: usize,
    /// Where the fragment came from, if known.
    pub source: Option<String>,
    pub fit_initial_rmse: f64,
    pub fit_final_rmse: f64,
    pub fit_iterations: usize,
    pub fit_converged: bool,
    pub layer_rms: LayerRms,
    pub config: BuildConfig,
    pub dictionary: DictionaryRecord,
}

impl ModelMetadata {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        albedo: &LinearImage,
        shading: &LinearImage,
        mask: &Mask,
        sp: &LinearImage,
        sg: &LinearImage,
        fit: &FitReport,
        config: &BuildConfig,
        dict: &PatchDictionary,
    ) -> Self {
        Self {
            format: 1,
            width: mask.width(),
            height: mask.height(),
            area: mask.area(),
            source: None,
            fit_initial_rmse: fit.initial_rmse,
            fit_final_rmse: fit.final_rmse,
            fit_iterations: fit.iterations,
            fit_converged: fit.converged,
            layer_rms: LayerRms {
                albedo: albedo.rms_over(mask),
                shading: shading.rms_over(mask),
                sp: sp.rms_over(mask),
                sg: sg.rms_over(mask),
            },
            config: config.clone(),
            dictionary: dict.record(),
        }
    }
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes every layer of `model` into `dir`, creating it if needed.
pub fn save_model(model: &ObjectModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_pfm(&model.albedo, dir.join("albedo.pfm"))?;
    io::save_pfm(&model.shading, dir.join("shading.pfm"))?;
    io::save_pfm(&model.height.to_image(), dir.join("height.pfm"))?;
    io::save_pfm(&model.normals.to_image(), dir.join("normals.pfm"))?;
    io::save_pfm(&model.sp, dir.join("sp.pfm"))?;
    io::save_pfm(&model.sg, dir.join("sg.pfm"))?;
    io::save_mask(&model.mask, dir.join("mask.png"))?;
    write_text(&dir.join("light.json"), model.fitted_spec().to_json())?;
    write_text(&dir.join("model.json"), serde_json::to_string_pretty(&model.metadata)?)
}

/// Reads a model directory written by [`save_model`].
pub fn load_model(dir: impl AsRef<Path>) -> Result<ObjectModel> {
    let dir = dir.as_ref();
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let metadata: ModelMetadata = serde_json::from_str(&read("model.json")?)?;
    let fitted_light = match LightSpec::from_json(&read("light.json")?)? {
        LightSpec::Points(p) => p,
        LightSpec::Sh(_) => return Err(Error::LightRecord("model light must be a point mixture".into())),
    };
    let model = ObjectModel {
        albedo: io::load_pfm(dir.join("albedo.pfm"))?,
        shading: io::load_pfm(dir.join("shading.pfm"))?,
        height: HeightField::from_image(&io::load_pfm(dir.join("height.pfm"))?)?,
        normals: NormalField::from_image(&io::load_pfm(dir.join("normals.pfm"))?)?,
        mask: io::load_mask(dir.join("mask.png"))?,
        sp: io::load_pfm(dir.join("sp.pfm"))?,
        sg: io::load_pfm(dir.join("sg.pfm"))?,
        fitted_light,
        metadata,
    };
    let dims = model.mask.dims();
    let sizes = [
        model.albedo.dims(),
        model.shading.dims(),
        model.height.dims(),
        model.normals.dims(),
        model.sp.dims(),
        model.sg.dims(),
    ];
    if sizes.iter().any(|&d| d != dims) || dims.width != model.metadata.width || dims.height != model.metadata.height {
        return Err(Error::mismatch("model layers differ in size"));
    }
    if model.albedo.channels() != 3 || model.shading.channels() != 1 || model.sp.channels() != 1 || model.sg.channels() != 1 {
        return Err(Error::mismatch("model layers have unexpected channel counts"));
    }
    Ok(model)
}
