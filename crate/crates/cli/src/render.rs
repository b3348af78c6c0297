//! Rendering shared by the command line and the service, so both produce
//! the same bytes for the same request.

use serde::Deserialize;

use relume::color::srgb_to_linear;
use relume::io::{encode_pfm, encode_png_srgb};
use relume::lighting::LightSpec;
use relume::relight::{relight, ObjectModel, Weights};
use relume::{Error, LinearImage, Result};

/// Light, detail weights and display exposure of one relit view.
#[derive(Clone, Debug, PartialEq)]
pub struct RelightRequest {
    pub light: LightSpec,
    pub weights: Weights,
    pub exposure: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestBody {
    light: serde_json::Value,
    #[serde(default = "one")]
    wp: f64,
    #[serde(default = "one")]
    wg: f64,
    #[serde(default = "one")]
    exposure: f64,
}

impl RelightRequest {
    pub fn new(light: LightSpec, weights: Weights, exposure: f64) -> Result<Self> {
        for (name, v) in [("wp", weights.wp), ("wg", weights.wg)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("field `{name}`: must be finite")));
            }
        }
        if !(exposure >= 0.0 && exposure.is_finite()) {
            return Err(Error::InvalidInput("field `exposure`: must be finite and non-negative".into()));
        }
        Ok(Self { light, weights, exposure })
    }

    /// Parses `{"light": <light record>, "wp": .., "wg": .., "exposure": ..}`;
    /// the numbers default to 1.
    pub fn from_json(text: &str) -> Result<Self> {
        let body: RequestBody = serde_json::from_str(text)?;
        let light = LightSpec::from_value(body.light)?;
        Self::new(light, Weights::new(body.wp, body.wg), body.exposure)
    }
}

pub fn relight_image(model: &ObjectModel, req: &RelightRequest) -> Result<LinearImage> {
    relight(model, &req.light, req.weights)
}

/// Clamped sRGB PNG of the relit object.
pub fn relight_png(model: &ObjectModel, req: &RelightRequest) -> Result<Vec<u8>> {
    encode_png_srgb(&relight_image(model, req)?, req.exposure)
}

/// Raw linear PFM of the relit object; exposure is not applied.
pub fn relight_pfm(model: &ObjectModel, req: &RelightRequest) -> Result<Vec<u8>> {
    encode_pfm(&relight_image(model, req)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Albedo,
    /// Shading of the base shape under the fitted light.
    Coarse,
    Sp,
    Sg,
}

impl std::str::FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "albedo" => Ok(Layer::Albedo),
            "coarse" => Ok(Layer::Coarse),
            "sp" => Ok(Layer::Sp),
            "sg" => Ok(Layer::Sg),
            _ => Err(Error::InvalidInput(format!("unknown layer `{s}`"))),
        }
    }
}

/// PNG whose encoded levels follow `display`, clamped to `[0, 1]`.
fn display_png(img: &LinearImage, display: impl Fn(f64) -> f64) -> Result<Vec<u8>> {
    encode_png_srgb(&img.map(|v| srgb_to_linear(display(v).clamp(0.0, 1.0)))?, 1.0)
}

/// Layer visualization: non-negative layers scaled by their maximum over Ω,
/// signed layers mapped to mid-grey plus or minus their largest magnitude.
pub fn layer_png(model: &ObjectModel, layer: Layer) -> Result<Vec<u8>> {
    let mask = &model.mask;
    let extent = |img: &LinearImage, f: fn(f64) -> f64| {
        let c = img.channels();
        mask.pixels()
            .flat_map(|i| (0..c).map(move |ch| (i, ch)))
            .map(|(i, ch)| f(img.get(i, ch)))
            .fold(0.0f64, f64::max)
    };
    match layer {
        Layer::Albedo | Layer::Coarse => {
            let img = match layer {
                Layer::Albedo => model.albedo.clone(),
                _ => model.coarse(&model.fitted_spec())?,
            };
            let top = extent(&img, |v| v);
            let scale = if top > 0.0 { 1.0 / top } else { 0.0 };
            display_png(&img, |v| v * scale)
        }
        Layer::Sp | Layer::Sg => {
            let img = if layer == Layer::Sp { &model.sp } else { &model.sg };
            let top = extent(img, f64::abs);
            let scale = if top > 0.0 { 0.5 / top } else { 0.0 };
            let shown = LinearImage::from_vec(
                img.width(),
                img.height(),
                1,
                (0..img.dims().len())
                    .map(|i| if mask.inside(i) { 0.5 + scale * img.get(i, 0) } else { 0.0 })
                    .collect(),
            )?;
            display_png(&shown, |v| v)
        }
    }
}
