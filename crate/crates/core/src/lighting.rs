//! Point-light mixtures, order-2 spherical harmonics and the shading they
//! produce on a height field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::raster::{snap, HeightField, LinearImage, Mask, NormalField};

pub const SOURCE_COUNT: usize = 5;
pub const SH_COUNT: usize = 9;

/// Coincidence threshold between a light and a surface point.
const MIN_DISTANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    /// Pixel units: x right, y down, z toward the viewer.
    pub position: [f64; 3],
    pub intensity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLightMix {
    pub sources: [PointLight; SOURCE_COUNT],
}

impl PointLightMix {
    pub fn new(sources: [PointLight; SOURCE_COUNT]) -> Result<Self> {
        for (k, s) in sources.iter().enumerate() {
            if s.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::LightRecord(format!("lights[{k}].position must be finite")));
            }
            if !(s.intensity >= 0.0 && s.intensity.is_finite()) {
                return Err(Error::LightRecord(format!(
                    "lights[{k}].intensity must be finite and non-negative, got {}",
                    s.intensity
                )));
            }
        }
        Ok(Self { sources })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut s = self.sources;
        for l in &mut s {
            l.intensity *= c;
        }
        Self::new(s)
    }
}

/// Monochrome order-2 real spherical-harmonic coefficients in the order
/// `Y00, Y1-1 (y), Y10 (z), Y11 (x), Y2-2 (xy), Y2-1 (yz), Y20, Y21 (xz), Y22`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sh9 {
    pub coefficients: [f64; SH_COUNT],
}

impl Sh9 {
    pub fn new(coefficients: [f64; SH_COUNT]) -> Result<Self> {
        if let Some(k) = coefficients.iter().position(|v| !v.is_finite()) {
            return Err(Error::LightRecord(format!("coefficients[{k}] must be finite")));
        }
        Ok(Self { coefficients })
    }
}

/// Basis values at unit direction `n`.
pub fn sh_basis(n: [f64; 3]) -> [f64; SH_COUNT] {
    use std::f64::consts::PI;
    let [x, y, z] = n;
    let c0 = 0.5 * (1.0 / PI).sqrt();
    let c1 = (3.0 / (4.0 * PI)).sqrt();
    let c2 = 0.5 * (15.0 / PI).sqrt();
    let c3 = 0.25 * (5.0 / PI).sqrt();
    let c4 = 0.25 * (15.0 / PI).sqrt();
    [
        c0,
        c1 * y,
        c1 * z,
        c1 * x,
        c2 * x * y,
        c2 * y * z,
        c3 * (3.0 * z * z - 1.0),
        c2 * x * z,
        c4 * (x * x - y * y),
    ]
}

/// A light of either family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LightSpec {
    Points(PointLightMix),
    Sh(Sh9),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum LightRecord {
    Points { lights: Vec<PointLight> },
    Sh { coefficients: Vec<f64> },
}

impl LightSpec {
    /// Parses a light record:
    /// `{"type":"points","lights":[{"position":[x,y,z],"intensity":i}, ...5]}`
    /// or `{"type":"sh","coefficients":[c0, ..., c8]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::LightRecord(format!("malformed record: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let record: LightRecord =
            serde_json::from_value(value).map_err(|e| Error::LightRecord(e.to_string()))?;
        match record {
            LightRecord::Points { lights } => {
                let sources: [PointLight; SOURCE_COUNT] = lights.try_into().map_err(|v: Vec<_>| {
                    Error::LightRecord(format!("field `lights`: expected {SOURCE_COUNT} sources, got {}", v.len()))
                })?;
                Ok(Self::Points(PointLightMix::new(sources)?))
            }
            LightRecord::Sh { coefficients } => {
                let c: [f64; SH_COUNT] = coefficients.try_into().map_err(|v: Vec<_>| {
                    Error::LightRecord(format!(
                        "field `coefficients`: expected {SH_COUNT} values, got {}",
                        v.len()
                    ))
                })?;
                Ok(Self::Sh(Sh9::new(c)?))
            }
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        let record = match self {
            Self::Points(m) => LightRecord::Points {
                lights: m.sources.to_vec(),
            },
            Self::Sh(s) => LightRecord::Sh {
                coefficients: s.coefficients.to_vec(),
            },
        };
        serde_json::to_value(record).expect("light record serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("light record serializes")
    }
}

fn check(height: &HeightField, normals: &NormalField, mask: &Mask) -> Result<()> {
    if height.dims() != mask.dims() || normals.dims() != mask.dims() {
        return Err(Error::mismatch("height, normals and mask differ in size"));
    }
    Ok(())
}

fn shading_image(mask: &Mask, values: Vec<f64>) -> LinearImage {
    LinearImage::from_vec(mask.width(), mask.height(), 1, values).expect("shading is finite")
}

/// `s(q) = Σ_i I_i · max(0, N(q) · normalize(p_i − q))` at `q = (x, y, Z)`,
/// without distance falloff. Zero outside Ω.
pub fn shade_points(
    height: &HeightField,
    normals: &NormalField,
    mask: &Mask,
    lights: &PointLightMix,
) -> Result<LinearImage> {
    check(height, normals, mask)?;
    let dims = mask.dims();
    let values: Vec<std::result::Result<f64, usize>> = exec::map_indexed(dims.len(), |i| {
        if !mask.inside(i) {
            return Ok(0.0);
        }
        let (x, y) = dims.coords(i);
        let q = [x as f64, y as f64, height.get(i)];
        let n = normals.get(i);
        let mut s = 0.0;
        for l in &lights.sources {
            let d = [l.position[0] - q[0], l.position[1] - q[1], l.position[2] - q[2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if len < MIN_DISTANCE {
                return Err(i);
            }
            let cos = (n[0] * d[0] + n[1] * d[1] + n[2] * d[2]) / len;
            s += l.intensity * cos.max(0.0);
        }
        Ok(snap(s))
    });
    let values = values
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::LightCoincident)?;
    Ok(shading_image(mask, values))
}

/// Signed `Σ_k c_k Y_k(N)` on Ω, zero elsewhere.
pub fn shade_sh_unclamped(normals: &NormalField, mask: &Mask, light: &Sh9) -> Result<LinearImage> {
    if normals.dims() != mask.dims() {
        return Err(Error::mismatch("normals and mask differ in size"));
    }
    let values = exec::map_indexed(mask.dims().len(), |i| {
        if !mask.inside(i) {
            return 0.0;
        }
        let y = sh_basis(normals.get(i));
        snap(y.iter().zip(&light.coefficients).map(|(a, b)| a * b).sum())
    });
    Ok(shading_image(mask, values))
}

/// [`shade_sh_unclamped`] clamped at zero.
pub fn shade_sh(normals: &NormalField, mask: &Mask, light: &Sh9) -> Result<LinearImage> {
    shade_sh_unclamped(normals, mask, light)?.map(|v| v.max(0.0))
}

/// Coarse shading under either light family.
pub fn shade(height: &HeightField, normals: &NormalField, mask: &Mask, light: &LightSpec) -> Result<LinearImage> {
    match light {
        LightSpec::Points(p) => shade_points(height, normals, mask, p),
        LightSpec::Sh(s) => shade_sh(normals, mask, s),
    }
}
