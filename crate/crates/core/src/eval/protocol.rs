//! Cross product of objects and random SH lights, scored per weight mode.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{random_sh, SyntheticObject};
use super::{model_imse, Weighting};
use crate::error::{Error, Result};
use crate::exec;
use crate::lighting::{LightSpec, Sh9};
use crate::relight::{regress_weights, ObjectModel, RegressionParams, Weights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Oracle,
    /// Nearest-neighbour regression trained on the other objects; the
    /// default weights when there are none.
    Regress,
    /// `w = (1, 1)`.
    Default,
    /// `w = (0, 0)`.
    Coarse,
}

impl WeightMode {
    pub const ALL: [WeightMode; 4] = [WeightMode::Oracle, WeightMode::Regress, WeightMode::Default, WeightMode::Coarse];

    pub fn name(self) -> &'static str {
        match self {
            WeightMode::Oracle => "oracle",
            WeightMode::Regress => "regress",
            WeightMode::Default => "default",
            WeightMode::Coarse => "coarse",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown weight mode `{s}`")))
    }
}

/// One object under evaluation: a model and the ground truth it stands for.
#[derive(Clone, Copy, Debug)]
pub struct ProtocolCase<'a> {
    pub name: &'a str,
    pub model: &'a ObjectModel,
    pub truth: &'a SyntheticObject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Light `j` is drawn from seed `seed + j`.
    pub seed: u64,
    pub lights: usize,
    pub modes: Vec<WeightMode>,
    pub regression: RegressionParams,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lights: 20,
            modes: WeightMode::ALL.to_vec(),
            regression: RegressionParams::default(),
        }
    }
}

/// The random SH light of a protocol seed.
pub fn light_for_seed(seed: u64) -> Sh9 {
    random_sh(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub object: String,
    pub light_seed: u64,
    pub mode: WeightMode,
    pub k: f64,
    pub w_p: f64,
    pub w_g: f64,
    pub imse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: WeightMode,
    pub records: usize,
    pub mean_imse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summary: Vec<ModeSummary>,
}

impl EvalReport {
    fn new(records: Vec<EvalRecord>, modes: &[WeightMode]) -> Self {
        let summary = modes
            .iter()
            .map(|&mode| {
                let xs: Vec<f64> = records.iter().filter(|r| r.mode == mode).map(|r| r.imse).collect();
                ModeSummary {
                    mode,
                    records: xs.len(),
                    mean_imse: if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 },
                }
            })
            .collect();
        Self { records, summary }
    }

    pub fn mean(&self, mode: WeightMode) -> Option<f64> {
        self.summary.iter().find(|s| s.mode == mode).map(|s| s.mean_imse)
    }

    pub fn records_for(&self, mode: WeightMode) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(move |r| r.mode == mode)
    }

    /// One JSON object per record, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>10} {:<8} {:>10} {:>9} {:>9} {:>12}", "object", "light", "mode", "k", "w_p", "w_g", "imse");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:<8} {:>10.4} {:>9.4} {:>9.4} {:>12.6e}",
                r.object,
                r.light_seed,
                r.mode.name(),
                r.k,
                r.w_p,
                r.w_g,
                r.imse
            );
        }
        let _ = writeln!(out);
        for s in &self.summary {
            let _ = writeln!(out, "mean {:<8} over {:>4} records: {:.6e}", s.mode.name(), s.records, s.mean_imse);
        }
        out
    }
}

/// Scores every case under `config.lights` random SH lights in every
/// requested mode. Records are ordered by case, then light, then mode.
pub fn run_protocol(cases: &[ProtocolCase<'_>], config: &ProtocolConfig) -> Result<EvalReport> {
    let lights: Vec<(u64, Sh9)> = (0..config.lights as u64)
        .map(|j| {
            let seed = config.seed.wrapping_add(j);
            (seed, light_for_seed(seed))
        })
        .collect();
    let n_lights = lights.len();
    let pairs = cases.len() * n_lights;

    // Targets and oracle weights for every pair; regression needs the latter.
    let base: Vec<Result<(crate::raster::LinearImage, Weights)>> = exec::map_indexed(pairs, |p| {
        let case = &cases[p / n_lights];
        let light = &lights[p % n_lights].1;
        let target = case.truth.render(light)?;
        let oracle = model_imse(&target, case.model, &LightSpec::Sh(*light), Weighting::Oracle)?;
        Ok((target, oracle.weights))
    });
    let base: Vec<(crate::raster::LinearImage, Weights)> = base.into_iter().collect::<Result<_>>()?;

    let modes = &config.modes;
    let records: Vec<Result<EvalRecord>> = exec::map_indexed(pairs * modes.len(), |q| {
        let p = q / modes.len();
        let mode = modes[q % modes.len()];
        let (ci, li) = (p / n_lights, p % n_lights);
        let case = &cases[ci];
        let (seed, light) = lights[li];
        let weighting = match mode {
            WeightMode::Oracle => Weighting::Fixed(base[p].1),
            WeightMode::Default => Weighting::Fixed(Weights::DEFAULT),
            WeightMode::Coarse => Weighting::Fixed(Weights::COARSE),
            WeightMode::Regress => {
                let training: Vec<(Sh9, Weights)> = (0..pairs)
                    .filter(|&o| cases[o / n_lights].name != case.name)
                    .map(|o| (lights[o % n_lights].1, base[o].1))
                    .collect();
                if training.is_empty() {
                    Weighting::Fixed(Weights::DEFAULT)
                } else {
                    Weighting::Fixed(regress_weights(&light, &training, &config.regression)?)
                }
            }
        };
        let s = model_imse(&base[p].0, case.model, &LightSpec::Sh(light), weighting)?;
        Ok(EvalRecord {
            object: case.name.to_string(),
            light_seed: seed,
            mode,
            k: s.k,
            w_p: s.weights.wp,
            w_g: s.weights.wg,
            imse: s.imse,
            n: s.n,
        })
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(records, modes))
}
