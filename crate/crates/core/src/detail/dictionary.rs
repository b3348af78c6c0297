//! Patch dictionaries: sampling, training and persistence.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lasso::{lasso_cd, lasso_objective, LassoSettings};
use crate::error::{Error, Result};
use crate::exec;
use crate::io;
use crate::raster::{snap, LinearImage, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub atom_count: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub lambda: f64,
    pub alternations: usize,
    /// Patches with a smaller standard deviation are treated as constant.
    pub min_std: f64,
    /// Training needs at least this many patches per atom.
    pub patches_per_atom: usize,
    pub seed: u64,
    pub cd_tolerance: f64,
    pub cd_max_sweeps: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            atom_count: 500,
            patch_size: 12,
            stride: 4,
            lambda: 0.1,
            alternations: 20,
            min_std: 1e-4,
            patches_per_atom: 10,
            seed: 0,
            cd_tolerance: 1e-7,
            cd_max_sweeps: 200,
        }
    }
}

impl DictionaryConfig {
    pub(crate) fn lasso(&self) -> LassoSettings {
        LassoSettings {
            lambda: self.lambda,
            tolerance: self.cd_tolerance,
            max_sweeps: self.cd_max_sweeps,
        }
    }
}

/// Unit-norm, zero-mean atoms stored row-major (`atom_count × patch_size²`).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDictionary {
    pub patch_size: usize,
    pub stride: usize,
    pub lambda: f64,
    atoms: Vec<f64>,
    gram: Vec<f64>,
}

/// Sidecar record written next to the atom image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryRecord {
    pub atom_count: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub lambda: f64,
}

fn gram_of(atoms: &[f64], dim: usize) -> Vec<f64> {
    let k = atoms.len() / dim;
    let rows = exec::map_indexed(k, |i| {
        let a = &atoms[i * dim..(i + 1) * dim];
        (0..k)
            .map(|j| {
                let b = &atoms[j * dim..(j + 1) * dim];
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

impl PatchDictionary {
    /// Wraps atoms after checking unit norm and zero mean within 1e-6.
    pub fn new(patch_size: usize, stride: usize, lambda: f64, atoms: Vec<f64>) -> Result<Self> {
        let dim = patch_size * patch_size;
        if dim == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "atom data of length {} does not split into {patch_size}x{patch_size} patches",
                atoms.len()
            )));
        }
        if stride == 0 || lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::InvalidInput("stride and lambda must be positive".into()));
        }
        for (k, a) in atoms.chunks(dim).enumerate() {
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mean = a.iter().sum::<f64>() / dim as f64;
            if (norm - 1.0).abs() > 1e-6 || mean.abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "atom {k} has norm {norm} and mean {mean}"
                )));
            }
        }
        let gram = gram_of(&atoms, dim);
        Ok(Self {
            patch_size,
            stride,
            lambda,
            atoms,
            gram,
        })
    }

    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len() / self.dim()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.dim()..(k + 1) * self.dim()]
    }

    pub fn lasso(&self) -> LassoSettings {
        LassoSettings {
            lambda: self.lambda,
            tolerance: 1e-7,
            max_sweeps: 200,
        }
    }

    /// Sparse code of a zero-mean patch.
    pub fn encode(&self, patch: &[f64], settings: &LassoSettings) -> Vec<f64> {
        let corr = self.correlate(patch);
        let mut code = vec![0.0; self.atom_count()];
        lasso_cd(&self.gram, &corr, &mut code, settings);
        code
    }

    fn correlate(&self, patch: &[f64]) -> Vec<f64> {
        self.atoms
            .chunks(self.dim())
            .map(|a| a.iter().zip(patch).map(|(x, y)| x * y).sum())
            .collect()
    }

    pub fn decode(&self, code: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (k, &c) in code.iter().enumerate() {
            if c != 0.0 {
                for (o, a) in out.iter_mut().zip(self.atom(k)) {
                    *o += c * a;
                }
            }
        }
        out
    }

    /// The same atoms coded with a different sparsity weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            lambda,
            ..self.clone()
        })
    }

    pub fn record(&self) -> DictionaryRecord {
        DictionaryRecord {
            atom_count: self.atom_count(),
            patch_size: self.patch_size,
            stride: self.stride,
            lambda: self.lambda,
        }
    }

    /// Path of the sidecar record for an atom image path.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes the atoms as a PFM image (one row per atom) and the sidecar
    /// record next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let img = LinearImage::from_vec(self.dim(), self.atom_count(), 1, self.atoms.clone())?;
        io::save_pfm(&img, path)?;
        let side = Self::sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.record())?;
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let rec: DictionaryRecord = serde_json::from_str(&text)?;
        let img = io::load_pfm(path)?;
        if img.width() != rec.patch_size * rec.patch_size || img.height() != rec.atom_count {
            return Err(Error::mismatch(format!(
                "atom image is {}x{}, record says {} atoms of {}x{}",
                img.width(),
                img.height(),
                rec.atom_count,
                rec.patch_size,
                rec.patch_size
            )));
        }
        Self::new(rec.patch_size, rec.stride, rec.lambda, img.into_vec())
    }
}

/// Top-left corners of every stride-aligned patch lying fully inside Ω.
pub fn patch_origins(mask: &Mask, size: usize, stride: usize) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    if size > w || size > h {
        return Vec::new();
    }
    let dims = mask.dims();
    // Summed-area table of the indicator for O(1) containment checks.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let v = mask.inside(dims.index(x, y)) as u32;
            sat[(y + 1) * (w + 1) + x + 1] = v + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let count = |x: usize, y: usize| {
        let (x1, y1) = (x + size, y + size);
        sat[y1 * (w + 1) + x1] + sat[y * (w + 1) + x] - sat[y * (w + 1) + x1] - sat[y1 * (w + 1) + x]
    };
    let full = (size * size) as u32;
    let mut out = Vec::new();
    for y in (0..=h - size).step_by(stride) {
        for x in (0..=w - size).step_by(stride) {
            if count(x, y) == full {
                out.push((x, y));
            }
        }
    }
    out
}

/// Patch at `(x0, y0)` and its mean.
pub fn extract_patch(img: &LinearImage, x0: usize, y0: usize, size: usize) -> (Vec<f64>, f64) {
    let mut p = Vec::with_capacity(size * size);
    for y in y0..y0 + size {
        for x in x0..x0 + size {
            p.push(img.get(img.dims().index(x, y), 0));
        }
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    (p, mean)
}

/// Mean-subtracted, non-constant patches from single-channel images.
pub fn sample_patches(corpus: &[(LinearImage, Mask)], config: &DictionaryConfig) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (img, mask) in corpus {
        if img.dims() != mask.dims() {
            return Err(Error::mismatch("corpus image and mask differ in size"));
        }
        img.require_channels(1, "corpus shading")?;
        for (x, y) in patch_origins(mask, config.patch_size, config.stride) {
            let (p, _) = extract_patch(img, x, y, config.patch_size);
            let var = p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64;
            if var.sqrt() >= config.min_std {
                out.push(p);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub patches: usize,
    /// `Σ ‖x − Da‖² + λ Σ ‖a‖₁` after the first coding pass and after every
    /// alternation.
    pub objective: Vec<f64>,
    pub reseeded: usize,
    /// Alternations where the plain optimal-directions update was replaced
    /// by per-atom updates because it would have raised the objective.
    pub safeguarded: usize,
}

fn center_normalize(v: &mut [f64]) -> bool {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

struct Coder<'a> {
    patches: &'a [Vec<f64>],
    lambda: f64,
}

impl Coder<'_> {
    fn code_all(&self, atoms: &[f64], dim: usize, codes: &mut [Vec<f64>], s: &LassoSettings) {
        let gram = gram_of(atoms, dim);
        let k = atoms.len() / dim;
        let new = exec::map_indexed(self.patches.len(), |p| {
            let corr: Vec<f64> = (0..k)
                .map(|j| atoms[j * dim..(j + 1) * dim].iter().zip(&self.patches[p]).map(|(a, b)| a * b).sum())
                .collect();
            let mut code = codes[p].clone();
            lasso_cd(&gram, &corr, &mut code, s);
            code
        });
        codes.iter_mut().zip(new).for_each(|(c, n)| *c = n);
    }

    /// Per-patch reconstruction error and the total objective.
    fn evaluate(&self, atoms: &[f64], dim: usize, codes: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let errs = exec::map_indexed(self.patches.len(), |p| {
            let mut r = self.patches[p].clone();
            for (j, &c) in codes[p].iter().enumerate() {
                if c != 0.0 {
                    for (ri, a) in r.iter_mut().zip(&atoms[j * dim..(j + 1) * dim]) {
                        *ri -= c * a;
                    }
                }
            }
            r.iter().map(|v| v * v).sum::<f64>()
        });
        let l1 = exec::sum(codes.len(), |p| codes[p].iter().map(|c| c.abs()).sum::<f64>());
        let total = exec::sum(errs.len(), |p| errs[p]) + self.lambda * l1;
        (errs, total)
    }
}

/// Method-of-optimal-directions candidate: `D = X Aᵀ (A Aᵀ)⁻¹`, then each
/// atom re-centred and renormalized. Atoms without codes are kept.
fn mod_update(patches: &[Vec<f64>], codes: &[Vec<f64>], atoms: &[f64], dim: usize) -> Option<Vec<f64>> {
    let k = atoms.len() / dim;
    let mut aat = DMatrix::<f64>::zeros(k, k);
    let mut xat = DMatrix::<f64>::zeros(dim, k);
    for (x, a) in patches.iter().zip(codes) {
        let nz: Vec<(usize, f64)> = a.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        for &(i, vi) in &nz {
            for &(j, vj) in &nz {
                aat[(i, j)] += vi * vj;
            }
            for (t, &xt) in x.iter().enumerate() {
                xat[(t, i)] += xt * vi;
            }
        }
    }
    for i in 0..k {
        aat[(i, i)] += 1e-9;
    }
    let chol = aat.cholesky()?;
    // D = X Aᵀ (A Aᵀ)⁻¹, solved as (A Aᵀ) Dᵀ = (X Aᵀ)ᵀ.
    let dt = chol.solve(&xat.transpose());
    let mut out = atoms.to_vec();
    for j in 0..k {
        let mut v: Vec<f64> = (0..dim).map(|t| dt[(j, t)]).collect();
        if center_normalize(&mut v) {
            out[j * dim..(j + 1) * dim].copy_from_slice(&v);
        }
    }
    Some(out)
}

/// Exact minimizer over each unit-norm, zero-mean atom in turn with the
/// codes fixed: `d_j ∝ R_j a_j`, where `R_j` is the residual without atom j.
fn atomwise_update(patches: &[Vec<f64>], codes: &[Vec<f64>], atoms: &mut [f64], dim: usize) {
    let k = atoms.len() / dim;
    let mut resid: Vec<Vec<f64>> = patches
        .iter()
        .zip(codes)
        .map(|(x, a)| {
            let mut r = x.clone();
            for (j, &c) in a.iter().enumerate() {
                if c != 0.0 {
                    for (ri, d) in r.iter_mut().zip(&atoms[j * dim..(j + 1) * dim]) {
                        *ri -= c * d;
                    }
                }
            }
            r
        })
        .collect();
    let users: Vec<Vec<usize>> = (0..k)
        .map(|j| (0..patches.len()).filter(|&p| codes[p][j] != 0.0).collect())
        .collect();
    for j in 0..k {
        if users[j].is_empty() {
            continue;
        }
        let old: Vec<f64> = atoms[j * dim..(j + 1) * dim].to_vec();
        let mut target = vec![0.0; dim];
        for &p in &users[j] {
            let c = codes[p][j];
            for t in 0..dim {
                target[t] += c * (resid[p][t] + c * old[t]);
            }
        }
        if !center_normalize(&mut target) {
            continue;
        }
        for &p in &users[j] {
            let c = codes[p][j];
            for t in 0..dim {
                resid[p][t] += c * (old[t] - target[t]);
            }
        }
        atoms[j * dim..(j + 1) * dim].copy_from_slice(&target);
    }
}

/// Learns a dictionary by alternating sparse coding with dictionary
/// updates. Every step keeps or lowers the training objective.
pub fn train_dictionary(
    corpus: &[(LinearImage, Mask)],
    config: &DictionaryConfig,
) -> Result<(PatchDictionary, TrainingReport)> {
    let patches = sample_patches(corpus, config)?;
    train_on_patches(patches, config)
}

pub fn train_on_patches(
    patches: Vec<Vec<f64>>,
    config: &DictionaryConfig,
) -> Result<(PatchDictionary, TrainingReport)> {
    let dim = config.patch_size * config.patch_size;
    let k = config.atom_count;
    let need = config.patches_per_atom * k;
    if patches.len() < need || k == 0 {
        return Err(Error::InsufficientCorpus(format!(
            "{} usable patches, need {need}",
            patches.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let mut atoms = Vec::with_capacity(k * dim);
    for &p in order.iter() {
        if atoms.len() == k * dim {
            break;
        }
        let mut v = patches[p].clone();
        if center_normalize(&mut v) {
            atoms.extend(v);
        }
    }
    if atoms.len() < k * dim {
        return Err(Error::InsufficientCorpus("too few non-constant patches to seed atoms".into()));
    }

    let coder = Coder {
        patches: &patches,
        lambda: config.lambda,
    };
    let settings = config.lasso();
    let mut codes = vec![vec![0.0; k]; patches.len()];
    coder.code_all(&atoms, dim, &mut codes, &settings);
    let (mut errs, mut objective) = coder.evaluate(&atoms, dim, &codes);
    let mut report = TrainingReport {
        patches: patches.len(),
        objective: vec![objective],
        reseeded: 0,
        safeguarded: 0,
    };

    for _ in 0..config.alternations {
        // Dictionary step.
        let candidate = mod_update(&patches, &codes, &atoms, dim);
        let accepted = candidate.and_then(|c| {
            let (e, o) = coder.evaluate(&c, dim, &codes);
            (o <= objective).then_some((c, e, o))
        });
        match accepted {
            Some((c, e, _)) => {
                atoms = c;
                errs = e;
            }
            None => {
                report.safeguarded += 1;
                let mut c = atoms.clone();
                atomwise_update(&patches, &codes, &mut c, dim);
                let (e, o) = coder.evaluate(&c, dim, &codes);
                if o <= objective {
                    atoms = c;
                    errs = e;
                }
            }
        }
        // Unused atoms carry no code, so replacing them is free.
        let mut worst: Vec<usize> = (0..patches.len()).collect();
        worst.sort_by(|&a, &b| errs[b].total_cmp(&errs[a]).then(a.cmp(&b)));
        let mut next = worst.into_iter();
        for j in 0..k {
            if codes.iter().all(|c| c[j] == 0.0) {
                for p in next.by_ref() {
                    let mut v = patches[p].clone();
                    if center_normalize(&mut v) {
                        atoms[j * dim..(j + 1) * dim].copy_from_slice(&v);
                        report.reseeded += 1;
                        break;
                    }
                }
            }
        }
        // Coding step, warm-started.
        coder.code_all(&atoms, dim, &mut codes, &settings);
        let (e, o) = coder.evaluate(&atoms, dim, &codes);
        errs = e;
        objective = o;
        report.objective.push(objective);
    }
    // Store atoms on the f32 grid so a saved dictionary reloads exactly.
    for a in atoms.chunks_mut(dim) {
        a.iter_mut().for_each(|v| *v = snap(*v));
    }
    let dict = PatchDictionary::new(config.patch_size, config.stride, config.lambda, atoms)?;
    Ok((dict, report))
}

/// Objective of one patch under a dictionary, for diagnostics.
pub fn patch_objective(dict: &PatchDictionary, patch: &[f64], code: &[f64]) -> f64 {
    let corr = dict.correlate(patch);
    let n2 = patch.iter().map(|v| v * v).sum();
    lasso_objective(&dict.gram, &corr, n2, code, dict.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn smooth_patches(n: usize, size: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b, c, d) = (
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                );
                let mut p: Vec<f64> = (0..size * size)
                    .map(|i| {
                        let (x, y) = ((i % size) as f64, (i / size) as f64);
                        a * x + b * y + c * x * x + d * x * y
                    })
                    .collect();
                let m = p.iter().sum::<f64>() / p.len() as f64;
                p.iter_mut().for_each(|v| *v -= m);
                p
            })
            .collect()
    }

    fn small_config() -> DictionaryConfig {
        DictionaryConfig {
            atom_count: 12,
            patch_size: 4,
            alternations: 6,
            ..DictionaryConfig::default()
        }
    }

    #[test]
    fn training_is_monotone_and_atoms_are_valid() {
        let (d, rep) = train_on_patches(smooth_patches(300, 4, 1), &small_config()).unwrap();
        assert_eq!(rep.objective.len(), 7);
        for w in rep.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
        }
        for k in 0..d.atom_count() {
            let a = d.atom(k);
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert!((a.iter().sum::<f64>() / a.len() as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_patches_is_an_error() {
        assert!(matches!(
            train_on_patches(smooth_patches(50, 4, 2), &small_config()),
            Err(Error::InsufficientCorpus(_))
        ));
    }

    #[test]
    fn save_and_load_round_trip() {
        let (d, _) = train_on_patches(smooth_patches(200, 4, 3), &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dict.pfm");
        d.save(&p).unwrap();
        assert!(dir.path().join("dict.json").exists());
        assert_eq!(PatchDictionary::load(&p).unwrap(), d);
    }

    #[test]
    fn origins_lie_inside_and_on_the_stride() {
        let m = Mask::disk(40, 40, 19.5, 19.5, 15.0).unwrap();
        let o = patch_origins(&m, 12, 4);
        assert!(!o.is_empty());
        for (x, y) in o {
            assert!(x % 4 == 0 && y % 4 == 0);
            for yy in y..y + 12 {
                for xx in x..x + 12 {
                    assert!(m.inside(m.dims().index(xx, yy)));
                }
            }
        }
    }

    #[test]
    fn atomwise_update_never_raises_the_fit() {
        let patches = smooth_patches(120, 4, 5);
        let cfg = small_config();
        let (d, _) = train_on_patches(patches.clone(), &DictionaryConfig { alternations: 0, ..cfg.clone() }).unwrap();
        let mut atoms: Vec<f64> = (0..d.atom_count()).flat_map(|k| d.atom(k).to_vec()).collect();
        let codes: Vec<Vec<f64>> = patches.iter().map(|p| d.encode(p, &cfg.lasso())).collect();
        let coder = Coder {
            patches: &patches,
            lambda: cfg.lambda,
        };
        let (_, before) = coder.evaluate(&atoms, 16, &codes);
        atomwise_update(&patches, &codes, &mut atoms, 16);
        let (_, after) = coder.evaluate(&atoms, 16, &codes);
        assert!(after <= before + 1e-12);
    }
}
