//! Detail-weight selection: least-squares oracle and illumination regression.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lighting::{Sh9, SH_COUNT};
use crate::raster::{LinearImage, Mask};

/// Weights of the parametric residual and the geometric detail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub wp: f64,
    pub wg: f64,
}

impl Weights {
    pub const DEFAULT: Weights = Weights { wp: 1.0, wg: 1.0 };
    pub const COARSE: Weights = Weights { wp: 0.0, wg: 0.0 };

    pub fn new(wp: f64, wg: f64) -> Self {
        Self { wp, wg }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Samples of `A ⊙ layer` over Ω, all channels.
fn tinted(albedo: &LinearImage, layer: &LinearImage, mask: &Mask) -> Vec<f64> {
    let c = albedo.channels();
    mask.pixels()
        .flat_map(|i| (0..c).map(move |ch| albedo.get(i, ch) * layer.get(i, 0)))
        .collect()
}

fn samples(img: &LinearImage, mask: &Mask) -> Vec<f64> {
    let c = img.channels();
    mask.pixels()
        .flat_map(|i| (0..c).map(move |ch| img.get(i, ch)))
        .collect()
}

/// Least-squares fit of `target ≈ a0 (A⊙S_c) + a1 (A⊙S_p) + a2 (A⊙S_g)`
/// over Ω, returned as `k = a0` and `w = (a1, a2) / a0`. A detail basis that
/// is zero or linearly dependent on the others is dropped and its weight is
/// zero.
pub fn oracle_weights(
    target: &LinearImage,
    albedo: &LinearImage,
    coarse: &LinearImage,
    sp: &LinearImage,
    sg: &LinearImage,
    mask: &Mask,
) -> Result<(f64, Weights)> {
    let dims = mask.dims();
    for img in [target, albedo, coarse, sp, sg] {
        if img.dims() != dims {
            return Err(Error::mismatch("oracle inputs and mask differ in size"));
        }
    }
    if target.channels() != albedo.channels() {
        return Err(Error::mismatch("target and albedo differ in channel count"));
    }
    let t = samples(target, mask);
    let basis = [tinted(albedo, coarse, mask), tinted(albedo, sp, mask), tinted(albedo, sg, mask)];
    let mut g = Matrix3::<f64>::zeros();
    let mut r = Vector3::<f64>::zeros();
    for a in 0..3 {
        r[a] = exec::dot(&basis[a], &t);
        for b in a..3 {
            let v = exec::dot(&basis[a], &basis[b]);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    // Greedy selection: keep a basis only if it adds a direction.
    let mut keep: Vec<usize> = Vec::new();
    for a in 0..3 {
        if g[(a, a)] <= 0.0 {
            continue;
        }
        let mut trial = keep.clone();
        trial.push(a);
        let sub = DMatrix::from_fn(trial.len(), trial.len(), |i, j| g[(trial[i], trial[j])]);
        let min_eig = sub.clone().symmetric_eigen().eigenvalues.min();
        let scale = trial.iter().map(|&i| g[(i, i)]).fold(0.0, f64::max);
        if min_eig > 1e-10 * scale {
            keep = trial;
        }
    }
    if !keep.contains(&0) {
        return Err(Error::DegenerateCoarseBasis);
    }
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| g[(keep[i], keep[j])]);
    let rhs = DVector::from_fn(keep.len(), |i, _| r[keep[i]]);
    let sol = sub
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::DegenerateCoarseBasis)?;
    let mut a = [0.0; 3];
    for (i, &k) in keep.iter().enumerate() {
        a[k] = sol[i];
    }
    if a[0].abs() < 1e-9 {
        return Err(Error::DegenerateCoarseBasis);
    }
    Ok((a[0], Weights::new(a[1] / a[0], a[2] / a[0])))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionParams {
    pub neighbors: usize,
    pub ridge: f64,
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self {
            neighbors: 100,
            ridge: 1e-3,
        }
    }
}

/// Regression features: the eight non-constant coefficients divided by the
/// constant one.
pub fn light_features(light: &Sh9) -> Result<[f64; SH_COUNT - 1]> {
    let c = &light.coefficients;
    if c[0].abs() < 1e-12 {
        return Err(Error::InvalidInput("light has no constant term to normalize by".into()));
    }
    let mut f = [0.0; SH_COUNT - 1];
    for k in 1..SH_COUNT {
        f[k - 1] = c[k] / c[0];
    }
    Ok(f)
}

/// Ridge regression with an unpenalized intercept over the nearest training
/// lights in feature space, evaluated at the query light.
pub fn regress_weights(query: &Sh9, training: &[(Sh9, Weights)], params: &RegressionParams) -> Result<Weights> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let q = light_features(query)?;
    let mut rows: Vec<([f64; SH_COUNT - 1], Weights, f64)> = training
        .iter()
        .map(|(l, w)| {
            let f = light_features(l)?;
            let d = f.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            Ok((f, *w, d))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.2.total_cmp(&b.2));
    rows.truncate(params.neighbors.max(1));
    let n = rows.len() as f64;
    let dim = SH_COUNT - 1;
    let mut mean = [0.0; SH_COUNT - 1];
    let (mut mp, mut mg) = (0.0, 0.0);
    for (f, w, _) in &rows {
        for k in 0..dim {
            mean[k] += f[k] / n;
        }
        mp += w.wp / n;
        mg += w.wg / n;
    }
    let mut xtx = DMatrix::<f64>::zeros(dim, dim);
    let mut xty = DMatrix::<f64>::zeros(dim, 2);
    for (f, w, _) in &rows {
        let x: Vec<f64> = (0..dim).map(|k| f[k] - mean[k]).collect();
        for a in 0..dim {
            xty[(a, 0)] += x[a] * (w.wp - mp);
            xty[(a, 1)] += x[a] * (w.wg - mg);
            for b in 0..dim {
                xtx[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..dim {
        xtx[(a, a)] += params.ridge;
    }
    let beta = xtx
        .cholesky()
        .ok_or_else(|| Error::Solver("regression system is not positive definite".into()))?
        .solve(&xty);
    let mut out = [mp, mg];
    for (o, col) in out.iter_mut().zip(0..2) {
        for k in 0..dim {
            *o += beta[(k, col)] * (q[k] - mean[k]);
        }
    }
    Ok(Weights::new(out[0], out[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(w: usize, h: usize, f: impl Fn(usize) -> f64) -> LinearImage {
        LinearImage::from_vec(w, h, 1, (0..w * h).map(f).collect()).unwrap()
    }

    fn setup() -> (LinearImage, LinearImage, LinearImage, LinearImage, Mask) {
        let (w, h) = (12, 10);
        let m = Mask::from_fn(w, h, |x, y| x > 1 && y > 0).unwrap();
        let albedo = LinearImage::from_vec(
            w,
            h,
            3,
            (0..w * h * 3).map(|i| 0.2 + 0.6 * ((i * 7) % 11) as f64 / 11.0).collect(),
        )
        .unwrap();
        let sc = layer(w, h, |i| 0.5 + 0.3 * (i as f64 * 0.1).sin());
        let sp = layer(w, h, |i| 0.1 * (i as f64 * 0.7).cos());
        let sg = layer(w, h, |i| 0.05 * (((i * 13) % 5) as f64 - 2.0));
        (albedo, sc, sp, sg, m)
    }

    fn combine(a: &LinearImage, layers: [(&LinearImage, f64); 3]) -> LinearImage {
        let dims = a.dims();
        let data = (0..dims.len())
            .flat_map(|i| {
                (0..3).map(move |c| layers.iter().map(|(l, k)| k * a.get(i, c) * l.get(i, 0)).sum::<f64>())
            })
            .collect();
        LinearImage::from_vec(dims.width, dims.height, 3, data).unwrap()
    }

    #[test]
    fn recovers_a_constructed_target() {
        let (a, sc, sp, sg, m) = setup();
        let t = combine(&a, [(&sc, 2.0), (&sp, 1.0), (&sg, 0.5)]);
        let (k, w) = oracle_weights(&t, &a, &sc, &sp, &sg, &m).unwrap();
        assert!((k - 2.0).abs() < 1e-6);
        assert!((w.wp - 0.5).abs() < 1e-6);
        assert!((w.wg - 0.25).abs() < 1e-6);
    }

    #[test]
    fn zero_details_fall_back_to_the_scale() {
        let (a, sc, _, _, m) = setup();
        let zero = layer(12, 10, |_| 0.0);
        let t = combine(&a, [(&sc, 1.5), (&zero, 0.0), (&zero, 0.0)]);
        let (k, w) = oracle_weights(&t, &a, &sc, &zero, &zero, &m).unwrap();
        assert!((k - 1.5).abs() < 1e-9);
        assert_eq!(w, Weights::COARSE);
        // A duplicated basis is dropped too.
        let (k, w) = oracle_weights(&t, &a, &sc, &sc, &zero, &m).unwrap();
        assert!((k - 1.5).abs() < 1e-9);
        assert_eq!(w.wp, 0.0);
        assert!(matches!(
            oracle_weights(&t, &a, &zero, &sc, &zero, &m),
            Err(Error::DegenerateCoarseBasis)
        ));
    }

    #[test]
    fn oracle_beats_a_grid_of_alternatives() {
        let (a, sc, sp, sg, m) = setup();
        let noise = LinearImage::from_vec(
            12,
            10,
            3,
            (0..360).map(|i| 0.3 + 0.2 * ((i * 31) % 17) as f64 / 17.0).collect(),
        )
        .unwrap();
        let (k, w) = oracle_weights(&noise, &a, &sc, &sp, &sg, &m).unwrap();
        let err = |k: f64, wp: f64, wg: f64| {
            let r = combine(&a, [(&sc, k), (&sp, k * wp), (&sg, k * wg)]);
            m.pixels()
                .flat_map(|i| (0..3).map(move |c| (i, c)))
                .map(|(i, c)| (noise.get(i, c) - r.get(i, c)).powi(2))
                .sum::<f64>()
        };
        let best = err(k, w.wp, w.wg);
        for dp in -2..=2 {
            for dg in -2..=2 {
                let alt = err(k * 1.1, w.wp + 0.3 * dp as f64, w.wg + 0.3 * dg as f64);
                assert!(best <= alt + 1e-12);
                let alt = err(k, w.wp + 0.3 * dp as f64, w.wg + 0.3 * dg as f64);
                assert!(best <= alt + 1e-12);
            }
        }
    }

    fn random_light(rng: &mut ChaCha8Rng) -> Sh9 {
        let mut c = [0.0; SH_COUNT];
        c[0] = rng.gen_range(0.5..1.5);
        for v in c.iter_mut().skip(1) {
            *v = rng.gen_range(-0.3..0.3);
        }
        Sh9::new(c).unwrap()
    }

    #[test]
    fn constant_targets_are_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train: Vec<(Sh9, Weights)> = (0..40).map(|_| (random_light(&mut rng), Weights::new(0.7, 0.3))).collect();
        let w = regress_weights(&random_light(&mut rng), &train, &RegressionParams::default()).unwrap();
        assert!((w.wp - 0.7).abs() < 1e-6 && (w.wg - 0.3).abs() < 1e-6);
    }

    #[test]
    fn linear_targets_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = |l: &Sh9| {
            let f = light_features(l).unwrap();
            Weights::new(0.2 + f.iter().enumerate().map(|(k, v)| (k as f64 - 3.0) * 0.1 * v).sum::<f64>(), 1.0 - 0.5 * f[2])
        };
        let train: Vec<(Sh9, Weights)> = (0..200)
            .map(|_| {
                let l = random_light(&mut rng);
                (l, truth(&l))
            })
            .collect();
        let params = RegressionParams {
            neighbors: 100,
            ridge: 1e-9,
        };
        for _ in 0..5 {
            let q = random_light(&mut rng);
            let w = regress_weights(&q, &train, &params).unwrap();
            let t = truth(&q);
            assert!((w.wp - t.wp).abs() < 1e-4 && (w.wg - t.wg).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_features_are_still_defined() {
        let base = [1.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let train: Vec<(Sh9, Weights)> = (0..10)
            .map(|i| {
                let mut c = base;
                c[1] = 0.1 * i as f64;
                (Sh9::new(c).unwrap(), Weights::new(i as f64, 1.0))
            })
            .collect();
        let mut c = base;
        c[1] = 0.35;
        let w = regress_weights(&Sh9::new(c).unwrap(), &train, &RegressionParams::default()).unwrap();
        assert!((w.wp - 3.5).abs() < 1e-2);
        assert!(matches!(
            regress_weights(&Sh9::new(c).unwrap(), &[], &RegressionParams::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }
}
