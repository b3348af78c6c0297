//! Coordinate-descent LASSO against a fixed dictionary.

/// Settings for one sparse-coding problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoSettings {
    /// Weight of the L1 term in `‖x − Da‖² + λ‖a‖₁`.
    pub lambda: f64,
    /// Stop once no coordinate moves by more than this in a full sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `‖x − Da‖² + λ‖a‖₁` for unit-norm atoms by cyclic coordinate
/// descent, warm-started from `code`.
///
/// `gram` is `DᵀD` (row-major, `k × k`) and `corr` is `Dᵀx`. Sweeps alternate
/// between all coordinates and the current active set. Returns the number of
/// full sweeps.
pub fn lasso_cd(gram: &[f64], corr: &[f64], code: &mut [f64], s: &LassoSettings) -> usize {
    let k = corr.len();
    debug_assert_eq!(gram.len(), k * k);
    let t = 0.5 * s.lambda;
    // g = G a, kept current as coordinates change.
    let mut g = vec![0.0; k];
    for (j, &a) in code.iter().enumerate() {
        if a != 0.0 {
            let row = &gram[j * k..(j + 1) * k];
            for (gi, &r) in g.iter_mut().zip(row) {
                *gi += a * r;
            }
        }
    }
    let update = |j: usize, code: &mut [f64], g: &mut [f64]| -> f64 {
        let old = code[j];
        let diag = gram[j * k + j];
        let rho = corr[j] - g[j] + diag * old;
        let new = soft_threshold(rho, t) / diag;
        let delta = new - old;
        if delta != 0.0 {
            code[j] = new;
            let row = &gram[j * k..(j + 1) * k];
            for (gi, &r) in g.iter_mut().zip(row) {
                *gi += delta * r;
            }
        }
        delta.abs()
    };
    let mut sweeps = 0;
    while sweeps < s.max_sweeps {
        sweeps += 1;
        let mut moved = 0.0f64;
        for j in 0..k {
            moved = moved.max(update(j, code, &mut g));
        }
        if moved <= s.tolerance {
            break;
        }
        // Polish the active set before the next full sweep.
        let active: Vec<usize> = (0..k).filter(|&j| code[j] != 0.0).collect();
        for _ in 0..s.max_sweeps {
            let mut moved = 0.0f64;
            for &j in &active {
                moved = moved.max(update(j, code, &mut g));
            }
            if moved <= s.tolerance {
                break;
            }
        }
    }
    sweeps
}

/// `‖x − Da‖² + λ‖a‖₁` given the Gram form: `‖x‖² − 2aᵀc + aᵀGa + λ‖a‖₁`.
pub fn lasso_objective(gram: &[f64], corr: &[f64], x_norm2: f64, code: &[f64], lambda: f64) -> f64 {
    let k = corr.len();
    let mut quad = 0.0;
    let mut lin = 0.0;
    let mut l1 = 0.0;
    for (i, &a) in code.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        lin += a * corr[i];
        l1 += a.abs();
        let row = &gram[i * k..(i + 1) * k];
        for (j, &b) in code.iter().enumerate() {
            if b != 0.0 {
                quad += a * row[j] * b;
            }
        }
    }
    x_norm2 - 2.0 * lin + quad + lambda * l1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, dim: usize, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms = vec![0.0; k * dim];
        for a in atoms.chunks_mut(dim) {
            a.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            a.iter_mut().for_each(|v| *v /= n);
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                gram[i * k + j] = (0..dim).map(|t| atoms[i * dim + t] * atoms[j * dim + t]).sum();
            }
        }
        let corr = (0..k).map(|i| (0..dim).map(|t| atoms[i * dim + t] * x[t]).sum()).collect();
        let xn = x.iter().map(|v| v * v).sum();
        (atoms, x, gram, corr, xn)
    }

    #[test]
    fn stationarity_at_convergence() {
        for seed in 0..5 {
            let (_, _, gram, corr, _) = random_problem(seed, 16, 40);
            let mut a = vec![0.0; 40];
            let s = LassoSettings {
                lambda: 0.2,
                tolerance: 1e-12,
                max_sweeps: 10_000,
            };
            lasso_cd(&gram, &corr, &mut a, &s);
            for j in 0..40 {
                // Gradient of the smooth part: 2(Ga − c)_j.
                let grad: f64 = 2.0 * ((0..40).map(|m| gram[j * 40 + m] * a[m]).sum::<f64>() - corr[j]);
                if a[j] != 0.0 {
                    assert!((grad + s.lambda * a[j].signum()).abs() < 1e-6);
                } else {
                    assert!(grad.abs() <= s.lambda + 1e-6);
                }
            }
        }
    }

    #[test]
    fn sweeps_never_raise_the_objective() {
        let (_, _, gram, corr, xn) = random_problem(7, 12, 30);
        let mut a = vec![0.0; 30];
        let s = LassoSettings {
            lambda: 0.1,
            tolerance: 0.0,
            max_sweeps: 1,
        };
        let mut last = lasso_objective(&gram, &corr, xn, &a, s.lambda);
        for _ in 0..50 {
            lasso_cd(&gram, &corr, &mut a, &s);
            let now = lasso_objective(&gram, &corr, xn, &a, s.lambda);
            assert!(now <= last + 1e-12 * last.abs());
            last = now;
        }
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        let dim = 10;
        let (atoms, x, gram, corr, xn) = random_problem(3, dim, 8);
        let a: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) * 0.1).collect();
        let direct: f64 = (0..dim)
            .map(|t| {
                let r = x[t] - (0..8).map(|i| atoms[i * dim + t] * a[i]).sum::<f64>();
                r * r
            })
            .sum::<f64>()
            + 0.3 * a.iter().map(|v| v.abs()).sum::<f64>();
        assert!((lasso_objective(&gram, &corr, xn, &a, 0.3) - direct).abs() < 1e-10);
    }

    #[test]
    fn small_signals_code_to_zero() {
        let (_, _, gram, corr, _) = random_problem(1, 8, 10);
        let scaled: Vec<f64> = corr.iter().map(|c| c * 1e-3).collect();
        let mut a = vec![0.0; 10];
        lasso_cd(&gram, &scaled, &mut a, &LassoSettings { lambda: 0.1, tolerance: 1e-12, max_sweeps: 100 });
        assert!(a.iter().all(|&v| v == 0.0));
    }
}
