//! Monte Carlo checks of the closed-form distortion expressions.
//!
//! Trials are split into fixed-size chunks, one RNG stream per chunk, so
//! results are bit-reproducible for a given seed regardless of thread count.

use crate::error::{Error, Result};
use crate::schemes::MatrixScheme;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

const CHUNK: u64 = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Source samples per channel use.
    pub n: u32,
    /// Transmit power of the analog signal.
    pub power: f64,
    /// Power of the digital layer seen as interference.
    pub p_1: f64,
    /// Channel noise variance.
    pub noise: f64,
    pub trials: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: u32, power: f64, p_1: f64, noise: f64, trials: u64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("need at least one source sample per channel use".into()));
        }
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::Invalid(format!("power = {power} must be nonnegative and finite")));
        }
        if !(p_1 >= 0.0 && p_1.is_finite()) {
            return Err(Error::Invalid(format!(
                "interference power = {p_1} must be nonnegative and finite"
            )));
        }
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::Invalid(format!("noise = {noise} must be positive and finite")));
        }
        if trials == 0 {
            return Err(Error::Invalid("need at least one trial".into()));
        }
        Ok(SimConfig { n, power, p_1, noise, trials, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_distortion: f64,
    pub std_error: f64,
    pub trials: u64,
    pub config_echo: SimConfig,
}

/// Runs `per_chunk(rng, chunk_trials)` over all chunks in parallel and sums
/// the returned pairs in chunk order. The RNG for chunk `i` is the seeded
/// generator switched to stream `i`, so the draw sequence is independent of
/// scheduling. The pairs accumulate `sum(d - 1)` and `sum((d - 1)^2)`;
/// centering at the unit source variance keeps the later variance
/// subtraction well conditioned when distortions sit near 1.
fn run_chunks<F>(trials: u64, seed: u64, per_chunk: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha8Rng, u64) -> (f64, f64) + Sync,
{
    let n_chunks = trials.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let chunk_trials = CHUNK.min(trials - i * CHUNK);
            per_chunk(&mut rng, chunk_trials)
        })
        .collect();
    partials.into_iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d))
}

fn summarize(config_echo: SimConfig, sums: (f64, f64)) -> SimResult {
    let t = config_echo.trials as f64;
    let (s1, s2) = sums;
    let mean_distortion = 1.0 + s1 / t;
    let std_error = if config_echo.trials > 1 {
        (((s2 - s1 * s1 / t) / (t - 1.0)).max(0.0) / t).sqrt()
    } else {
        0.0
    };
    SimResult { mean_distortion, std_error, trials: config_echo.trials, config_echo }
}

/// Simulates uncoded transmission: `n` unit-variance source samples scaled
/// onto one channel use, received through interference `p_1` and noise, and
/// estimated linearly. Per trial the draws are the `n` source samples, one
/// interference sample (only when `p_1 > 0`), then one noise sample.
pub fn simulate_uncoded(config: &SimConfig) -> Result<SimResult> {
    let cfg = SimConfig::new(
        config.n,
        config.power,
        config.p_1,
        config.noise,
        config.trials,
        config.seed,
    )?;
    let n = cfg.n as usize;
    let scale = (cfg.power / cfg.n as f64).sqrt();
    let coef = scale / (cfg.power + cfg.p_1 + cfg.noise);
    let has_interference = cfg.p_1 > 0.0;
    let sd_xi = cfg.p_1.sqrt();
    let sd_w = cfg.noise.sqrt();

    let sums = run_chunks(cfg.trials, cfg.seed, |rng, chunk_trials| {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..chunk_trials {
            let mut sx = 0.0;
            let mut sxx = 0.0;
            for _ in 0..n {
                let x: f64 = rng.sample(StandardNormal);
                sx += x;
                sxx += x * x;
            }
            let mut v = scale * sx;
            if has_interference {
                v += sd_xi * rng.sample::<f64, _>(StandardNormal);
            }
            v += sd_w * rng.sample::<f64, _>(StandardNormal);
            // (1/n) sum_t (x_t - coef v)^2 without storing the samples.
            let d = (sxx - 2.0 * coef * v * sx + n as f64 * coef * coef * v * v) / n as f64;
            let c = d - 1.0;
            s1 += c;
            s2 += c * c;
        }
        (s1, s2)
    });
    Ok(summarize(cfg, sums))
}

/// Simulates the analog stage of a matrix scheme: `V = K X + Z + W` with
/// interference power `p_1` per channel use and the linear MMSE estimate
/// `X_hat = K^T (K K^T + (p_1 + noise) I)^-1 V`. Per trial the draws are the
/// `n` source samples, `m` interference samples (only when `p_1 > 0`), then
/// `m` noise samples. The mean converges to
/// [`crate::schemes::matrix_analog_distortion`].
pub fn simulate_matrix_analog(
    ms: &MatrixScheme,
    noise: f64,
    trials: u64,
    seed: u64,
) -> Result<SimResult> {
    let cfg = SimConfig::new(
        ms.n.try_into()
            .map_err(|_| Error::Invalid(format!("source dimension {} exceeds u32", ms.n)))?,
        ms.analog_power(),
        ms.p_1,
        noise,
        trials,
        seed,
    )?;
    let (m, n) = (ms.m, ms.n);
    let mut gram = &ms.k_matrix * ms.k_matrix.transpose();
    for i in 0..m {
        gram[(i, i)] += ms.p_1 + noise;
    }
    let chol = nalgebra::Cholesky::new(gram)
        .ok_or_else(|| Error::Domain("channel Gram matrix is not positive definite".into()))?;
    let estimator = chol.solve(&ms.k_matrix);
    let has_interference = ms.p_1 > 0.0;
    let sd_xi = ms.p_1.sqrt();
    let sd_w = noise.sqrt();

    let sums = run_chunks(trials, seed, |rng, chunk_trials| {
        let mut x = DVector::zeros(n);
        let mut v = DVector::zeros(m);
        let mut xhat = DVector::zeros(n);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..chunk_trials {
            for i in 0..n {
                x[i] = rng.sample(StandardNormal);
            }
            v.gemv(1.0, &ms.k_matrix, &x, 0.0);
            if has_interference {
                for i in 0..m {
                    v[i] += sd_xi * rng.sample::<f64, _>(StandardNormal);
                }
            }
            for i in 0..m {
                v[i] += sd_w * rng.sample::<f64, _>(StandardNormal);
            }
            xhat.gemv_tr(1.0, &estimator, &v, 0.0);
            let mut err = 0.0;
            for i in 0..n {
                let e = x[i] - xhat[i];
                err += e * e;
            }
            let c = err / n as f64 - 1.0;
            s1 += c;
            s2 += c * c;
        }
        (s1, s2)
    });
    Ok(summarize(cfg, sums))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::matrix_analog_distortion;
    use crate::schemes::uncoded_distortion;
    use nalgebra::DMatrix;

    fn assert_within_4se(r: &SimResult, closed: f64) {
        assert!(r.std_error > 0.0);
        let gap = (r.mean_distortion - closed).abs();
        assert!(
            gap <= 4.0 * r.std_error,
            "mean {} vs closed {} is {:.2} standard errors apart",
            r.mean_distortion,
            closed,
            gap / r.std_error
        );
    }

    #[test]
    fn uncoded_matches_closed_form() {
        let cfg = SimConfig::new(100, 1.0, 0.0, 1.0, 200_000, 7).unwrap();
        let r = simulate_uncoded(&cfg).unwrap();
        let closed = uncoded_distortion(1.0, 1.0, 0.01).unwrap();
        assert_eq!(closed, 0.995);
        assert_within_4se(&r, closed);
        assert!(r.std_error < 1e-3);
    }

    #[test]
    fn uncoded_with_interference() {
        let cfg = SimConfig::new(50, 1.0, 1.0, 1.0, 200_000, 11).unwrap();
        let r = simulate_uncoded(&cfg).unwrap();
        let closed = uncoded_distortion(1.0, 2.0, 0.02).unwrap();
        assert_within_4se(&r, closed);
        assert_eq!(r.config_echo, cfg);
        assert_eq!(r.trials, 200_000);
    }

    #[test]
    fn zero_power_and_heavy_noise_leave_unit_distortion() {
        let silent = SimConfig::new(10, 0.0, 0.0, 1.0, 50_000, 3).unwrap();
        let r = simulate_uncoded(&silent).unwrap();
        assert_within_4se(&r, 1.0);

        let drowned = SimConfig::new(10, 1.0, 0.0, 1e6, 50_000, 3).unwrap();
        let r = simulate_uncoded(&drowned).unwrap();
        assert_within_4se(&r, uncoded_distortion(1.0, 1e6, 0.1).unwrap());
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let cfg = SimConfig::new(20, 2.0, 0.5, 1.0, 70_000, 42).unwrap();
        let a = simulate_uncoded(&cfg).unwrap();
        let b = simulate_uncoded(&cfg).unwrap();
        assert_eq!(a.mean_distortion.to_bits(), b.mean_distortion.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());

        let other = SimConfig { seed: 43, ..cfg };
        let c = simulate_uncoded(&other).unwrap();
        assert_ne!(a.mean_distortion.to_bits(), c.mean_distortion.to_bits());
    }

    #[test]
    fn standard_error_shrinks_like_sqrt_trials() {
        let small = SimConfig::new(10, 1.0, 0.0, 1.0, 40_000, 5).unwrap();
        let large = SimConfig { trials: 160_000, ..small };
        let se_small = simulate_uncoded(&small).unwrap().std_error;
        let se_large = simulate_uncoded(&large).unwrap().std_error;
        let ratio = se_small / se_large;
        assert!((1.4..2.9).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_trial_has_zero_std_error() {
        let cfg = SimConfig::new(4, 1.0, 0.0, 1.0, 1, 0).unwrap();
        let r = simulate_uncoded(&cfg).unwrap();
        assert_eq!(r.std_error, 0.0);
        assert!(r.mean_distortion.is_finite());
    }

    #[test]
    fn matrix_uniform_row_matches_closed_form() {
        let ms = MatrixScheme::uniform_row(10, 1.0, 1.0, 0.5).unwrap();
        let r = simulate_matrix_analog(&ms, 1.0, 100_000, 9).unwrap();
        let closed = matrix_analog_distortion(&ms, 1.0).unwrap();
        assert_within_4se(&r, closed);
        assert_eq!(r.config_echo.power, ms.analog_power());
        assert_eq!(r.config_echo.n, 10);
    }

    #[test]
    fn matrix_general_shape_matches_closed_form() {
        let k = DMatrix::from_row_slice(2, 4, &[0.8, -0.2, 0.5, 0.1, 0.3, 0.9, -0.4, 0.6]);
        let ms = MatrixScheme::new(k, DMatrix::identity(4, 4), 0.3).unwrap();
        let r = simulate_matrix_analog(&ms, 0.7, 200_000, 13).unwrap();
        let closed = matrix_analog_distortion(&ms, 0.7).unwrap();
        assert_within_4se(&r, closed);
    }

    #[test]
    fn matrix_zero_gain_gives_unit_distortion() {
        let ms = MatrixScheme::uniform_row(5, 0.0, 1.0, 0.0).unwrap();
        let r = simulate_matrix_analog(&ms, 1.0, 50_000, 1).unwrap();
        assert_eq!(matrix_analog_distortion(&ms, 1.0).unwrap(), 1.0);
        assert_within_4se(&r, 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0, 1.0, 0.0, 1.0, 10, 0).is_err());
        assert!(SimConfig::new(1, -1.0, 0.0, 1.0, 10, 0).is_err());
        assert!(SimConfig::new(1, 1.0, -0.1, 1.0, 10, 0).is_err());
        assert!(SimConfig::new(1, 1.0, 0.0, 0.0, 10, 0).is_err());
        assert!(SimConfig::new(1, 1.0, 0.0, 1.0, 0, 0).is_err());
    }
}
