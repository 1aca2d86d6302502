//! Counter-based Gaussian draws and Wiener increment ensembles.
//!
//! Every draw is a pure function of `(master_seed, stream_salt, path, step, mode)`:
//! the indices are folded into a 64-bit key by repeated SplitMix64 finalisation,
//! two decorrelated lanes of that key give two uniforms, and a Box–Muller
//! cosine branch turns them into one standard normal. No generator state is
//! carried between draws, so any sub-block of an ensemble can be regenerated
//! on its own and worker count never changes the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Recorded in every report: the bit-exactness claims depend on it.
pub const GAUSSIAN_METHOD: &str = "splitmix64-counter/box-muller-cos";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const PATH_MUL: u64 = 0xd1b5_4a32_d192_ed03;
const STEP_MUL: u64 = 0xabc9_8388_fb8f_ac03;
const MODE_MUL: u64 = 0x8cb9_2ba7_2f3d_8dd7;
const LANE_MUL: u64 = 0x94d0_49bb_1331_11eb;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an experiment: master seed plus a salt identifying the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_salt: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_salt: u64) -> Self {
        Self {
            master_seed,
            stream_salt,
        }
    }

    /// Derived seed for an independent sub-experiment (data draws, auxiliary variables).
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_salt: mix64(self.stream_salt ^ tag.wrapping_mul(GOLDEN)),
        }
    }

    #[inline]
    fn key(&self, path: u64, step: u64, mode: u64) -> u64 {
        let mut h = mix64(self.master_seed.wrapping_add(GOLDEN));
        h = mix64(h ^ self.stream_salt.wrapping_mul(LANE_MUL));
        h = mix64(h.wrapping_add(path.wrapping_mul(PATH_MUL)));
        h = mix64(h.wrapping_add(step.wrapping_mul(STEP_MUL)));
        mix64(h.wrapping_add(mode.wrapping_mul(MODE_MUL)))
    }

    /// Raw 64-bit counter output for `(path, step, mode, lane)`.
    #[inline]
    pub fn bits(&self, path: u64, step: u64, mode: u64, lane: u64) -> u64 {
        mix64(self.key(path, step, mode) ^ lane.wrapping_add(1).wrapping_mul(GOLDEN))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, path: u64, step: u64, mode: u64, lane: u64) -> f64 {
        ((self.bits(path, step, mode, lane) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw.
    #[inline]
    pub fn normal(&self, path: u64, step: u64, mode: u64) -> f64 {
        let u1 = self.uniform(path, step, mode, 0);
        let u2 = self.uniform(path, step, mode, 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Wiener increments `Δw^k` laid out as `[path][step][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerBatch<S> {
    increments: Vec<S>,
    paths: usize,
    steps: usize,
    modes: usize,
    dt: S,
    seed: Option<SeedSpec>,
}

fn checked_len(paths: usize, steps: usize, modes: usize) -> Result<usize> {
    paths
        .checked_mul(steps)
        .and_then(|n| n.checked_mul(modes))
        .filter(|&n| n <= isize::MAX as usize / 16)
        .ok_or_else(|| {
            Error::Size(format!(
                "{paths} paths x {steps} steps x {modes} modes overflows"
            ))
        })
}

/// Draws `N(0, dt)` increments keyed on `(path, step, mode)`.
pub fn wiener_increments<S: Scalar>(
    seed: SeedSpec,
    paths: usize,
    steps: usize,
    modes: usize,
    dt: S,
) -> Result<WienerBatch<S>> {
    if paths == 0 || steps == 0 || modes == 0 {
        return Err(Error::InvalidArgument(
            "paths, steps and modes must be at least 1".into(),
        ));
    }
    if !(dt > S::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let len = checked_len(paths, steps, modes)?;
    let sd = dt.to_f64_lossy().sqrt();
    let per_path = steps * modes;
    let mut increments = vec![S::zero(); len];
    increments
        .par_chunks_mut(per_path)
        .enumerate()
        .for_each(|(p, chunk)| {
            for s in 0..steps {
                for k in 0..modes {
                    let z = seed.normal(p as u64, s as u64, k as u64);
                    chunk[s * modes + k] = S::lit(z * sd);
                }
            }
        });
    Ok(WienerBatch {
        increments,
        paths,
        steps,
        modes,
        dt,
        seed: Some(seed),
    })
}

impl<S: Scalar> WienerBatch<S> {
    /// Builds a batch from explicit increments (`[path][step][mode]`).
    pub fn from_increments(
        increments: Vec<S>,
        paths: usize,
        steps: usize,
        modes: usize,
        dt: S,
    ) -> Result<Self> {
        let len = checked_len(paths, steps, modes)?;
        if increments.len() != len || len == 0 {
            return Err(Error::Size(format!(
                "expected {len} increments, got {}",
                increments.len()
            )));
        }
        Ok(Self {
            increments,
            paths,
            steps,
            modes,
            dt,
            seed: None,
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn dt(&self) -> S {
        self.dt
    }
    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }
    pub fn as_slice(&self) -> &[S] {
        &self.increments
    }

    #[inline]
    pub fn get(&self, path: usize, step: usize, mode: usize) -> S {
        self.increments[(path * self.steps + step) * self.modes + mode]
    }

    /// Increments of one path, `[step][mode]`.
    pub fn path(&self, path: usize) -> &[S] {
        let n = self.steps * self.modes;
        &self.increments[path * n..(path + 1) * n]
    }

    /// Increments of one step of one path, one entry per mode.
    pub fn at(&self, path: usize, step: usize) -> &[S] {
        let o = (path * self.steps + step) * self.modes;
        &self.increments[o..o + self.modes]
    }

    /// Coupled coarse batch: each coarse increment is the sum of `factor`
    /// consecutive fine increments, so both resolutions share one Brownian path.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        let steps = self.steps / factor;
        let mut out = vec![S::zero(); self.paths * steps * self.modes];
        for p in 0..self.paths {
            for s in 0..steps {
                for k in 0..self.modes {
                    let mut acc = S::zero();
                    for j in 0..factor {
                        acc = acc + self.get(p, s * factor + j, k);
                    }
                    out[(p * steps + s) * self.modes + k] = acc;
                }
            }
        }
        Ok(Self {
            increments: out,
            paths: self.paths,
            steps,
            modes: self.modes,
            dt: self.dt * S::from_usize_exact(factor),
            seed: self.seed,
        })
    }

    /// The first `n` paths (a prefix is itself a valid ensemble).
    pub fn take_paths(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.paths {
            return Err(Error::InvalidArgument(format!(
                "cannot take {n} of {} paths",
                self.paths
            )));
        }
        let per = self.steps * self.modes;
        Ok(Self {
            increments: self.increments[..n * per].to_vec(),
            paths: n,
            ..self.clone()
        })
    }
}

/// Cumulative sums along the step axis: `w^k` at the end of each step.
pub fn partial_sums<S: Scalar>(batch: &WienerBatch<S>) -> Vec<S> {
    let mut out = batch.increments.clone();
    let m = batch.modes;
    for p in 0..batch.paths {
        for s in 1..batch.steps {
            for k in 0..m {
                let prev = out[(p * batch.steps + s - 1) * m + k];
                out[(p * batch.steps + s) * m + k] = prev + out[(p * batch.steps + s) * m + k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn increments_have_zero_mean() {
        let b = wiener_increments::<f64>(SeedSpec::new(7, 1), 10_000, 1, 1, 1.0).unwrap();
        let (m, _) = mean_var(b.as_slice());
        assert!(m.abs() <= 3.0 * (1.0f64 / 1e4).sqrt(), "mean {m}");
    }

    #[test]
    fn increments_have_variance_dt() {
        let b = wiener_increments::<f64>(SeedSpec::new(7, 1), 10_000, 1, 1, 0.25).unwrap();
        let (_, v) = mean_var(b.as_slice());
        assert!((v - 0.25).abs() <= 0.05 * 0.25, "var {v}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = wiener_increments::<f64>(SeedSpec::new(3, 9), 50, 20, 2, 0.01).unwrap();
        let b = wiener_increments::<f64>(SeedSpec::new(3, 9), 50, 20, 2, 0.01).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = wiener_increments::<f64>(SeedSpec::new(3, 10), 50, 20, 2, 0.01).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn sub_blocks_are_reproducible_in_isolation() {
        let seed = SeedSpec::new(11, 2);
        let b = wiener_increments::<f64>(seed, 40, 30, 3, 0.5).unwrap();
        let sd = 0.5f64.sqrt();
        for &(p, s, k) in &[(0, 0, 0), (39, 29, 2), (17, 4, 1)] {
            assert_eq!(b.get(p, s, k), seed.normal(p as u64, s as u64, k as u64) * sd);
        }
    }

    #[test]
    fn distinct_slices_are_uncorrelated() {
        let n = 10_000;
        let b = wiener_increments::<f64>(SeedSpec::new(5, 5), n, 3, 2, 1.0).unwrap();
        let slice = |s: usize, k: usize| (0..n).map(|p| b.get(p, s, k)).collect::<Vec<_>>();
        let pairs = [((0, 0), (1, 0)), ((0, 0), (0, 1)), ((2, 1), (1, 1))];
        for ((s1, k1), (s2, k2)) in pairs {
            let x = slice(s1, k1);
            let y = slice(s2, k2);
            let (mx, vx) = mean_var(&x);
            let (my, vy) = mean_var(&y);
            let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
                / (n as f64 - 1.0);
            let corr = cov / (vx * vy).sqrt();
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(wiener_increments::<f64>(SeedSpec::new(0, 0), 0, 1, 1, 1.0).is_err());
        assert!(wiener_increments::<f64>(SeedSpec::new(0, 0), 1, 1, 1, 0.0).is_err());
        assert!(matches!(
            wiener_increments::<f64>(SeedSpec::new(0, 0), usize::MAX, 2, 2, 1.0),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn partial_sums_small_cases() {
        let b = WienerBatch::from_increments(vec![0.3], 1, 1, 1, 1.0).unwrap();
        assert_eq!(partial_sums(&b), vec![0.3]);
        let b = WienerBatch::from_increments(vec![1.0, -1.0], 1, 2, 1, 1.0).unwrap();
        assert_eq!(partial_sums(&b), vec![1.0, 0.0]);
    }

    #[test]
    fn final_partial_sum_has_variance_t() {
        let (paths, steps, dt) = (10_000, 1000, 1e-3);
        let b = wiener_increments::<f64>(SeedSpec::new(1, 42), paths, steps, 1, dt).unwrap();
        let w = partial_sums(&b);
        let finals: Vec<f64> = (0..paths).map(|p| w[p * steps + steps - 1]).collect();
        let (_, v) = mean_var(&finals);
        // sample variance of a Gaussian has relative sd sqrt(2/(N-1)) ~ 1.4%
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn coarsening_sums_fine_increments() {
        let b = wiener_increments::<f64>(SeedSpec::new(2, 2), 3, 8, 2, 0.125).unwrap();
        let c = b.coarsen(4).unwrap();
        assert_eq!(c.steps(), 2);
        assert_eq!(c.dt(), 0.5);
        let direct: f64 = (4..8).map(|s| b.get(1, s, 1)).sum();
        assert_eq!(c.get(1, 1, 1), direct);
        assert!(b.coarsen(3).is_err());
    }
}
