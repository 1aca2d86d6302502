//! Space-independent model coefficients `a(t)`, `sigma(t)` and the
//! parabolicity / tangential-noise validators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coefficients sampled at increasing times and interpolated linearly in
/// between (held constant outside the sampled range).
///
/// `a[n]` is the symmetric diffusion matrix, `sigma[n][k] = [σ^{1k}, σ^{2k}]`
/// the gradient-noise vector of mode `k`. Lower-order terms `b^i`, `c`, `ν^k`
/// default to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients<S> {
    dim: usize,
    times: Vec<S>,
    a: Vec<[[S; 2]; 2]>,
    sigma: Vec<Vec<[S; 2]>>,
    drift: Vec<[S; 2]>,
    potential: Vec<S>,
    nu: Vec<Vec<S>>,
    kappa: S,
    big_k: S,
}

impl<S: Scalar> ModelCoefficients<S> {
    /// Time-independent coefficients.
    pub fn constant(dim: usize, a: [[S; 2]; 2], sigma: Vec<[S; 2]>, kappa: S, big_k: S) -> Result<Self> {
        Self::sampled(dim, vec![S::zero()], vec![a], vec![sigma], kappa, big_k)
    }

    /// Coefficients on `times` (strictly increasing); one `sigma` row per time.
    pub fn sampled(
        dim: usize,
        times: Vec<S>,
        a: Vec<[[S; 2]; 2]>,
        sigma: Vec<Vec<[S; 2]>>,
        kappa: S,
        big_k: S,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {dim}")));
        }
        if times.is_empty() || a.len() != times.len() || sigma.len() != times.len() {
            return Err(Error::Size("one a and sigma sample per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("coefficient times must increase".into()));
        }
        let modes = sigma[0].len();
        if modes == 0 || sigma.iter().any(|s| s.len() != modes) {
            return Err(Error::Size("every sample needs the same positive number of modes".into()));
        }
        if !(kappa > S::zero()) || !(big_k >= kappa) {
            return Err(Error::InvalidArgument("need 0 < kappa <= K".into()));
        }
        for m in &a {
            if m[0][1] != m[1][0] {
                return Err(Error::InvalidArgument("diffusion matrix must be symmetric".into()));
            }
        }
        let mut a = a;
        let mut sigma = sigma;
        if dim == 1 {
            for m in &mut a {
                *m = [[m[0][0], S::zero()], [S::zero(), S::zero()]];
            }
            for row in &mut sigma {
                for s in row.iter_mut() {
                    s[1] = S::zero();
                }
            }
        }
        let n = times.len();
        Ok(Self {
            dim,
            times,
            a,
            sigma,
            drift: vec![[S::zero(); 2]; n],
            potential: vec![S::zero(); n],
            nu: vec![vec![S::zero(); modes]; n],
            kappa,
            big_k,
        })
    }

    /// Attaches lower-order terms `b^i D_i u + c u` (drift) and `ν^k u` (noise), one sample per time.
    pub fn with_lower_order(mut self, drift: Vec<[S; 2]>, potential: Vec<S>, nu: Vec<Vec<S>>) -> Result<Self> {
        let n = self.times.len();
        if drift.len() != n || potential.len() != n || nu.len() != n || nu.iter().any(|r| r.len() != self.modes()) {
            return Err(Error::Size("lower-order samples must match coefficient samples".into()));
        }
        self.drift = drift;
        self.potential = potential;
        self.nu = nu;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn modes(&self) -> usize {
        self.sigma[0].len()
    }
    pub fn kappa(&self) -> S {
        self.kappa
    }
    pub fn big_k(&self) -> S {
        self.big_k
    }
    pub fn times(&self) -> &[S] {
        &self.times
    }
    pub fn a_samples(&self) -> &[[[S; 2]; 2]] {
        &self.a
    }
    pub fn sigma_samples(&self) -> &[Vec<[S; 2]>] {
        &self.sigma
    }
    pub fn has_lower_order(&self) -> bool {
        self.drift.iter().any(|d| !d[0].is_zero() || !d[1].is_zero())
            || self.potential.iter().any(|c| !c.is_zero())
            || self.nu.iter().flatten().any(|v| !v.is_zero())
    }

    fn weights(&self, t: S) -> (usize, usize, S) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, S::zero());
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, S::zero());
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, k + 1, w)
    }

    fn lerp(x: S, y: S, w: S) -> S {
        if w.is_zero() {
            x
        } else {
            x + w * (y - x)
        }
    }

    pub fn a_at(&self, t: S) -> [[S; 2]; 2] {
        let (i, j, w) = self.weights(t);
        let mut out = [[S::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = Self::lerp(self.a[i][r][c], self.a[j][r][c], w);
            }
        }
        out
    }

    pub fn sigma_at(&self, t: S) -> Vec<[S; 2]> {
        let (i, j, w) = self.weights(t);
        (0..self.modes())
            .map(|k| {
                [
                    Self::lerp(self.sigma[i][k][0], self.sigma[j][k][0], w),
                    Self::lerp(self.sigma[i][k][1], self.sigma[j][k][1], w),
                ]
            })
            .collect()
    }

    pub fn drift_at(&self, t: S) -> [S; 2] {
        let (i, j, w) = self.weights(t);
        [
            Self::lerp(self.drift[i][0], self.drift[j][0], w),
            Self::lerp(self.drift[i][1], self.drift[j][1], w),
        ]
    }

    pub fn potential_at(&self, t: S) -> S {
        let (i, j, w) = self.weights(t);
        Self::lerp(self.potential[i], self.potential[j], w)
    }

    pub fn nu_at(&self, t: S) -> Vec<S> {
        let (i, j, w) = self.weights(t);
        (0..self.modes()).map(|k| Self::lerp(self.nu[i][k], self.nu[j][k], w)).collect()
    }

    /// Largest spectral radius of `a` over the samples.
    pub fn max_a_norm(&self) -> S {
        self.a
            .iter()
            .map(|m| {
                let (lo, hi) = sym_eigen(*m, self.dim);
                lo.abs().max(hi.abs())
            })
            .fold(S::zero(), S::max)
    }

    /// Coefficients of `s a D_ij + (1 - s) Δ` and `s σ D_i` (lower-order terms scaled by `s`).
    pub fn blended(&self, s: S) -> Result<Self> {
        if !(s >= S::zero() && s <= S::one()) {
            return Err(Error::InvalidArgument(format!("blend parameter {s} outside [0, 1]")));
        }
        let one = S::one();
        let r = one - s;
        let a = self
            .a
            .iter()
            .map(|m| {
                let mut o = [[s * m[0][0] + r, s * m[0][1]], [s * m[1][0], s * m[1][1] + r]];
                if self.dim == 1 {
                    o[1][1] = S::zero();
                }
                o
            })
            .collect();
        let sigma = self
            .sigma
            .iter()
            .map(|row| row.iter().map(|v| [s * v[0], s * v[1]]).collect())
            .collect();
        let mut out = Self::sampled(
            self.dim,
            self.times.clone(),
            a,
            sigma,
            s * self.kappa + r * self.kappa.min(one),
            s * self.big_k + r * S::lit(2.0),
        )?;
        out.drift = self.drift.iter().map(|d| [s * d[0], s * d[1]]).collect();
        out.potential = self.potential.iter().map(|&c| s * c).collect();
        out.nu = self.nu.iter().map(|row| row.iter().map(|&v| s * v).collect()).collect();
        Ok(out)
    }

    /// Identity diffusion without noise: the heat operator `Δ`.
    pub fn heat(dim: usize, modes: usize) -> Self {
        let one = S::one();
        let a = if dim == 1 {
            [[one, S::zero()], [S::zero(), S::zero()]]
        } else {
            [[one, S::zero()], [S::zero(), one]]
        };
        Self::constant(dim, a, vec![[S::zero(); 2]; modes.max(1)], one, S::lit(2.0))
            .expect("heat coefficients are valid")
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2x2 (or 1x1) matrix.
pub fn sym_eigen<S: Scalar>(m: [[S; 2]; 2], dim: usize) -> (S, S) {
    if dim == 1 {
        return (m[0][0], m[0][0]);
    }
    let half = S::lit(0.5);
    let mean = half * (m[0][0] + m[1][1]);
    let d = half * (m[0][0] - m[1][1]);
    let r = (d * d + m[0][1] * m[0][1]).sqrt();
    (mean - r, mean + r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParabolicityReport {
    pub pass: bool,
    /// Smallest eigenvalue of `2a - σσᵀ - κI` over samples.
    pub lower_margin: f64,
    /// Smallest eigenvalue of `KI - 2a` over samples.
    pub upper_margin: f64,
    /// Sample times where either inequality fails.
    pub failures: Vec<f64>,
}

/// Checks `κI + σσᵀ ≤ 2a ≤ KI` at every sample time.
pub fn check_parabolicity<S: Scalar>(coeffs: &ModelCoefficients<S>) -> ParabolicityReport {
    let dim = coeffs.dim;
    let two = S::lit(2.0);
    let slack = S::lit(8.0) * S::epsilon() * coeffs.big_k.max(S::one());
    let mut lower = S::infinity();
    let mut upper = S::infinity();
    let mut failures = Vec::new();
    for (n, (&t, a)) in coeffs.times.iter().zip(&coeffs.a).enumerate() {
        let mut m = [[two * a[0][0], two * a[0][1]], [two * a[1][0], two * a[1][1]]];
        for s in &coeffs.sigma[n] {
            m[0][0] = m[0][0] - s[0] * s[0];
            m[0][1] = m[0][1] - s[0] * s[1];
            m[1][0] = m[1][0] - s[1] * s[0];
            m[1][1] = m[1][1] - s[1] * s[1];
        }
        m[0][0] = m[0][0] - coeffs.kappa;
        m[1][1] = m[1][1] - coeffs.kappa;
        let lo = sym_eigen(m, dim).0;
        let up = [
            [coeffs.big_k - two * a[0][0], -two * a[0][1]],
            [-two * a[1][0], coeffs.big_k - two * a[1][1]],
        ];
        let hi = sym_eigen(up, dim).0;
        if lo < -slack || hi < -slack {
            failures.push(t.to_f64_lossy());
        }
        lower = lower.min(lo);
        upper = upper.min(hi);
    }
    ParabolicityReport {
        pass: failures.is_empty(),
        lower_margin: lower.to_f64_lossy(),
        upper_margin: upper.to_f64_lossy(),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub pass: bool,
    /// `max |σ^{1k}(t)|` over samples and modes.
    pub max_normal: f64,
    /// `(time, mode, σ^{1k})` for every nonzero normal component.
    pub offending: Vec<(f64, usize, f64)>,
}

/// Tangential noise: `σ^{1k}(t) = 0` for every sample and mode.
pub fn check_compatibility<S: Scalar>(coeffs: &ModelCoefficients<S>) -> CompatibilityReport {
    let mut max_normal = S::zero();
    let mut offending = Vec::new();
    for (&t, row) in coeffs.times.iter().zip(&coeffs.sigma) {
        for (k, s) in row.iter().enumerate() {
            max_normal = max_normal.max(s[0].abs());
            if !s[0].is_zero() {
                offending.push((t.to_f64_lossy(), k, s[0].to_f64_lossy()));
            }
        }
    }
    CompatibilityReport {
        pass: offending.is_empty(),
        max_normal: max_normal.to_f64_lossy(),
        offending,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, s: f64, kappa: f64, k: f64) -> ModelCoefficients<f64> {
        ModelCoefficients::constant(1, [[a, 0.0], [0.0, 0.0]], vec![[s, 0.0]], kappa, k).unwrap()
    }

    #[test]
    fn parabolicity_scalar_cases() {
        assert!(check_parabolicity(&scalar(1.0, 1.0, 1.0, 2.0)).pass);
        let r = check_parabolicity(&scalar(1.0, 2f64.sqrt(), 1e-3, 2.0));
        assert!(!r.pass);
        assert!(r.lower_margin < 0.0);
        assert!(!check_parabolicity(&scalar(1.5, 0.0, 1.0, 2.0)).pass);
    }

    #[test]
    fn parabolicity_two_dimensional() {
        let c = ModelCoefficients::constant(2, [[1.0, 0.0], [0.0, 1.0]], vec![[0.0, 1.0]], 1.0, 2.0).unwrap();
        let r = check_parabolicity(&c);
        assert!(r.pass);
        // eigenvalues of 2I - diag(0, 1) are {2, 1}; minus κ = 1 leaves 0
        assert_eq!(r.lower_margin, 0.0);
        assert_eq!(r.upper_margin, 0.0);
    }

    #[test]
    fn compatibility_cases() {
        let ok = ModelCoefficients::constant(2, [[1.0, 0.0], [0.0, 1.0]], vec![[0.0, 0.7]], 0.5, 2.0).unwrap();
        assert!(check_compatibility(&ok).pass);
        let bad = ModelCoefficients::constant(2, [[1.0, 0.0], [0.0, 1.0]], vec![[0.5, 0.0]], 0.5, 2.0).unwrap();
        let r = check_compatibility(&bad);
        assert!(!r.pass);
        assert_eq!(r.offending, vec![(0.0, 0, 0.5)]);
        let times = vec![0.0, 0.5, 1.0];
        let sigma = times.iter().map(|&t: &f64| vec![[t - t, 0.3 * t]]).collect();
        let tv = ModelCoefficients::sampled(2, times, vec![[[1.0, 0.0], [0.0, 1.0]]; 3], sigma, 0.5, 2.0).unwrap();
        assert!(check_compatibility(&tv).pass);
    }

    #[test]
    fn interpolation_in_time() {
        let c = ModelCoefficients::sampled(
            1,
            vec![0.0, 1.0],
            vec![[[1.0, 0.0], [0.0, 0.0]], [[2.0, 0.0], [0.0, 0.0]]],
            vec![vec![[0.0, 0.0]], vec![[1.0, 0.0]]],
            0.5,
            4.0,
        )
        .unwrap();
        assert_eq!(c.a_at(0.25)[0][0], 1.25);
        assert_eq!(c.a_at(3.0)[0][0], 2.0);
        assert_eq!(c.sigma_at(0.5)[0][0], 0.5);
    }

    #[test]
    fn rejects_asymmetric_and_bad_bounds() {
        assert!(ModelCoefficients::constant(2, [[1.0, 0.1], [0.0, 1.0]], vec![[0.0, 0.0]], 1.0, 2.0).is_err());
        assert!(ModelCoefficients::constant(1, [[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0]], 2.0, 1.0).is_err());
    }

    #[test]
    fn blended_coefficients_stay_parabolic() {
        let c = scalar(1.3, 0.5, 1.0, 3.0);
        for s0 in [0.0, 0.4, 1.0] {
            let b = c.blended(s0).unwrap();
            assert!(check_parabolicity(&b).pass, "s0 = {s0}");
            assert!((b.a_at(0.0)[0][0] - (s0 * 1.3 + 1.0 - s0)).abs() < 1e-15);
        }
    }
}
