//! The heat equation on the half-line `y > 0` driven by boundary data
//! `v(t, 0) = h(t)`: Poisson kernel, convolution solver and the time
//! derivative representation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldEnsemble, SpaceTimeGrid};
use crate::quadrature::{integrate, integrate_to_infinity, Estimate, Tolerance};
use crate::scalar::Scalar;

/// `P(s, y) = y / (2 sqrt(pi) s^{3/2}) exp(-y^2 / (4 s))`.
pub fn poisson_kernel<S: Scalar>(s: S, y: S) -> Result<S> {
    check_domain(s, y)?;
    Ok(kernel_unchecked(s, y))
}

#[inline]
fn kernel_unchecked<S: Scalar>(s: S, y: S) -> S {
    if y.is_zero() {
        return S::zero();
    }
    let two = S::lit(2.0);
    y / (two * S::PI().sqrt() * s * s.sqrt()) * (-(y * y) / (S::lit(4.0) * s)).exp()
}

/// `∂_y P(s, y) = exp(-y^2 / (4 s)) (1 - y^2 / (2 s)) / (2 sqrt(pi) s^{3/2})`.
pub fn kernel_dy<S: Scalar>(s: S, y: S) -> Result<S> {
    check_domain(s, y)?;
    let two = S::lit(2.0);
    let y2 = y * y;
    Ok((-y2 / (S::lit(4.0) * s)).exp() * (S::one() - y2 / (two * s)) / (two * S::PI().sqrt() * s * s.sqrt()))
}

fn check_domain<S: Scalar>(s: S, y: S) -> Result<()> {
    if !(s > S::zero()) {
        return Err(Error::Domain(format!("kernel needs s > 0, got {s}")));
    }
    if !(y >= S::zero()) {
        return Err(Error::Domain(format!("kernel needs y >= 0, got {y}")));
    }
    Ok(())
}

/// Accuracy settings for the kernel integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuadrature<S> {
    rel_tol: S,
    abs_tol: S,
    substitution: bool,
    max_subdivisions: usize,
}

impl<S: Scalar> KernelQuadrature<S> {
    /// `rel_tol` must lie in `(0, 1e-4]`.
    pub fn new(rel_tol: S, abs_tol: S, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > S::zero() && rel_tol <= S::lit(1e-4)) {
            return Err(Error::InvalidArgument(format!("relative tolerance {rel_tol} outside (0, 1e-4]")));
        }
        if !(abs_tol >= S::zero()) || max_subdivisions == 0 {
            return Err(Error::InvalidArgument("invalid absolute tolerance or subdivision cap".into()));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            substitution: true,
            max_subdivisions,
        })
    }

    /// Disables the Gaussian substitution near `s = 0` (plain integration in `s`).
    pub fn without_substitution(mut self) -> Self {
        self.substitution = false;
        self
    }

    pub fn rel_tol(&self) -> S {
        self.rel_tol
    }
    pub fn substitution(&self) -> bool {
        self.substitution
    }

    fn tolerance(&self) -> Tolerance<S> {
        Tolerance {
            rel: self.rel_tol,
            abs: self.abs_tol,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

impl<S: Scalar> Default for KernelQuadrature<S> {
    fn default() -> Self {
        Self::new(S::lit(1e-10), S::lit(1e-14), 400).expect("default tolerances are valid")
    }
}

/// `∫_0^∞ P(s, y) ds`, evaluated in the variable `u = y / (2 sqrt(s))`.
pub fn kernel_mass<S: Scalar>(y: S, quad: &KernelQuadrature<S>) -> Result<Estimate<S>> {
    if !(y > S::zero()) {
        return Err(Error::Domain(format!("kernel mass needs y > 0, got {y}")));
    }
    let tol = quad.tolerance();
    if quad.substitution {
        let four = S::lit(4.0);
        let two = S::lit(2.0);
        // s = y^2 / (4 u^2), |ds/du| = y^2 / (2 u^3)
        integrate_to_infinity(
            |u: S| {
                let s = y * y / (four * u * u);
                kernel_unchecked(s, y) * y * y / (two * u * u * u)
            },
            S::zero(),
            tol,
        )
    } else {
        let y2 = y * y;
        let near = integrate(|s: S| if s > S::zero() { kernel_unchecked(s, y) } else { S::zero() }, S::zero(), y2, tol)?;
        // algebraic tail map s = y^2 / r^2 absorbs the s^{-3/2} decay
        let two = S::lit(2.0);
        let far = integrate(
            |r: S| kernel_unchecked(y2 / (r * r), y) * two * y2 / (r * r * r),
            S::zero(),
            S::one(),
            tol,
        )?;
        Ok(Estimate {
            value: near.value + far.value,
            error: near.error + far.error,
            evaluations: near.evaluations + far.evaluations,
        })
    }
}

type PathFn<S> = Arc<dyn Fn(usize, S) -> S + Send + Sync>;

/// Boundary process `h(t, ω)` with its derivative, sampled at grid times.
///
/// Deterministic experiments attach the closed form, which is then evaluated
/// exactly at quadrature nodes; otherwise `h` is the per-path cubic Hermite
/// interpolant of the samples `(h, h')` and `h'` is its derivative.
#[derive(Clone)]
pub struct BoundaryData<S> {
    paths: usize,
    steps: usize,
    dt: S,
    h: Vec<S>,
    hp: Vec<S>,
    exact: Option<(PathFn<S>, PathFn<S>)>,
    h0_zero: bool,
    hp0_zero: bool,
}

impl<S: Scalar> std::fmt::Debug for BoundaryData<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryData")
            .field("paths", &self.paths)
            .field("steps", &self.steps)
            .field("dt", &self.dt)
            .field("exact", &self.exact.is_some())
            .field("h0_zero", &self.h0_zero)
            .field("hp0_zero", &self.hp0_zero)
            .finish()
    }
}

impl<S: Scalar> BoundaryData<S> {
    /// Samples `h(path, t)` and `h'(path, t)` on the grid times and keeps the closed forms.
    ///
    /// Fails if the pair is inconsistent: after integrating `h'` over each
    /// step, the increment of `h` must match to within `dt^2`.
    pub fn analytic<H, D>(grid: &SpaceTimeGrid<S>, paths: usize, h: H, hp: D) -> Result<Self>
    where
        H: Fn(usize, S) -> S + Send + Sync + 'static,
        D: Fn(usize, S) -> S + Send + Sync + 'static,
    {
        let times = grid.times();
        let mut hv = Vec::with_capacity(paths * times);
        let mut dv = Vec::with_capacity(paths * times);
        for p in 0..paths {
            for n in 0..times {
                hv.push(h(p, grid.t(n)));
                dv.push(hp(p, grid.t(n)));
            }
        }
        let mut data = Self::sampled(grid, paths, hv, dv)?;
        let dt = grid.dt();
        let tol = Tolerance {
            rel: S::lit(1e-10),
            abs: S::lit(1e-14),
            max_subdivisions: 200,
        };
        for p in 0..paths {
            for n in 0..grid.steps() {
                let (a, b) = (grid.t(n), grid.t(n + 1));
                let integral = integrate(|t| hp(p, t), a, b, tol)?.value;
                let defect = (h(p, b) - h(p, a) - integral).abs();
                if defect > dt * dt {
                    return Err(Error::InvalidArgument(format!(
                        "h' inconsistent with h on path {p}, step {n}: defect {defect:e}"
                    )));
                }
            }
        }
        data.exact = Some((Arc::new(h), Arc::new(hp)));
        Ok(data)
    }

    /// Grid samples only, `[path][time]` each.
    pub fn sampled(grid: &SpaceTimeGrid<S>, paths: usize, h: Vec<S>, hp: Vec<S>) -> Result<Self> {
        let times = grid.times();
        if paths == 0 || h.len() != paths * times || hp.len() != paths * times {
            return Err(Error::Size(format!("boundary data needs {paths} x {times} samples")));
        }
        let scale = h.iter().chain(&hp).fold(S::zero(), |m, v| m.max(v.abs())).max(S::one());
        let tiny = S::lit(1e-14) * scale;
        let h0_zero = (0..paths).all(|p| h[p * times].abs() <= tiny);
        let hp0_zero = (0..paths).all(|p| hp[p * times].abs() <= tiny);
        Ok(Self {
            paths,
            steps: grid.steps(),
            dt: grid.dt(),
            h,
            hp,
            exact: None,
            h0_zero,
            hp0_zero,
        })
    }

    /// Identically zero data.
    pub fn zero(grid: &SpaceTimeGrid<S>, paths: usize) -> Self {
        let n = paths * grid.times();
        Self::sampled(grid, paths, vec![S::zero(); n], vec![S::zero(); n]).expect("consistent shape")
    }

    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn h0_zero(&self) -> bool {
        self.h0_zero
    }
    pub fn hp0_zero(&self) -> bool {
        self.hp0_zero
    }
    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }
    pub fn h_sample(&self, path: usize, step: usize) -> S {
        self.h[path * (self.steps + 1) + step]
    }
    pub fn hp_sample(&self, path: usize, step: usize) -> S {
        self.hp[path * (self.steps + 1) + step]
    }

    /// Drops the closed form, forcing Hermite interpolation of the samples.
    pub fn into_sampled(mut self) -> Self {
        self.exact = None;
        self
    }

    fn locate(&self, t: S) -> (usize, S) {
        let r = t / self.dt;
        let n = r.floor().to_usize().unwrap_or(0).min(self.steps.saturating_sub(1));
        (n, r - S::from_usize_exact(n))
    }

    /// `h(t)` with `h = 0` for `t < 0`.
    pub fn h_at(&self, path: usize, t: S) -> S {
        if t <= S::zero() {
            return S::zero();
        }
        if let Some((h, _)) = &self.exact {
            return h(path, t);
        }
        let (n, r) = self.locate(t);
        let (h0, h1) = (self.h_sample(path, n), self.h_sample(path, n + 1));
        let (d0, d1) = (self.hp_sample(path, n) * self.dt, self.hp_sample(path, n + 1) * self.dt);
        let (r2, r3) = (r * r, r * r * r);
        let two = S::lit(2.0);
        let three = S::lit(3.0);
        (two * r3 - three * r2 + S::one()) * h0
            + (r3 - two * r2 + r) * d0
            + (three * r2 - two * r3) * h1
            + (r3 - r2) * d1
    }

    /// `h'(t)` with the zero extension for `t < 0`.
    pub fn hp_at(&self, path: usize, t: S) -> S {
        if t <= S::zero() {
            return S::zero();
        }
        if let Some((_, hp)) = &self.exact {
            return hp(path, t);
        }
        let (n, r) = self.locate(t);
        let (h0, h1) = (self.h_sample(path, n), self.h_sample(path, n + 1));
        let (d0, d1) = (self.hp_sample(path, n), self.hp_sample(path, n + 1));
        let r2 = r * r;
        let six = S::lit(6.0);
        let (two, three, four) = (S::lit(2.0), S::lit(3.0), S::lit(4.0));
        (six * r2 - six * r) * (h0 - h1) / self.dt
            + (three * r2 - four * r + S::one()) * d0
            + (three * r2 - two * r) * d1
    }
}

/// `∫_0^t P(s, y) q(t - s) ds` for `y > 0`.
///
/// On `s ≤ min(y^2, t)` the integral is taken in `u = y / (2 sqrt(s))`, where
/// it reads `(2/sqrt(pi)) ∫ exp(-u^2) q(t - y^2/(4u^2)) du`; the remainder
/// `[y^2, t]` is integrated directly in `s`.
pub fn kernel_convolution<S: Scalar>(
    q: impl Fn(S) -> S,
    t: S,
    y: S,
    quad: &KernelQuadrature<S>,
) -> Result<S> {
    if !(t > S::zero()) {
        return Ok(S::zero());
    }
    if y.is_zero() {
        return Err(Error::Domain("convolution at y = 0 is the boundary value".into()));
    }
    let tol = quad.tolerance();
    let y2 = y * y;
    let split = if quad.substitution { y2.min(t) } else { S::zero() };
    let mut total = S::zero();
    if split > S::zero() {
        let four = S::lit(4.0);
        let c = S::lit(2.0) / S::PI().sqrt();
        let u_lo = y / (S::lit(2.0) * split.sqrt());
        let near = integrate_to_infinity(
            |u: S| {
                let s = y2 / (four * u * u);
                c * (-u * u).exp() * q(t - s)
            },
            u_lo,
            tol,
        )?;
        total = total + near.value;
    }
    if t > split {
        let far = integrate(|s: S| kernel_unchecked(s, y) * q(t - s), split, t, tol)?;
        total = total + far.value;
    }
    Ok(total)
}

fn check_grid<S: Scalar>(data: &BoundaryData<S>, grid: &SpaceTimeGrid<S>) -> Result<()> {
    if grid.dim() != 1 || grid.is_mirrored() {
        return Err(Error::InvalidArgument("half-line solver needs a 1-D half-space grid".into()));
    }
    if data.steps != grid.steps() || (data.dt - grid.dt()).abs() > S::epsilon() * grid.dt() {
        return Err(Error::GridMismatch("boundary data not sampled on grid times".into()));
    }
    Ok(())
}

fn convolve_on_grid<S: Scalar>(
    data: &BoundaryData<S>,
    grid: &SpaceTimeGrid<S>,
    quad: &KernelQuadrature<S>,
    derivative: bool,
) -> Result<FieldEnsemble<S>> {
    check_grid(data, grid)?;
    let per = grid.times() * grid.nodes();
    let mut values = vec![S::zero(); data.paths * per];
    values
        .par_chunks_mut(per)
        .enumerate()
        .try_for_each(|(p, chunk)| -> Result<()> {
            for n in 1..grid.times() {
                let t = grid.t(n);
                let row = &mut chunk[n * grid.nodes()..(n + 1) * grid.nodes()];
                row[0] = if derivative { data.hp_at(p, t) } else { data.h_at(p, t) };
                for (i, out) in row.iter_mut().enumerate().skip(1) {
                    let y = grid.x1(i);
                    *out = if derivative {
                        kernel_convolution(|r| data.hp_at(p, r), t, y, quad)?
                    } else {
                        kernel_convolution(|r| data.h_at(p, r), t, y, quad)?
                    };
                }
            }
            Ok(())
        })?;
    FieldEnsemble::from_values(grid.clone(), data.paths, values)
}

/// `v(t, y) = ∫_0^t P(s, y) h(t - s) ds`, with `v(t, 0) = h(t)` assigned.
pub fn solve_halfline<S: Scalar>(
    data: &BoundaryData<S>,
    grid: &SpaceTimeGrid<S>,
    quad: &KernelQuadrature<S>,
) -> Result<FieldEnsemble<S>> {
    if !data.h0_zero {
        return Err(Error::Precondition("boundary data must satisfy h(0) = 0".into()));
    }
    Ok(convolve_on_grid(data, grid, quad, false)?.with_meta("field", "v"))
}

/// `∂_t v(t, y) = ∫_0^∞ P(s, y) h'(t - s) ds` with `h' = 0` on `t < 0`;
/// equals `h'(t)` at `y = 0`, and `∂_y^2 v` everywhere.
pub fn dt_v<S: Scalar>(
    data: &BoundaryData<S>,
    grid: &SpaceTimeGrid<S>,
    quad: &KernelQuadrature<S>,
) -> Result<FieldEnsemble<S>> {
    if !data.hp0_zero {
        return Err(Error::Precondition("boundary data must satisfy h'(0) = 0".into()));
    }
    Ok(convolve_on_grid(data, grid, quad, true)?.with_meta("field", "dt_v"))
}

/// `v(t, y)` at arbitrary `(t, y)` pairs for every path, `[path][point]`.
pub fn solve_halfline_at<S: Scalar>(
    data: &BoundaryData<S>,
    points: &[(S, S)],
    quad: &KernelQuadrature<S>,
) -> Result<Vec<S>> {
    if !data.h0_zero {
        return Err(Error::Precondition("boundary data must satisfy h(0) = 0".into()));
    }
    let per = points.len();
    let mut out = vec![S::zero(); data.paths * per];
    out.par_chunks_mut(per.max(1))
        .enumerate()
        .try_for_each(|(p, chunk)| -> Result<()> {
            for (o, &(t, y)) in chunk.iter_mut().zip(points) {
                *o = if y.is_zero() {
                    data.h_at(p, t)
                } else {
                    kernel_convolution(|r| data.h_at(p, r), t, y, quad)?
                };
            }
            Ok(())
        })?;
    Ok(out)
}

/// Comparison of two boundary data sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityGap<S> {
    /// `sup_{t,y} E|∂_y^2 v_1 - ∂_y^2 v_2|^γ`.
    pub lhs: S,
    /// `sup_t E|h_1' - h_2'|^γ`.
    pub rhs: S,
}

/// Left and right sides of the stability bound; `∂_y^2 v` is taken as `∂_t v`.
pub fn stability_gap<S: Scalar>(
    d1: &BoundaryData<S>,
    d2: &BoundaryData<S>,
    grid: &SpaceTimeGrid<S>,
    quad: &KernelQuadrature<S>,
    gamma: S,
) -> Result<StabilityGap<S>> {
    if !(gamma >= S::lit(2.0)) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 2, got {gamma}")));
    }
    if d1.paths != d2.paths || d1.steps != d2.steps {
        return Err(Error::GridMismatch("boundary data sets differ in shape".into()));
    }
    if d1.h0_zero != d2.h0_zero || d1.hp0_zero != d2.hp0_zero {
        return Err(Error::Precondition("boundary data flags differ".into()));
    }
    let w1 = dt_v(d1, grid, quad)?;
    let w2 = dt_v(d2, grid, quad)?;
    let paths = d1.paths;
    let inv = S::one() / S::from_usize_exact(paths);
    let moment = |f: &dyn Fn(usize) -> S| -> S {
        let mut acc = S::zero();
        for p in 0..paths {
            acc = acc + f(p).abs().powf(gamma);
        }
        acc * inv
    };
    let mut lhs = S::zero();
    for n in 0..grid.times() {
        for k in 0..grid.nodes() {
            lhs = lhs.max(moment(&|p| w1.get(p, n, k) - w2.get(p, n, k)));
        }
    }
    let mut rhs = S::zero();
    for n in 0..grid.times() {
        rhs = rhs.max(moment(&|p| d1.hp_sample(p, n) - d2.hp_sample(p, n)));
    }
    Ok(StabilityGap { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> KernelQuadrature<f64> {
        KernelQuadrature::new(1e-12, 1e-15, 500).unwrap()
    }

    fn square(grid: &SpaceTimeGrid<f64>) -> BoundaryData<f64> {
        BoundaryData::analytic(grid, 1, |_, t| t * t, |_, t| 2.0 * t).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(poisson_kernel(1.0, 0.0).unwrap(), 0.0);
        let expect = (-0.25f64).exp() / (2.0 * std::f64::consts::PI.sqrt());
        assert!((poisson_kernel(1.0, 1.0).unwrap() - expect).abs() < 1e-16);
        assert!((poisson_kernel(1.0f64, 1.0).unwrap() - 0.219_695_644_733_861_3).abs() < 1e-15);
        assert!(poisson_kernel(0.0, 1.0).is_err());
        assert!(poisson_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_scaling_identity() {
        let (y, r) = (2.0f64, 0.7);
        let lhs = poisson_kernel(y * y * r, y).unwrap();
        let rhs = poisson_kernel(r, 1.0).unwrap() / (y * y);
        assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs);
    }

    #[test]
    fn kernel_derivative_values() {
        let s = 0.8f64;
        assert!(kernel_dy(s, (2.0 * s).sqrt()).unwrap().abs() < 1e-16);
        assert!((kernel_dy(1.0f64, 0.0).unwrap() - 0.282_094_791_773_878_1).abs() < 1e-15);
        assert!(kernel_dy(0.0, 0.0).is_err());
        // matches a centred difference of the kernel
        let (s, y, h) = (0.3f64, 0.9, 1e-5);
        let fd = (poisson_kernel(s, y + h).unwrap() - poisson_kernel(s, y - h).unwrap()) / (2.0 * h);
        assert!((kernel_dy(s, y).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn kernel_derivative_bound() {
        for &s in &[1e-3f64, 0.01, 0.1, 0.5, 1.0, 4.0] {
            for &y in &[0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let bound = s.powf(-1.5) * (-y * y / (8.0 * s)).exp() * (1.0 + y * y / s);
                assert!(kernel_dy(s, y).unwrap().abs() <= bound, "s={s} y={y}");
            }
        }
    }

    #[test]
    fn kernel_mass_is_one() {
        for y in [0.1f64, 1.0, 10.0] {
            let m = kernel_mass(y, &KernelQuadrature::default()).unwrap();
            assert!((m.value - 1.0).abs() <= 1e-8, "y={y}: {}", m.value);
            let plain = kernel_mass(y, &KernelQuadrature::default().without_substitution()).unwrap();
            assert!((plain.value - 1.0).abs() <= 1e-8, "y={y} plain: {}", plain.value);
        }
        assert!(kernel_mass(0.0, &quad()).is_err());
    }

    #[test]
    fn quadrature_tolerance_range() {
        assert!(KernelQuadrature::<f64>::new(1e-3, 0.0, 10).is_err());
        assert!(KernelQuadrature::<f64>::new(0.0, 0.0, 10).is_err());
        assert!(KernelQuadrature::<f64>::new(1e-4, 0.0, 10).is_ok());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = SpaceTimeGrid::line(2.0, 8, 1.0, 4).unwrap();
        let d = BoundaryData::zero(&g, 3);
        assert_eq!(solve_halfline(&d, &g, &quad()).unwrap().max_abs(), 0.0);
        assert_eq!(dt_v(&d, &g, &quad()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn boundary_value_is_assigned() {
        let g = SpaceTimeGrid::line(2.0, 8, 1.0, 4).unwrap();
        let v = solve_halfline(&square(&g), &g, &quad()).unwrap();
        assert_eq!(v.get(0, 4, 0), 1.0);
        let w = dt_v(&square(&g), &g, &quad()).unwrap();
        assert_eq!(w.get(0, 4, 0), 2.0);
    }

    #[test]
    fn interior_value_is_self_convergent() {
        let g = SpaceTimeGrid::line(1.0, 1, 1.0, 1).unwrap();
        let d = square(&g);
        let coarse = KernelQuadrature::new(1e-8, 1e-12, 500).unwrap();
        let fine = KernelQuadrature::new(1e-13, 1e-16, 2000).unwrap();
        let a = solve_halfline(&d, &g, &coarse).unwrap().get(0, 1, 1);
        let b = solve_halfline(&d, &g, &fine).unwrap().get(0, 1, 1);
        assert!((a - b).abs() < 1e-6);
        // brute force: midpoint rule in u over a long range
        let n = 2_000_000;
        let umax = 12.0;
        let du = (umax - 0.5) / n as f64;
        let mut brute = 0.0;
        for k in 0..n {
            let u = 0.5 + (k as f64 + 0.5) * du;
            let s = 1.0 / (4.0 * u * u);
            brute += 2.0 / std::f64::consts::PI.sqrt() * (-u * u).exp() * (1.0 - s).powi(2) * du;
        }
        // s in (0, 1] corresponds to u in [0.5, inf)
        assert!((brute - b).abs() < 1e-6, "{brute} vs {b}");
    }

    #[test]
    fn direct_integration_without_substitution_agrees() {
        let g = SpaceTimeGrid::line(1.0, 4, 1.0, 2).unwrap();
        let d = square(&g);
        let a = solve_halfline(&d, &g, &quad()).unwrap();
        let b = solve_halfline(&d, &g, &quad().without_substitution()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn preconditions_are_enforced() {
        let g = SpaceTimeGrid::line(1.0, 4, 1.0, 2).unwrap();
        let d = BoundaryData::analytic(&g, 1, |_, t| 1.0 + t, |_, _| 1.0).unwrap();
        assert!(matches!(solve_halfline(&d, &g, &quad()), Err(Error::Precondition(_))));
        let e = BoundaryData::analytic(&g, 1, |_, t| t, |_, _| 1.0).unwrap();
        assert!(solve_halfline(&e, &g, &quad()).is_ok());
        assert!(matches!(dt_v(&e, &g, &quad()), Err(Error::Precondition(_))));
        assert!(BoundaryData::analytic(&g, 1, |_, t| t * t, |_, t| 3.0 * t).is_err());
    }

    #[test]
    fn hermite_interpolation_reproduces_cubics() {
        let g = SpaceTimeGrid::line(1.0, 4, 1.0, 5).unwrap();
        let exact = BoundaryData::analytic(&g, 1, |_, t| t * t * t, |_, t| 3.0 * t * t).unwrap();
        let sampled = exact.clone().into_sampled();
        for k in 0..50 {
            let t = 0.013 + k as f64 * 0.0197;
            assert!((sampled.h_at(0, t) - t * t * t).abs() < 1e-14);
            assert!((sampled.hp_at(0, t) - 3.0 * t * t).abs() < 1e-13);
        }
        assert_eq!(sampled.h_at(0, -0.1), 0.0);
    }

    #[test]
    fn stability_gap_of_identical_data_is_zero() {
        let g = SpaceTimeGrid::line(2.0, 4, 1.0, 4).unwrap();
        let d = square(&g);
        let gap = stability_gap(&d, &d, &g, &quad(), 2.0).unwrap();
        assert_eq!((gap.lhs, gap.rhs), (0.0, 0.0));
    }

    #[test]
    fn stability_constant_one_deterministic() {
        let g = SpaceTimeGrid::line(3.0, 12, 1.0, 8).unwrap();
        let d1 = square(&g);
        let d2 = BoundaryData::analytic(&g, 1, |_, t| t * t * t, |_, t| 3.0 * t * t).unwrap();
        let gap = stability_gap(&d1, &d2, &g, &quad(), 2.0).unwrap();
        assert!(gap.rhs > 0.0);
        assert!(gap.lhs <= 1.05 * gap.rhs, "{gap:?}");
    }
}
