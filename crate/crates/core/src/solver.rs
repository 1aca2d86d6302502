//! Semi-implicit ensemble solvers for
//! `du = (a^{ij} D_ij u + b^i D_i u + c u + f) dt + (σ^{ik} D_i u + ν^k u + g^k) dw^k`
//! with `u = 0` on both normal ends of the grid.
//!
//! Each step solves `(I - dt a(t + dt/2) D_ij) u_{n+1} = u_n + dt (...) + (...) Δw_n`
//! with every right-hand term evaluated at `t_n`. In two dimensions the
//! periodic tangential direction is diagonalised by an FFT, leaving one
//! complex tridiagonal system in `x1` per tangential mode.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::coefficients::{check_parabolicity, ModelCoefficients};
use crate::error::{Error, Result};
use crate::extension::{odd_extend, ExtendedField};
use crate::field::{FieldEnsemble, ModalField, SpaceTimeGrid};
use crate::rng::WienerBatch;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<S> {
    /// Internal steps per output step of the grid.
    pub substeps: usize,
    /// Step restriction `dt <= c_cfl dx^2 / (2 max |a|)`; `inf` disables it.
    pub c_cfl: S,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        Self {
            substeps: 1,
            c_cfl: S::lit(0.25),
        }
    }
}

impl<S: Scalar> SolverOptions<S> {
    pub fn new(substeps: usize, c_cfl: S) -> Self {
        Self { substeps, c_cfl }
    }
}

/// Drift forcing `f` and noise forcing `g = (g^k)`, both on the output grid
/// and linearly interpolated in time between output levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing<S> {
    pub f: FieldEnsemble<S>,
    pub g: ModalField<S>,
}

impl<S: Scalar> Forcing<S> {
    pub fn new(f: FieldEnsemble<S>, g: ModalField<S>) -> Result<Self> {
        if f.grid() != g.grid() {
            return Err(Error::GridMismatch("f and g live on different grids".into()));
        }
        Ok(Self { f, g })
    }

    pub fn zero(grid: &SpaceTimeGrid<S>, modes: usize) -> Self {
        Self {
            f: FieldEnsemble::zeros(grid.clone(), 1),
            g: ModalField::zeros(grid.clone(), modes),
        }
    }

    pub fn drift_only(f: FieldEnsemble<S>, modes: usize) -> Self {
        let g = ModalField::zeros(f.grid().clone(), modes);
        Self { f, g }
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self {
            f: self.f.scaled(factor),
            g: self.g.scaled(factor),
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        self.f.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Dirichlet,
    Periodic,
}

struct Run<'a, S> {
    grid: &'a SpaceTimeGrid<S>,
    coeffs: &'a ModelCoefficients<S>,
    f: Option<&'a FieldEnsemble<S>>,
    g: Option<&'a ModalField<S>>,
    noise: Option<&'a WienerBatch<S>>,
    paths: usize,
    substeps: usize,
    boundary: Boundary,
    initial: Option<&'a [S]>,
}

/// Implicit diffusion solve for one time slice.
struct Implicit<S: Scalar> {
    n1: usize,
    m: usize,
    h1: S,
    h2: S,
    boundary: Boundary,
    fwd: Option<Arc<dyn Fft<S>>>,
    inv: Option<Arc<dyn Fft<S>>>,
    spec: Vec<Complex<S>>,
    buf: Vec<Complex<S>>,
    scratch: Vec<Complex<S>>,
    cp: Vec<Complex<S>>,
    cr: Vec<S>,
}

impl<S: Scalar> Implicit<S> {
    fn new(grid: &SpaceTimeGrid<S>, boundary: Boundary, planner: &mut FftPlanner<S>) -> Self {
        let n1 = grid.n1();
        let m = grid.nxp();
        let (fwd, inv, len) = match boundary {
            Boundary::Periodic => {
                let n = grid.x1_cells();
                (Some(planner.plan_fft_forward(n)), Some(planner.plan_fft_inverse(n)), n)
            }
            Boundary::Dirichlet if m > 1 => (Some(planner.plan_fft_forward(m)), Some(planner.plan_fft_inverse(m)), m),
            Boundary::Dirichlet => (None, None, 0),
        };
        let scratch_len = fwd
            .as_ref()
            .map(|f| f.get_inplace_scratch_len())
            .max(inv.as_ref().map(|f| f.get_inplace_scratch_len()))
            .unwrap_or(0);
        Self {
            n1,
            m,
            h1: grid.dx1(),
            h2: grid.dxp(),
            boundary,
            fwd,
            inv,
            spec: vec![Complex::new(S::zero(), S::zero()); n1 * m.max(1)],
            buf: vec![Complex::new(S::zero(), S::zero()); len.max(1)],
            scratch: vec![Complex::new(S::zero(), S::zero()); scratch_len],
            cp: vec![Complex::new(S::zero(), S::zero()); n1],
            cr: vec![S::zero(); n1],
        }
    }

    /// Overwrites `u` with the solution of `(I - dt a^{ij} D_ij) x = u`.
    fn solve(&mut self, a: [[S; 2]; 2], dt: S, u: &mut [S]) {
        match (self.boundary, self.m) {
            (Boundary::Periodic, _) => self.solve_periodic_line(a[0][0], dt, u),
            (Boundary::Dirichlet, 1) => self.solve_line(a[0][0], dt, u),
            (Boundary::Dirichlet, _) => self.solve_slab(a, dt, u),
        }
    }

    fn solve_line(&mut self, a11: S, dt: S, u: &mut [S]) {
        let n = self.n1;
        let r = dt * a11 / (self.h1 * self.h1);
        let diag = S::one() + r + r;
        let off = -r;
        // Thomas sweep over interior nodes 1..n-2, boundary values zero
        let cp = &mut self.cr;
        u[0] = S::zero();
        u[n - 1] = S::zero();
        let mut denom = diag;
        cp[1] = off / denom;
        u[1] = u[1] / denom;
        for i in 2..n - 1 {
            denom = diag - off * cp[i - 1];
            cp[i] = off / denom;
            u[i] = (u[i] - off * u[i - 1]) / denom;
        }
        for i in (1..n - 2).rev() {
            u[i] = u[i] - cp[i] * u[i + 1];
        }
    }

    fn solve_slab(&mut self, a: [[S; 2]; 2], dt: S, u: &mut [S]) {
        let (n1, m) = (self.n1, self.m);
        let zero = Complex::new(S::zero(), S::zero());
        let fwd = self.fwd.as_ref().expect("tangential plan").clone();
        let inv = self.inv.as_ref().expect("tangential plan").clone();
        for i in 1..n1 - 1 {
            for j in 0..m {
                self.buf[j] = Complex::new(u[j * n1 + i], S::zero());
            }
            fwd.process_with_scratch(&mut self.buf[..m], &mut self.scratch);
            for k in 0..m {
                self.spec[k * n1 + i] = self.buf[k];
            }
        }
        let h1s = self.h1 * self.h1;
        let four = S::lit(4.0);
        let two = S::lit(2.0);
        for k in 0..m {
            let theta = S::TAU() * S::from_usize_exact(k) / S::from_usize_exact(m);
            let half_sin = (theta / two).sin();
            let diag = Complex::new(
                S::one() + dt * (two * a[0][0] / h1s + a[1][1] * four * half_sin * half_sin / (self.h2 * self.h2)),
                S::zero(),
            );
            let mixed = dt * a[0][1] * theta.sin() / (self.h1 * self.h2);
            let upper = Complex::new(-dt * a[0][0] / h1s, -mixed);
            let lower = Complex::new(-dt * a[0][0] / h1s, mixed);
            let x = &mut self.spec[k * n1..(k + 1) * n1];
            let cp = &mut self.cp;
            x[0] = zero;
            x[n1 - 1] = zero;
            let mut denom = diag;
            cp[1] = upper / denom;
            x[1] = x[1] / denom;
            for i in 2..n1 - 1 {
                denom = diag - lower * cp[i - 1];
                cp[i] = upper / denom;
                x[i] = (x[i] - lower * x[i - 1]) / denom;
            }
            for i in (1..n1 - 2).rev() {
                x[i] = x[i] - cp[i] * x[i + 1];
            }
        }
        let scale = S::one() / S::from_usize_exact(m);
        for i in 0..n1 {
            if i == 0 || i == n1 - 1 {
                for j in 0..m {
                    u[j * n1 + i] = S::zero();
                }
                continue;
            }
            for k in 0..m {
                self.buf[k] = self.spec[k * n1 + i];
            }
            inv.process_with_scratch(&mut self.buf[..m], &mut self.scratch);
            for j in 0..m {
                u[j * n1 + i] = self.buf[j].re * scale;
            }
        }
    }

    fn solve_periodic_line(&mut self, a11: S, dt: S, u: &mut [S]) {
        let n = self.n1 - 1;
        let fwd = self.fwd.as_ref().expect("periodic plan").clone();
        let inv = self.inv.as_ref().expect("periodic plan").clone();
        for i in 0..n {
            self.buf[i] = Complex::new(u[i], S::zero());
        }
        fwd.process_with_scratch(&mut self.buf[..n], &mut self.scratch);
        let h2 = self.h1 * self.h1;
        let four = S::lit(4.0);
        for k in 0..n {
            let half = (S::PI() * S::from_usize_exact(k) / S::from_usize_exact(n)).sin();
            let symbol = S::one() + dt * a11 * four * half * half / h2;
            self.buf[k] = self.buf[k] / symbol;
        }
        inv.process_with_scratch(&mut self.buf[..n], &mut self.scratch);
        let scale = S::one() / S::from_usize_exact(n);
        for i in 0..n {
            u[i] = self.buf[i].re * scale;
        }
        u[n] = u[0];
    }
}

/// Centred first derivatives of one slice. Normal derivative is left at
/// zero on the Dirichlet end nodes (their update is discarded).
fn gradients<S: Scalar>(grid: &SpaceTimeGrid<S>, periodic_line: bool, u: &[S], d1: &mut [S], d2: &mut [S]) {
    let n1 = grid.n1();
    let m = grid.nxp();
    let two_h1 = S::lit(2.0) * grid.dx1();
    if periodic_line {
        let n = n1 - 1;
        for i in 0..n {
            d1[i] = (u[(i + 1) % n] - u[(i + n - 1) % n]) / two_h1;
        }
        d1[n] = d1[0];
        return;
    }
    for j in 0..m {
        let o = j * n1;
        d1[o] = S::zero();
        d1[o + n1 - 1] = S::zero();
        for i in 1..n1 - 1 {
            d1[o + i] = (u[o + i + 1] - u[o + i - 1]) / two_h1;
        }
    }
    if grid.dim() == 2 {
        let two_h2 = S::lit(2.0) * grid.dxp();
        for j in 0..m {
            let jp = (j + 1) % m;
            let jm = (j + m - 1) % m;
            for i in 0..n1 {
                d2[j * n1 + i] = (u[jp * n1 + i] - u[jm * n1 + i]) / two_h2;
            }
        }
    }
}

fn integrate_ensemble<S: Scalar>(run: &Run<'_, S>) -> Result<FieldEnsemble<S>> {
    let grid = run.grid;
    let nodes = grid.nodes();
    let times = grid.times();
    let substeps = run.substeps;
    let total = grid.steps() * substeps;
    let dt = grid.dt() / S::from_usize_exact(substeps);
    let modes = run.coeffs.modes();
    let periodic_line = run.boundary == Boundary::Periodic;
    if let Some(noise) = run.noise {
        if noise.steps() != total || noise.paths() != run.paths || noise.modes() < modes {
            return Err(Error::Size(format!(
                "noise batch {}x{}x{} does not match {} paths x {} steps x {} modes",
                noise.paths(),
                noise.steps(),
                noise.modes(),
                run.paths,
                total,
                modes
            )));
        }
        if (noise.dt() - dt).abs() > S::lit(1e-9) * dt {
            return Err(Error::GridMismatch(format!("noise dt {} differs from step {}", noise.dt(), dt)));
        }
    }
    let f = run.f.filter(|f| f.values().iter().any(|v| !v.is_zero()));
    let g = run.g.filter(|g| !g.is_identically_zero());
    if let Some(f) = run.f {
        if f.grid() != grid || (f.paths() != 1 && f.paths() != run.paths) {
            return Err(Error::GridMismatch("drift forcing does not match the solve".into()));
        }
    }
    if let Some(g) = run.g {
        if g.grid() != grid || (g.paths() != 1 && g.paths() != run.paths) {
            return Err(Error::GridMismatch("noise forcing does not match the solve".into()));
        }
        if g.modes() != modes && !g.is_identically_zero() {
            return Err(Error::Size("noise forcing modes differ from coefficient modes".into()));
        }
    }
    if let Some(u0) = run.initial {
        if u0.len() != nodes {
            return Err(Error::Size("initial condition has wrong length".into()));
        }
    }
    let has_lower = run.coeffs.has_lower_order();
    let sub = S::from_usize_exact(substeps);
    let per = times * nodes;
    let mut values = vec![S::zero(); run.paths * per];
    let results: Vec<Result<()>> = values
        .par_chunks_mut(per)
        .enumerate()
        .map_init(
            || FftPlanner::<S>::new(),
            |planner, (p, out)| -> Result<()> {
                let mut imp = Implicit::new(grid, run.boundary, planner);
                let mut u = vec![S::zero(); nodes];
                if let Some(u0) = run.initial {
                    u.copy_from_slice(u0);
                }
                out[..nodes].copy_from_slice(&u);
                let mut rhs = vec![S::zero(); nodes];
                let mut d1 = vec![S::zero(); nodes];
                let mut d2 = vec![S::zero(); nodes];
                for n in 0..total {
                    let t = S::from_usize_exact(n) * dt;
                    let o = n / substeps;
                    let w = S::from_usize_exact(n % substeps) / sub;
                    let sigma = run.coeffs.sigma_at(t);
                    let need_grad = has_lower || (run.noise.is_some() && sigma.iter().any(|s| !s[0].is_zero() || !s[1].is_zero()));
                    if need_grad {
                        gradients(grid, periodic_line, &u, &mut d1, &mut d2);
                    }
                    rhs.copy_from_slice(&u);
                    if has_lower {
                        let b = run.coeffs.drift_at(t);
                        let c = run.coeffs.potential_at(t);
                        for k in 0..nodes {
                            rhs[k] = rhs[k] + dt * (b[0] * d1[k] + b[1] * d2[k] + c * u[k]);
                        }
                    }
                    if let Some(f) = f {
                        let pi = f.path_index(p);
                        let lo = f.slice(pi, o);
                        if w.is_zero() {
                            for k in 0..nodes {
                                rhs[k] = rhs[k] + dt * lo[k];
                            }
                        } else {
                            let hi = f.slice(pi, o + 1);
                            for k in 0..nodes {
                                rhs[k] = rhs[k] + dt * (lo[k] + w * (hi[k] - lo[k]));
                            }
                        }
                    }
                    if let Some(noise) = run.noise {
                        let dw = noise.at(p, n);
                        let nu = if has_lower { run.coeffs.nu_at(t) } else { Vec::new() };
                        for (mode, s) in sigma.iter().enumerate() {
                            let inc = dw[mode];
                            if !s[0].is_zero() || !s[1].is_zero() {
                                for k in 0..nodes {
                                    rhs[k] = rhs[k] + (s[0] * d1[k] + s[1] * d2[k]) * inc;
                                }
                            }
                            if has_lower && !nu[mode].is_zero() {
                                for k in 0..nodes {
                                    rhs[k] = rhs[k] + nu[mode] * u[k] * inc;
                                }
                            }
                            if let Some(g) = g {
                                let gm = g.mode(mode);
                                let pi = gm.path_index(p);
                                let lo = gm.slice(pi, o);
                                if w.is_zero() {
                                    for k in 0..nodes {
                                        rhs[k] = rhs[k] + lo[k] * inc;
                                    }
                                } else {
                                    let hi = gm.slice(pi, o + 1);
                                    for k in 0..nodes {
                                        rhs[k] = rhs[k] + (lo[k] + w * (hi[k] - lo[k])) * inc;
                                    }
                                }
                            }
                        }
                    }
                    let a = run.coeffs.a_at(t + S::lit(0.5) * dt);
                    imp.solve(a, dt, &mut rhs);
                    if rhs.iter().any(|v| !v.is_finite()) {
                        return Err(Error::BlowUp { path: p, step: n + 1 });
                    }
                    std::mem::swap(&mut u, &mut rhs);
                    if (n + 1) % substeps == 0 {
                        let level = (n + 1) / substeps;
                        out[level * nodes..(level + 1) * nodes].copy_from_slice(&u);
                    }
                }
                Ok(())
            },
        )
        .collect();
    for r in results {
        r?;
    }
    FieldEnsemble::from_values(grid.clone(), run.paths, values)
}

fn check_step<S: Scalar>(coeffs: &ModelCoefficients<S>, grid: &SpaceTimeGrid<S>, opts: &SolverOptions<S>) -> Result<()> {
    if opts.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be positive".into()));
    }
    if coeffs.dim() != grid.dim() {
        return Err(Error::GridMismatch("coefficient and grid dimensions differ".into()));
    }
    let dt = grid.dt() / S::from_usize_exact(opts.substeps);
    let dx = if grid.dim() == 2 { grid.dx1().min(grid.dxp()) } else { grid.dx1() };
    let limit = opts.c_cfl * dx * dx / (S::lit(2.0) * coeffs.max_a_norm());
    if dt > limit {
        return Err(Error::Precondition(format!(
            "step {dt:e} exceeds c_cfl dx^2 / (2 max|a|) = {limit:e}"
        )));
    }
    Ok(())
}

fn check_parabolic<S: Scalar>(coeffs: &ModelCoefficients<S>) -> Result<()> {
    let report = check_parabolicity(coeffs);
    if !report.pass {
        return Err(Error::Precondition(format!(
            "parabolicity fails (margins {:e}, {:e})",
            report.lower_margin, report.upper_margin
        )));
    }
    Ok(())
}

/// Model problem on the half-space slab with zero initial and Dirichlet data.
///
/// `noise` must have `grid.steps() * opts.substeps` steps; its path count is
/// the ensemble size.
pub fn solve_model_halfspace<S: Scalar>(
    coeffs: &ModelCoefficients<S>,
    forcing: &Forcing<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
) -> Result<FieldEnsemble<S>> {
    check_parabolic(coeffs)?;
    check_step(coeffs, grid, opts)?;
    let u = integrate_ensemble(&Run {
        grid,
        coeffs,
        f: Some(&forcing.f),
        g: Some(&forcing.g),
        noise: Some(noise),
        paths: noise.paths(),
        substeps: opts.substeps,
        boundary: Boundary::Dirichlet,
        initial: None,
    })?;
    Ok(u.with_meta("field", "u"))
}

/// Same scheme on a periodic line `[0, x1_max)` with initial value `u0`
/// (one value per node; the last node repeats the first).
pub fn solve_periodic_line<S: Scalar>(
    coeffs: &ModelCoefficients<S>,
    u0: &[S],
    forcing: &Forcing<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
) -> Result<FieldEnsemble<S>> {
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("periodic line solver needs dim = 1".into()));
    }
    check_parabolic(coeffs)?;
    check_step(coeffs, grid, opts)?;
    integrate_ensemble(&Run {
        grid,
        coeffs,
        f: Some(&forcing.f),
        g: Some(&forcing.g),
        noise: Some(noise),
        paths: noise.paths(),
        substeps: opts.substeps,
        boundary: Boundary::Periodic,
        initial: Some(u0),
    })
}

/// Deterministic Dirichlet solve of `∂_t V = a^{ij} D_ij V + f`, one trajectory per forcing path.
/// The diffusion may be degenerate in the tangential direction.
pub fn solve_deterministic<S: Scalar>(
    a: [[S; 2]; 2],
    f: &FieldEnsemble<S>,
    opts: &SolverOptions<S>,
) -> Result<FieldEnsemble<S>> {
    let grid = f.grid();
    let one = S::one();
    let coeffs = ModelCoefficients::constant(grid.dim(), a, vec![[S::zero(); 2]], one, one.max(S::lit(2.0) * a[0][0].max(a[1][1])))?;
    if opts.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be positive".into()));
    }
    integrate_ensemble(&Run {
        grid,
        coeffs: &coeffs,
        f: Some(f),
        g: None,
        noise: None,
        paths: f.paths(),
        substeps: opts.substeps,
        boundary: Boundary::Dirichlet,
        initial: None,
    })
}

/// Both routes for `dU = ΔU dt + g^k dw^k` and their largest nodal difference.
#[derive(Debug, Clone)]
pub struct AdditiveHeat<S> {
    pub direct: FieldEnsemble<S>,
    pub odd_route: Option<FieldEnsemble<S>>,
    pub discrepancy: Option<S>,
}

/// Additive-noise heat problem, directly with Dirichlet rows and (when `g`
/// vanishes on `x1 = 0`) through the odd extension to the mirrored grid.
pub fn solve_additive_heat<S: Scalar>(
    g: &ModalField<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
    odd_route: bool,
) -> Result<AdditiveHeat<S>> {
    if g.grid() != grid {
        return Err(Error::GridMismatch("g is not on the solve grid".into()));
    }
    let heat = ModelCoefficients::heat(grid.dim(), g.modes());
    let forcing = Forcing {
        f: FieldEnsemble::zeros(grid.clone(), 1),
        g: g.clone(),
    };
    let direct = solve_model_halfspace(&heat, &forcing, grid, noise, opts)?.with_meta("field", "U");
    if !odd_route {
        return Ok(AdditiveHeat {
            direct,
            odd_route: None,
            discrepancy: None,
        });
    }
    let mirrored = grid.mirrored();
    let modes = g
        .components()
        .iter()
        .map(|m| odd_extend(m).map(ExtendedField::into_field))
        .collect::<Result<Vec<_>>>()?;
    let g_ext = ModalField::new(modes)?;
    let forcing_ext = Forcing {
        f: FieldEnsemble::zeros(mirrored.clone(), 1),
        g: g_ext,
    };
    check_step(&heat, &mirrored, opts)?;
    let whole = integrate_ensemble(&Run {
        grid: &mirrored,
        coeffs: &heat,
        f: Some(&forcing_ext.f),
        g: Some(&forcing_ext.g),
        noise: Some(noise),
        paths: noise.paths(),
        substeps: opts.substeps,
        boundary: Boundary::Dirichlet,
        initial: None,
    })?;
    let half = ExtendedField::restrict_half(&whole, grid).with_meta("field", "U_odd");
    let discrepancy = direct
        .values()
        .iter()
        .zip(half.values())
        .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    Ok(AdditiveHeat {
        direct,
        odd_route: Some(half),
        discrepancy: Some(discrepancy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::linear_combine;
    use crate::rng::{wiener_increments, SeedSpec};

    fn line_setup() -> (SpaceTimeGrid<f64>, ModelCoefficients<f64>) {
        let g = SpaceTimeGrid::line(1.0, 16, 0.1, 40).unwrap();
        let c = ModelCoefficients::constant(1, [[1.0, 0.0], [0.0, 0.0]], vec![[0.5, 0.0]], 1.0, 2.0).unwrap();
        (g, c)
    }

    #[test]
    fn zero_data_zero_solution() {
        let (g, c) = line_setup();
        let noise = wiener_increments(SeedSpec::new(1, 2), 4, 40, 1, g.dt()).unwrap();
        let u = solve_model_halfspace(&c, &Forcing::zero(&g, 1), &g, &noise, &SolverOptions::new(1, 4.0)).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_heat_matches_sine_mode() {
        // u_t = u_xx + f with f = π² sin(πx) e^0 ... steady: u = sin(πx)(1 - e^{-π² t})
        let g = SpaceTimeGrid::line(1.0, 32, 0.1, 400).unwrap();
        let pi = std::f64::consts::PI;
        let f = FieldEnsemble::from_fn(g.clone(), 1, move |_, _, x, _| pi * pi * (pi * x).sin());
        let v = solve_deterministic([[1.0, 0.0], [0.0, 0.0]], &f, &SolverOptions::default()).unwrap();
        let n = g.steps();
        let t = g.t(n);
        for i in 0..g.n1() {
            let exact = (pi * g.x1(i)).sin() * (1.0 - (-pi * pi * t).exp());
            assert!((v.get(0, n, i) - exact).abs() < 5e-3, "{i}");
        }
    }

    #[test]
    fn linear_in_data_under_shared_noise() {
        let g = SpaceTimeGrid::slab(1.0, 8, 1.0, 4, 0.05, 10).unwrap();
        let c = ModelCoefficients::constant(2, [[1.0, 0.2], [0.2, 1.0]], vec![[0.0, 0.6]], 0.5, 3.0).unwrap();
        let noise = wiener_increments(SeedSpec::new(3, 4), 3, 20, 1, g.dt() / 2.0).unwrap();
        let opts = SolverOptions::new(2, f64::INFINITY);
        let f1 = FieldEnsemble::from_fn(g.clone(), 1, |_, t, x, y: f64| t + x * y.cos());
        let f2 = FieldEnsemble::from_fn(g.clone(), 1, |_, _, x: f64, _| x.sin());
        let g1 = ModalField::new(vec![FieldEnsemble::from_fn(g.clone(), 1, |_, _, x: f64, _| (3.0 * x).sin())]).unwrap();
        let g2 = ModalField::new(vec![FieldEnsemble::from_fn(g.clone(), 1, |_, t, x, _| t * x)]).unwrap();
        let a = solve_model_halfspace(&c, &Forcing::new(f1.clone(), g1.clone()).unwrap(), &g, &noise, &opts).unwrap();
        let b = solve_model_halfspace(&c, &Forcing::new(f2.clone(), g2.clone()).unwrap(), &g, &noise, &opts).unwrap();
        let fs = linear_combine(&[1.0, 1.0], &[&f1, &f2]).unwrap();
        let gs = ModalField::new(vec![linear_combine(&[1.0, 1.0], &[g1.mode(0), g2.mode(0)]).unwrap()]).unwrap();
        let s = solve_model_halfspace(&c, &Forcing::new(fs, gs).unwrap(), &g, &noise, &opts).unwrap();
        let sum = linear_combine(&[1.0, 1.0], &[&a, &b]).unwrap();
        let err = s.values().iter().zip(sum.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-10, "{err}");
        assert!(s.max_abs() > 1e-3);
    }

    #[test]
    fn dirichlet_rows_hold() {
        let g = SpaceTimeGrid::slab(1.0, 8, 1.0, 4, 0.05, 10).unwrap();
        let c = ModelCoefficients::constant(2, [[1.0, 0.0], [0.0, 1.0]], vec![[0.4, 0.4]], 0.5, 3.0).unwrap();
        let noise = wiener_increments(SeedSpec::new(5, 6), 2, 10, 1, g.dt()).unwrap();
        let f = FieldEnsemble::from_fn(g.clone(), 1, |_, _, _, _| 1.0);
        let u = solve_model_halfspace(&c, &Forcing::drift_only(f, 1), &g, &noise, &SolverOptions::new(1, f64::INFINITY)).unwrap();
        for n in 0..g.times() {
            for j in 0..g.nxp() {
                assert_eq!(u.get(1, n, g.node(0, j)), 0.0);
                assert_eq!(u.get(1, n, g.node(8, j)), 0.0);
            }
        }
    }

    #[test]
    fn preconditions() {
        let (g, _) = line_setup();
        let bad = ModelCoefficients::constant(1, [[1.0, 0.0], [0.0, 0.0]], vec![[1.5, 0.0]], 0.1, 2.0).unwrap();
        let noise = wiener_increments(SeedSpec::new(1, 1), 1, 40, 1, g.dt()).unwrap();
        assert!(matches!(
            solve_model_halfspace(&bad, &Forcing::zero(&g, 1), &g, &noise, &SolverOptions::default()),
            Err(Error::Precondition(_))
        ));
        let (g, c) = line_setup();
        let coarse = SpaceTimeGrid::line(1.0, 16, 0.1, 4).unwrap();
        let noise = wiener_increments(SeedSpec::new(1, 1), 1, 4, 1, coarse.dt()).unwrap();
        assert!(matches!(
            solve_model_halfspace(&c, &Forcing::zero(&coarse, 1), &coarse, &noise, &SolverOptions::default()),
            Err(Error::Precondition(_))
        ));
        let short = wiener_increments(SeedSpec::new(1, 1), 1, 39, 1, g.dt()).unwrap();
        assert!(matches!(
            solve_model_halfspace(&c, &Forcing::zero(&g, 1), &g, &short, &SolverOptions::new(1, 4.0)),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let (g, c) = line_setup();
        let mut inc = vec![0.0; 40];
        inc[7] = f64::INFINITY;
        let noise = WienerBatch::from_increments(inc, 1, 40, 1, g.dt()).unwrap();
        let f = FieldEnsemble::from_fn(g.clone(), 1, |_, _, x: f64, _| x);
        let gg = ModalField::new(vec![FieldEnsemble::from_fn(g.clone(), 1, |_, _, _, _| 1.0)]).unwrap();
        match solve_model_halfspace(&c, &Forcing::new(f, gg).unwrap(), &g, &noise, &SolverOptions::new(1, 4.0)) {
            Err(Error::BlowUp { path: 0, step: 8 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn additive_heat_routes_agree() {
        let g = SpaceTimeGrid::line(1.0, 16, 0.05, 20).unwrap();
        let noise = wiener_increments(SeedSpec::new(9, 9), 8, 20, 1, g.dt()).unwrap();
        let gf = ModalField::new(vec![FieldEnsemble::from_fn(g.clone(), 1, |_, t, x: f64, _| (1.0 + t) * (std::f64::consts::PI * x).sin())]).unwrap();
        let out = solve_additive_heat(&gf, &g, &noise, &SolverOptions::new(1, 4.0), true).unwrap();
        let bound = 10.0 * (g.dx1() * g.dx1() + g.dt());
        assert!(out.discrepancy.unwrap() <= bound);
        assert!(out.discrepancy.unwrap() < 1e-12);
        assert!(out.direct.max_abs() > 0.0);
        let zero = solve_additive_heat(&ModalField::zeros(g.clone(), 1), &g, &noise, &SolverOptions::new(1, 4.0), true).unwrap();
        assert_eq!(zero.direct.max_abs(), 0.0);
        let rough = ModalField::new(vec![FieldEnsemble::from_fn(g.clone(), 1, |_, _, _, _| 1.0)]).unwrap();
        assert!(solve_additive_heat(&rough, &g, &noise, &SolverOptions::new(1, 4.0), true).is_err());
    }

    #[test]
    fn periodic_line_damps_a_mode() {
        let cells = 32;
        let tau = std::f64::consts::TAU;
        let g = SpaceTimeGrid::line(tau, cells, 0.5, 50).unwrap();
        let c = ModelCoefficients::constant(1, [[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0]], 1.0, 2.0).unwrap();
        let u0: Vec<f64> = (0..=cells).map(|i| g.x1(i).cos()).collect();
        let noise = wiener_increments(SeedSpec::new(1, 1), 1, 500, 1, 1e-3).unwrap();
        let u = solve_periodic_line(&c, &u0, &Forcing::zero(&g, 1), &g, &noise, &SolverOptions::new(10, 0.25)).unwrap();
        let expect = (-0.5f64).exp();
        assert!((u.get(0, 50, 0) - expect).abs() < 2e-3);
        assert_eq!(u.get(0, 50, 0), u.get(0, 50, cells));
    }
}
