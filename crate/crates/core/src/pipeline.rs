//! Reduction of the model problem with `g = 0` to a problem whose forcing
//! vanishes on `x1 = 0`, and the continuity map between operators.
//!
//! Given the model solution `u`:
//!
//! - `U` solves `dU = ΔU dt + σ^{ik} D_i u dw^k`, and `ũ = u - U`;
//! - `f̃ = f + Σ_{(i,j)≠(1,1)} a^{ij} D_ij ũ + Σ (a^{ij} - δ_ij) D_ij U`, so that `∂_t ũ = a^{11} D_11 ũ + f̃`;
//! - `b = f̃(t, 0, x') / a^{11}`, `c = b(0, x')`, `H = ∫_0^t (b - c)`;
//! - `∂_t V⁰ = ∂_11 V⁰ + b - c`, `∂_t V¹ = ∂_11 V¹ + c`, `V = V⁰ + V¹`;
//! - `w = ũ - V⁰ - V¹` solves `∂_t w = a^{11} D_11 w + F` with
//!   `F = (a^{11} - 1) D_11 V + f̃ - b`, which vanishes on `x1 = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::ModelCoefficients;
use crate::error::{Error, Result};
use crate::field::{finite_diff, linear_combine, BoundaryField, FieldEnsemble, ModalField, MultiIndex, SpaceTimeGrid};
use crate::halfline::{solve_halfline, BoundaryData, KernelQuadrature};
use crate::rng::WienerBatch;
use crate::scalar::Scalar;
use crate::solver::{solve_additive_heat, solve_deterministic, solve_model_halfspace, solve_periodic_line, Forcing, SolverOptions};

#[derive(Debug, Clone)]
pub struct PipelineOutput<S> {
    pub big_u: FieldEnsemble<S>,
    pub u_tilde: FieldEnsemble<S>,
    pub f_tilde: FieldEnsemble<S>,
    /// `b(t, x')`, `[path][time][x']`.
    pub b: BoundaryField<S>,
    /// `c(x') = b(0, x')`, `[path][x']`.
    pub c: Vec<S>,
    pub h: BoundaryField<S>,
    /// Integrand `b - c` of `H`, which is its time derivative at every grid time.
    pub dh: BoundaryField<S>,
    pub v0: FieldEnsemble<S>,
    pub v1: FieldEnsemble<S>,
    pub v: FieldEnsemble<S>,
    pub w: FieldEnsemble<S>,
    pub f_residual: FieldEnsemble<S>,
}

impl<S: Scalar> PipelineOutput<S> {
    /// `max_{t > 0, x'} E|F(t, 0, x')|^2`. The initial level carries the
    /// corner value `(a^{11}(0) - 1) c` and is left out.
    pub fn boundary_residual(&self) -> S {
        let g = self.f_residual.grid();
        let paths = S::from_usize_exact(self.f_residual.paths());
        let mut worst = S::zero();
        for n in 1..g.times() {
            for j in 0..g.nxp() {
                let k = g.node(0, j);
                let m = (0..self.f_residual.paths())
                    .map(|p| {
                        let v = self.f_residual.get(p, n, k);
                        v * v
                    })
                    .sum::<S>()
                    / paths;
                worst = worst.max(m);
            }
        }
        worst
    }

    /// Largest `|H(0, x')|` and `|∂_t H(0, x')|` over paths.
    pub fn h_initial(&self) -> (S, S) {
        let g = self.h.grid();
        let mut out = (S::zero(), S::zero());
        for p in 0..self.h.paths() {
            for j in 0..g.nxp() {
                out.0 = out.0.max(self.h.get(p, 0, j).abs());
                out.1 = out.1.max(self.dh.get(p, 0, j).abs());
            }
        }
        out
    }
}

fn per_slice<S, F>(grid: &SpaceTimeGrid<S>, paths: usize, f: F) -> Result<FieldEnsemble<S>>
where
    S: Scalar,
    F: Fn(usize, usize, &mut [S]) + Sync,
{
    let nodes = grid.nodes();
    let per = grid.times() * nodes;
    let mut values = vec![S::zero(); paths * per];
    values.par_chunks_mut(per).enumerate().for_each(|(p, chunk)| {
        for (n, slice) in chunk.chunks_mut(nodes).enumerate() {
            f(p, n, slice);
        }
    });
    FieldEnsemble::from_values(grid.clone(), paths, values)
}

/// Trace field extended constantly in `x1`.
fn lift_trace<S: Scalar>(trace: &[S], grid: &SpaceTimeGrid<S>, paths: usize) -> Result<FieldEnsemble<S>> {
    let m = grid.nxp();
    let times = grid.times();
    per_slice(grid, paths, |p, n, s| {
        for j in 0..m {
            let v = trace[(p * times + n) * m + j];
            for i in 0..grid.n1() {
                s[grid.node(i, j)] = v;
            }
        }
    })
}

fn check_inputs<S: Scalar>(
    coeffs: &ModelCoefficients<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    fields: &[&FieldEnsemble<S>],
) -> Result<()> {
    if coeffs.dim() != grid.dim() {
        return Err(Error::GridMismatch("coefficient and grid dimensions differ".into()));
    }
    for f in fields {
        if f.grid() != grid {
            return Err(Error::GridMismatch("field is not on the pipeline grid".into()));
        }
        if f.paths() != 1 && f.paths() != noise.paths() {
            return Err(Error::GridMismatch("field path count differs from the noise".into()));
        }
    }
    Ok(())
}

/// Runs every stage of the reduction for a model solution `u` computed with `g = 0`.
pub fn decompose_pipeline<S: Scalar>(
    coeffs: &ModelCoefficients<S>,
    f: &FieldEnsemble<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    u: &FieldEnsemble<S>,
    opts: &SolverOptions<S>,
) -> Result<PipelineOutput<S>> {
    check_inputs(coeffs, grid, noise, &[f, u])?;
    let dim = grid.dim();
    let paths = noise.paths();
    let modes = coeffs.modes();
    let times = grid.times();
    let m = grid.nxp();
    let sigma: Vec<Vec<[S; 2]>> = (0..times).map(|n| coeffs.sigma_at(grid.t(n))).collect();
    let a: Vec<[[S; 2]; 2]> = (0..times).map(|n| coeffs.a_at(grid.t(n))).collect();

    let du1 = finite_diff(u, MultiIndex::D1)?;
    let du2 = if dim == 2 { Some(finite_diff(u, MultiIndex::D2)?) } else { None };
    let g_u = (0..modes)
        .map(|k| {
            per_slice(grid, u.paths(), |p, n, s| {
                let (s1, s2) = (sigma[n][k][0], sigma[n][k][1]);
                let d1 = du1.slice(p, n);
                match &du2 {
                    Some(du2) => {
                        let d2 = du2.slice(p, n);
                        for (o, (x, y)) in s.iter_mut().zip(d1.iter().zip(d2)) {
                            *o = s1 * *x + s2 * *y;
                        }
                    }
                    None => {
                        for (o, x) in s.iter_mut().zip(d1) {
                            *o = s1 * *x;
                        }
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let big_u = solve_additive_heat(&ModalField::new(g_u)?, grid, noise, opts, false)?
        .direct
        .with_meta("field", "U");
    let u_tilde = linear_combine(&[S::one(), -S::one()], &[u, &big_u])?.with_meta("field", "u_tilde");

    let one = S::one();
    let two = S::lit(2.0);
    let f_tilde = if dim == 1 {
        let d11 = finite_diff(&big_u, MultiIndex::D11)?;
        per_slice(grid, paths, |p, n, s| {
            let fs = f.slice(f.path_index(p), n);
            let c11 = a[n][0][0] - one;
            for (k, o) in s.iter_mut().enumerate() {
                *o = fs[k] + c11 * d11.slice(p, n)[k];
            }
        })?
    } else {
        let ut12 = finite_diff(&u_tilde, MultiIndex::D12)?;
        let ut22 = finite_diff(&u_tilde, MultiIndex::D22)?;
        let bu11 = finite_diff(&big_u, MultiIndex::D11)?;
        let bu12 = finite_diff(&big_u, MultiIndex::D12)?;
        let bu22 = finite_diff(&big_u, MultiIndex::D22)?;
        per_slice(grid, paths, |p, n, s| {
            let fs = f.slice(f.path_index(p), n);
            let an = a[n];
            let (x12, x22) = (ut12.slice(p, n), ut22.slice(p, n));
            let (y11, y12, y22) = (bu11.slice(p, n), bu12.slice(p, n), bu22.slice(p, n));
            for (k, o) in s.iter_mut().enumerate() {
                *o = fs[k]
                    + two * an[0][1] * x12[k]
                    + an[1][1] * x22[k]
                    + (an[0][0] - one) * y11[k]
                    + two * an[0][1] * y12[k]
                    + (an[1][1] - one) * y22[k];
            }
        })?
    }
    .with_meta("field", "f_tilde");

    let mut b = vec![S::zero(); paths * times * m];
    let mut c = vec![S::zero(); paths * m];
    let mut h = vec![S::zero(); paths * times * m];
    let mut dh = vec![S::zero(); paths * times * m];
    let half_dt = S::lit(0.5) * grid.dt();
    for p in 0..paths {
        for n in 0..times {
            let s = f_tilde.slice(p, n);
            for j in 0..m {
                b[(p * times + n) * m + j] = s[grid.node(0, j)] / a[n][0][0];
            }
        }
        for j in 0..m {
            let c0 = b[p * times * m + j];
            c[p * m + j] = c0;
            for n in 0..times {
                let idx = (p * times + n) * m + j;
                dh[idx] = b[idx] - c0;
                if n > 0 {
                    h[idx] = h[idx - m] + half_dt * (dh[idx - m] + dh[idx]);
                }
            }
        }
    }
    let c_trace: Vec<S> = (0..paths * times * m).map(|idx| c[(idx / (times * m)) * m + idx % m]).collect();
    let heat_normal = [[one, S::zero()], [S::zero(), S::zero()]];
    let v0 = solve_deterministic(heat_normal, &lift_trace(&dh, grid, paths)?, opts)?.with_meta("field", "V0");
    let v1 = solve_deterministic(heat_normal, &lift_trace(&c_trace, grid, paths)?, opts)?.with_meta("field", "V1");
    let v = linear_combine(&[one, one], &[&v0, &v1])?.with_meta("field", "V");
    let w = linear_combine(&[one, -one, -one], &[&u_tilde, &v0, &v1])?.with_meta("field", "w");
    let d11v = finite_diff(&v, MultiIndex::D11)?;
    let f_residual = per_slice(grid, paths, |p, n, s| {
        let ft = f_tilde.slice(p, n);
        let dv = d11v.slice(p, n);
        let c11 = a[n][0][0] - one;
        for j in 0..m {
            let bj = b[(p * times + n) * m + j];
            for i in 0..grid.n1() {
                let k = grid.node(i, j);
                s[k] = c11 * dv[k] + ft[k] - bj;
            }
        }
    })?
    .with_meta("field", "F");

    Ok(PipelineOutput {
        big_u,
        u_tilde,
        f_tilde,
        b: BoundaryField::from_values(grid.clone(), paths, b)?,
        c,
        h: BoundaryField::from_values(grid.clone(), paths, h)?,
        dh: BoundaryField::from_values(grid.clone(), paths, dh)?,
        v0,
        v1,
        v,
        w,
        f_residual,
    })
}

/// `W⁰ = V⁰ - H` solves the heat equation with boundary value `-H`; compares
/// the kernel solution of that half-line problem with `V⁰ - H` for
/// `x1 <= x1_max / 4`, where the far wall is negligible when `t_final` is
/// small against `x1_max^2`. Returns the largest nodal difference.
pub fn v0_crosscheck<S: Scalar>(out: &PipelineOutput<S>, quad: &KernelQuadrature<S>) -> Result<S> {
    let grid = out.v0.grid();
    let times = grid.times();
    let m = grid.nxp();
    let paths = out.v0.paths();
    let line = SpaceTimeGrid::line(grid.x1_max(), grid.x1_cells(), grid.t_final(), grid.steps())?;
    let mut hv = vec![S::zero(); paths * m * times];
    let mut dv = vec![S::zero(); paths * m * times];
    for p in 0..paths {
        for j in 0..m {
            for n in 0..times {
                hv[(p * m + j) * times + n] = -out.h.get(p, n, j);
                dv[(p * m + j) * times + n] = -out.dh.get(p, n, j);
            }
        }
    }
    let data = BoundaryData::sampled(&line, paths * m, hv, dv)?;
    let w0 = solve_halfline(&data, &line, quad)?;
    let mut worst = S::zero();
    let near = grid.x1_max() * S::lit(0.25);
    for p in 0..paths {
        for j in 0..m {
            for n in 0..times {
                for i in 0..grid.n1() {
                    if grid.x1(i) > near {
                        break;
                    }
                    let lhs = out.v0.get(p, n, grid.node(i, j)) - out.h.get(p, n, j);
                    worst = worst.max((lhs - w0.get(p * m + j, n, i)).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Domain of the continuity map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Slab with `u = 0` on both normal ends.
    HalfSpace,
    /// Periodic line `[0, x1_max)`, no boundary.
    PeriodicLine,
}

/// Centred periodic derivative of order 1 or 2 on a line grid (last node repeats the first).
fn periodic_diff<S: Scalar>(field: &FieldEnsemble<S>, order: usize) -> Result<FieldEnsemble<S>> {
    let grid = field.grid();
    let n = grid.x1_cells();
    let h = grid.dx1();
    per_slice(grid, field.paths(), |p, t, out| {
        let u = field.slice(p, t);
        for i in 0..n {
            let (l, r) = (u[(i + n - 1) % n], u[(i + 1) % n]);
            out[i] = if order == 1 {
                (r - l) / (S::lit(2.0) * h)
            } else {
                (r - S::lit(2.0) * u[i] + l) / (h * h)
            };
        }
        out[n] = out[0];
    })
}

/// One application of the continuity map on the half-space: solves the
/// problem for the operator blended at `s0`, with `(L_s - L_{s0}) v` and
/// `(Λ_s - Λ_{s0}) v` moved into the forcing.
#[allow(clippy::too_many_arguments)]
pub fn continuity_step<S: Scalar>(
    s: S,
    s0: S,
    v: &FieldEnsemble<S>,
    coeffs: &ModelCoefficients<S>,
    forcing: &Forcing<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
) -> Result<FieldEnsemble<S>> {
    continuity_step_on(Domain::HalfSpace, s, s0, v, coeffs, forcing, grid, noise, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn continuity_step_on<S: Scalar>(
    domain: Domain,
    s: S,
    s0: S,
    v: &FieldEnsemble<S>,
    coeffs: &ModelCoefficients<S>,
    forcing: &Forcing<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
) -> Result<FieldEnsemble<S>> {
    if !(s >= S::zero() && s <= S::one()) {
        return Err(Error::InvalidArgument(format!("s = {s} outside [0, 1]")));
    }
    if coeffs.has_lower_order() {
        return Err(Error::InvalidArgument("continuity map supports the model operator only".into()));
    }
    if domain == Domain::PeriodicLine && grid.dim() != 1 {
        return Err(Error::InvalidArgument("periodic continuity map needs dim = 1".into()));
    }
    check_inputs(coeffs, grid, noise, &[v, &forcing.f])?;
    let base = coeffs.blended(s0)?;
    let ds = s - s0;
    let dim = grid.dim();
    let times = grid.times();
    let one = S::one();
    let a: Vec<[[S; 2]; 2]> = (0..times).map(|n| coeffs.a_at(grid.t(n))).collect();
    let sigma: Vec<Vec<[S; 2]>> = (0..times).map(|n| coeffs.sigma_at(grid.t(n))).collect();
    let paths = v.paths().max(forcing.f.paths());
    let second = match domain {
        Domain::PeriodicLine => vec![periodic_diff(v, 2)?],
        Domain::HalfSpace if dim == 1 => vec![finite_diff(v, MultiIndex::D11)?],
        Domain::HalfSpace => [MultiIndex::D11, MultiIndex::D12, MultiIndex::D22]
            .iter()
            .map(|&beta| finite_diff(v, beta))
            .collect::<Result<Vec<_>>>()?,
    };
    let f = per_slice(grid, paths, |p, n, out| {
        let an = a[n];
        let fs = forcing.f.slice(forcing.f.path_index(p), n);
        let pv = v.path_index(p);
        let d11 = second[0].slice(pv, n);
        for (k, o) in out.iter_mut().enumerate() {
            let mut extra = (an[0][0] - one) * d11[k];
            if dim == 2 {
                extra = extra + S::lit(2.0) * an[0][1] * second[1].slice(pv, n)[k] + (an[1][1] - one) * second[2].slice(pv, n)[k];
            }
            *o = fs[k] + ds * extra;
        }
    })?;
    let d1 = match domain {
        Domain::PeriodicLine => periodic_diff(v, 1)?,
        Domain::HalfSpace => finite_diff(v, MultiIndex::D1)?,
    };
    let d2 = if dim == 2 { Some(finite_diff(v, MultiIndex::D2)?) } else { None };
    let gpaths = v.paths().max(forcing.g.paths());
    let g = (0..coeffs.modes())
        .map(|k| {
            let gk = (k < forcing.g.modes()).then(|| forcing.g.mode(k));
            per_slice(grid, gpaths, |p, n, out| {
                let (s1, s2) = (sigma[n][k][0], sigma[n][k][1]);
                let pv = v.path_index(p);
                let x = d1.slice(pv, n);
                for (i, o) in out.iter_mut().enumerate() {
                    let mut extra = s1 * x[i];
                    if let Some(d2) = &d2 {
                        extra = extra + s2 * d2.slice(pv, n)[i];
                    }
                    let base = gk.map(|g| g.slice(g.path_index(p), n)[i]).unwrap_or(S::zero());
                    *o = base + ds * extra;
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let forcing = Forcing::new(f, ModalField::new(g)?)?;
    match domain {
        Domain::HalfSpace => solve_model_halfspace(&base, &forcing, grid, noise, opts),
        Domain::PeriodicLine => {
            let u0 = vec![S::zero(); grid.nodes()];
            solve_periodic_line(&base, &u0, &forcing, grid, noise, opts)
        }
    }
}

/// `sup_nodes E|x - y|^2` over all times.
pub fn sup_mean_square_gap<S: Scalar>(x: &FieldEnsemble<S>, y: &FieldEnsemble<S>) -> Result<S> {
    if x.grid() != y.grid() || x.paths() != y.paths() {
        return Err(Error::GridMismatch("fields differ in shape".into()));
    }
    let per = x.grid().times() * x.grid().nodes();
    let mut acc = vec![S::zero(); per];
    for p in 0..x.paths() {
        for ((a, u), w) in acc.iter_mut().zip(x.path(p)).zip(y.path(p)) {
            let d = *u - *w;
            *a = *a + d * d;
        }
    }
    let paths = S::from_usize_exact(x.paths());
    Ok(acc.into_iter().fold(S::zero(), |m, v| m.max(v / paths)))
}

/// Iterates the continuity map from `v = 0` and returns the successive
/// gaps `sup E|v_{m+1} - v_m|^2`, `m = 0, 1, ...`.
#[allow(clippy::too_many_arguments)]
pub fn continuity_iterate<S: Scalar>(
    domain: Domain,
    s: S,
    s0: S,
    coeffs: &ModelCoefficients<S>,
    forcing: &Forcing<S>,
    grid: &SpaceTimeGrid<S>,
    noise: &WienerBatch<S>,
    opts: &SolverOptions<S>,
    iterations: usize,
) -> Result<Vec<S>> {
    let mut v = FieldEnsemble::zeros(grid.clone(), noise.paths());
    let mut gaps = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let next = continuity_step_on(domain, s, s0, &v, coeffs, forcing, grid, noise, opts)?;
        gaps.push(sup_mean_square_gap(&next, &v)?);
        v = next;
    }
    Ok(gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{wiener_increments, SeedSpec};

    fn slab_case(cells: usize, steps: usize, paths: usize) -> (SpaceTimeGrid<f64>, ModelCoefficients<f64>, FieldEnsemble<f64>, WienerBatch<f64>) {
        let g = SpaceTimeGrid::slab(1.0, cells, 1.0, 8, 0.25, steps).unwrap();
        let c = ModelCoefficients::constant(2, [[1.4, 0.2], [0.2, 1.1]], vec![[0.0, 0.6]], 0.5, 3.0).unwrap();
        let tau = std::f64::consts::TAU;
        let f = FieldEnsemble::from_fn(g.clone(), 1, move |_, t, x: f64, y: f64| t * (1.0 + (tau * y).cos()) * (1.0 - x));
        let noise = wiener_increments(SeedSpec::new(21, 3), paths, steps, 1, g.dt()).unwrap();
        (g, c, f, noise)
    }

    fn run(cells: usize, steps: usize, paths: usize) -> (PipelineOutput<f64>, FieldEnsemble<f64>) {
        let (g, c, f, noise) = slab_case(cells, steps, paths);
        let opts = SolverOptions::new(1, f64::INFINITY);
        let forcing = Forcing::drift_only(f.clone(), 1);
        let u = solve_model_halfspace(&c, &forcing, &g, &noise, &opts).unwrap();
        (decompose_pipeline(&c, &f, &g, &noise, &u, &opts).unwrap(), u)
    }

    #[test]
    fn reconstruction_identities_are_exact() {
        let (out, u) = run(8, 16, 3);
        for k in 0..u.values().len() {
            assert_eq!(out.u_tilde.values()[k], u.values()[k] - out.big_u.values()[k]);
            assert_eq!(out.w.values()[k], out.u_tilde.values()[k] - out.v0.values()[k] - out.v1.values()[k]);
        }
        assert_eq!(out.h_initial(), (0.0, 0.0));
        assert!(out.big_u.max_abs() > 0.0);
    }

    #[test]
    fn zero_forcing_gives_zero_pipeline() {
        let (g, c, _, noise) = slab_case(8, 16, 2);
        let f = FieldEnsemble::zeros(g.clone(), 1);
        let opts = SolverOptions::new(1, f64::INFINITY);
        let u = solve_model_halfspace(&c, &Forcing::drift_only(f.clone(), 1), &g, &noise, &opts).unwrap();
        let out = decompose_pipeline(&c, &f, &g, &noise, &u, &opts).unwrap();
        for x in [&out.big_u, &out.u_tilde, &out.f_tilde, &out.v0, &out.v1, &out.w, &out.f_residual] {
            assert_eq!(x.max_abs(), 0.0);
        }
        assert_eq!(out.h.max_abs(), 0.0);
    }

    #[test]
    fn b_is_the_trace_of_f_tilde() {
        let (out, _) = run(8, 16, 2);
        let g = out.f_tilde.grid();
        for p in 0..2 {
            for n in 0..g.times() {
                for j in 0..g.nxp() {
                    assert_eq!(out.b.get(p, n, j), out.f_tilde.get(p, n, g.node(0, j)) / 1.4);
                }
            }
        }
    }

    #[test]
    fn boundary_residual_decays() {
        let r: Vec<f64> = [(8, 16), (16, 64), (32, 256)].iter().map(|&(c, s)| run(c, s, 4).0.boundary_residual()).collect();
        assert!(r[1] < r[0] && r[2] < r[1], "{r:?}");
    }

    #[test]
    fn crosscheck_matches_kernel_route() {
        let g = SpaceTimeGrid::slab(3.0, 48, 1.0, 4, 0.25, 64).unwrap();
        let c = ModelCoefficients::constant(2, [[1.4, 0.2], [0.2, 1.1]], vec![[0.0, 0.6]], 0.5, 3.0).unwrap();
        let tau = std::f64::consts::TAU;
        let f = FieldEnsemble::from_fn(g.clone(), 1, move |_, t, x: f64, y: f64| (0.5 + t) * (1.0 + (tau * y).cos()) * (-x).exp());
        let noise = wiener_increments(SeedSpec::new(2, 2), 1, 64, 1, g.dt()).unwrap();
        let opts = SolverOptions::new(1, f64::INFINITY);
        let u = solve_model_halfspace(&c, &Forcing::drift_only(f.clone(), 1), &g, &noise, &opts).unwrap();
        let out = decompose_pipeline(&c, &f, &g, &noise, &u, &opts).unwrap();
        let quad = KernelQuadrature::new(1e-8, 1e-12, 4000).unwrap();
        let gap = v0_crosscheck(&out, &quad).unwrap();
        assert!(out.h.max_abs() > 1e-3);
        assert!(gap < 5e-2 * out.h.max_abs(), "{gap} vs {}", out.h.max_abs());
    }

    #[allow(clippy::type_complexity)]
    fn line_case() -> (SpaceTimeGrid<f64>, ModelCoefficients<f64>, Forcing<f64>, WienerBatch<f64>, SolverOptions<f64>) {
        let g = SpaceTimeGrid::line(1.0, 16, 0.25, 64).unwrap();
        let c = ModelCoefficients::constant(1, [[1.3, 0.0], [0.0, 0.0]], vec![[0.5, 0.0]], 1.0, 3.0).unwrap();
        let f = FieldEnsemble::from_fn(g.clone(), 1, |_, t, x: f64, _| (1.0 + t) * (3.0 * x).sin());
        let noise = wiener_increments(SeedSpec::new(7, 7), 4, 64, 1, g.dt()).unwrap();
        (g, c, Forcing::drift_only(f, 1), noise, SolverOptions::new(1, f64::INFINITY))
    }

    #[test]
    fn continuity_at_s_equals_s0_is_the_direct_solve() {
        let (g, c, forcing, noise, opts) = line_case();
        let v = FieldEnsemble::from_fn(g.clone(), 1, |_, t, x: f64, _| t * x * (1.0 - x));
        let a = continuity_step(0.4, 0.4, &v, &c, &forcing, &g, &noise, &opts).unwrap();
        let b = solve_model_halfspace(&c.blended(0.4).unwrap(), &forcing, &g, &noise, &opts).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn continuity_from_zero_at_base_is_heat() {
        let (g, c, forcing, noise, opts) = line_case();
        let v = FieldEnsemble::zeros(g.clone(), 4);
        let a = continuity_step(0.1, 0.0, &v, &c, &forcing, &g, &noise, &opts).unwrap();
        let b = solve_model_halfspace(&ModelCoefficients::heat(1, 1), &forcing, &g, &noise, &opts).unwrap();
        let gap = sup_mean_square_gap(&a, &b).unwrap();
        assert!(gap < 1e-24, "{gap}");
    }

    #[test]
    fn continuity_contracts() {
        let (g, c, forcing, noise, opts) = line_case();
        let gaps = continuity_iterate(Domain::HalfSpace, 0.6, 0.5, &c, &forcing, &g, &noise, &opts, 6).unwrap();
        for w in gaps.windows(2).skip(1) {
            assert!(w[1] < w[0], "{gaps:?}");
        }
    }
}
