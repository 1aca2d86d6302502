//! Space-time grids over the truncated half-space, sampled random fields and
//! finite-difference stencils.
//!
//! Storage is path-major: `values[(path * times + step) * nodes + node]`, with
//! `node = j * n1 + i1` so every normal line `x' = const` is contiguous.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid on `(x1_min, x1_max) x [0, x'_max) x [0, T]`.
///
/// `x1_min` is `0` for the half-space and `-x1_max` for the mirrored grid used
/// by odd/even extensions; in both cases `x1 = 0` is a node. The tangential
/// direction (dim 2 only) is periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid<S> {
    dim: usize,
    mirrored: bool,
    x1_max: S,
    x1_cells: usize,
    xp_max: S,
    xp_cells: usize,
    t_final: S,
    steps: usize,
}

impl<S: Scalar> SpaceTimeGrid<S> {
    /// One spatial dimension: `x1 in [0, x1_max]`.
    pub fn line(x1_max: S, x1_cells: usize, t_final: S, steps: usize) -> Result<Self> {
        Self::new(1, x1_max, x1_cells, S::one(), 1, t_final, steps)
    }

    /// Two spatial dimensions: `x1 in [0, x1_max]`, periodic `x' in [0, xp_max)`.
    pub fn slab(
        x1_max: S,
        x1_cells: usize,
        xp_max: S,
        xp_cells: usize,
        t_final: S,
        steps: usize,
    ) -> Result<Self> {
        Self::new(2, x1_max, x1_cells, xp_max, xp_cells, t_final, steps)
    }

    pub fn new(
        dim: usize,
        x1_max: S,
        x1_cells: usize,
        xp_max: S,
        xp_cells: usize,
        t_final: S,
        steps: usize,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {dim}")));
        }
        if x1_cells == 0 || steps == 0 {
            return Err(Error::InvalidArgument("x1_cells and steps must be positive".into()));
        }
        if !(x1_max > S::zero()) || !(t_final > S::zero()) || !(xp_max > S::zero()) {
            return Err(Error::InvalidArgument("x1_max, xp_max and T must be positive".into()));
        }
        let xp_cells = if dim == 1 { 1 } else { xp_cells };
        if xp_cells == 0 {
            return Err(Error::InvalidArgument("xp_cells must be positive".into()));
        }
        Ok(Self {
            dim,
            mirrored: false,
            x1_max,
            x1_cells,
            xp_max,
            xp_cells,
            t_final,
            steps,
        })
    }

    /// Grid on `(-x1_max, x1_max)` with the same spacing; `x1 = 0` sits at index `x1_cells`.
    pub fn mirrored(&self) -> Self {
        assert!(!self.mirrored, "grid is already mirrored");
        Self {
            mirrored: true,
            x1_cells: 2 * self.x1_cells,
            ..self.clone()
        }
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn x1_max(&self) -> S {
        self.x1_max
    }
    pub fn x1_min(&self) -> S {
        if self.mirrored {
            -self.x1_max
        } else {
            S::zero()
        }
    }
    pub fn x1_cells(&self) -> usize {
        self.x1_cells
    }
    pub fn xp_max(&self) -> S {
        self.xp_max
    }
    pub fn xp_cells(&self) -> usize {
        self.xp_cells
    }
    pub fn t_final(&self) -> S {
        self.t_final
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn dx1(&self) -> S {
        (self.x1_max - self.x1_min()) / S::from_usize_exact(self.x1_cells)
    }
    pub fn dxp(&self) -> S {
        self.xp_max / S::from_usize_exact(self.xp_cells)
    }
    pub fn dt(&self) -> S {
        self.t_final / S::from_usize_exact(self.steps)
    }
    /// Nodes along `x1`, both ends included.
    pub fn n1(&self) -> usize {
        self.x1_cells + 1
    }
    /// Nodes along `x'` (1 when `dim == 1`).
    pub fn nxp(&self) -> usize {
        self.xp_cells
    }
    pub fn nodes(&self) -> usize {
        self.n1() * self.nxp()
    }
    pub fn times(&self) -> usize {
        self.steps + 1
    }
    /// Index of the `x1 = 0` node along the normal axis.
    pub fn zero_index(&self) -> usize {
        if self.mirrored {
            self.x1_cells / 2
        } else {
            0
        }
    }
    #[inline]
    pub fn node(&self, i1: usize, j: usize) -> usize {
        j * self.n1() + i1
    }
    #[inline]
    pub fn x1(&self, i1: usize) -> S {
        self.x1_min() + S::from_usize_exact(i1) * self.dx1()
    }
    #[inline]
    pub fn xp(&self, j: usize) -> S {
        S::from_usize_exact(j) * self.dxp()
    }
    #[inline]
    pub fn t(&self, n: usize) -> S {
        S::from_usize_exact(n) * self.dt()
    }

    /// Same space, different time sampling.
    pub fn with_time(&self, t_final: S, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > S::zero()) {
            return Err(Error::InvalidArgument("invalid time axis".into()));
        }
        Ok(Self {
            t_final,
            steps,
            ..self.clone()
        })
    }

    /// Spatial refinement by `space` (both axes) and time refinement by `time`.
    pub fn refined(&self, space: usize, time: usize, refine_tangential: bool) -> Self {
        Self {
            x1_cells: self.x1_cells * space,
            xp_cells: if refine_tangential && self.dim == 2 {
                self.xp_cells * space
            } else {
                self.xp_cells
            },
            steps: self.steps * time,
            ..self.clone()
        }
    }

    /// Short identifier used in CSV output.
    pub fn grid_id(&self) -> String {
        format!(
            "d{}{}-n{}x{}-t{}",
            self.dim,
            if self.mirrored { "m" } else { "" },
            self.x1_cells,
            self.xp_cells,
            self.steps
        )
    }

    /// Minimum-image tangential distance between node columns `j` and `k`.
    pub fn xp_distance(&self, j: usize, k: usize) -> S {
        let d = j.abs_diff(k);
        let d = d.min(self.xp_cells - d);
        S::from_usize_exact(d) * self.dxp()
    }
}

/// Random field sampled on a grid, one trajectory per path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble<S> {
    grid: SpaceTimeGrid<S>,
    paths: usize,
    values: Vec<S>,
    pub meta: BTreeMap<String, String>,
}

impl<S: Scalar> FieldEnsemble<S> {
    pub fn zeros(grid: SpaceTimeGrid<S>, paths: usize) -> Self {
        let len = paths * grid.times() * grid.nodes();
        Self {
            grid,
            paths,
            values: vec![S::zero(); len],
            meta: BTreeMap::new(),
        }
    }

    pub fn from_values(grid: SpaceTimeGrid<S>, paths: usize, values: Vec<S>) -> Result<Self> {
        if paths == 0 {
            return Err(Error::EmptyField);
        }
        let expected = paths * grid.times() * grid.nodes();
        if values.len() != expected {
            return Err(Error::Size(format!(
                "field needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            paths,
            values,
            meta: BTreeMap::new(),
        })
    }

    /// Samples `f(path, t, x1, x')` at every node.
    pub fn from_fn<F>(grid: SpaceTimeGrid<S>, paths: usize, f: F) -> Self
    where
        F: Fn(usize, S, S, S) -> S + Sync,
    {
        let per = grid.times() * grid.nodes();
        let mut values = vec![S::zero(); paths * per];
        values.par_chunks_mut(per).enumerate().for_each(|(p, chunk)| {
            for n in 0..grid.times() {
                let t = grid.t(n);
                for j in 0..grid.nxp() {
                    let xp = grid.xp(j);
                    for i in 0..grid.n1() {
                        chunk[n * grid.nodes() + grid.node(i, j)] = f(p, t, grid.x1(i), xp);
                    }
                }
            }
        });
        Self {
            grid,
            paths,
            values,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        &self.grid
    }
    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// A one-path field is broadcast over every path of an ensemble.
    #[inline]
    pub fn path_index(&self, path: usize) -> usize {
        if self.paths == 1 {
            0
        } else {
            path
        }
    }

    #[inline]
    pub fn get(&self, path: usize, step: usize, node: usize) -> S {
        let nodes = self.grid.nodes();
        self.values[(path * self.grid.times() + step) * nodes + node]
    }

    pub fn path(&self, path: usize) -> &[S] {
        let per = self.grid.times() * self.grid.nodes();
        &self.values[path * per..(path + 1) * per]
    }

    pub fn slice(&self, path: usize, step: usize) -> &[S] {
        let nodes = self.grid.nodes();
        let o = (path * self.grid.times() + step) * nodes;
        &self.values[o..o + nodes]
    }

    pub fn slice_mut(&mut self, path: usize, step: usize) -> &mut [S] {
        let nodes = self.grid.nodes();
        let o = (path * self.grid.times() + step) * nodes;
        &mut self.values[o..o + nodes]
    }

    pub fn max_abs(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            grid: self.grid.clone(),
            paths: self.paths,
            values: self.values.iter().map(|&v| f(v)).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn scaled(&self, factor: S) -> Self {
        self.map(|v| v * factor)
    }

    /// Keeps every `stride`-th node along each spatial axis (`stride` must divide the cell counts).
    pub fn subsample_space(&self, stride: usize) -> Result<Self> {
        let g = &self.grid;
        if stride == 0 || !g.x1_cells.is_multiple_of(stride) || (g.dim == 2 && !g.xp_cells.is_multiple_of(stride)) {
            return Err(Error::InvalidArgument(format!("stride {stride} does not divide grid")));
        }
        let mut ng = g.clone();
        ng.x1_cells /= stride;
        if g.dim == 2 {
            ng.xp_cells /= stride;
        }
        let mut out = Self::zeros(ng.clone(), self.paths);
        for p in 0..self.paths {
            for n in 0..g.times() {
                let src = self.slice(p, n);
                let dst = out.slice_mut(p, n);
                for j in 0..ng.nxp() {
                    for i in 0..ng.n1() {
                        dst[ng.node(i, j)] = src[g.node(i * stride, j * stride)];
                    }
                }
            }
        }
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Keeps every `stride`-th time level.
    pub fn subsample_time(&self, stride: usize) -> Result<Self> {
        let g = &self.grid;
        if stride == 0 || !g.steps.is_multiple_of(stride) {
            return Err(Error::InvalidArgument(format!("stride {stride} does not divide steps")));
        }
        let ng = g.with_time(g.t_final, g.steps / stride)?;
        let mut out = Self::zeros(ng.clone(), self.paths);
        for p in 0..self.paths {
            for n in 0..ng.times() {
                out.slice_mut(p, n).copy_from_slice(self.slice(p, n * stride));
            }
        }
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Restricts to the normal index window `[i_lo, i_hi]` (used to cut a mirrored field back to `x1 >= 0`).
    pub(crate) fn restrict_normal(&self, grid: SpaceTimeGrid<S>, i_lo: usize) -> Self {
        let mut out = Self::zeros(grid.clone(), self.paths);
        for p in 0..self.paths {
            for n in 0..grid.times() {
                let src = self.slice(p, n);
                let dst = out.slice_mut(p, n);
                for j in 0..grid.nxp() {
                    for i in 0..grid.n1() {
                        dst[grid.node(i, j)] = src[self.grid.node(i_lo + i, j)];
                    }
                }
            }
        }
        out
    }
}

/// `ℓ₂`-valued field: one [`FieldEnsemble`] per retained noise mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalField<S> {
    modes: Vec<FieldEnsemble<S>>,
}

impl<S: Scalar> ModalField<S> {
    pub fn new(modes: Vec<FieldEnsemble<S>>) -> Result<Self> {
        let first = modes.first().ok_or(Error::EmptyField)?;
        for m in &modes[1..] {
            if m.grid() != first.grid() || m.paths() != first.paths() {
                return Err(Error::GridMismatch("modal components differ".into()));
            }
        }
        Ok(Self { modes })
    }

    pub fn zeros(grid: SpaceTimeGrid<S>, modes: usize) -> Self {
        Self {
            modes: (0..modes.max(1)).map(|_| FieldEnsemble::zeros(grid.clone(), 1)).collect(),
        }
    }

    pub fn modes(&self) -> usize {
        self.modes.len()
    }
    pub fn mode(&self, k: usize) -> &FieldEnsemble<S> {
        &self.modes[k]
    }
    pub fn components(&self) -> &[FieldEnsemble<S>] {
        &self.modes
    }
    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        self.modes[0].grid()
    }
    pub fn paths(&self) -> usize {
        self.modes[0].paths()
    }
    pub fn scaled(&self, factor: S) -> Self {
        Self {
            modes: self.modes.iter().map(|m| m.scaled(factor)).collect(),
        }
    }
    pub fn is_identically_zero(&self) -> bool {
        self.modes.iter().all(|m| m.values().iter().all(|v| v.is_zero()))
    }
}

/// Orders of spatial differentiation along `(x1, x')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex {
    pub normal: usize,
    pub tangential: usize,
}

impl MultiIndex {
    pub const ZERO: Self = Self::new(0, 0);
    pub const D1: Self = Self::new(1, 0);
    pub const D2: Self = Self::new(0, 1);
    pub const D11: Self = Self::new(2, 0);
    pub const D12: Self = Self::new(1, 1);
    pub const D22: Self = Self::new(0, 2);

    pub const fn new(normal: usize, tangential: usize) -> Self {
        Self { normal, tangential }
    }

    pub fn order(&self) -> usize {
        self.normal + self.tangential
    }

    /// All multi-indices of total order exactly `m` available in `dim` dimensions.
    pub fn of_order(m: usize, dim: usize) -> Vec<Self> {
        (0..=m)
            .rev()
            .map(|a| Self::new(a, m - a))
            .filter(|b| dim == 2 || b.tangential == 0)
            .collect()
    }

    pub fn label(&self) -> String {
        if self.order() == 0 {
            return "D0".into();
        }
        let mut s = String::from("D");
        s.extend(std::iter::repeat_n('1', self.normal));
        s.extend(std::iter::repeat_n('2', self.tangential));
        s
    }
}

/// One-slice normal derivative of order 1 or 2 along column `j`.
fn normal_pass<S: Scalar>(grid: &SpaceTimeGrid<S>, order: usize, src: &[S], dst: &mut [S]) {
    let n = grid.n1();
    let h = grid.dx1();
    let two = S::lit(2.0);
    let three = S::lit(3.0);
    let four = S::lit(4.0);
    let five = S::lit(5.0);
    for j in 0..grid.nxp() {
        let u = &src[j * n..(j + 1) * n];
        let d = &mut dst[j * n..(j + 1) * n];
        match order {
            1 => {
                let den = two * h;
                d[0] = (-three * u[0] + four * u[1] - u[2]) / den;
                for i in 1..n - 1 {
                    d[i] = (u[i + 1] - u[i - 1]) / den;
                }
                d[n - 1] = (three * u[n - 1] - four * u[n - 2] + u[n - 3]) / den;
            }
            2 => {
                let den = h * h;
                if n >= 4 {
                    d[0] = (two * u[0] - five * u[1] + four * u[2] - u[3]) / den;
                    d[n - 1] = (two * u[n - 1] - five * u[n - 2] + four * u[n - 3] - u[n - 4]) / den;
                } else {
                    d[0] = (u[0] - two * u[1] + u[2]) / den;
                    d[n - 1] = d[0];
                }
                for i in 1..n - 1 {
                    d[i] = (u[i + 1] - two * u[i] + u[i - 1]) / den;
                }
            }
            _ => unreachable!(),
        }
    }
}

/// One-slice periodic tangential derivative of order 1 or 2.
fn tangential_pass<S: Scalar>(grid: &SpaceTimeGrid<S>, order: usize, src: &[S], dst: &mut [S]) {
    let n1 = grid.n1();
    let m = grid.nxp();
    let h = grid.dxp();
    let two = S::lit(2.0);
    for j in 0..m {
        let jp = (j + 1) % m;
        let jm = (j + m - 1) % m;
        for i in 0..n1 {
            let (up, u0, um) = (src[jp * n1 + i], src[j * n1 + i], src[jm * n1 + i]);
            dst[j * n1 + i] = match order {
                1 => (up - um) / (two * h),
                2 => (up - two * u0 + um) / (h * h),
                _ => unreachable!(),
            };
        }
    }
}

/// Applies `D^beta` to one time slice. Mixed derivatives are the normal
/// stencil applied to the tangential derivative.
pub fn apply_stencil<S: Scalar>(
    grid: &SpaceTimeGrid<S>,
    beta: MultiIndex,
    src: &[S],
    dst: &mut [S],
) -> Result<()> {
    check_stencil(grid, beta)?;
    match (beta.normal, beta.tangential) {
        (0, 0) => dst.copy_from_slice(src),
        (a, 0) => normal_pass(grid, a, src, dst),
        (0, b) => tangential_pass(grid, b, src, dst),
        (a, b) => {
            let mut tmp = vec![S::zero(); src.len()];
            tangential_pass(grid, b, src, &mut tmp);
            normal_pass(grid, a, &tmp, dst);
        }
    }
    Ok(())
}

fn check_stencil<S: Scalar>(grid: &SpaceTimeGrid<S>, beta: MultiIndex) -> Result<()> {
    if beta.order() > 2 {
        return Err(Error::UnsupportedOrder { order: beta.order() });
    }
    if beta.tangential > 0 && grid.dim() == 1 {
        return Err(Error::InvalidArgument("tangential derivative on a 1-D grid".into()));
    }
    if beta.normal > 0 && grid.n1() < 3 {
        return Err(Error::InvalidArgument("need at least 3 normal nodes".into()));
    }
    if beta.tangential > 0 && grid.nxp() < 3 {
        return Err(Error::InvalidArgument("need at least 3 tangential nodes".into()));
    }
    Ok(())
}

/// `D^beta field` on the same grid: centred second-order stencils inside,
/// one-sided second-order at the `x1` ends, periodic wrap in `x'`.
pub fn finite_diff<S: Scalar>(field: &FieldEnsemble<S>, beta: MultiIndex) -> Result<FieldEnsemble<S>> {
    check_stencil(field.grid(), beta)?;
    if beta.order() == 0 {
        return Ok(field.clone());
    }
    let grid = field.grid().clone();
    let nodes = grid.nodes();
    let mut out = FieldEnsemble::zeros(grid.clone(), field.paths());
    out.values
        .par_chunks_mut(nodes)
        .zip(field.values.par_chunks(nodes))
        .try_for_each(|(dst, src)| apply_stencil(&grid, beta, src, dst))?;
    out.meta = field.meta.clone();
    out.meta.insert("derivative".into(), beta.label());
    Ok(out)
}

/// Modal version of [`finite_diff`].
pub fn finite_diff_modal<S: Scalar>(field: &ModalField<S>, beta: MultiIndex) -> Result<ModalField<S>> {
    ModalField::new(
        field
            .components()
            .iter()
            .map(|m| finite_diff(m, beta))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Field on a fixed-`x1` sub-grid, `[path][time][x']`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField<S> {
    grid: SpaceTimeGrid<S>,
    paths: usize,
    values: Vec<S>,
}

impl<S: Scalar> BoundaryField<S> {
    pub fn from_values(grid: SpaceTimeGrid<S>, paths: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != paths * grid.times() * grid.nxp() || paths == 0 {
            return Err(Error::Size("boundary field shape".into()));
        }
        Ok(Self { grid, paths, values })
    }

    /// Source grid; the trace lives on its `times x x'` sub-grid.
    pub fn grid(&self) -> &SpaceTimeGrid<S> {
        &self.grid
    }
    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }
    #[inline]
    pub fn get(&self, path: usize, step: usize, j: usize) -> S {
        self.values[(path * self.grid.times() + step) * self.grid.nxp() + j]
    }
    pub fn max_abs(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }
}

/// Trace at normal index `i1` (all times, all `x'`).
pub fn restrict_to_index<S: Scalar>(field: &FieldEnsemble<S>, i1: usize) -> Result<BoundaryField<S>> {
    let g = field.grid();
    if i1 >= g.n1() {
        return Err(Error::InvalidArgument(format!("normal index {i1} out of range")));
    }
    let mut values = Vec::with_capacity(field.paths() * g.times() * g.nxp());
    for p in 0..field.paths() {
        for n in 0..g.times() {
            let s = field.slice(p, n);
            values.extend((0..g.nxp()).map(|j| s[g.node(i1, j)]));
        }
    }
    BoundaryField::from_values(g.clone(), field.paths(), values)
}

/// Trace on `x1 = 0`.
pub fn restrict_to_boundary<S: Scalar>(field: &FieldEnsemble<S>) -> Result<BoundaryField<S>> {
    restrict_to_index(field, field.grid().zero_index())
}

/// Pointwise `sum_i coeffs[i] * fields[i]`, accumulated left to right. One-path
/// fields broadcast.
pub fn linear_combine<S: Scalar>(coeffs: &[S], fields: &[&FieldEnsemble<S>]) -> Result<FieldEnsemble<S>> {
    if coeffs.len() != fields.len() || fields.is_empty() {
        return Err(Error::InvalidArgument("need one coefficient per field".into()));
    }
    let grid = fields[0].grid();
    let paths = fields.iter().map(|f| f.paths()).max().unwrap_or(1);
    for f in fields {
        if f.grid() != grid {
            return Err(Error::GridMismatch("linear_combine over different grids".into()));
        }
        if f.paths() != 1 && f.paths() != paths {
            return Err(Error::GridMismatch("path counts differ".into()));
        }
    }
    let per = grid.times() * grid.nodes();
    let mut out = FieldEnsemble::zeros(grid.clone(), paths);
    out.values
        .par_chunks_mut(per)
        .enumerate()
        .for_each(|(p, dst)| {
            let first = fields[0].path(fields[0].path_index(p));
            for (d, &v) in dst.iter_mut().zip(first) {
                *d = coeffs[0] * v;
            }
            for (c, f) in coeffs[1..].iter().zip(&fields[1..]) {
                let src = f.path(f.path_index(p));
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = *d + *c * v;
                }
            }
        });
    Ok(out)
}

/// Flat binary persistence and JSON sidecar metadata.
pub mod io {
    use std::fs;
    use std::io::{Read, Write};
    use std::path::Path;

    use super::*;

    pub const MAGIC: &[u8; 8] = b"SCHFLD\0\x01";
    pub const VERSION: u32 = 1;

    /// Header then values in `[path, step, node]` order, all little-endian.
    pub fn to_bytes<S: Scalar>(field: &FieldEnsemble<S>) -> Vec<u8> {
        let g = field.grid();
        let mut out = Vec::with_capacity(96 + 8 * field.values().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(g.is_mirrored() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for n in [field.paths(), g.times(), g.nodes(), g.x1_cells(), g.xp_cells(), g.steps()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for r in [g.x1_max(), g.xp_max(), g.t_final()] {
            out.extend_from_slice(&r.to_f64_lossy().to_le_bytes());
        }
        for v in field.values() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        out
    }

    pub fn from_bytes<S: Scalar>(bytes: &[u8]) -> Result<FieldEnsemble<S>> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut u32s = [0u32; 4];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
            *v = u32::from_le_bytes(b);
        }
        if u32s[0] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", u32s[0])));
        }
        let mut u64s = [0u64; 6];
        for v in &mut u64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
            *v = u64::from_le_bytes(b);
        }
        let mut reals = [0f64; 3];
        for v in &mut reals {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
            *v = f64::from_le_bytes(b);
        }
        let [paths, times, nodes, x1_cells, xp_cells, steps] = u64s.map(|v| v as usize);
        let mirrored = u32s[2] != 0;
        let base_cells = if mirrored { x1_cells / 2 } else { x1_cells };
        let mut grid = SpaceTimeGrid::new(
            u32s[1] as usize,
            S::lit(reals[0]),
            base_cells,
            S::lit(reals[1]),
            xp_cells,
            S::lit(reals[2]),
            steps,
        )?;
        if mirrored {
            grid = grid.mirrored();
        }
        if grid.times() != times || grid.nodes() != nodes {
            return Err(Error::Format("inconsistent shape".into()));
        }
        let count = paths * times * nodes;
        if r.len() != count * 8 {
            return Err(Error::Format(format!("expected {count} values, found {} bytes", r.len())));
        }
        let values = r
            .chunks_exact(8)
            .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        FieldEnsemble::from_values(grid, paths, values)
    }

    /// Writes `path` (binary) and `path.json` (provenance).
    pub fn write<S: Scalar>(field: &FieldEnsemble<S>, path: &Path) -> Result<()> {
        fs::File::create(path)?.write_all(&to_bytes(field))?;
        let sidecar = serde_json::json!({
            "format": "schauder-field",
            "version": VERSION,
            "grid_id": field.grid().grid_id(),
            "paths": field.paths(),
            "meta": field.meta,
        });
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read<S: Scalar>(path: &Path) -> Result<FieldEnsemble<S>> {
        let mut field = from_bytes(&fs::read(path)?)?;
        if let Ok(text) = fs::read_to_string(sidecar_path(path)) {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            if let Some(m) = v.get("meta").and_then(|m| m.as_object()) {
                for (k, val) in m {
                    if let Some(s) = val.as_str() {
                        field.meta.insert(k.clone(), s.to_string());
                    }
                }
            }
        }
        Ok(field)
    }

    fn sidecar_path(path: &Path) -> std::path::PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(cells: usize) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::line(1.0, cells, 1.0, 4).unwrap()
    }

    fn interior_max_err(field: &FieldEnsemble<f64>, exact: impl Fn(f64) -> f64) -> f64 {
        let g = field.grid();
        let mut worst = 0.0f64;
        for n in 0..g.times() {
            let s = field.slice(0, n);
            for i in 1..g.n1() - 1 {
                worst = worst.max((s[i] - exact(g.x1(i))).abs());
            }
        }
        worst
    }

    #[test]
    fn grid_geometry() {
        let g = SpaceTimeGrid::slab(2.0, 8, 1.0, 4, 0.5, 10).unwrap();
        assert_eq!(g.n1(), 9);
        assert_eq!(g.nodes(), 36);
        assert_eq!(g.dx1(), 0.25);
        assert_eq!(g.dt(), 0.05);
        assert_eq!(g.x1(0), 0.0);
        let m = g.mirrored();
        assert_eq!(m.n1(), 17);
        assert_eq!(m.x1(m.zero_index()), 0.0);
        assert_eq!(m.dx1(), 0.25);
        assert_eq!(g.xp_distance(0, 3), 0.25);
        assert!(SpaceTimeGrid::<f64>::line(0.0, 4, 1.0, 1).is_err());
    }

    #[test]
    fn derivative_of_linear_is_one() {
        let g = line(10);
        let u = FieldEnsemble::from_fn(g, 1, |_, _, x, _| x);
        let d = finite_diff(&u, MultiIndex::D1).unwrap();
        assert!(interior_max_err(&d, |_| 1.0) < 1e-13);
        // one-sided ends are exact for linears too
        assert!((d.get(0, 0, 0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn second_derivative_of_quadratic_is_two() {
        let g = line(10);
        let u = FieldEnsemble::from_fn(g, 1, |_, _, x, _| x * x);
        let d = finite_diff(&u, MultiIndex::D11).unwrap();
        assert!(interior_max_err(&d, |_| 2.0) < 1e-11);
        assert!((d.get(0, 2, 0) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn second_derivative_of_sine_within_taylor_bound() {
        for cells in [8, 16, 32] {
            let g = line(cells);
            let h = g.dx1();
            let u = FieldEnsemble::from_fn(g, 1, |_, _, x, _| x.sin());
            let d = finite_diff(&u, MultiIndex::D11).unwrap();
            let err = interior_max_err(&d, |x| -x.sin());
            // |u''''| = |sin| <= sin(1) on [0, 1]
            let bound = h * h / 12.0 * 1f64.sin() + 1e-12 / (h * h);
            assert!(err <= bound, "cells {cells}: {err} > {bound}");
        }
    }

    #[test]
    fn beta_zero_is_identity_and_order_three_rejected() {
        let g = line(6);
        let u = FieldEnsemble::from_fn(g, 2, |p, t, x, _| p as f64 + t * x);
        assert_eq!(finite_diff(&u, MultiIndex::ZERO).unwrap().values(), u.values());
        assert!(matches!(
            finite_diff(&u, MultiIndex::new(3, 0)),
            Err(Error::UnsupportedOrder { order: 3 })
        ));
        assert!(finite_diff(&u, MultiIndex::D2).is_err());
    }

    #[test]
    fn finite_diff_is_linear_on_dyadic_data() {
        let g = SpaceTimeGrid::slab(1.0, 8, 1.0, 8, 1.0, 2).unwrap();
        let u = FieldEnsemble::from_fn(g.clone(), 1, |_, t, x: f64, y| (x * 8.0).floor() + t - y * 4.0);
        let v = FieldEnsemble::from_fn(g, 1, |_, _, x: f64, y: f64| (x * y * 64.0).round());
        for beta in [MultiIndex::D1, MultiIndex::D11, MultiIndex::D12, MultiIndex::D22] {
            let lhs = finite_diff(&linear_combine(&[2.0, -0.5], &[&u, &v]).unwrap(), beta).unwrap();
            let du = finite_diff(&u, beta).unwrap();
            let dv = finite_diff(&v, beta).unwrap();
            let rhs = linear_combine(&[2.0, -0.5], &[&du, &dv]).unwrap();
            assert_eq!(lhs.values(), rhs.values(), "{beta:?}");
        }
    }

    #[test]
    fn mixed_derivative_of_product() {
        let g = SpaceTimeGrid::slab(1.0, 16, 1.0, 16, 1.0, 1).unwrap();
        let u = FieldEnsemble::from_fn(g.clone(), 1, |_, _, x, y| x * x * (std::f64::consts::TAU * y).sin());
        let d = finite_diff(&u, MultiIndex::D12).unwrap();
        let tau = std::f64::consts::TAU;
        let h = g.dxp();
        // centred tangential stencil on sin has symbol sin(tau h)/h
        let scale = (tau * h).sin() / h;
        for j in 0..g.nxp() {
            for i in 0..g.n1() {
                let exact = 2.0 * g.x1(i) * scale * (tau * g.xp(j)).cos();
                assert!((d.get(0, 0, g.node(i, j)) - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn boundary_trace() {
        let g = line(8);
        let u = FieldEnsemble::from_fn(g.clone(), 1, |_, t, x, _| t * x + t * t);
        let tr = restrict_to_boundary(&u).unwrap();
        for n in 0..g.times() {
            assert_eq!(tr.get(0, n, 0), g.t(n) * g.t(n));
        }
        let z = FieldEnsemble::from_fn(g, 3, |_, t, x, _| t * x);
        assert_eq!(restrict_to_boundary(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn linear_combine_cases() {
        let g = line(4);
        let u = FieldEnsemble::from_fn(g.clone(), 2, |p, t, x, _| p as f64 + t + x);
        let z = linear_combine(&[1.0, -1.0], &[&u, &u]).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let three = FieldEnsemble::from_fn(g.clone(), 1, |_, _, _, _| 3.0);
        let six = linear_combine(&[2.0], &[&three]).unwrap();
        assert!(six.values().iter().all(|&v| v == 6.0));
        let other = FieldEnsemble::zeros(line(5), 1);
        assert!(matches!(
            linear_combine(&[1.0, 1.0], &[&u, &other]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn binary_round_trip() {
        let g = SpaceTimeGrid::slab(1.5, 4, 2.0, 3, 0.5, 2).unwrap().mirrored();
        let u = FieldEnsemble::from_fn(g, 2, |p, t, x, y| p as f64 - t * x + y).with_meta("id", "u");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.fld");
        io::write(&u, &path).unwrap();
        let back: FieldEnsemble<f64> = io::read(&path).unwrap();
        assert_eq!(back, u);
        assert!(io::from_bytes::<f64>(&io::to_bytes(&u)[..20]).is_err());
    }

    #[test]
    fn subsampling() {
        let g = line(8);
        let u = FieldEnsemble::from_fn(g, 1, |_, t, x, _| t + x);
        let s = u.subsample_space(2).unwrap();
        assert_eq!(s.grid().n1(), 5);
        assert_eq!(s.get(0, 1, 2), u.get(0, 1, 4));
        assert!(u.subsample_space(3).is_err());
        let st = u.subsample_time(2).unwrap();
        assert_eq!(st.grid().steps(), 2);
        assert_eq!(st.slice(0, 1), u.slice(0, 2));
    }
}
