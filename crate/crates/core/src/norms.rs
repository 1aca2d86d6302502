//! Monte Carlo estimates of stochastic Hölder norms.
//!
//! Every quantity is a sup over grid nodes or node pairs of an `L^γ(Ω)`
//! norm, estimated by the ensemble average; the expectation is taken before
//! the quotient. Vector-valued (modal) fields use the `ℓ₂` norm over modes
//! inside the expectation.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{finite_diff, FieldEnsemble, ModalField, MultiIndex, SpaceTimeGrid};
use crate::rng::SeedSpec;
use crate::scalar::Scalar;

/// Point count above which [`PairPolicy::Auto`] switches from exhaustive to dyadic pairs.
pub const EXHAUSTIVE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairPolicy {
    Auto,
    Exhaustive,
    /// Pairs whose index offsets along every axis are `0` or a power of two.
    Dyadic,
    RandomPairs { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec<S> {
    pub alpha: S,
    pub gamma: S,
    pub m: usize,
    pub policy: PairPolicy,
}

impl<S: Scalar> NormSpec<S> {
    pub fn new(alpha: S, gamma: S, m: usize) -> Result<Self> {
        if !(alpha > S::zero() && alpha < S::one()) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
        }
        if !(gamma >= S::lit(2.0)) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must be at least 2")));
        }
        if m > 2 {
            return Err(Error::UnsupportedOrder { order: m });
        }
        Ok(Self {
            alpha,
            gamma,
            m,
            policy: PairPolicy::Auto,
        })
    }

    pub fn with_policy(mut self, policy: PairPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_order(mut self, m: usize) -> Self {
        self.m = m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Points {
    All,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Space,
    Parabolic,
}

/// Largest quotient over a pair set, with the lexicographically first pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMax<S> {
    pub value: S,
    /// `((n, i1, j), (n, i1, j))` of the maximising pair.
    pub argmax: Option<([usize; 3], [usize; 3])>,
    pub pairs: usize,
}

impl<S: Scalar> PairMax<S> {
    fn empty() -> Self {
        Self {
            value: S::zero(),
            argmax: None,
            pairs: 0,
        }
    }

    pub fn argmax_label(&self) -> String {
        match self.argmax {
            Some((a, b)) => format!("({},{},{})-({},{},{})", a[0], a[1], a[2], b[0], b[1], b[2]),
            None => String::new(),
        }
    }
}

/// Point-major samples: `data[(point * paths + path) * modes + mode]`.
struct Samples<'g, S> {
    grid: &'g SpaceTimeGrid<S>,
    points: Points,
    paths: usize,
    modes: usize,
    data: Vec<S>,
}

impl<'g, S: Scalar> Samples<'g, S> {
    fn build(comps: &[&'g FieldEnsemble<S>], points: Points, path: Option<usize>) -> Result<Self> {
        let first = comps.first().ok_or(Error::EmptyField)?;
        let grid = first.grid();
        let paths = comps.iter().map(|c| c.paths()).max().unwrap_or(1);
        for c in comps {
            if c.grid() != grid || (c.paths() != 1 && c.paths() != paths) {
                return Err(Error::GridMismatch("norm components differ in shape".into()));
            }
        }
        let (lo, hi) = match path {
            Some(p) if p < paths => (p, p + 1),
            Some(p) => return Err(Error::InvalidArgument(format!("path {p} out of range"))),
            None => (0, paths),
        };
        let used = hi - lo;
        let modes = comps.len();
        let (per_time, i_fixed) = match points {
            Points::All => (grid.nodes(), None),
            Points::Boundary => (grid.nxp(), Some(grid.zero_index())),
        };
        let count = grid.times() * per_time;
        let mut data = vec![S::zero(); count * used * modes];
        data.par_chunks_mut(used * modes).enumerate().for_each(|(pt, chunk)| {
            let n = pt / per_time;
            let node = match i_fixed {
                Some(i) => grid.node(i, pt % per_time),
                None => pt % per_time,
            };
            for p in 0..used {
                for (k, c) in comps.iter().enumerate() {
                    chunk[p * modes + k] = c.get(c.path_index(lo + p), n, node);
                }
            }
        });
        Ok(Self {
            grid,
            points,
            paths: used,
            modes,
            data,
        })
    }

    fn per_time(&self) -> usize {
        match self.points {
            Points::All => self.grid.nodes(),
            Points::Boundary => self.grid.nxp(),
        }
    }

    fn len(&self) -> usize {
        self.grid.times() * self.per_time()
    }

    fn coords(&self, pt: usize) -> [usize; 3] {
        let per = self.per_time();
        let n = pt / per;
        let r = pt % per;
        match self.points {
            Points::All => [n, r % self.grid.n1(), r / self.grid.n1()],
            Points::Boundary => [n, self.grid.zero_index(), r],
        }
    }

    fn index(&self, n: usize, i: usize, j: usize) -> usize {
        match self.points {
            Points::All => n * self.grid.nodes() + self.grid.node(i, j),
            Points::Boundary => n * self.grid.nxp() + j,
        }
    }

    fn row(&self, pt: usize) -> &[S] {
        let w = self.paths * self.modes;
        &self.data[pt * w..(pt + 1) * w]
    }

    fn norm_sq(v: &[S]) -> S {
        v.iter().fold(S::zero(), |a, x| a + *x * *x)
    }

    /// `E|X|^γ` at one point.
    fn moment(&self, pt: usize, gamma: S) -> S {
        let r = self.row(pt);
        let two = S::lit(2.0);
        let sum = r.chunks(self.modes).fold(S::zero(), |acc, v| {
            let sq = Self::norm_sq(v);
            acc + if gamma == two { sq } else { sq.sqrt().powf(gamma) }
        });
        sum / S::from_usize_exact(self.paths)
    }

    /// `E|X_a - X_b|^γ`.
    fn diff_moment(&self, a: usize, b: usize, gamma: S) -> S {
        let (ra, rb) = (self.row(a), self.row(b));
        let two = S::lit(2.0);
        let mut sum = S::zero();
        for (va, vb) in ra.chunks(self.modes).zip(rb.chunks(self.modes)) {
            let sq = va.iter().zip(vb).fold(S::zero(), |acc, (x, y)| {
                let d = *x - *y;
                acc + d * d
            });
            sum = sum + if gamma == two { sq } else { sq.sqrt().powf(gamma) };
        }
        sum / S::from_usize_exact(self.paths)
    }

    fn root(m: S, gamma: S) -> S {
        if gamma == S::lit(2.0) {
            m.sqrt()
        } else {
            m.powf(S::one() / gamma)
        }
    }

    fn sup(&self, gamma: S) -> S {
        let m = (0..self.len())
            .into_par_iter()
            .map(|pt| self.moment(pt, gamma))
            .reduce(|| S::zero(), |a, b| a.max(b));
        Self::root(m, gamma)
    }
}

/// `(|x - y|^α, |t - s|^{α/2})` lookup by `(|Δn|, |Δi|, min-image Δj)`.
struct Denominators<S> {
    n1: usize,
    half_m: usize,
    times: usize,
    table: Vec<S>,
}

impl<S: Scalar> Denominators<S> {
    fn new(grid: &SpaceTimeGrid<S>, alpha: S, kind: Kind) -> Self {
        let n1 = grid.n1();
        let half_m = grid.nxp() / 2 + 1;
        let times = if kind == Kind::Space { 1 } else { grid.times() };
        let half = S::lit(0.5) * alpha;
        let mut table = vec![S::zero(); times * n1 * half_m];
        for dn in 0..times {
            let tpart = if dn == 0 { S::zero() } else { (S::from_usize_exact(dn) * grid.dt()).powf(half) };
            for di in 0..n1 {
                let x = S::from_usize_exact(di) * grid.dx1();
                for dj in 0..half_m {
                    let y = if grid.dim() == 2 { S::from_usize_exact(dj) * grid.dxp() } else { S::zero() };
                    let d = (x * x + y * y).sqrt();
                    let spart = if d.is_zero() { S::zero() } else { d.powf(alpha) };
                    table[(dn * n1 + di) * half_m + dj] = spart + tpart;
                }
            }
        }
        Self { n1, half_m, times, table }
    }

    fn get(&self, grid: &SpaceTimeGrid<S>, a: [usize; 3], b: [usize; 3]) -> S {
        let dn = a[0].abs_diff(b[0]).min(self.times - 1);
        let di = a[1].abs_diff(b[1]);
        let mut dj = a[2].abs_diff(b[2]);
        if grid.dim() == 2 {
            dj = dj.min(grid.xp_cells() - dj);
        }
        self.table[(dn * self.n1 + di) * self.half_m + dj]
    }
}

fn better<S: Scalar>(x: (S, usize, usize), y: (S, usize, usize)) -> (S, usize, usize) {
    if y.0 > x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) {
        y
    } else {
        x
    }
}

fn dyadic_offsets(limit: usize, periodic: bool, m: usize) -> Vec<isize> {
    let mut v = vec![0isize];
    let mut s = 1usize;
    while s < limit {
        v.push(s as isize);
        if !periodic || s < m.div_ceil(2) {
            v.push(-(s as isize));
        }
        s *= 2;
    }
    if periodic {
        v.retain(|d| d.unsigned_abs() <= m / 2);
    }
    v
}

fn pair_sup<S: Scalar>(samples: &Samples<'_, S>, kind: Kind, spec: &NormSpec<S>) -> Result<PairMax<S>> {
    let grid = samples.grid;
    let len = samples.len();
    let per = samples.per_time();
    let block = if kind == Kind::Space { per } else { len };
    if block < 2 {
        return Err(Error::DegeneratePairs(format!("{block} point(s) in the pair set")));
    }
    let den = Denominators::new(grid, spec.alpha, kind);
    let gamma = spec.gamma;
    let quotient = |a: usize, b: usize| -> Option<S> {
        let (ca, cb) = (samples.coords(a), samples.coords(b));
        let d = den.get(grid, ca, cb);
        if d.is_zero() {
            return None;
        }
        Some(Samples::<S>::root(samples.diff_moment(a, b, gamma), gamma) / d)
    };
    let policy = match spec.policy {
        PairPolicy::Auto if block > EXHAUSTIVE_LIMIT => PairPolicy::Dyadic,
        PairPolicy::Auto => PairPolicy::Exhaustive,
        p => p,
    };
    let zero = (S::zero(), usize::MAX, usize::MAX);
    let (best, pairs) = match policy {
        PairPolicy::Exhaustive | PairPolicy::Auto => (0..len)
            .into_par_iter()
            .map(|a| {
                let end = (a / block + 1) * block;
                let mut local = zero;
                let mut count = 0usize;
                for b in a + 1..end {
                    if let Some(q) = quotient(a, b) {
                        local = better(local, (q, a, b));
                        count += 1;
                    }
                }
                (local, count)
            })
            .reduce(|| (zero, 0), |x, y| (better(x.0, y.0), x.1 + y.1)),
        PairPolicy::Dyadic => {
            let periodic = grid.dim() == 2;
            let m = grid.nxp();
            let dn: Vec<isize> = if kind == Kind::Space {
                vec![0]
            } else {
                dyadic_offsets(grid.times(), false, 0).into_iter().filter(|d| *d >= 0).collect()
            };
            let di: Vec<isize> = if samples.points == Points::Boundary {
                vec![0]
            } else {
                dyadic_offsets(grid.n1(), false, 0)
            };
            let dj: Vec<isize> = if periodic { dyadic_offsets(m, true, m) } else { vec![0] };
            let mut offsets = Vec::new();
            for &a in &dn {
                for &b in &di {
                    for &c in &dj {
                        if (a, b, c) > (0, 0, 0) {
                            offsets.push((a, b, c));
                        }
                    }
                }
            }
            (0..len)
                .into_par_iter()
                .map(|a| {
                    let c = samples.coords(a);
                    let mut local = zero;
                    let mut count = 0usize;
                    for &(on, oi, oj) in &offsets {
                        let n = c[0] as isize + on;
                        let i = c[1] as isize + oi;
                        if n < 0 || n >= grid.times() as isize || i < 0 || i >= grid.n1() as isize {
                            continue;
                        }
                        let j = if periodic { (c[2] as isize + oj).rem_euclid(m as isize) } else { 0 };
                        let b = samples.index(n as usize, i as usize, j as usize);
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        if let Some(q) = quotient(lo, hi) {
                            local = better(local, (q, lo, hi));
                            count += 1;
                        }
                    }
                    (local, count)
                })
                .reduce(|| (zero, 0), |x, y| (better(x.0, y.0), x.1 + y.1))
        }
        PairPolicy::RandomPairs { count, seed } => {
            let rng = SeedSpec::new(seed, 0x5041_4952);
            (0..count)
                .into_par_iter()
                .map(|r| {
                    let a = ((rng.uniform(r as u64, 0, 0, 0) * len as f64) as usize).min(len - 1);
                    let start = (a / block) * block;
                    let b = start + ((rng.uniform(r as u64, 0, 0, 1) * block as f64) as usize).min(block - 1);
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    match (lo != hi).then(|| quotient(lo, hi)).flatten() {
                        Some(q) => ((q, lo, hi), 1),
                        None => (zero, 0),
                    }
                })
                .reduce(|| (zero, 0), |x, y| (better(x.0, y.0), x.1 + y.1))
        }
    };
    if pairs == 0 {
        return Err(Error::DegeneratePairs("no pair with positive distance".into()));
    }
    Ok(PairMax {
        value: best.0,
        argmax: (best.1 != usize::MAX).then(|| (samples.coords(best.1), samples.coords(best.2))),
        pairs,
    })
}

fn derivatives<S: Scalar>(comps: &[&FieldEnsemble<S>], beta: MultiIndex) -> Result<Vec<FieldEnsemble<S>>> {
    comps.iter().map(|c| finite_diff(c, beta)).collect()
}

fn sup_over_orders<S: Scalar>(comps: &[&FieldEnsemble<S>], spec: &NormSpec<S>, points: Points) -> Result<S> {
    let dim = comps.first().ok_or(Error::EmptyField)?.grid().dim();
    let mut best = S::zero();
    for order in 0..=spec.m {
        for beta in MultiIndex::of_order(order, dim) {
            let d = derivatives(comps, beta)?;
            let refs: Vec<&FieldEnsemble<S>> = d.iter().collect();
            best = best.max(Samples::build(&refs, points, None)?.sup(spec.gamma));
        }
    }
    Ok(best)
}

fn seminorm_by_beta<S: Scalar>(
    comps: &[&FieldEnsemble<S>],
    spec: &NormSpec<S>,
    kind: Kind,
    points: Points,
    path: Option<usize>,
) -> Result<Vec<(MultiIndex, PairMax<S>)>> {
    let dim = comps.first().ok_or(Error::EmptyField)?.grid().dim();
    MultiIndex::of_order(spec.m, dim)
        .into_iter()
        .map(|beta| {
            let d = derivatives(comps, beta)?;
            let refs: Vec<&FieldEnsemble<S>> = d.iter().collect();
            Ok((beta, pair_sup(&Samples::build(&refs, points, path)?, kind, spec)?))
        })
        .collect()
}

fn combine<S: Scalar>(parts: &[(MultiIndex, PairMax<S>)]) -> PairMax<S> {
    parts.iter().fold(PairMax::empty(), |acc, (_, p)| PairMax {
        value: if p.value > acc.value { p.value } else { acc.value },
        argmax: if p.value > acc.value || acc.argmax.is_none() { p.argmax } else { acc.argmax },
        pairs: acc.pairs + p.pairs,
    })
}

/// `|h|_m = max_{|β| <= m} sup_nodes (E|D^β h|^γ)^{1/γ}`.
pub fn sup_norm<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<S> {
    sup_over_orders(&[field], spec, Points::All)
}

/// `[h]_{m+α} = max_{|β| = m} sup_t sup_{x≠y} (E|D^β h(x,t) - D^β h(y,t)|^γ)^{1/γ} / |x-y|^α`.
pub fn space_seminorm<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<S> {
    space_seminorm_detail(field, spec).map(|p| p.value)
}

pub fn space_seminorm_detail<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<PairMax<S>> {
    Ok(combine(&seminorm_by_beta(&[field], spec, Kind::Space, Points::All, None)?))
}

/// `[h]_{(m+α, α/2)}` with denominator `|x-y|^α + |t-s|^{α/2}`.
pub fn parabolic_seminorm<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<S> {
    parabolic_seminorm_detail(field, spec).map(|p| p.value)
}

pub fn parabolic_seminorm_detail<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<PairMax<S>> {
    Ok(combine(&seminorm_by_beta(&[field], spec, Kind::Parabolic, Points::All, None)?))
}

/// Modal (`ℓ₂`-valued) versions: `|g|_m` and `[g]_{m+α}`.
pub fn sup_norm_modal<S: Scalar>(field: &ModalField<S>, spec: &NormSpec<S>) -> Result<S> {
    let comps: Vec<&FieldEnsemble<S>> = field.components().iter().collect();
    sup_over_orders(&comps, spec, Points::All)
}

pub fn space_seminorm_modal<S: Scalar>(field: &ModalField<S>, spec: &NormSpec<S>) -> Result<S> {
    let comps: Vec<&FieldEnsemble<S>> = field.components().iter().collect();
    Ok(combine(&seminorm_by_beta(&comps, spec, Kind::Space, Points::All, None)?).value)
}

/// `|f|_{(α, α/2); Γ}` of the trace on `x1 = 0`: sup plus parabolic seminorm over boundary nodes.
pub fn boundary_parabolic_norm<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<S> {
    let spec0 = spec.with_order(0);
    let samples = Samples::build(&[field], Points::Boundary, None)?;
    let sup = samples.sup(spec.gamma);
    Ok(sup + pair_sup(&samples, Kind::Parabolic, &spec0)?.value)
}

/// Per-path space seminorm, a pathwise diagnostic (not a stochastic norm).
pub fn pathwise_space_seminorm<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>) -> Result<Vec<S>> {
    (0..field.paths())
        .map(|p| Ok(combine(&seminorm_by_beta(&[field], spec, Kind::Space, Points::All, Some(p))?).value))
        .collect()
}

/// `sup_{t≠s} (E|h(t) - h(s)|^γ)^{1/γ} / |t-s|^β` of a time series `[path][time]` with step `dt`.
pub fn time_seminorm<S: Scalar>(series: &[S], paths: usize, dt: S, beta: S, gamma: S) -> Result<S> {
    if paths == 0 || series.is_empty() || !series.len().is_multiple_of(paths) {
        return Err(Error::Size("time series shape".into()));
    }
    let times = series.len() / paths;
    if times < 2 {
        return Err(Error::DegeneratePairs("fewer than two times".into()));
    }
    let den: Vec<S> = (0..times).map(|d| (S::from_usize_exact(d) * dt).powf(beta)).collect();
    let two = S::lit(2.0);
    let np = S::from_usize_exact(paths);
    let best = (0..times)
        .into_par_iter()
        .map(|a| {
            let mut local = S::zero();
            for b in a + 1..times {
                let mut m = S::zero();
                for p in 0..paths {
                    let d = (series[p * times + a] - series[p * times + b]).abs();
                    m = m + if gamma == two { d * d } else { d.powf(gamma) };
                }
                let q = Samples::<S>::root(m / np, gamma) / den[b - a];
                local = local.max(q);
            }
            local
        })
        .reduce(|| S::zero(), |a, b| a.max(b));
    Ok(best)
}

/// One CSV row per (field, β, norm kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub field_id: String,
    pub m: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub kind: String,
    pub value: f64,
    pub argmax_pair: String,
    pub pairs_evaluated: usize,
    pub grid_id: String,
    pub seed: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderNormReport<S> {
    pub field_id: String,
    pub spec: NormSpec<S>,
    pub grid_id: String,
    pub seed: String,
    pub nodes: usize,
    pub sup_norm: S,
    pub space: PairMax<S>,
    pub parabolic: PairMax<S>,
    pub composite_space: S,
    pub composite_parabolic: S,
    per_beta: Vec<(MultiIndex, PairMax<S>, PairMax<S>)>,
}

impl<S: Scalar> HolderNormReport<S> {
    pub fn rows(&self) -> Vec<HolderRow> {
        let row = |id: String, kind: &str, value: S, p: Option<&PairMax<S>>| HolderRow {
            field_id: id,
            m: self.spec.m,
            alpha: self.spec.alpha.to_f64_lossy(),
            gamma: self.spec.gamma.to_f64_lossy(),
            kind: kind.into(),
            value: value.to_f64_lossy(),
            argmax_pair: p.map(|p| p.argmax_label()).unwrap_or_default(),
            pairs_evaluated: p.map(|p| p.pairs).unwrap_or(0),
            grid_id: self.grid_id.clone(),
            seed: self.seed.clone(),
        };
        let id = &self.field_id;
        let mut out = vec![
            row(id.clone(), "sup", self.sup_norm, None),
            row(id.clone(), "space", self.space.value, Some(&self.space)),
            row(id.clone(), "parabolic", self.parabolic.value, Some(&self.parabolic)),
            row(id.clone(), "composite_space", self.composite_space, None),
            row(id.clone(), "composite_parabolic", self.composite_parabolic, None),
        ];
        if self.per_beta.len() > 1 {
            for (beta, s, p) in &self.per_beta {
                let bid = format!("{id}/{}", beta.label());
                out.push(row(bid.clone(), "space", s.value, Some(s)));
                out.push(row(bid, "parabolic", p.value, Some(p)));
            }
        }
        out
    }
}

/// Sup norm, both seminorms and the composite norms of one field.
pub fn holder_report<S: Scalar>(field: &FieldEnsemble<S>, spec: &NormSpec<S>, field_id: &str) -> Result<HolderNormReport<S>> {
    let sup = sup_norm(field, spec)?;
    let space = seminorm_by_beta(&[field], spec, Kind::Space, Points::All, None)?;
    let parabolic = seminorm_by_beta(&[field], spec, Kind::Parabolic, Points::All, None)?;
    let (s, p) = (combine(&space), combine(&parabolic));
    let per_beta = space
        .iter()
        .zip(&parabolic)
        .map(|((b, x), (_, y))| (*b, *x, *y))
        .collect();
    Ok(HolderNormReport {
        field_id: field_id.to_string(),
        spec: *spec,
        grid_id: field.grid().grid_id(),
        seed: field.meta.get("seed").cloned().unwrap_or_default(),
        nodes: field.grid().nodes() * field.grid().times(),
        sup_norm: sup,
        composite_space: sup + s.value,
        composite_parabolic: sup + p.value,
        space: s,
        parabolic: p,
        per_beta,
    })
}

pub fn write_rows<W: Write>(rows: &[HolderRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Finite,
    /// `lhs = rhs = 0`.
    Undefined,
    /// `rhs = 0 < lhs`.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchauderRatio<S> {
    pub lhs: S,
    pub rhs: S,
    pub ratio: S,
    pub kind: RatioKind,
}

impl<S: Scalar> fmt::Display for SchauderRatio<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RatioKind::Finite => write!(f, "{:e} / {:e} = {:e}", self.lhs, self.rhs, self.ratio),
            RatioKind::Undefined => write!(f, "0/0"),
            RatioKind::Infinite => write!(f, "{:e} / 0 = inf", self.lhs),
        }
    }
}

/// `|u|_{(2+α, α/2)} / (|f|_α + |f|_{(α, α/2); Γ} + |g|_{1+α})`.
pub fn schauder_ratio<S: Scalar>(
    u: &FieldEnsemble<S>,
    f: &FieldEnsemble<S>,
    g: &ModalField<S>,
    spec: &NormSpec<S>,
) -> Result<SchauderRatio<S>> {
    if u.grid() != f.grid() || u.grid() != g.grid() {
        return Err(Error::GridMismatch("u, f and g must share a grid".into()));
    }
    let s2 = spec.with_order(2);
    let lhs = sup_norm(u, &s2)? + parabolic_seminorm(u, &s2)?;
    let s0 = spec.with_order(0);
    let s1 = spec.with_order(1);
    let rhs = sup_norm(f, &s0)?
        + space_seminorm(f, &s0)?
        + boundary_parabolic_norm(f, &s0)?
        + sup_norm_modal(g, &s1)?
        + space_seminorm_modal(g, &s1)?;
    let (ratio, kind) = if rhs.is_zero() {
        if lhs.is_zero() {
            (S::nan(), RatioKind::Undefined)
        } else {
            (S::infinity(), RatioKind::Infinite)
        }
    } else {
        (lhs / rhs, RatioKind::Finite)
    };
    Ok(SchauderRatio { lhs, rhs, ratio, kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64, m: usize) -> NormSpec<f64> {
        NormSpec::new(alpha, 2.0, m).unwrap()
    }

    fn line(cells: usize, steps: usize) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::line(1.0, cells, 1.0, steps).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(NormSpec::new(0.0, 2.0, 0).is_err());
        assert!(NormSpec::new(1.0, 2.0, 0).is_err());
        assert!(NormSpec::new(0.5, 1.5, 0).is_err());
        assert!(matches!(NormSpec::new(0.5, 2.0, 3), Err(Error::UnsupportedOrder { order: 3 })));
    }

    #[test]
    fn constant_field() {
        let f = FieldEnsemble::from_fn(line(8, 4), 2, |_, _, _, _| 3.0);
        assert_eq!(sup_norm(&f, &spec(0.5, 0)).unwrap(), 3.0);
        assert_eq!(space_seminorm(&f, &spec(0.5, 0)).unwrap(), 0.0);
        assert_eq!(parabolic_seminorm(&f, &spec(0.5, 0)).unwrap(), 0.0);
    }

    #[test]
    fn linear_field() {
        let f = FieldEnsemble::from_fn(line(8, 2), 1, |_, _, x, _| x);
        assert!((sup_norm(&f, &spec(0.5, 1)).unwrap() - 1.0).abs() < 1e-14);
        let s = space_seminorm_detail(&f, &spec(0.5, 0)).unwrap();
        assert!((s.value - 1.0).abs() < 1e-14);
        assert_eq!(s.argmax, Some(([0, 0, 0], [0, 8, 0])));
    }

    #[test]
    fn linear_in_time() {
        let f = FieldEnsemble::from_fn(line(1, 16), 1, |_, t, _, _| t);
        let p = parabolic_seminorm(&f, &spec(0.5, 0)).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn parabolic_dominates_space() {
        let f = FieldEnsemble::from_fn(line(8, 8), 3, |p, t, x: f64, _| ((p + 1) as f64 * x).sin() * (1.0 + t));
        let s = spec(0.4, 0);
        assert!(parabolic_seminorm(&f, &s).unwrap() >= space_seminorm(&f, &s).unwrap());
    }

    #[test]
    fn pair_sets_are_nested() {
        let g = SpaceTimeGrid::slab(1.0, 8, 1.0, 4, 0.5, 8).unwrap();
        let f = FieldEnsemble::from_fn(g, 2, |p, t, x: f64, y: f64| (3.0 * x + p as f64).sin() * (6.0 * y).cos() + t * t);
        let base = spec(0.5, 0);
        let ex = parabolic_seminorm(&f, &base.with_policy(PairPolicy::Exhaustive)).unwrap();
        let dy = parabolic_seminorm(&f, &base.with_policy(PairPolicy::Dyadic)).unwrap();
        let rp = parabolic_seminorm(&f, &base.with_policy(PairPolicy::RandomPairs { count: 500, seed: 3 })).unwrap();
        assert!(ex >= dy && ex >= rp && dy > 0.0 && rp > 0.0);
    }

    #[test]
    fn modal_norm_uses_l2_over_modes() {
        let g = line(4, 2);
        let a = FieldEnsemble::from_fn(g.clone(), 1, |_, _, _, _| 3.0);
        let b = FieldEnsemble::from_fn(g, 1, |_, _, _, _| 4.0);
        let m = ModalField::new(vec![a, b]).unwrap();
        assert!((sup_norm_modal(&m, &spec(0.5, 0)).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn schauder_ratio_zero_data() {
        let g = line(8, 4);
        let z = FieldEnsemble::zeros(g.clone(), 1);
        let r = schauder_ratio(&z, &z, &ModalField::zeros(g, 1), &spec(0.5, 0)).unwrap();
        assert_eq!(r.kind, RatioKind::Undefined);
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn time_seminorm_of_power_is_attained_at_zero() {
        let alpha = 0.5;
        let steps = 64;
        let series: Vec<f64> = (0..=steps)
            .map(|n| (1.0 + alpha / 2.0) * (n as f64 / steps as f64).powf(alpha / 2.0))
            .collect();
        let v = time_seminorm(&series, 1, 1.0 / steps as f64, alpha / 2.0, 2.0).unwrap();
        assert!((v - (1.0 + alpha / 2.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn report_rows() {
        let f = FieldEnsemble::from_fn(line(8, 4), 1, |_, _, x: f64, _| x * x);
        let r = holder_report(&f, &spec(0.5, 0), "u").unwrap();
        assert_eq!(r.composite_space, r.sup_norm + r.space.value);
        let rows = r.rows();
        assert_eq!(rows.len(), 5);
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("field_id,m,alpha,gamma,kind,value,argmax_pair"));
    }
}
