//! Odd/even reflection across `{x1 = 0}` and the boundary-adapted rewrite of
//! a divergence-form forcing `f = D_i f^i`.

use crate::error::{Error, Result};
use crate::field::{finite_diff, restrict_to_boundary, FieldEnsemble, MultiIndex, SpaceTimeGrid};
use crate::scalar::Scalar;

/// Relative size of a boundary trace still treated as zero.
pub const TRACE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// Field on the mirrored grid `(-x1_max, x1_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField<S> {
    field: FieldEnsemble<S>,
    parity: Parity,
    source: SpaceTimeGrid<S>,
}

impl<S: Scalar> ExtendedField<S> {
    pub fn field(&self) -> &FieldEnsemble<S> {
        &self.field
    }
    pub fn into_field(self) -> FieldEnsemble<S> {
        self.field
    }
    pub fn parity(&self) -> Parity {
        self.parity
    }
    pub fn source_grid(&self) -> &SpaceTimeGrid<S> {
        &self.source
    }

    /// Value at mirrored normal index offset `k` from the centre (negative = `x1 < 0`).
    pub fn at(&self, path: usize, step: usize, k: isize, j: usize) -> S {
        let g = self.field.grid();
        let i = (g.zero_index() as isize + k) as usize;
        self.field.get(path, step, g.node(i, j))
    }

    /// Cuts a mirrored-grid field back to `x1 >= 0`.
    pub fn restrict_half(field: &FieldEnsemble<S>, source: &SpaceTimeGrid<S>) -> FieldEnsemble<S> {
        field.restrict_normal(source.clone(), field.grid().zero_index())
    }
}

fn reflect<S: Scalar>(field: &FieldEnsemble<S>, parity: Parity) -> Result<ExtendedField<S>> {
    let src = field.grid();
    if src.is_mirrored() {
        return Err(Error::InvalidArgument("field is already on a mirrored grid".into()));
    }
    let grid = src.mirrored();
    let c = grid.zero_index();
    let mut out = FieldEnsemble::zeros(grid.clone(), field.paths());
    for p in 0..field.paths() {
        for n in 0..src.times() {
            let s = field.slice(p, n);
            let d = out.slice_mut(p, n);
            for j in 0..grid.nxp() {
                for k in 0..src.n1() {
                    let v = s[src.node(k, j)];
                    d[grid.node(c + k, j)] = v;
                    if k > 0 {
                        d[grid.node(c - k, j)] = match parity {
                            Parity::Odd => -v,
                            Parity::Even => v,
                        };
                    }
                }
                if parity == Parity::Odd {
                    d[grid.node(c, j)] = S::zero();
                }
            }
        }
    }
    out.meta = field.meta.clone();
    Ok(ExtendedField {
        field: out,
        parity,
        source: src.clone(),
    })
}

/// Odd reflection. The trace at `x1 = 0` must vanish to `1e-12` times the field's max magnitude.
pub fn odd_extend<S: Scalar>(field: &FieldEnsemble<S>) -> Result<ExtendedField<S>> {
    let trace = restrict_to_boundary(field)?.max_abs();
    let tolerance = S::lit(TRACE_TOLERANCE) * field.max_abs();
    if trace > tolerance {
        return Err(Error::ParityViolation {
            trace: trace.to_f64_lossy(),
            tolerance: tolerance.to_f64_lossy(),
        });
    }
    reflect(field, Parity::Odd)
}

pub fn even_extend<S: Scalar>(field: &FieldEnsemble<S>) -> Result<ExtendedField<S>> {
    reflect(field, Parity::Even)
}

/// Output of [`translated_forcing`] in two dimensions.
#[derive(Debug, Clone)]
pub struct TranslatedForcing<S> {
    /// `F^2(t, x1, x2) = f^2(t, 0, x2 + x1)`.
    pub shifted: FieldEnsemble<S>,
    /// `f~^1 = f^1 + 2 a^12 D_2 u + F^2`.
    pub f1_tilde: FieldEnsemble<S>,
    /// `f~^2 = f^2 - F^2`, zero on `x1 = 0`.
    pub f2_tilde: FieldEnsemble<S>,
}

/// Boundary-adapted forcing components.
///
/// `f` holds `(f^1, f^2)`, `a12` gives `a^12` at each time level and `u` is the
/// solution whose tangential derivative enters `f~^1`. The shift in `x2` is an
/// exact nodal translation, so the grid must satisfy `dx1 = dx'`.
pub fn translated_forcing<S: Scalar>(
    f: &[FieldEnsemble<S>],
    a12: &[S],
    u: &FieldEnsemble<S>,
) -> Result<TranslatedForcing<S>> {
    let [f1, f2] = f else {
        return Err(Error::InvalidArgument("expected two forcing components".into()));
    };
    let grid = f2.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidArgument("translated forcing needs dim = 2".into()));
    }
    if f1.grid() != grid || u.grid() != grid {
        return Err(Error::GridMismatch("forcing components and solution".into()));
    }
    let (dx1, dxp) = (grid.dx1(), grid.dxp());
    if (dx1 - dxp).abs() > S::lit(4.0) * S::epsilon() * dx1 {
        return Err(Error::GridIncompatible {
            dx1: dx1.to_f64_lossy(),
            dxp: dxp.to_f64_lossy(),
        });
    }
    if a12.len() != grid.times() {
        return Err(Error::Size("a12 must have one sample per time level".into()));
    }
    let m = grid.nxp();
    let mut shifted = FieldEnsemble::zeros(grid.clone(), f2.paths());
    for p in 0..f2.paths() {
        for n in 0..grid.times() {
            let src = f2.slice(p, n);
            let dst = shifted.slice_mut(p, n);
            for j in 0..m {
                for i in 0..grid.n1() {
                    dst[grid.node(i, j)] = src[grid.node(0, (j + i) % m)];
                }
            }
        }
    }
    let d2u = finite_diff(u, MultiIndex::D2)?;
    let paths = f1.paths().max(u.paths()).max(f2.paths());
    let two = S::lit(2.0);
    let mut f1_tilde = FieldEnsemble::zeros(grid.clone(), paths);
    for p in 0..paths {
        for n in 0..grid.times() {
            let a = f1.slice(f1.path_index(p), n);
            let du = d2u.slice(d2u.path_index(p), n);
            let fs = shifted.slice(shifted.path_index(p), n);
            let dst = f1_tilde.slice_mut(p, n);
            for k in 0..grid.nodes() {
                dst[k] = a[k] + two * a12[n] * du[k] + fs[k];
            }
        }
    }
    let mut f2_tilde = FieldEnsemble::zeros(grid.clone(), f2.paths());
    for (d, (a, b)) in f2_tilde
        .values_mut()
        .iter_mut()
        .zip(f2.values().iter().zip(shifted.values()))
    {
        *d = *a - *b;
    }
    Ok(TranslatedForcing {
        shifted,
        f1_tilde,
        f2_tilde,
    })
}
