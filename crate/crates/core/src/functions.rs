//! Proper convex lower semicontinuous functions on `R^n` and the oracles the
//! operator-level procedures consume: evaluation, Fenchel conjugate,
//! Fenchel-Young subdifferential membership, and the Euclidean prox.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::convex_sets::project_l1_ball;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, add, axpy, dot, norm2, scale, sub};
use crate::spaces::{DualPair, NormTag, Side};
use crate::CompactConvexSet;

/// Relative slack used when deciding membership of the effective domain of
/// indicators and of closed-form conjugates.
pub const DOMAIN_TOL: f64 = 1e-9;

const DR_MAX_ITERS: usize = 20_000;
/// Residual accepted after the iteration cap; degenerate tangencies between
/// the two pieces make the tail of the iteration sublinear.
const DR_ACCEPT: f64 = 1e-6;
const DR_TOL: f64 = 1e-13;

fn domain_tol(v: &[f64]) -> f64 {
    DOMAIN_TOL * (1.0 + norm2(v))
}

/// `1/2 x'Qx + <b, x> + c` with `Q` symmetric positive semidefinite; the
/// eigendecomposition is kept for conjugates and pseudo-inverses.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    q: DMatrix<f64>,
    b: Vec<f64>,
    c: f64,
    evals: DVector<f64>,
    evecs: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(q: Vec<Vec<f64>>, b: Vec<f64>, c: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty quadratic".into()));
        }
        check_dim(n, q.len())?;
        for row in &q {
            check_dim(n, row.len())?;
        }
        let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::InvalidArgument("quadratic matrix is not symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        if eig.eigenvalues.min() < -1e-12 * (1.0 + sym.abs().max()) {
            return Err(Error::InvalidArgument(
                "quadratic matrix is not positive semidefinite".into(),
            ));
        }
        Ok(Quadratic {
            q: sym,
            b,
            c,
            evals: eig.eigenvalues,
            evecs: eig.eigenvectors,
        })
    }

    /// `1/2 |x|^2` scaled: `Q = a I`.
    pub fn isotropic(n: usize, a: f64) -> Result<Self> {
        let q = (0..n)
            .map(|i| (0..n).map(|j| if i == j { a } else { 0.0 }).collect())
            .collect();
        Quadratic::new(q, vec![0.0; n], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    fn eig_tol(&self) -> f64 {
        1e-12 * (1.0 + self.evals.abs().max())
    }

    pub fn is_positive_definite(&self) -> bool {
        self.evals.min() > self.eig_tol()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.q * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.apply(x)) + dot(&self.b, x) + self.c
    }

    fn conjugate(&self, y: &[f64]) -> ConjugateValue {
        let r = DVector::from_vec(sub(y, &self.b));
        let w = self.evecs.transpose() * &r;
        let tol = self.eig_tol();
        let rtol = 1e-10 * (1.0 + r.norm());
        let mut acc = 0.0;
        for i in 0..w.len() {
            let lam = self.evals[i];
            if lam > tol {
                acc += w[i] * w[i] / lam;
            } else if w[i].abs() > rtol {
                let dir = self.evecs.column(i) * w[i].signum();
                return ConjugateValue::unbounded(dir.iter().copied().collect());
            }
        }
        ConjugateValue::exact(0.5 * acc - self.c)
    }

    /// Inverse-form conjugate for positive definite `Q`.
    fn conjugate_fn(&self) -> Option<Quadratic> {
        if !self.is_positive_definite() {
            return None;
        }
        let inv = &self.evecs * DMatrix::from_diagonal(&self.evals.map(|l| 1.0 / l)) * self.evecs.transpose();
        let b = DVector::from_column_slice(&self.b);
        let qb = &inv * &b;
        let n = self.dim();
        let rows = (0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect();
        let lin: Vec<f64> = qb.iter().map(|v| -v).collect();
        let c = 0.5 * b.dot(&qb) - self.c;
        Quadratic::new(rows, lin, c).ok()
    }

    /// `argmin t f(s) + 1/2 |s - z|^2 = (tQ + I)^{-1}(z - t b)`
    fn prox_scaled(&self, z: &[f64], t: f64) -> Vec<f64> {
        let rhs = self.evecs.transpose() * DVector::from_vec(axpy(z, -t, &self.b));
        let scaled = DVector::from_fn(rhs.len(), |i, _| rhs[i] / (1.0 + t * self.evals[i]));
        (&self.evecs * scaled).iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexFn {
    Quadratic(Quadratic),
    /// `scale * |x|_norm`
    NormFn {
        scale: f64,
        norm: NormTag,
    },
    /// `x -> max <x, K>`
    Support {
        set: CompactConvexSet,
    },
    /// `0` on `K`, `+inf` off it
    Indicator {
        set: CompactConvexSet,
    },
    /// `<a, x> + c`
    Affine {
        a: Vec<f64>,
        c: f64,
    },
    /// `1/2 |x|_norm^2`
    HalfSqNorm {
        norm: NormTag,
    },
    /// `x -> inner(x + shift) - <x, tilt>`
    Translate {
        inner: Box<ConvexFn>,
        shift: Vec<f64>,
        tilt: Vec<f64>,
    },
    Sum(Box<ConvexFn>, Box<ConvexFn>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjStatus {
    Exact,
    LowerBound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateValue {
    pub value: f64,
    pub status: ConjStatus,
    /// Recession direction certifying `+inf` when the conjugate is unbounded.
    pub direction: Option<Vec<f64>>,
}

impl ConjugateValue {
    fn exact(value: f64) -> Self {
        ConjugateValue {
            value,
            status: ConjStatus::Exact,
            direction: None,
        }
    }

    fn unbounded(direction: Vec<f64>) -> Self {
        ConjugateValue {
            value: f64::INFINITY,
            status: ConjStatus::Exact,
            direction: Some(direction),
        }
    }

    fn lower(value: f64) -> Self {
        ConjugateValue {
            value,
            status: ConjStatus::LowerBound,
            direction: None,
        }
    }

    fn map(mut self, f: impl FnOnce(f64) -> f64) -> Self {
        if self.value.is_finite() {
            self.value = f(self.value);
        }
        self
    }
}

/// Three-valued answer of tests that may rest on numeric bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

/// Constants of an affine minorant `f(x) >= -gamma0 |x| - delta0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minorant {
    pub gamma0: f64,
    pub delta0: f64,
    /// False when the supporting subgradient came from an iterative prox.
    pub exact: bool,
}

impl ConvexFn {
    pub fn quadratic(q: Vec<Vec<f64>>, b: Vec<f64>, c: f64) -> Result<Self> {
        Ok(ConvexFn::Quadratic(Quadratic::new(q, b, c)?))
    }

    /// `1/2 |x|_2^2` in dimension `n`, as a quadratic.
    pub fn half_square(n: usize) -> Self {
        ConvexFn::Quadratic(Quadratic::isotropic(n, 1.0).expect("identity is PSD"))
    }

    pub fn norm(scale: f64, norm: NormTag) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument("norm scale must be finite and >= 0".into()));
        }
        Ok(ConvexFn::NormFn { scale, norm })
    }

    pub fn support(set: CompactConvexSet) -> Self {
        ConvexFn::Support { set }
    }

    pub fn indicator(set: CompactConvexSet) -> Self {
        ConvexFn::Indicator { set }
    }

    pub fn affine(a: Vec<f64>, c: f64) -> Self {
        ConvexFn::Affine { a, c }
    }

    pub fn zero(n: usize) -> Self {
        ConvexFn::Affine {
            a: vec![0.0; n],
            c: 0.0,
        }
    }

    pub fn translate(inner: ConvexFn, shift: Vec<f64>, tilt: Vec<f64>) -> Result<Self> {
        check_dim(shift.len(), tilt.len())?;
        if let Some(n) = inner.dim() {
            check_dim(n, shift.len())?;
        }
        Ok(ConvexFn::Translate {
            inner: Box::new(inner),
            shift,
            tilt,
        })
    }

    pub fn sum(f: ConvexFn, g: ConvexFn) -> Result<Self> {
        if let (Some(a), Some(b)) = (f.dim(), g.dim()) {
            check_dim(a, b)?;
        }
        Ok(ConvexFn::Sum(Box::new(f), Box::new(g)))
    }

    /// Ambient dimension when the variant carries data that fixes it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexFn::Quadratic(q) => Some(q.dim()),
            ConvexFn::NormFn { .. } | ConvexFn::HalfSqNorm { .. } => None,
            ConvexFn::Support { set } | ConvexFn::Indicator { set } => Some(set.dim()),
            ConvexFn::Affine { a, .. } => Some(a.len()),
            ConvexFn::Translate { shift, .. } => Some(shift.len()),
            ConvexFn::Sum(f, g) => f.dim().or(g.dim()),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        match self.dim() {
            Some(n) => check_dim(n, x.len()),
            None if x.is_empty() => Err(Error::InvalidArgument("empty vector".into())),
            None => Ok(()),
        }
    }

    /// Value in `R u {+inf}`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            ConvexFn::Quadratic(q) => q.eval(x),
            ConvexFn::NormFn { scale, norm } => scale * norm.eval(x),
            ConvexFn::Support { set } => set.support(x).unwrap_or(f64::NAN),
            ConvexFn::Indicator { set } => {
                if set.contains(x, domain_tol(x)).unwrap_or(false) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexFn::Affine { a, c } => dot(a, x) + c,
            ConvexFn::HalfSqNorm { norm } => {
                let r = norm.eval(x);
                0.5 * r * r
            }
            ConvexFn::Translate { inner, shift, tilt } => {
                let v = inner.eval_unchecked(&add(x, shift));
                if v.is_finite() {
                    v - dot(x, tilt)
                } else {
                    v
                }
            }
            ConvexFn::Sum(f, g) => {
                let a = f.eval_unchecked(x);
                if a == f64::INFINITY {
                    return a;
                }
                a + g.eval_unchecked(x)
            }
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> Result<bool> {
        Ok(self.eval(x)?.is_finite())
    }

    pub fn is_finite_everywhere(&self) -> bool {
        match self {
            ConvexFn::Indicator { .. } => false,
            ConvexFn::Translate { inner, .. } => inner.is_finite_everywhere(),
            ConvexFn::Sum(f, g) => f.is_finite_everywhere() && g.is_finite_everywhere(),
            _ => true,
        }
    }

    /// Whether `x` lies in the interior of the effective domain.
    pub fn domain_interior_contains(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(match self {
            ConvexFn::Indicator { set } => set.interior_contains(x)?,
            ConvexFn::Translate { inner, shift, .. } => inner.domain_interior_contains(&add(x, shift))?,
            ConvexFn::Sum(f, g) => f.domain_interior_contains(x)? && g.domain_interior_contains(x)?,
            _ => true,
        })
    }

    /// Gradient where the function is differentiable on all of `R^n`.
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            ConvexFn::Quadratic(q) => Some(add(&q.apply(x), &q.b)),
            ConvexFn::Affine { a, .. } => Some(a.clone()),
            ConvexFn::HalfSqNorm { norm: NormTag::L2 } => Some(x.to_vec()),
            ConvexFn::NormFn { scale, .. } if *scale == 0.0 => Some(vec![0.0; x.len()]),
            ConvexFn::Translate { inner, shift, tilt } => Some(sub(&inner.gradient(&add(x, shift))?, tilt)),
            ConvexFn::Sum(f, g) => Some(add(&f.gradient(x)?, &g.gradient(x)?)),
            _ => None,
        }
    }

    /// Some element of `df(x)`, or `None` off the domain (or when no
    /// closed-form selection exists).
    pub fn subgradient(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check(x)?;
        if !self.eval_unchecked(x).is_finite() {
            return Ok(None);
        }
        Ok(match self {
            ConvexFn::Quadratic(q) => Some(add(&q.apply(x), &q.b)),
            ConvexFn::NormFn { scale, norm } => Some(scale_vec(*scale, &norm.unit_subgradient(x))),
            ConvexFn::Support { set } => Some(set.argmax_support(x)?),
            ConvexFn::Indicator { .. } => Some(vec![0.0; x.len()]),
            ConvexFn::Affine { a, .. } => Some(a.clone()),
            ConvexFn::HalfSqNorm { norm } => Some(norm.duality_map(x)),
            ConvexFn::Translate { inner, shift, tilt } => inner.subgradient(&add(x, shift))?.map(|g| sub(&g, tilt)),
            ConvexFn::Sum(f, g) => match (f.subgradient(x)?, g.subgradient(x)?) {
                (Some(a), Some(b)) => Some(add(&a, &b)),
                _ => None,
            },
        })
    }

    /// Fenchel conjugate `f*(y) = sup_x <x, y> - f(x)`. Closed forms are exact;
    /// otherwise the value is the best lower bound found by proximal ascent.
    pub fn conjugate(&self, y: &[f64]) -> Result<ConjugateValue> {
        self.check(y)?;
        if let Some(v) = self.conjugate_closed(y)? {
            return Ok(v);
        }
        self.conjugate_numeric(y)
    }

    fn conjugate_closed(&self, y: &[f64]) -> Result<Option<ConjugateValue>> {
        Ok(Some(match self {
            ConvexFn::Quadratic(q) => q.conjugate(y),
            ConvexFn::NormFn { scale, norm } => {
                if norm.dual().eval(y) <= scale + domain_tol(y) {
                    ConjugateValue::exact(0.0)
                } else {
                    ConjugateValue::unbounded(y.to_vec())
                }
            }
            ConvexFn::Support { set } => {
                if set.contains(y, domain_tol(y))? {
                    ConjugateValue::exact(0.0)
                } else {
                    ConjugateValue::unbounded(sub(y, &set.project(y)?))
                }
            }
            ConvexFn::Indicator { set } => ConjugateValue::exact(set.support(y)?),
            ConvexFn::Affine { a, c } => {
                let d = sub(y, a);
                if norm2(&d) <= domain_tol(y) {
                    ConjugateValue::exact(-c)
                } else {
                    ConjugateValue::unbounded(d)
                }
            }
            ConvexFn::HalfSqNorm { norm } => {
                let r = norm.dual().eval(y);
                ConjugateValue::exact(0.5 * r * r)
            }
            ConvexFn::Translate { inner, shift, tilt } => {
                let u = add(y, tilt);
                let off = dot(shift, &u);
                inner.conjugate(&u)?.map(|v| v - off)
            }
            ConvexFn::Sum(f, g) => {
                if let ConvexFn::Affine { a, c } = g.as_ref() {
                    return Ok(Some(f.conjugate(&sub(y, a))?.map(|v| v - c)));
                }
                if let ConvexFn::Affine { a, c } = f.as_ref() {
                    return Ok(Some(g.conjugate(&sub(y, a))?.map(|v| v - c)));
                }
                let (other, halfsq) = match (f.as_ref(), g.as_ref()) {
                    (h, ConvexFn::HalfSqNorm { norm: NormTag::L2 }) => (h, true),
                    (ConvexFn::HalfSqNorm { norm: NormTag::L2 }, h) => (h, true),
                    _ => (f.as_ref(), false),
                };
                if !halfsq {
                    return Ok(None);
                }
                // sup_x <x,y> - h(x) - |x|^2/2 is attained at x = prox_h(y)
                let p = other.prox(y)?;
                let v = dot(&p, y) - other.eval_unchecked(&p) - 0.5 * dot(&p, &p);
                if other.prox_is_exact() {
                    ConjugateValue::exact(v)
                } else {
                    ConjugateValue::lower(v)
                }
            }
        }))
    }

    /// Multi-start proximal ascent on `x -> <x, y> - f(x)`.
    fn conjugate_numeric(&self, y: &[f64]) -> Result<ConjugateValue> {
        let mut best = f64::NEG_INFINITY;
        let objective = |x: &[f64]| dot(x, y) - self.eval_unchecked(x);
        for start_scale in [0.0, 1.0, 10.0] {
            let Ok(mut x) = self.prox(&scale(start_scale, y)) else {
                continue;
            };
            let mut t = 1.0;
            for _ in 0..200 {
                // prox of f - <., y> with step t
                let next = match self.prox_scaled(&axpy(&x, t, y), t) {
                    Ok(next) => next,
                    Err(_) => break,
                };
                let step = linalg::dist2(&next, &x);
                x = next;
                let v = objective(&x);
                if v > best {
                    best = v;
                }
                if best > 1e12 {
                    return Ok(ConjugateValue {
                        value: f64::INFINITY,
                        status: ConjStatus::LowerBound,
                        direction: Some(x),
                    });
                }
                if step <= 1e-12 * (1.0 + norm2(&x)) {
                    break;
                }
                t = (t * 1.5).min(1e3);
            }
        }
        Ok(ConjugateValue::lower(best))
    }

    /// `f*` as a function, for the variants whose conjugate is again one of
    /// the variants.
    pub fn conjugate_fn(&self) -> Option<ConvexFn> {
        self.conjugate_fn_in(self.dim())
    }

    /// As `conjugate_fn`, with the ambient dimension supplied for variants
    /// that do not carry it.
    pub fn conjugate_fn_in(&self, dim: Option<usize>) -> Option<ConvexFn> {
        let dim = self.dim().or(dim);
        Some(match self {
            ConvexFn::Quadratic(q) => ConvexFn::Quadratic(q.conjugate_fn()?),
            ConvexFn::NormFn { scale, norm } => {
                let n = dim?;
                ConvexFn::Indicator {
                    set: CompactConvexSet::ball(vec![0.0; n], *scale, norm.dual(), Side::Dual).ok()?,
                }
            }
            ConvexFn::Support { set } => ConvexFn::Indicator {
                set: set.clone().with_side(set.side().flip()),
            },
            ConvexFn::Indicator { set } => ConvexFn::Support {
                set: set.clone().with_side(set.side().flip()),
            },
            ConvexFn::Affine { a, c } => ConvexFn::Sum(
                Box::new(ConvexFn::Indicator {
                    set: CompactConvexSet::singleton(a.clone(), Side::Dual).ok()?,
                }),
                Box::new(ConvexFn::Affine {
                    a: vec![0.0; a.len()],
                    c: -c,
                }),
            ),
            ConvexFn::HalfSqNorm { norm } => ConvexFn::HalfSqNorm { norm: norm.dual() },
            ConvexFn::Translate { inner, shift, tilt } => {
                let n = shift.len();
                let g = ConvexFn::Translate {
                    inner: Box::new(inner.conjugate_fn()?),
                    shift: tilt.clone(),
                    tilt: shift.clone(),
                };
                ConvexFn::Sum(
                    Box::new(g),
                    Box::new(ConvexFn::Affine {
                        a: vec![0.0; n],
                        c: -dot(shift, tilt),
                    }),
                )
            }
            ConvexFn::Sum(f, g) => match (f.as_ref(), g.as_ref()) {
                (h, ConvexFn::Affine { a, c }) | (ConvexFn::Affine { a, c }, h) => {
                    let hs = h.conjugate_fn_in(dim)?;
                    ConvexFn::Sum(
                        Box::new(ConvexFn::Translate {
                            inner: Box::new(hs),
                            shift: linalg::neg(a),
                            tilt: vec![0.0; a.len()],
                        }),
                        Box::new(ConvexFn::Affine {
                            a: vec![0.0; a.len()],
                            c: -c,
                        }),
                    )
                }
                _ => return None,
            },
        })
    }

    /// Fenchel-Young test `f(x) + f*(x*) <= <x, x*> + tol`.
    pub fn subdiff_contains(&self, x: &[f64], xstar: &[f64], tol: f64) -> Result<Tri> {
        self.check(x)?;
        check_dim(x.len(), xstar.len())?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let fx = self.eval_unchecked(x);
        if !fx.is_finite() {
            return Ok(Tri::No);
        }
        let pairing = dot(x, xstar);
        let conj = match self.conjugate_closed(xstar)? {
            Some(c) => c,
            None => {
                // d(g + k) = dg + dk when k is finite everywhere; with k smooth
                // the split is forced
                if let ConvexFn::Sum(f, g) = self {
                    if g.is_finite_everywhere() {
                        if let Some(dg) = g.gradient(x) {
                            return f.subdiff_contains(x, &sub(xstar, &dg), tol);
                        }
                    }
                    if f.is_finite_everywhere() {
                        if let Some(df) = f.gradient(x) {
                            return g.subdiff_contains(x, &sub(xstar, &df), tol);
                        }
                    }
                }
                self.conjugate_numeric(xstar)?
            }
        };
        let gap = fx + conj.value - pairing;
        Ok(match conj.status {
            ConjStatus::Exact if gap <= tol => Tri::Yes,
            ConjStatus::Exact => Tri::No,
            ConjStatus::LowerBound if gap > tol => Tri::No,
            ConjStatus::LowerBound => Tri::Unknown,
        })
    }

    /// Whether `prox` is computed in closed form (no inner iteration).
    pub fn prox_is_exact(&self) -> bool {
        match self {
            ConvexFn::Translate { inner, .. } => inner.prox_is_exact(),
            ConvexFn::Sum(f, g) => match (f.as_ref(), g.as_ref()) {
                (h, ConvexFn::Affine { .. }) | (ConvexFn::Affine { .. }, h) => h.prox_is_exact(),
                (h, ConvexFn::HalfSqNorm { norm: NormTag::L2 }) | (ConvexFn::HalfSqNorm { norm: NormTag::L2 }, h) => {
                    h.prox_is_exact()
                }
                _ => false,
            },
            _ => true,
        }
    }

    /// Euclidean prox `argmin_s f(s) + 1/2 |s - z|_2^2` in the standard inner
    /// product of `R^n`.
    pub fn prox(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.prox_scaled(z, 1.0)
    }

    /// `argmin_s t f(s) + 1/2 |s - z|_2^2`, `t > 0`.
    pub fn prox_scaled(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(z)?;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument("prox step must be positive".into()));
        }
        match self {
            ConvexFn::Quadratic(q) => Ok(q.prox_scaled(z, t)),
            ConvexFn::NormFn { scale, norm } => Ok(prox_norm(*norm, t * scale, z)),
            ConvexFn::Support { set } => {
                // Moreau: prox_{t sigma_K}(z) = z - t P_K(z / t)
                let p = set.project(&scale(1.0 / t, z))?;
                Ok(axpy(z, -t, &p))
            }
            ConvexFn::Indicator { set } => set.project(z),
            ConvexFn::Affine { a, .. } => Ok(axpy(z, -t, a)),
            ConvexFn::HalfSqNorm { norm } => Ok(prox_half_sq(*norm, t, z)),
            ConvexFn::Translate { inner, shift, tilt } => {
                let u = inner.prox_scaled(&add(&add(z, shift), &scale(t, tilt)), t)?;
                Ok(sub(&u, shift))
            }
            ConvexFn::Sum(f, g) => match (f.as_ref(), g.as_ref()) {
                (h, ConvexFn::Affine { a, .. }) | (ConvexFn::Affine { a, .. }, h) => h.prox_scaled(&axpy(z, -t, a), t),
                (h, ConvexFn::HalfSqNorm { norm: NormTag::L2 }) | (ConvexFn::HalfSqNorm { norm: NormTag::L2 }, h) => {
                    // t h(s) + t|s|^2/2 + |s - z|^2/2 = (1+t)/2 |s - z/(1+t)|^2 + t h(s) + const
                    h.prox_scaled(&scale(1.0 / (1.0 + t), z), t / (1.0 + t))
                }
                _ => douglas_rachford_sum(f, g, z, t),
            },
        }
    }

    /// Affine minorant constants from an exact subgradient at `prox(0)`:
    /// with `s = prox(0)` and `-s` in `df(s)`,
    /// `f(x) >= -|s|_* |x| - (|s|_2^2 + f(s))`.
    pub fn affine_minorant(&self, pair: &DualPair) -> Result<Minorant> {
        let s = self.prox(&vec![0.0; pair.dim()])?;
        let y = linalg::neg(&s);
        let fs = self.eval_unchecked(&s);
        Ok(Minorant {
            gamma0: pair.dual_norm().eval(&y),
            delta0: dot(&s, &y) - fs,
            exact: self.prox_is_exact(),
        })
    }

    /// Lower bound on `inf f`: `-f*(0)` when the conjugate is exact.
    pub fn certified_infimum(&self, n: usize) -> Result<Option<f64>> {
        let c = self.conjugate(&vec![0.0; n])?;
        Ok(match c.status {
            ConjStatus::Exact => Some(-c.value),
            ConjStatus::LowerBound => None,
        })
    }
}

fn scale_vec(t: f64, v: &[f64]) -> Vec<f64> {
    scale(t, v)
}

/// prox of `lambda |.|_norm`
fn prox_norm(norm: NormTag, lambda: f64, z: &[f64]) -> Vec<f64> {
    match norm {
        NormTag::L1 => z.iter().map(|&v| v.signum() * (v.abs() - lambda).max(0.0)).collect(),
        NormTag::L2 => {
            let r = norm2(z);
            if r <= lambda {
                vec![0.0; z.len()]
            } else {
                scale(1.0 - lambda / r, z)
            }
        }
        NormTag::LInf => sub(z, &project_l1_ball(z, lambda)),
    }
}

/// prox of `t/2 |.|_norm^2`
fn prox_half_sq(norm: NormTag, t: f64, z: &[f64]) -> Vec<f64> {
    match norm {
        NormTag::L2 => scale(1.0 / (1.0 + t), z),
        NormTag::L1 => {
            // soft threshold at tau = t |s|_1; tau solves tau = t * sum (|z_i| - tau)_+
            let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            let mut tau = 0.0;
            let mut cum = 0.0;
            for (k, &m) in mags.iter().enumerate() {
                cum += m;
                let cand = t * cum / (1.0 + t * (k + 1) as f64);
                if cand < m {
                    tau = cand;
                } else {
                    break;
                }
            }
            z.iter().map(|&v| v.signum() * (v.abs() - tau).max(0.0)).collect()
        }
        NormTag::LInf => {
            // Moreau: prox_{t phi}(z) = z - t prox_{phi*/t}(z/t), phi* = 1/2 |.|_1^2
            let inner = prox_half_sq(NormTag::L1, 1.0 / t, &scale(1.0 / t, z));
            axpy(z, -t, &inner)
        }
    }
}

/// Douglas-Rachford for `argmin f(s) + g(s) + |s - z|^2 / (2t)` with the
/// quadratic folded into the `f` block and splitting step `gamma`.
fn douglas_rachford_sum(f: &ConvexFn, g: &ConvexFn, z: &[f64], t: f64) -> Result<Vec<f64>> {
    // a unit step keeps the iteration count flat in t for large steps
    let gamma = t.min(1.0);
    let w = gamma / t;
    let first = |x: &[f64]| -> Result<Vec<f64>> {
        let m = scale(1.0 / (1.0 + w), &axpy(x, w, z));
        f.prox_scaled(&m, gamma / (1.0 + w))
    };
    // the iterates of each block stay in that block's domain
    let pick = |a: Vec<f64>, b: Vec<f64>| if f.is_finite_everywhere() { b } else { a };
    let mut x = z.to_vec();
    let mut last = f64::INFINITY;
    for _ in 0..DR_MAX_ITERS {
        let a = first(&x)?;
        let refl = axpy(&scale(2.0, &a), -1.0, &x);
        let b = g.prox_scaled(&refl, gamma)?;
        let r = linalg::dist2(&a, &b);
        x = add(&x, &sub(&b, &a));
        last = r;
        if r <= DR_TOL * (1.0 + norm2(&a)) {
            return Ok(pick(a, b));
        }
    }
    let a = first(&x)?;
    let b = g.prox_scaled(&axpy(&scale(2.0, &a), -1.0, &x), gamma)?;
    if last <= DR_ACCEPT * (1.0 + norm2(&a)) {
        Ok(pick(a, b))
    } else {
        Err(Error::NoConvergence {
            iterations: DR_MAX_ITERS,
            residual: last,
        })
    }
}
