//! Norm pairs on `E = R^n`, the bilinear pairing with `E* = R^n`, and the
//! product norm `sqrt(|x|^2 + |x*|^2)` on `E x E*`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// One of the three classical norms. Duals pair as `L1 <-> LInf`, `L2 <-> L2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormTag {
    L1,
    L2,
    #[serde(alias = "Linf", alias = "linf", alias = "LINF")]
    LInf,
}

impl NormTag {
    pub fn dual(self) -> NormTag {
        match self {
            NormTag::L1 => NormTag::LInf,
            NormTag::L2 => NormTag::L2,
            NormTag::LInf => NormTag::L1,
        }
    }

    pub fn eval<T: Real>(self, v: &[T]) -> T {
        match self {
            NormTag::L1 => v.iter().fold(T::zero(), |acc, x| acc + x.abs()),
            NormTag::L2 => linalg::norm2(v),
            NormTag::LInf => v.iter().fold(T::zero(), |acc, x| acc.max(x.abs())),
        }
    }

    /// A unit-dual-norm vector `u` with `<v, u> = |v|`, i.e. an element of the
    /// subdifferential of this norm at `v`. Ties and zero coordinates resolve
    /// deterministically: `L1` puts 0 on zero coordinates, `LInf` picks the
    /// first coordinate of maximal modulus. Returns zeros at `v = 0`.
    pub fn unit_subgradient<T: Real>(self, v: &[T]) -> Vec<T> {
        let n = v.len();
        let mut u = vec![T::zero(); n];
        match self {
            NormTag::L1 => {
                for (ui, &vi) in u.iter_mut().zip(v) {
                    *ui = if vi > T::zero() {
                        T::one()
                    } else if vi < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                }
            }
            NormTag::L2 => {
                let r = linalg::norm2(v);
                if r > T::zero() {
                    for (ui, &vi) in u.iter_mut().zip(v) {
                        *ui = vi / r;
                    }
                }
            }
            NormTag::LInf => {
                let mut best = T::zero();
                let mut arg = None;
                for (i, &vi) in v.iter().enumerate() {
                    if vi.abs() > best {
                        best = vi.abs();
                        arg = Some(i);
                    }
                }
                if let Some(i) = arg {
                    u[i] = v[i].signum();
                }
            }
        }
        u
    }

    /// Canonical element of the duality map `d(1/2 |.|^2)(v) = |v| * unit_subgradient(v)`.
    pub fn duality_map<T: Real>(self, v: &[T]) -> Vec<T> {
        let r = self.eval(v);
        linalg::scale(r, &self.unit_subgradient(v))
    }

    /// Largest ratio `|v| / |v|_2` over nonzero `v` in dimension `n`.
    pub fn max_ratio_to_l2(self, n: usize) -> f64 {
        match self {
            NormTag::L1 => (n as f64).sqrt(),
            NormTag::L2 | NormTag::LInf => 1.0,
        }
    }

    /// Smallest ratio `|v| / |v|_2` over nonzero `v` in dimension `n`.
    pub fn min_ratio_to_l2(self, n: usize) -> f64 {
        match self {
            NormTag::LInf => 1.0 / (n as f64).sqrt(),
            NormTag::L2 | NormTag::L1 => 1.0,
        }
    }
}

impl std::fmt::Display for NormTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NormTag::L1 => "L1",
            NormTag::L2 => "L2",
            NormTag::LInf => "LInf",
        };
        f.write_str(s)
    }
}

/// Which copy of `R^n` a vector or set lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Primal,
    Dual,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Primal => Side::Dual,
            Side::Dual => Side::Primal,
        }
    }
}

/// `E = (R^n, |.|)` together with `E* = (R^n, |.|_*)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PairDescriptor", into = "PairDescriptor")]
pub struct DualPair {
    dim: usize,
    primal: NormTag,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDescriptor {
    dim: usize,
    norm: NormTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dual_norm: Option<NormTag>,
}

impl TryFrom<PairDescriptor> for DualPair {
    type Error = Error;

    fn try_from(d: PairDescriptor) -> Result<Self> {
        match d.dual_norm {
            Some(dn) => DualPair::with_norms(d.dim, d.norm, dn),
            None => DualPair::new(d.dim, d.norm),
        }
    }
}

impl From<DualPair> for PairDescriptor {
    fn from(p: DualPair) -> Self {
        PairDescriptor {
            dim: p.dim,
            norm: p.primal,
            dual_norm: None,
        }
    }
}

impl DualPair {
    pub fn new(dim: usize, primal: NormTag) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(DualPair { dim, primal })
    }

    /// Rejects any dual norm other than the one forced by `primal`.
    pub fn with_norms(dim: usize, primal: NormTag, dual: NormTag) -> Result<Self> {
        if primal.dual() != dual {
            return Err(Error::InvalidArgument(format!(
                "{dual} is not the dual of {primal} (expected {})",
                primal.dual()
            )));
        }
        DualPair::new(dim, primal)
    }

    pub fn euclidean(dim: usize) -> Self {
        DualPair::new(dim, NormTag::L2).expect("positive dimension")
    }

    /// The `l1 / l_inf` pair carried by tail-operator truncations.
    pub fn l1_linf(dim: usize) -> Self {
        DualPair::new(dim, NormTag::L1).expect("positive dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn primal_norm(&self) -> NormTag {
        self.primal
    }

    pub fn dual_norm(&self) -> NormTag {
        self.primal.dual()
    }

    pub fn norm_tag(&self, side: Side) -> NormTag {
        match side {
            Side::Primal => self.primal,
            Side::Dual => self.primal.dual(),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        self.primal == NormTag::L2
    }

    /// The pair seen from the dual side: `(E*, E**) = (E*, E)` in finite dimensions.
    pub fn swapped(&self) -> DualPair {
        DualPair {
            dim: self.dim,
            primal: self.primal.dual(),
        }
    }

    pub fn check<T>(&self, v: &[T]) -> Result<()> {
        check_dim(self.dim, v.len())
    }
}

/// An element `(x, x*)` of `E x E*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedPoint<T> {
    pub x: Vec<T>,
    pub xstar: Vec<T>,
}

impl<T: Real> PairedPoint<T> {
    pub fn new(x: Vec<T>, xstar: Vec<T>) -> Self {
        PairedPoint { x, xstar }
    }

    pub fn zero(dim: usize) -> Self {
        PairedPoint {
            x: linalg::zeros(dim),
            xstar: linalg::zeros(dim),
        }
    }

    pub fn check(&self, pair: &DualPair) -> Result<()> {
        pair.check(&self.x)?;
        pair.check(&self.xstar)
    }

    /// `(x*, x)`: the canonical swap `E x E* -> E* x E**` in finite dimensions.
    pub fn swapped(&self) -> Self {
        PairedPoint {
            x: self.xstar.clone(),
            xstar: self.x.clone(),
        }
    }

    pub fn translated(&self, dx: &[T], dxstar: &[T]) -> Self {
        PairedPoint {
            x: linalg::sub(&self.x, dx),
            xstar: linalg::sub(&self.xstar, dxstar),
        }
    }

    /// `<x, x*>`
    pub fn inner(&self) -> T {
        linalg::dot(&self.x, &self.xstar)
    }
}

pub fn pairing<T: Real>(p: &DualPair, x: &[T], xstar: &[T]) -> Result<T> {
    p.check(x)?;
    p.check(xstar)?;
    Ok(linalg::dot(x, xstar))
}

pub fn norm<T: Real>(p: &DualPair, v: &[T], side: Side) -> Result<T> {
    p.check(v)?;
    Ok(p.norm_tag(side).eval(v))
}

pub fn graph_norm<T: Real>(p: &DualPair, pt: &PairedPoint<T>) -> Result<T> {
    pt.check(p)?;
    let a = p.primal_norm().eval(&pt.x);
    let b = p.dual_norm().eval(&pt.xstar);
    Ok((a * a + b * b).sqrt())
}
