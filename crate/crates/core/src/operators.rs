//! Monotone multifunctions `S: E => E*` with graph access through seeded
//! samples, scaled resolvents and membership tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::convex_sets::gaussian;
use crate::error::{check_dim, Error, Result};
use crate::functions::{ConvexFn, Tri};
use crate::linalg::{add, axpy, dist2, dot, norm2, scale, sub};
use crate::spaces::{DualPair, NormTag, Side};
use crate::{CompactConvexSet, PairedPoint};

/// Pairs whose shifted pairing falls below this count as a violation.
pub const MONOTONE_TOL: f64 = 1e-10;

const SPLIT_MAX_ITERS: usize = 20_000;
const SPLIT_TOL: f64 = 1e-13;
const SPLIT_ACCEPT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    FiniteGraph {
        points: Vec<PairedPoint>,
    },
    Linear {
        matrix: DMatrix<f64>,
    },
    Subdifferential {
        f: ConvexFn,
    },
    /// Subdifferential of the indicator of a primal set.
    NormalCone {
        set: CompactConvexSet,
    },
    /// Subdifferential of the support function of a dual set.
    SupportSubdiff {
        set: CompactConvexSet,
    },
    /// Graph translated by `-(dx, dxstar)`.
    Shift {
        inner: Box<MonotoneOperator>,
        dx: Vec<f64>,
        dxstar: Vec<f64>,
    },
    Sum(Box<MonotoneOperator>, Box<MonotoneOperator>),
    Inverse(Box<MonotoneOperator>),
    /// `(S^-1 + T^-1)^-1`
    ParallelSum(Box<MonotoneOperator>, Box<MonotoneOperator>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneOperator {
    pair: DualPair,
    kind: OperatorKind,
}

/// A graph point produced by a resolvent, with the distance to exact
/// membership that the method could not close.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventPoint {
    pub point: PairedPoint,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphSample {
    pub points: Vec<PairedPoint>,
    /// One message per seed point whose inner solver failed.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MonotoneVerdict {
    /// No sampled pair violates monotonicity.
    Ok { pairs_checked: usize },
    Violation {
        first: PairedPoint,
        second: PairedPoint,
        value: f64,
    },
}

impl MonotoneOperator {
    pub fn finite_graph(pair: DualPair, points: Vec<PairedPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a graph needs at least one point".into()));
        }
        for p in &points {
            p.check(&pair)?;
        }
        Ok(MonotoneOperator {
            pair,
            kind: OperatorKind::FiniteGraph { points },
        })
    }

    /// `x -> Mx`; rejected unless `M + M'` is positive semidefinite.
    pub fn linear(pair: DualPair, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = pair.dim();
        check_dim(n, rows.len())?;
        for r in &rows {
            check_dim(n, r.len())?;
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let sym = &matrix + matrix.transpose();
        let low = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if low < -1e-12 * (1.0 + sym.abs().max()) {
            return Err(Error::InvalidArgument("linear map is not monotone".into()));
        }
        Ok(MonotoneOperator {
            pair,
            kind: OperatorKind::Linear { matrix },
        })
    }

    pub fn subdifferential(pair: DualPair, f: ConvexFn) -> Result<Self> {
        if let Some(n) = f.dim() {
            check_dim(pair.dim(), n)?;
        }
        Ok(MonotoneOperator {
            pair,
            kind: OperatorKind::Subdifferential { f },
        })
    }

    pub fn normal_cone(pair: DualPair, set: CompactConvexSet) -> Result<Self> {
        check_dim(pair.dim(), set.dim())?;
        Ok(MonotoneOperator {
            pair,
            kind: OperatorKind::NormalCone {
                set: set.with_side(Side::Primal),
            },
        })
    }

    pub fn support_subdiff(pair: DualPair, set: CompactConvexSet) -> Result<Self> {
        check_dim(pair.dim(), set.dim())?;
        Ok(MonotoneOperator {
            pair,
            kind: OperatorKind::SupportSubdiff {
                set: set.with_side(Side::Dual),
            },
        })
    }

    pub fn shift(inner: MonotoneOperator, dx: Vec<f64>, dxstar: Vec<f64>) -> Result<Self> {
        inner.pair.check(&dx)?;
        inner.pair.check(&dxstar)?;
        Ok(MonotoneOperator {
            pair: inner.pair,
            kind: OperatorKind::Shift {
                inner: Box::new(inner),
                dx,
                dxstar,
            },
        })
    }

    pub fn sum(s: MonotoneOperator, t: MonotoneOperator) -> Result<Self> {
        same_pair(&s, &t)?;
        Ok(MonotoneOperator {
            pair: s.pair,
            kind: OperatorKind::Sum(Box::new(s), Box::new(t)),
        })
    }

    /// Graph swap; the result lives on the swapped norm pair.
    pub fn inverse(s: MonotoneOperator) -> Self {
        MonotoneOperator {
            pair: s.pair.swapped(),
            kind: OperatorKind::Inverse(Box::new(s)),
        }
    }

    pub fn parallel_sum(s: MonotoneOperator, t: MonotoneOperator) -> Result<Self> {
        same_pair(&s, &t)?;
        Ok(MonotoneOperator {
            pair: s.pair,
            kind: OperatorKind::ParallelSum(Box::new(s), Box::new(t)),
        })
    }

    /// Truncation of `(Tx)_i = sum_{k >= i} x_k` to `n` coordinates on the
    /// l1 / linf pair.
    pub fn tail(n: usize) -> Result<Self> {
        Self::tail_on(DualPair::l1_linf(n.max(1)), n)
    }

    /// The same upper-triangular map on an arbitrary pair.
    pub fn tail_on(pair: DualPair, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("tail operator needs n >= 1".into()));
        }
        check_dim(pair.dim(), n)?;
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if j >= i { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::linear(pair, rows)
    }

    pub fn pair(&self) -> &DualPair {
        &self.pair
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.pair.dim()
    }

    /// `Mx` for the linear variant.
    pub fn apply_linear(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            OperatorKind::Linear { matrix } => Some(mat_vec(matrix, x)),
            _ => None,
        }
    }

    /// Euclidean resolvent: `(s, s*)` in the graph with `s + s* = z`.
    pub fn resolvent(&self, z: &[f64]) -> Result<ResolventPoint> {
        if !self.pair.is_euclidean() {
            return Err(Error::NonEuclidean("resolvent"));
        }
        self.resolvent_scaled(z, 1.0)
    }

    /// `(s, s*)` in the graph with `s + t s* = z`, computed in the coordinate
    /// inner product regardless of the norms carried by the pair. Finite
    /// graphs return the nearest point in `s + t s*` with its residual.
    pub fn resolvent_scaled(&self, z: &[f64], t: f64) -> Result<ResolventPoint> {
        self.pair.check(z)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument("resolvent step must be positive".into()));
        }
        let exact = |s: Vec<f64>, sstar: Vec<f64>| ResolventPoint {
            point: PairedPoint::new(s, sstar),
            residual: 0.0,
        };
        match &self.kind {
            OperatorKind::FiniteGraph { points } => {
                let mut best = (f64::INFINITY, 0);
                for (i, p) in points.iter().enumerate() {
                    let d = dist2(&axpy(&p.x, t, &p.xstar), z);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                Ok(ResolventPoint {
                    point: points[best.1].clone(),
                    residual: best.0,
                })
            }
            OperatorKind::Linear { matrix } => {
                let n = z.len();
                let a = DMatrix::identity(n, n) + matrix * t;
                let s = a
                    .lu()
                    .solve(&DVector::from_column_slice(z))
                    .ok_or_else(|| Error::Singular("I + tM".into()))?;
                let s: Vec<f64> = s.iter().copied().collect();
                let sstar = mat_vec(matrix, &s);
                Ok(exact(s, sstar))
            }
            OperatorKind::Subdifferential { f } => {
                let s = f.prox_scaled(z, t)?;
                let sstar = scale(1.0 / t, &sub(z, &s));
                Ok(exact(s, sstar))
            }
            OperatorKind::NormalCone { set } => {
                let s = set.project(z)?;
                let sstar = scale(1.0 / t, &sub(z, &s));
                Ok(exact(s, sstar))
            }
            OperatorKind::SupportSubdiff { set } => {
                let sstar = set.project(&scale(1.0 / t, z))?;
                let s = axpy(z, -t, &sstar);
                Ok(exact(s, sstar))
            }
            OperatorKind::Shift { inner, dx, dxstar } => {
                let r = inner.resolvent_scaled(&add(&add(z, dx), &scale(t, dxstar)), t)?;
                Ok(ResolventPoint {
                    point: r.point.translated(dx, dxstar),
                    residual: r.residual,
                })
            }
            OperatorKind::Inverse(inner) => {
                // (u, u*) in G(S) with u + u*/t = z/t gives (u*, u) in G(S^-1)
                let r = inner.resolvent_scaled(&scale(1.0 / t, z), 1.0 / t)?;
                Ok(ResolventPoint {
                    point: r.point.swapped(),
                    residual: r.residual,
                })
            }
            OperatorKind::Sum(a, b) => sum_resolvent(a, b, z, t),
            OperatorKind::ParallelSum(a, b) => {
                let inv = MonotoneOperator::inverse(MonotoneOperator {
                    pair: self.pair.swapped(),
                    kind: OperatorKind::Sum(
                        Box::new(MonotoneOperator::inverse(a.as_ref().clone())),
                        Box::new(MonotoneOperator::inverse(b.as_ref().clone())),
                    ),
                });
                inv.resolvent_scaled(z, t)
            }
        }
    }

    /// Coordinate scale of the graph used to size sampling clouds.
    pub fn scale_hint(&self) -> f64 {
        let h = match &self.kind {
            OperatorKind::FiniteGraph { points } => points
                .iter()
                .map(|p| norm2(&p.x).max(norm2(&p.xstar)))
                .fold(0.0, f64::max),
            OperatorKind::NormalCone { set } | OperatorKind::SupportSubdiff { set } => {
                set.anchor_points().iter().map(|v| norm2(v)).fold(0.0, f64::max)
            }
            OperatorKind::Shift { inner, dx, dxstar } => inner.scale_hint() + norm2(dx).max(norm2(dxstar)),
            OperatorKind::Sum(a, b) | OperatorKind::ParallelSum(a, b) => a.scale_hint().max(b.scale_hint()),
            OperatorKind::Inverse(inner) => inner.scale_hint(),
            OperatorKind::Linear { .. } | OperatorKind::Subdifferential { .. } => 1.0,
        };
        h.max(1.0)
    }

    /// Seeded graph points: every point of a finite graph, `(x, Mx)` on a
    /// point cloud for linear maps, resolvent images of a seeded cloud with
    /// varying steps otherwise.
    pub fn graph_sample(&self, budget: usize, seed: u64) -> Result<GraphSample> {
        if budget == 0 {
            return Err(Error::InvalidArgument("sampling budget must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let radius = 2.0 * self.scale_hint();
        let mut out = GraphSample::default();
        match &self.kind {
            OperatorKind::FiniteGraph { points } => out.points = points.clone(),
            OperatorKind::Linear { matrix } => {
                out.points.push(PairedPoint::zero(n));
                while out.points.len() < budget {
                    let x: Vec<f64> = (0..n).map(|_| radius * gaussian(&mut rng)).collect();
                    let y = mat_vec(matrix, &x);
                    out.points.push(PairedPoint::new(x, y));
                }
            }
            OperatorKind::Shift { inner, dx, dxstar } => {
                let mut s = inner.graph_sample(budget, seed)?;
                for p in &mut s.points {
                    *p = p.translated(dx, dxstar);
                }
                out = s;
            }
            OperatorKind::Inverse(inner) => {
                let mut s = inner.graph_sample(budget, seed)?;
                for p in &mut s.points {
                    *p = p.swapped();
                }
                out = s;
            }
            _ => {
                if let OperatorKind::NormalCone { set } = &self.kind {
                    for a in set.anchor_points().into_iter().take(budget / 4) {
                        out.points.push(PairedPoint::new(a, vec![0.0; n]));
                    }
                }
                const STEPS: [f64; 4] = [1.0, 0.1, 10.0, 0.5];
                let mut k = 0;
                while out.points.len() < budget {
                    let z: Vec<f64> = (0..n).map(|_| radius * gaussian(&mut rng)).collect();
                    let t = STEPS[k % STEPS.len()];
                    k += 1;
                    match self.resolvent_scaled(&z, t) {
                        Ok(r) => out.points.push(r.point),
                        Err(e) => out.failures.push(format!("z={z:?}: {e}")),
                    }
                    if out.failures.len() > budget {
                        break;
                    }
                }
            }
        }
        Ok(out)
    }

    /// All-pairs test on a graph sample; the verdict is sampled, not proved.
    pub fn monotone_check(&self, budget: usize, seed: u64) -> Result<MonotoneVerdict> {
        if budget < 2 {
            return Err(Error::InvalidArgument("monotonicity check needs budget >= 2".into()));
        }
        let pts = self.graph_sample(budget, seed)?.points;
        let mut worst: Option<(f64, usize, usize)> = None;
        let mut checked = 0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                checked += 1;
                let v = dot(&sub(&pts[i].x, &pts[j].x), &sub(&pts[i].xstar, &pts[j].xstar));
                let tol = MONOTONE_TOL
                    * (1.0 + norm2(&pts[i].x) + norm2(&pts[j].x))
                    * (1.0 + norm2(&pts[i].xstar) + norm2(&pts[j].xstar));
                if v < -tol && worst.is_none_or(|w| v < w.0) {
                    worst = Some((v, i, j));
                }
            }
        }
        Ok(match worst {
            None => MonotoneVerdict::Ok { pairs_checked: checked },
            Some((value, i, j)) => MonotoneVerdict::Violation {
                first: pts[i].clone(),
                second: pts[j].clone(),
                value,
            },
        })
    }

    /// `|J(x + x*) - x|_2` with the unit coordinate resolvent; zero exactly on
    /// the graph of a maximal operator.
    pub fn membership_residual(&self, x: &[f64], xstar: &[f64]) -> Result<f64> {
        self.pair.check(x)?;
        self.pair.check(xstar)?;
        if let OperatorKind::FiniteGraph { points } = &self.kind {
            return Ok(points
                .iter()
                .map(|p| dist2(&p.x, x).hypot(dist2(&p.xstar, xstar)))
                .fold(f64::INFINITY, f64::min));
        }
        let r = self.resolvent_scaled(&add(x, xstar), 1.0)?;
        Ok(dist2(&r.point.x, x) + r.residual)
    }

    /// Whether `(x, x*)` is in the graph, variant by variant: list lookup,
    /// linear residual, Fenchel-Young, normal-cone inequalities, or the
    /// resolvent residual for combinators.
    pub fn contains(&self, x: &[f64], xstar: &[f64], tol: f64) -> Result<Tri> {
        self.pair.check(x)?;
        self.pair.check(xstar)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let yes = |b: bool| if b { Tri::Yes } else { Tri::No };
        Ok(match &self.kind {
            OperatorKind::FiniteGraph { .. } => yes(self.membership_residual(x, xstar)? <= tol),
            OperatorKind::Linear { matrix } => yes(dist2(&mat_vec(matrix, x), xstar) <= tol * (1.0 + norm2(xstar))),
            OperatorKind::Subdifferential { f } => f.subdiff_contains(x, xstar, tol)?,
            OperatorKind::NormalCone { set } => {
                yes(set.contains(x, tol)? && set.support(xstar)? <= dot(x, xstar) + tol)
            }
            OperatorKind::SupportSubdiff { set } => {
                yes(set.contains(xstar, tol)? && set.support(x)? <= dot(x, xstar) + tol)
            }
            OperatorKind::Shift { inner, dx, dxstar } => inner.contains(&add(x, dx), &add(xstar, dxstar), tol)?,
            OperatorKind::Inverse(inner) => inner.contains(xstar, x, tol)?,
            OperatorKind::Sum(..) | OperatorKind::ParallelSum(..) => match self.membership_residual(x, xstar) {
                Ok(r) if r <= tol => Tri::Yes,
                Ok(r) if r > 100.0 * tol.max(SPLIT_ACCEPT) => Tri::No,
                _ => Tri::Unknown,
            },
        })
    }

    /// Whether `x` lies in `D(S)` (primal side) or `R(S)` (dual side).
    pub fn side_contains(&self, side: Side, x: &[f64]) -> Result<Tri> {
        self.pair.check(x)?;
        let yes = |b: bool| if b { Tri::Yes } else { Tri::No };
        Ok(match (&self.kind, side) {
            (OperatorKind::FiniteGraph { points }, _) => yes(points.iter().any(|p| {
                let v = if side == Side::Primal { &p.x } else { &p.xstar };
                dist2(v, x) <= 1e-12 * (1.0 + norm2(x))
            })),
            (OperatorKind::Linear { .. }, Side::Primal) => Tri::Yes,
            (OperatorKind::Linear { matrix }, Side::Dual) => yes(self.linear_range_contains(matrix, x)),
            (OperatorKind::Subdifferential { f }, Side::Primal) => match f.subgradient(x)? {
                Some(_) => Tri::Yes,
                None if !f.in_domain(x)? => Tri::No,
                None => Tri::Unknown,
            },
            (OperatorKind::Subdifferential { f }, Side::Dual) => match f.conjugate_fn_in(Some(self.dim())) {
                Some(fs) => {
                    let inv = MonotoneOperator::subdifferential(self.pair.swapped(), fs)?;
                    inv.side_contains(Side::Primal, x)?
                }
                None => Tri::Unknown,
            },
            (OperatorKind::NormalCone { set }, Side::Primal) => yes(set.contains(x, 1e-12)?),
            (OperatorKind::NormalCone { .. }, Side::Dual) => Tri::Yes,
            (OperatorKind::SupportSubdiff { .. }, Side::Primal) => Tri::Yes,
            (OperatorKind::SupportSubdiff { set }, Side::Dual) => yes(set.contains(x, 1e-12)?),
            (OperatorKind::Shift { inner, dx, dxstar }, _) => {
                let d = if side == Side::Primal { dx } else { dxstar };
                inner.side_contains(side, &add(x, d))?
            }
            (OperatorKind::Inverse(inner), _) => inner.side_contains(side.flip(), x)?,
            (OperatorKind::Sum(a, b), Side::Primal) => tri_and(a.side_contains(side, x)?, b.side_contains(side, x)?),
            (OperatorKind::ParallelSum(a, b), Side::Dual) => {
                tri_and(a.side_contains(side, x)?, b.side_contains(side, x)?)
            }
            _ => Tri::Unknown,
        })
    }

    /// Whether `x` lies in the interior of `D(S)` or `R(S)`.
    pub fn side_interior_contains(&self, side: Side, x: &[f64]) -> Result<Tri> {
        self.pair.check(x)?;
        let yes = |b: bool| if b { Tri::Yes } else { Tri::No };
        Ok(match (&self.kind, side) {
            (OperatorKind::FiniteGraph { .. }, _) => Tri::No,
            (OperatorKind::Linear { .. }, Side::Primal) => Tri::Yes,
            (OperatorKind::Linear { matrix }, Side::Dual) => yes(matrix.clone().lu().determinant().abs() > 1e-12),
            // int dom df = int dom f for proper convex lsc f
            (OperatorKind::Subdifferential { f }, Side::Primal) => yes(f.domain_interior_contains(x)?),
            (OperatorKind::Subdifferential { f }, Side::Dual) => match f.conjugate_fn_in(Some(self.dim())) {
                Some(fs) => yes(fs.domain_interior_contains(x)?),
                None => Tri::Unknown,
            },
            (OperatorKind::NormalCone { set }, Side::Primal) => yes(set.interior_contains(x)?),
            (OperatorKind::NormalCone { .. }, Side::Dual) => Tri::Yes,
            (OperatorKind::SupportSubdiff { .. }, Side::Primal) => Tri::Yes,
            (OperatorKind::SupportSubdiff { set }, Side::Dual) => yes(set.interior_contains(x)?),
            (OperatorKind::Shift { inner, dx, dxstar }, _) => {
                let d = if side == Side::Primal { dx } else { dxstar };
                inner.side_interior_contains(side, &add(x, d))?
            }
            (OperatorKind::Inverse(inner), _) => inner.side_interior_contains(side.flip(), x)?,
            (OperatorKind::Sum(a, b), Side::Primal) => {
                tri_and(a.side_interior_contains(side, x)?, b.side_interior_contains(side, x)?)
            }
            (OperatorKind::ParallelSum(a, b), Side::Dual) => {
                tri_and(a.side_interior_contains(side, x)?, b.side_interior_contains(side, x)?)
            }
            _ => Tri::Unknown,
        })
    }

    /// Points likely to sit inside `D(S)` or `R(S)`: the origin, set anchors
    /// and centroids, and a seeded graph sample projected to the side.
    pub fn side_candidates(&self, side: Side, budget: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]];
        let set = match (&self.kind, side) {
            (OperatorKind::NormalCone { set }, Side::Primal) | (OperatorKind::SupportSubdiff { set }, Side::Dual) => {
                Some(set)
            }
            _ => None,
        };
        if let Some(set) = set {
            let anchors = set.anchor_points();
            let mut c = vec![0.0; n];
            for a in &anchors {
                c = add(&c, a);
            }
            out.push(scale(1.0 / anchors.len() as f64, &c));
            out.extend(anchors);
        }
        let sample = self.graph_sample(budget.max(1), seed)?;
        out.extend(sample.points.into_iter().map(|p| match side {
            Side::Primal => p.x,
            Side::Dual => p.xstar,
        }));
        Ok(out)
    }

    fn linear_range_contains(&self, matrix: &DMatrix<f64>, y: &[f64]) -> bool {
        let svd = matrix.clone().svd(true, true);
        let tol = 1e-12 * (1.0 + svd.singular_values.max());
        match svd.solve(&DVector::from_column_slice(y), tol) {
            Ok(x) => (matrix * &x - DVector::from_column_slice(y)).norm() <= 1e-9 * (1.0 + norm2(y)),
            Err(_) => false,
        }
    }
}

fn tri_and(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Tri::No, _) | (_, Tri::No) => Tri::No,
        (Tri::Yes, Tri::Yes) => Tri::Yes,
        _ => Tri::Unknown,
    }
}

fn same_pair(s: &MonotoneOperator, t: &MonotoneOperator) -> Result<()> {
    if s.pair != t.pair {
        return Err(Error::InvalidArgument("operands live on different norm pairs".into()));
    }
    Ok(())
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).iter().copied().collect()
}

/// Douglas-Rachford for `0 in t S s + t T s + s - z`, with `s - z` folded
/// into the `S` block.
fn sum_resolvent(a: &MonotoneOperator, b: &MonotoneOperator, z: &[f64], t: f64) -> Result<ResolventPoint> {
    let gamma = (1.0 / t).min(1.0);
    let first = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let m = scale(1.0 / (1.0 + gamma), &axpy(x, gamma, z));
        let r = a.resolvent_scaled(&m, gamma * t / (1.0 + gamma))?;
        Ok((r.point.x, r.point.xstar))
    };
    let mut x = z.to_vec();
    let mut residual = f64::INFINITY;
    for iter in 0..=SPLIT_MAX_ITERS {
        let (s, sa) = first(&x)?;
        let refl = axpy(&scale(2.0, &s), -1.0, &x);
        let rb = b.resolvent_scaled(&refl, gamma * t)?;
        let gap = dist2(&s, &rb.point.x) + rb.residual;
        let done = gap <= SPLIT_TOL * (1.0 + norm2(&s));
        if done || iter == SPLIT_MAX_ITERS {
            residual = gap;
            if done || gap <= SPLIT_ACCEPT * (1.0 + norm2(&s)) {
                // s* = a* + b*, each taken from the block that produced it
                return Ok(ResolventPoint {
                    point: PairedPoint::new(s, add(&sa, &rb.point.xstar)),
                    residual: gap,
                });
            }
            break;
        }
        x = add(&x, &sub(&rb.point.x, &s));
    }
    Err(Error::NoConvergence {
        iterations: SPLIT_MAX_ITERS,
        residual,
    })
}

/// Interval `[lo, hi]` on the line, as a primal set.
pub fn interval(lo: f64, hi: f64) -> CompactConvexSet {
    CompactConvexSet::interval(lo, hi, Side::Primal).expect("lo <= hi")
}

/// The identity map on `R^n` with the Euclidean pair.
pub fn identity(n: usize) -> MonotoneOperator {
    let rows = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    MonotoneOperator::linear(DualPair::euclidean(n), rows).expect("identity is monotone")
}

/// `d|.|` on the line.
pub fn abs_subdiff() -> MonotoneOperator {
    MonotoneOperator::subdifferential(
        DualPair::euclidean(1),
        ConvexFn::norm(1.0, NormTag::L2).expect("unit scale"),
    )
    .expect("dimension-free")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(x: &[f64], y: &[f64]) -> PairedPoint {
        PairedPoint::new(x.to_vec(), y.to_vec())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        dist2(a, b) <= tol
    }

    fn e1() -> DualPair {
        DualPair::euclidean(1)
    }

    fn zoo() -> Vec<MonotoneOperator> {
        let p = DualPair::euclidean(2);
        let sq = CompactConvexSet::boxed(&[-1.0, -1.0], &[1.0, 1.0], Side::Primal).unwrap();
        let tri = CompactConvexSet::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]], Side::Dual).unwrap();
        let quad = ConvexFn::quadratic(vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![0.3, 0.0], 0.0).unwrap();
        let l1 = ConvexFn::norm(1.0, NormTag::L1).unwrap();
        let nc = MonotoneOperator::normal_cone(p, sq).unwrap();
        let sub_l1 = MonotoneOperator::subdifferential(p, l1).unwrap();
        vec![
            MonotoneOperator::linear(p, vec![vec![1.0, 2.0], vec![-2.0, 0.5]]).unwrap(),
            MonotoneOperator::subdifferential(p, quad).unwrap(),
            sub_l1.clone(),
            nc.clone(),
            MonotoneOperator::support_subdiff(p, tri).unwrap(),
            MonotoneOperator::shift(nc.clone(), vec![0.5, -0.5], vec![1.0, 0.0]).unwrap(),
            MonotoneOperator::sum(sub_l1.clone(), nc.clone()).unwrap(),
            MonotoneOperator::inverse(sub_l1.clone()),
            MonotoneOperator::parallel_sum(sub_l1, nc).unwrap(),
            MonotoneOperator::tail_on(p, 2).unwrap(),
        ]
    }

    #[test]
    fn tail_operator_examples() {
        let t = MonotoneOperator::tail(2).unwrap();
        let tx = t.apply_linear(&[1.0, -1.0]).unwrap();
        assert_eq!(tx, vec![0.0, -1.0]);
        assert_eq!(dot(&[1.0, -1.0], &tx), 1.0);
        assert_eq!(t.pair().primal_norm(), NormTag::L1);
        let t1 = MonotoneOperator::tail(1).unwrap();
        assert_eq!(t1.apply_linear(&[3.5]).unwrap(), vec![3.5]);
        assert!(MonotoneOperator::tail(0).is_err());
    }

    #[test]
    fn tail_quadratic_form_identity() {
        // <x, Tx> = (sum x)^2 / 2 + |x|_2^2 / 2 on an exhaustive small grid
        let vals = [-1.5, -0.5, 0.0, 1.0, 2.0];
        for n in 1..=6usize {
            let t = MonotoneOperator::tail(n).unwrap();
            let total = vals.len().pow(n as u32).min(3125);
            for code in 0..total {
                let mut c = code;
                let x: Vec<f64> = (0..n)
                    .map(|_| {
                        let v = vals[c % vals.len()];
                        c /= vals.len();
                        v
                    })
                    .collect();
                let lhs = dot(&x, &t.apply_linear(&x).unwrap());
                let s: f64 = x.iter().sum();
                let rhs = 0.5 * s * s + 0.5 * dot(&x, &x);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn graph_sample_examples() {
        let g = MonotoneOperator::finite_graph(
            DualPair::euclidean(2),
            vec![
                pp(&[0.0, 0.0], &[0.0, 0.0]),
                pp(&[1.0, 0.0], &[1.0, 1.0]),
                pp(&[2.0, 0.0], &[3.0, 1.0]),
            ],
        )
        .unwrap();
        assert_eq!(g.graph_sample(10, 1).unwrap().points.len(), 3);

        let abs = abs_subdiff();
        for (z, s, sstar) in [(-2.0, -1.0, -1.0), (0.5, 0.0, 0.5), (2.0, 1.0, 1.0)] {
            let r = abs.resolvent(&[z]).unwrap();
            assert_eq!(r.point, pp(&[s], &[sstar]));
        }

        let nc = MonotoneOperator::normal_cone(e1(), interval(-1.0, 1.0)).unwrap();
        let pts = nc.graph_sample(200, 7).unwrap().points;
        assert!(pts.iter().any(|p| p.x[0] == 1.0 && p.xstar[0] > 0.0));
        assert!(pts.iter().all(|p| p.x[0].abs() <= 1.0));
        assert!(pts.iter().all(|p| p.x[0].abs() == 1.0 || p.xstar[0] == 0.0));
    }

    #[test]
    fn resolvent_examples() {
        let r = identity(1).resolvent(&[2.0]).unwrap();
        assert_eq!(r.point, pp(&[1.0], &[1.0]));
        assert_eq!(abs_subdiff().resolvent(&[2.0]).unwrap().point, pp(&[1.0], &[1.0]));
        let nc = MonotoneOperator::normal_cone(e1(), interval(-1.0, 1.0)).unwrap();
        assert_eq!(nc.resolvent(&[3.0]).unwrap().point, pp(&[1.0], &[2.0]));
        assert!(matches!(
            MonotoneOperator::tail(2).unwrap().resolvent(&[1.0, 1.0]),
            Err(Error::NonEuclidean(_))
        ));
    }

    #[test]
    fn monotone_check_examples() {
        assert!(matches!(
            MonotoneOperator::tail(4).unwrap().monotone_check(50, 3).unwrap(),
            MonotoneVerdict::Ok { .. }
        ));
        let bad = MonotoneOperator::finite_graph(e1(), vec![pp(&[0.0], &[0.0]), pp(&[1.0], &[-1.0])]).unwrap();
        match bad.monotone_check(2, 0).unwrap() {
            MonotoneVerdict::Violation { first, second, value } => {
                assert_eq!(first, pp(&[0.0], &[0.0]));
                assert_eq!(second, pp(&[1.0], &[-1.0]));
                assert_eq!(value, -1.0);
            }
            v => panic!("{v:?}"),
        }
        for s in zoo() {
            assert!(
                matches!(s.monotone_check(100, 11).unwrap(), MonotoneVerdict::Ok { .. }),
                "{s:?}"
            );
        }
        assert!(MonotoneOperator::linear(e1(), vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn shift_and_inverse_samples_transform_exactly() {
        for s in zoo() {
            let base = s.graph_sample(30, 5).unwrap().points;
            let dx = vec![0.25, -1.0];
            let dxs = vec![3.0, 0.5];
            let shifted = MonotoneOperator::shift(s.clone(), dx.clone(), dxs.clone()).unwrap();
            let sp = shifted.graph_sample(30, 5).unwrap().points;
            assert_eq!(sp.len(), base.len());
            for (a, b) in base.iter().zip(&sp) {
                assert_eq!(&a.translated(&dx, &dxs), b);
            }
            let inv = MonotoneOperator::inverse(s.clone());
            let ip = inv.graph_sample(30, 5).unwrap().points;
            for (a, b) in base.iter().zip(&ip) {
                assert_eq!(&a.swapped(), b);
            }
        }
    }

    #[test]
    fn sample_ranges_stay_in_sets() {
        let p = DualPair::euclidean(2);
        let tri = CompactConvexSet::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]], Side::Dual).unwrap();
        let sup = MonotoneOperator::support_subdiff(p, tri.clone()).unwrap();
        for q in sup.graph_sample(300, 2).unwrap().points {
            assert!(tri.contains(&q.xstar, 1e-12).unwrap());
        }
        let nc = MonotoneOperator::normal_cone(p, tri.clone().with_side(Side::Primal)).unwrap();
        for q in nc.graph_sample(300, 2).unwrap().points {
            assert!(tri.contains(&q.x, 1e-12).unwrap());
        }
    }

    #[test]
    fn sampled_points_pass_membership() {
        for s in zoo() {
            for q in s.graph_sample(40, 9).unwrap().points {
                let v = s.contains(&q.x, &q.xstar, 1e-6).unwrap();
                assert_ne!(v, Tri::No, "{s:?} at {q:?}");
            }
        }
        let nc = MonotoneOperator::normal_cone(e1(), interval(-1.0, 1.0)).unwrap();
        assert_eq!(nc.contains(&[1.0], &[4.0], 1e-9).unwrap(), Tri::Yes);
        assert_eq!(nc.contains(&[0.0], &[4.0], 1e-9).unwrap(), Tri::No);
    }

    #[test]
    fn interior_oracles() {
        let nc = MonotoneOperator::normal_cone(e1(), interval(-1.0, 1.0)).unwrap();
        let abs = abs_subdiff();
        assert_eq!(nc.side_interior_contains(Side::Primal, &[0.0]).unwrap(), Tri::Yes);
        assert_eq!(nc.side_interior_contains(Side::Primal, &[1.0]).unwrap(), Tri::No);
        assert_eq!(abs.side_contains(Side::Primal, &[5.0]).unwrap(), Tri::Yes);
        // R(d|.|) = [-1, 1]
        assert_eq!(abs.side_interior_contains(Side::Dual, &[0.5]).unwrap(), Tri::Yes);
        assert_eq!(abs.side_interior_contains(Side::Dual, &[1.0]).unwrap(), Tri::No);
        assert_eq!(nc.side_interior_contains(Side::Dual, &[7.0]).unwrap(), Tri::Yes);
    }

    #[test]
    fn sum_resolvent_on_the_line() {
        // d|.| + N_[-1,1]: s = clamp(soft(z, t), -1, 1)
        let s = MonotoneOperator::sum(
            abs_subdiff(),
            MonotoneOperator::normal_cone(e1(), interval(-1.0, 1.0)).unwrap(),
        )
        .unwrap();
        for z in [-5.0, -1.5, -0.3, 0.0, 0.7, 2.2, 9.0] {
            let r = s.resolvent(&[z]).unwrap();
            let expect = (z.signum() * (z.abs() - 1.0).max(0.0)).clamp(-1.0, 1.0);
            assert!((r.point.x[0] - expect).abs() < 1e-9, "z={z}: {r:?}");
            assert!((r.point.x[0] + r.point.xstar[0] - z).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn resolvent_solves_its_equation(z in prop::collection::vec(-4.0f64..4.0, 2), t in 0.05f64..20.0) {
            for s in zoo() {
                let r = s.resolvent_scaled(&z, t).unwrap();
                prop_assert!(r.residual <= 1e-6);
                let lhs = axpy(&r.point.x, t, &r.point.xstar);
                prop_assert!(close(&lhs, &z, 1e-6 * (1.0 + norm2(&z))), "{:?}: {:?}", s, r);
            }
        }

        #[test]
        fn resolvent_is_firmly_nonexpansive(a in prop::collection::vec(-4.0f64..4.0, 2), b in prop::collection::vec(-4.0f64..4.0, 2)) {
            for s in zoo() {
                let ra = s.resolvent_scaled(&a, 1.0).unwrap().point;
                let rb = s.resolvent_scaled(&b, 1.0).unwrap().point;
                let d = dist2(&ra.x, &rb.x);
                prop_assert!(d * d <= dot(&sub(&ra.x, &rb.x), &sub(&a, &b)) + 1e-9);
            }
        }
    }
}
