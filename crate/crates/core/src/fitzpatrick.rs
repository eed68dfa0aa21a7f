//! The Fitzpatrick function `phi_S`, its conjugate, the graph sup `theta_S`
//! and membership in the Fitzpatrick extension, with `E**` identified with
//! `E` so that the canonical map is the component swap.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::functions::ConjStatus;
use crate::linalg::{add, axpy, dot, norm2, sub};
use crate::operators::{MonotoneOperator, OperatorKind};
use crate::PairedPoint;

pub type FitzStatus = ConjStatus;

/// Sampling effort for graph sups that have no closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOpts {
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchOpts {
    fn default() -> Self {
        SearchOpts { budget: 256, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitzEvaluation {
    /// Exact value, or the best lower bound found.
    pub value: f64,
    pub status: FitzStatus,
    /// Certified upper bound when one is available short of exactness.
    pub upper: Option<f64>,
    /// Graph point attaining or approaching the sup.
    pub witness: Option<PairedPoint>,
    /// Direction along which the sup is unbounded, when `value` is `+inf`.
    pub direction: Option<Vec<f64>>,
}

impl FitzEvaluation {
    fn exact(value: f64, witness: Option<PairedPoint>) -> Self {
        FitzEvaluation {
            value,
            status: ConjStatus::Exact,
            upper: None,
            witness,
            direction: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.status == ConjStatus::Exact
    }

    /// Smallest certified upper bound, `+inf` when none is known.
    pub fn upper_bound(&self) -> f64 {
        match self.status {
            ConjStatus::Exact => self.value,
            ConjStatus::LowerBound => self.upper.unwrap_or(f64::INFINITY),
        }
    }

    fn shifted(mut self, offset: f64, dx: &[f64], dxstar: &[f64]) -> Self {
        if self.value.is_finite() {
            self.value += offset;
        }
        self.upper = self.upper.map(|u| u + offset);
        self.witness = self.witness.map(|w| w.translated(dx, dxstar));
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    In,
    Out,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MembershipReport {
    pub verdict: Membership,
    pub theta: FitzEvaluation,
    pub pairing: f64,
}

/// Best graph point found for `inf <s - w, s* - w*>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedPairingSearch {
    pub value: f64,
    pub witness: PairedPoint,
    pub evaluations: usize,
}

/// `phi_S(x, x*) = sup <s, x*> + <x, s*> - <s, s*>` over the graph.
pub fn phi(s: &MonotoneOperator, x: &[f64], xstar: &[f64]) -> Result<FitzEvaluation> {
    phi_with(s, x, xstar, SearchOpts::default())
}

pub fn phi_with(s: &MonotoneOperator, x: &[f64], xstar: &[f64], opts: SearchOpts) -> Result<FitzEvaluation> {
    theta_with(s, xstar, x, opts)
}

/// `theta_S(w*, w**) = sup <s, w*> + <s*, w**> - <s, s*>` over the graph;
/// equal to `phi_S(w**, w*)`.
pub fn theta(s: &MonotoneOperator, wstar: &[f64], wstarstar: &[f64]) -> Result<FitzEvaluation> {
    theta_with(s, wstar, wstarstar, SearchOpts::default())
}

pub fn theta_with(s: &MonotoneOperator, wstar: &[f64], wstarstar: &[f64], opts: SearchOpts) -> Result<FitzEvaluation> {
    s.pair().check(wstar)?;
    s.pair().check(wstarstar)?;
    let objective = |p: &PairedPoint| dot(&p.x, wstar) + dot(&p.xstar, wstarstar) - p.inner();
    match s.kind() {
        OperatorKind::FiniteGraph { points } => {
            let (i, v) = points
                .iter()
                .map(objective)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            Ok(FitzEvaluation::exact(v, Some(points[i].clone())))
        }
        OperatorKind::Linear { matrix } => Ok(linear_phi(matrix, wstarstar, wstar)),
        OperatorKind::Shift { inner, dx, dxstar } => {
            let r = theta_with(inner, &add(wstar, dxstar), &add(wstarstar, dx), opts)?;
            let offset = -dot(dx, wstar) - dot(dxstar, wstarstar) - dot(dx, dxstar);
            Ok(r.shifted(offset, dx, dxstar))
        }
        OperatorKind::Inverse(inner) => {
            let mut r = theta_with(inner, wstarstar, wstar, opts)?;
            r.witness = r.witness.map(|w| w.swapped());
            Ok(r)
        }
        _ => {
            let pairing = dot(wstar, wstarstar);
            let found = shifted_pairing_infimum(s, wstarstar, wstar, opts)?;
            let lower = pairing - found.value;
            let upper = representative_upper(s, wstar, wstarstar)?;
            let mut out = FitzEvaluation {
                value: lower,
                status: ConjStatus::LowerBound,
                upper,
                witness: Some(found.witness),
                direction: None,
            };
            if let Some(u) = upper {
                if u - lower <= 1e-12 * (1.0 + u.abs()) {
                    out.value = u;
                    out.status = ConjStatus::Exact;
                    out.upper = None;
                }
            }
            Ok(out)
        }
    }
}

/// `f(w**) + f*(w*)` for operators that are subdifferentials of a function
/// with an exact conjugate; it dominates `theta` because `f + f*`
/// dominates the Fitzpatrick function of `df`.
fn representative_upper(s: &MonotoneOperator, wstar: &[f64], wstarstar: &[f64]) -> Result<Option<f64>> {
    let (f_val, conj) = match s.kind() {
        OperatorKind::Subdifferential { f } => {
            let c = f.conjugate(wstar)?;
            if c.status != ConjStatus::Exact {
                return Ok(None);
            }
            (f.eval(wstarstar)?, c.value)
        }
        OperatorKind::NormalCone { set } => {
            let ind = if set.contains(wstarstar, 1e-12 * (1.0 + norm2(wstarstar)))? {
                0.0
            } else {
                f64::INFINITY
            };
            (ind, set.support(wstar)?)
        }
        OperatorKind::SupportSubdiff { set } => {
            let ind = if set.contains(wstar, 1e-12 * (1.0 + norm2(wstar)))? {
                0.0
            } else {
                f64::INFINITY
            };
            (set.support(wstarstar)?, ind)
        }
        _ => return Ok(None),
    };
    Ok(Some(f_val + conj))
}

/// Closed form for `x -> Mx`: with `A = M + M'` and `v = x* + M'x`,
/// `phi(x, x*) = v' A^+ v / 2` when `v` is in the range of `A`, `+inf`
/// otherwise.
fn linear_phi(m: &DMatrix<f64>, x: &[f64], xstar: &[f64]) -> FitzEvaluation {
    let a = m + m.transpose();
    let v = DVector::from_column_slice(xstar) + m.transpose() * DVector::from_column_slice(x);
    let eig = SymmetricEigen::new(a);
    let w = eig.eigenvectors.transpose() * &v;
    let tol = 1e-12 * (1.0 + eig.eigenvalues.abs().max());
    let vtol = 1e-10 * (1.0 + v.norm());
    let mut coords = DVector::zeros(w.len());
    let mut val = 0.0;
    for i in 0..w.len() {
        let lam = eig.eigenvalues[i];
        if lam > tol {
            coords[i] = w[i] / lam;
            val += 0.5 * w[i] * w[i] / lam;
        } else if w[i].abs() > vtol {
            let dir = eig.eigenvectors.column(i) * w[i].signum();
            return FitzEvaluation {
                value: f64::INFINITY,
                status: ConjStatus::Exact,
                upper: None,
                witness: None,
                direction: Some(dir.iter().copied().collect()),
            };
        }
    }
    let s: Vec<f64> = (&eig.eigenvectors * coords).iter().copied().collect();
    let sstar: Vec<f64> = (m * DVector::from_column_slice(&s)).iter().copied().collect();
    FitzEvaluation::exact(val, Some(PairedPoint::new(s, sstar)))
}

/// Seeded search for `inf <s - w, s* - w*>` over the graph: a graph sample,
/// the resolvent path `s + t s* = w + t w*` (on which the objective equals
/// `-t |s* - w*|^2`) over `t = 4^k`, then pattern search on the resolvent
/// parametrization around the best point.
pub fn shifted_pairing_infimum(
    s: &MonotoneOperator,
    w: &[f64],
    wstar: &[f64],
    opts: SearchOpts,
) -> Result<ShiftedPairingSearch> {
    s.pair().check(w)?;
    s.pair().check(wstar)?;
    let obj = |p: &PairedPoint| dot(&sub(&p.x, w), &sub(&p.xstar, wstar));
    let mut best: Option<(f64, PairedPoint)> = None;
    let mut evals = 0;
    let consider = |p: PairedPoint, best: &mut Option<(f64, PairedPoint)>| {
        let v = obj(&p);
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.0) {
            *best = Some((v, p));
        }
    };
    for p in s.graph_sample(opts.budget.max(1), opts.seed)?.points {
        evals += 1;
        consider(p, &mut best);
    }
    if matches!(s.kind(), OperatorKind::FiniteGraph { .. }) {
        let (value, witness) = best.expect("graphs are nonempty");
        return Ok(ShiftedPairingSearch {
            value,
            witness,
            evaluations: evals,
        });
    }
    for k in -10..=10 {
        let t = 4f64.powi(k);
        if let Ok(r) = s.resolvent_scaled(&axpy(w, t, wstar), t) {
            evals += 1;
            consider(r.point, &mut best);
        }
    }
    let (mut value, mut witness) = best.ok_or(Error::NoConvergence {
        iterations: evals,
        residual: f64::NAN,
    })?;
    // pattern search in z = s + s*
    let n = w.len();
    let mut z = add(&witness.x, &witness.xstar);
    let mut step = 0.5 * (1.0 + norm2(&z));
    let max_evals = evals + 60 * n.max(1) * 4;
    while step > 1e-9 * (1.0 + norm2(&z)) && evals < max_evals {
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut cand = z.clone();
                cand[i] += sign * step;
                evals += 1;
                if let Ok(r) = s.resolvent_scaled(&cand, 1.0) {
                    let v = obj(&r.point);
                    if v < value {
                        value = v;
                        witness = r.point;
                        z = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(ShiftedPairingSearch {
        value,
        witness,
        evaluations: evals,
    })
}

/// `phi_S*(y*, y**)`: exact by linear programming for finite graphs; for
/// subdifferential-type operators, the bracket
/// `f*(y*) + f(y**) <= phi* <= (LP over a graph sample)`, which closes to
/// the pairing on the graph of `d(f*)`.
pub fn phi_conj(s: &MonotoneOperator, ystar: &[f64], ystarstar: &[f64]) -> Result<FitzEvaluation> {
    phi_conj_with(s, ystar, ystarstar, SearchOpts::default())
}

pub fn phi_conj_with(
    s: &MonotoneOperator,
    ystar: &[f64],
    ystarstar: &[f64],
    opts: SearchOpts,
) -> Result<FitzEvaluation> {
    s.pair().check(ystar)?;
    s.pair().check(ystarstar)?;
    match s.kind() {
        OperatorKind::FiniteGraph { points } => Ok(finite_graph_phi_conj(points, ystar, ystarstar)),
        OperatorKind::Subdifferential { .. }
        | OperatorKind::NormalCone { .. }
        | OperatorKind::SupportSubdiff { .. } => {
            let pairing = dot(ystar, ystarstar);
            let lower = representative_upper(s, ystar, ystarstar)?
                .ok_or_else(|| Error::Unsupported("conjugate without closed form".into()))?;
            if lower <= pairing + 1e-12 * (1.0 + pairing.abs()) {
                return Ok(FitzEvaluation::exact(pairing, None));
            }
            let sample = s.graph_sample(opts.budget.max(1), opts.seed)?.points;
            let upper = finite_graph_phi_conj(&sample, ystar, ystarstar).value;
            Ok(FitzEvaluation {
                value: lower,
                status: ConjStatus::LowerBound,
                upper: Some(upper),
                witness: None,
                direction: None,
            })
        }
        _ => Err(Error::Unsupported(
            "Fitzpatrick conjugate needs a finite graph or a subdifferential".into(),
        )),
    }
}

/// `phi` of a finite graph is the max of the affine pieces
/// `(x, x*) -> <s_i, x*> + <x, s_i*> - <s_i, s_i*>`, so its conjugate at
/// `(y*, y**)` is `min sum l_i <s_i, s_i*>` over weights `l` in the simplex
/// with `sum l_i s_i* = y*` and `sum l_i s_i = y**`; infeasible means `+inf`.
fn finite_graph_phi_conj(points: &[PairedPoint], ystar: &[f64], ystarstar: &[f64]) -> FitzEvaluation {
    let n = ystar.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = points
        .iter()
        .map(|p| lp.add_var(p.inner(), (0.0, f64::INFINITY)))
        .collect();
    for j in 0..n {
        let row: Vec<_> = vars.iter().zip(points).map(|(&v, p)| (v, p.xstar[j])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, ystar[j]);
        let row: Vec<_> = vars.iter().zip(points).map(|(&v, p)| (v, p.x[j])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, ystarstar[j]);
    }
    let ones: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => {
            // heaviest weight as witness
            let (i, _) = vars
                .iter()
                .map(|&v| *sol.var_value(v))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            FitzEvaluation::exact(sol.objective(), Some(points[i].clone()))
        }
        Err(_) => FitzEvaluation::exact(f64::INFINITY, None),
    }
}

/// Membership of `(y*, y**)` in the Fitzpatrick extension through
/// `theta_S(y*, y**) <= <y*, y**>`: `In` on a certified upper bound within
/// `tol`, `Out` on a graph point pushing the sup beyond `tol`.
pub fn fitz_membership(s: &MonotoneOperator, ystar: &[f64], ystarstar: &[f64], tol: f64) -> Result<MembershipReport> {
    fitz_membership_with(s, ystar, ystarstar, tol, SearchOpts::default())
}

pub fn fitz_membership_with(
    s: &MonotoneOperator,
    ystar: &[f64],
    ystarstar: &[f64],
    tol: f64,
    opts: SearchOpts,
) -> Result<MembershipReport> {
    check_dim(ystar.len(), ystarstar.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let theta = theta_with(s, ystar, ystarstar, opts)?;
    let pairing = dot(ystar, ystarstar);
    let verdict = if theta.upper_bound() <= pairing + tol {
        Membership::In
    } else if theta.value > pairing + tol {
        Membership::Out
    } else {
        Membership::Unknown
    };
    Ok(MembershipReport {
        verdict,
        theta,
        pairing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ConvexFn;
    use crate::operators::{abs_subdiff, identity, interval};
    use crate::spaces::{DualPair, NormTag, Side};
    use crate::CompactConvexSet;
    use proptest::prelude::*;

    fn pp(x: &[f64], y: &[f64]) -> PairedPoint {
        PairedPoint::new(x.to_vec(), y.to_vec())
    }

    fn graph(points: &[(f64, f64)]) -> MonotoneOperator {
        MonotoneOperator::finite_graph(
            DualPair::euclidean(1),
            points.iter().map(|&(a, b)| pp(&[a], &[b])).collect(),
        )
        .unwrap()
    }

    fn half_square_op() -> MonotoneOperator {
        MonotoneOperator::subdifferential(DualPair::euclidean(1), ConvexFn::half_square(1)).unwrap()
    }

    #[test]
    fn phi_examples() {
        let g = graph(&[(0.0, 0.0), (1.0, 1.0)]);
        let v = phi(&g, &[1.0], &[1.0]).unwrap();
        assert_eq!((v.value, v.status), (1.0, ConjStatus::Exact));
        assert_eq!(phi(&g, &[0.0], &[0.0]).unwrap().value, 0.0);
        // identity: sup_t t x* + x t - t^2 = (x + x*)^2 / 4
        let id = phi(&identity(1), &[0.0], &[2.0]).unwrap();
        assert!((id.value - 1.0).abs() < 1e-12 && id.is_exact());
        let grid = (0..=4000)
            .map(|i| -10.0 + i as f64 * 0.005)
            .map(|t| 2.0 * t - t * t)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((grid - 1.0).abs() < 1e-4);
    }

    #[test]
    fn phi_conj_examples() {
        let g = graph(&[(0.0, 0.0)]);
        assert_eq!(phi_conj(&g, &[0.0], &[0.0]).unwrap().value, 0.0);
        assert_eq!(phi_conj(&g, &[0.5], &[0.0]).unwrap().value, f64::INFINITY);
        let g2 = graph(&[(0.0, 0.0), (1.0, 1.0)]);
        let v = phi_conj(&g2, &[1.0], &[1.0]).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        let q = phi_conj(&half_square_op(), &[2.0], &[2.0]).unwrap();
        assert_eq!((q.value, q.status), (4.0, ConjStatus::Exact));
        let off = phi_conj(&half_square_op(), &[1.0], &[2.0]).unwrap();
        assert_eq!(off.status, ConjStatus::LowerBound);
        assert!(off.value <= off.upper.unwrap() + 1e-9);
        assert!(off.value > 2.0);
    }

    #[test]
    fn theta_examples() {
        let g = graph(&[(0.0, 0.0)]);
        assert_eq!(theta(&g, &[3.0], &[-2.0]).unwrap().value, 0.0);
        let id = theta(&identity(1), &[1.0], &[3.0]).unwrap();
        assert!((id.value - 4.0).abs() < 1e-12);
        for s in [identity(1), abs_subdiff(), half_square_op()] {
            for z in [-2.0, 0.3, 1.7] {
                let p = s.resolvent(&[z]).unwrap().point;
                let v = theta(&s, &p.xstar, &p.x).unwrap();
                assert!((v.value - p.inner()).abs() < 1e-9, "{s:?} {p:?} {v:?}");
            }
        }
    }

    #[test]
    fn membership_examples() {
        let q = fitz_membership(&half_square_op(), &[1.0], &[1.0], 1e-9).unwrap();
        assert_eq!(q.verdict, Membership::In);
        let id = fitz_membership(&identity(1), &[1.0], &[2.0], 1e-9).unwrap();
        assert_eq!(id.verdict, Membership::Out);
        assert!((id.theta.value - 2.25).abs() < 1e-12);
        let nc = MonotoneOperator::normal_cone(DualPair::euclidean(1), interval(-1.0, 1.0)).unwrap();
        for p in nc.graph_sample(30, 4).unwrap().points {
            let r = fitz_membership(&nc, &p.xstar, &p.x, 1e-9).unwrap();
            assert_eq!(r.verdict, Membership::In, "{p:?}");
        }
        let out = fitz_membership(&nc, &[1.0], &[0.0], 1e-9).unwrap();
        assert_eq!(out.verdict, Membership::Out);
    }

    #[test]
    fn worked_extension_cases() {
        // d tau_K: (y*, y**) is in the extension iff y* in K and
        // <y*, y**> = sup <K, y**>
        let k = CompactConvexSet::boxed(&[-1.0, 0.0], &[1.0, 2.0], Side::Dual).unwrap();
        let s = MonotoneOperator::support_subdiff(DualPair::euclidean(2), k.clone()).unwrap();
        let probes = [
            ([1.0, 2.0], [1.0, 1.0]),
            ([0.0, 2.0], [0.0, 3.0]),
            ([0.5, 1.0], [1.0, 0.0]),
            ([2.0, 1.0], [1.0, 0.0]),
            ([-1.0, 0.0], [-2.0, -1.0]),
        ];
        for (ys, yss) in probes {
            let expect = k.contains(&ys, 1e-12).unwrap() && (dot(&ys, &yss) - k.support(&yss).unwrap()).abs() <= 1e-12;
            let got = fitz_membership(&s, &ys, &yss, 1e-9).unwrap().verdict;
            assert_eq!(got == Membership::In, expect, "{ys:?} {yss:?}");
            assert_ne!(got, Membership::Unknown);
        }
        // d I_K: (y*, y**) in the extension iff y** in K and
        // <y*, y**> = sup <K, y*>
        let sq = CompactConvexSet::boxed(&[-1.0, -1.0], &[1.0, 1.0], Side::Primal).unwrap();
        let n = MonotoneOperator::normal_cone(DualPair::euclidean(2), sq.clone()).unwrap();
        let probes = [
            ([2.0, 0.0], [1.0, 0.3]),
            ([0.0, 0.0], [0.5, 0.5]),
            ([1.0, 1.0], [1.0, 1.0]),
            ([1.0, 1.0], [1.0, 0.0]),
            ([0.0, 1.0], [2.0, 1.0]),
        ];
        for (ys, yss) in probes {
            let expect =
                sq.contains(&yss, 1e-12).unwrap() && (dot(&ys, &yss) - sq.support(&ys).unwrap()).abs() <= 1e-12;
            let got = fitz_membership(&n, &ys, &yss, 1e-9).unwrap().verdict;
            assert_eq!(got == Membership::In, expect, "{ys:?} {yss:?}");
            assert_ne!(got, Membership::Unknown);
        }
    }

    #[test]
    fn shift_and_inverse_transforms_match_direct_evaluation() {
        let pts: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 2.0), (-1.0, -0.5), (2.0, 2.5)];
        let g = graph(&pts);
        let dx = [0.3];
        let dxs = [-1.2];
        let shifted = MonotoneOperator::shift(g.clone(), dx.to_vec(), dxs.to_vec()).unwrap();
        let direct = graph(&pts.iter().map(|&(a, b)| (a - dx[0], b - dxs[0])).collect::<Vec<_>>());
        let inverse = MonotoneOperator::inverse(g.clone());
        let swapped = graph(&pts.iter().map(|&(a, b)| (b, a)).collect::<Vec<_>>());
        for (u, v) in [(0.5, 1.0), (-2.0, 0.7), (3.0, -1.0)] {
            let a = theta(&shifted, &[u], &[v]).unwrap().value;
            let b = theta(&direct, &[u], &[v]).unwrap().value;
            assert!((a - b).abs() < 1e-12);
            let a = theta(&inverse, &[u], &[v]).unwrap().value;
            let b = theta(&swapped, &[u], &[v]).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_phi_matches_sampled_sup() {
        let p = DualPair::euclidean(2);
        let m = MonotoneOperator::linear(p, vec![vec![1.0, 2.0], vec![-2.0, 0.5]]).unwrap();
        let v = phi(&m, &[0.3, -0.4], &[1.0, 0.2]).unwrap();
        assert!(v.is_exact());
        let w = v.witness.clone().unwrap();
        let at = dot(&w.x, &[1.0, 0.2]) + dot(&[0.3, -0.4], &w.xstar) - w.inner();
        assert!((at - v.value).abs() < 1e-10);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let s = [-3.0 + 0.03 * i as f64, -3.0 + 0.03 * j as f64];
                let ms = m.apply_linear(&s).unwrap();
                best = best.max(dot(&s, &[1.0, 0.2]) + dot(&[0.3, -0.4], &ms) - dot(&s, &ms));
            }
        }
        assert!(best <= v.value + 1e-12 && v.value - best < 1e-3);
        // skew map: phi is +inf off the range of M + M'
        let skew = MonotoneOperator::linear(DualPair::euclidean(2), vec![vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let inf = phi(&skew, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(inf.value, f64::INFINITY);
        assert!(inf.direction.is_some());
    }

    #[test]
    fn subdifferential_theta_brackets_hold() {
        let f = ConvexFn::norm(1.0, NormTag::L1).unwrap();
        let s = MonotoneOperator::subdifferential(DualPair::euclidean(2), f.clone()).unwrap();
        for (ws, wss) in [
            ([0.5, -0.2], [1.0, 0.0]),
            ([2.0, 0.0], [0.0, 1.0]),
            ([1.0, 1.0], [3.0, -1.0]),
        ] {
            let t = theta(&s, &ws, &wss).unwrap();
            assert!(t.value <= t.upper_bound() + 1e-9);
            assert!(t.value >= dot(&ws, &wss) - 1e-9);
            let fy = f.eval(&wss).unwrap() + f.conjugate(&ws).unwrap().value;
            assert!(t.upper_bound() <= fy);
        }
    }

    fn graphs() -> Vec<MonotoneOperator> {
        vec![
            graph(&[(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]),
            graph(&[(-1.0, -1.0), (0.0, 0.5), (1.0, 0.5), (2.0, 4.0)]),
            MonotoneOperator::finite_graph(
                DualPair::euclidean(2),
                vec![
                    pp(&[0.0, 0.0], &[0.0, 0.0]),
                    pp(&[1.0, 0.0], &[1.0, 0.5]),
                    pp(&[0.0, 1.0], &[0.5, 2.0]),
                ],
            )
            .unwrap(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn swap_identity_and_conjugate_chain(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
            for g in graphs() {
                let n = g.dim();
                let (x, xs) = if n == 1 { (vec![a], vec![b]) } else { (vec![a, c], vec![b, d]) };
                let ph = phi(&g, &x, &xs).unwrap().value;
                prop_assert_eq!(ph, theta(&g, &xs, &x).unwrap().value);
                // phi < pairing exactly when the probe is monotonically
                // related to every graph point
                let related = g
                    .graph_sample(1, 0)
                    .unwrap()
                    .points
                    .iter()
                    .all(|p| dot(&sub(&p.x, &x), &sub(&p.xstar, &xs)) > 0.0);
                prop_assert_eq!(ph < dot(&x, &xs), related);
                // theta*(w**, w*) = phi*(w*, w**) in finite dimensions, and
                // phi*(w*, w**) >= theta(w*, w**)
                let pc = phi_conj(&g, &xs, &x).unwrap().value;
                prop_assert!(pc >= theta(&g, &xs, &x).unwrap().value - 1e-8);
            }
        }
    }
}
