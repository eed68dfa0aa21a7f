//! Sample-based tests of local maximality classes: windowed maximality on
//! the domain side and on the range side, the negative-infimum property,
//! strong maximality against fuzz sets, and the sequential test for the
//! extension graph.
//!
//! Premise checks are one-sided: "holds" means no sampled counterexample,
//! and every verdict records the budget and seed that produced it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_sets::gaussian;
use crate::error::{check_dim, Error, Result};
use crate::fitzpatrick::{shifted_pairing_infimum, theta_with, Membership, SearchOpts};
use crate::functions::Tri;
use crate::linalg::{axpy, dot, neg, norm2, sub};
use crate::operators::MonotoneOperator;
use crate::spaces::{NormTag, Side};
use crate::{CompactConvexSet, PairedPoint};

/// Membership tolerance of the conclusion tests.
pub const MEMBER_TOL: f64 = 1e-7;
/// Residual at which a strong-maximality search counts as successful.
pub const SEARCH_TOL: f64 = 1e-6;

/// The open interior of a compact convex set with nonempty interior, on the
/// domain side (primal) or the range side (dual).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWindow {
    region: CompactConvexSet,
}

impl LocalWindow {
    pub fn new(region: CompactConvexSet) -> Result<Self> {
        if !region.has_interior() {
            return Err(Error::InvalidArgument("window region has empty interior".into()));
        }
        Ok(LocalWindow { region })
    }

    pub fn open_interval(lo: f64, hi: f64, side: Side) -> Result<Self> {
        Self::new(CompactConvexSet::interval(lo, hi, side)?)
    }

    pub fn open_ball(center: Vec<f64>, radius: f64, norm: NormTag, side: Side) -> Result<Self> {
        Self::new(CompactConvexSet::ball(center, radius, norm, side)?)
    }

    pub fn region(&self) -> &CompactConvexSet {
        &self.region
    }

    pub fn side(&self) -> Side {
        self.region.side()
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        self.region.interior_contains(y)
    }
}

/// Worst sampled value of a premise quantity and where it occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct PremiseWitness {
    pub point: PairedPoint,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierVerdict {
    pub premise_holds: bool,
    pub worst: Option<PremiseWitness>,
    /// Graph samples that fell in the window.
    pub samples_in_window: usize,
    pub conclusion: Membership,
    pub consistent_with_class: bool,
    pub budget: usize,
    pub seed: u64,
}

/// Premise tolerance for `<s - w, s* - w*> >= 0`, scaled with the operands.
fn premise_tol(p: &PairedPoint, w: &[f64], wstar: &[f64]) -> f64 {
    1e-10 * (1.0 + norm2(&p.x) + norm2(w)) * (1.0 + norm2(&p.xstar) + norm2(wstar))
}

fn conclusion(s: &MonotoneOperator, w: &[f64], wstar: &[f64]) -> Result<Membership> {
    Ok(match s.contains(w, wstar, MEMBER_TOL)? {
        Tri::Yes => Membership::In,
        Tri::No => Membership::Out,
        Tri::Unknown => Membership::Unknown,
    })
}

/// Graph points for premise tests: a seeded sample, the resolvent path
/// `s + t s* = w + t w*` (on which `<s - w, s* - w*> = -t |s* - w*|^2`)
/// and resolvent images aimed at random window points.
fn premise_points(
    s: &MonotoneOperator,
    window: Option<&LocalWindow>,
    w: &[f64],
    wstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<Vec<PairedPoint>> {
    let mut pts = s.graph_sample(budget.max(1), seed)?.points;
    for k in -8..=8 {
        let t = 4f64.powi(k);
        if let Ok(r) = s.resolvent_scaled(&axpy(w, t, wstar), t) {
            pts.push(r.point);
        }
    }
    if let Some(win) = window {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
        let n = s.dim();
        for i in 0..budget {
            let y = win.region().sample(&mut rng);
            let v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
            let t = [0.1, 1.0, 10.0][i % 3];
            // aim s (primal window) or s* (dual window) at y
            let z = match win.side() {
                Side::Primal => axpy(&y, t, &v),
                Side::Dual => axpy(&v, t, &y),
            };
            if let Ok(r) = s.resolvent_scaled(&z, t) {
                pts.push(r.point);
            }
        }
    }
    Ok(pts)
}

fn windowed_check(
    s: &MonotoneOperator,
    window: &LocalWindow,
    w: &[f64],
    wstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<ClassifierVerdict> {
    s.pair().check(w)?;
    s.pair().check(wstar)?;
    check_dim(s.dim(), window.region().dim())?;
    let center = match window.side() {
        Side::Primal => w,
        Side::Dual => wstar,
    };
    if !window.contains(center)? {
        return Err(Error::InvalidArgument("the probe must lie in the open window".into()));
    }
    let mut in_window = 0;
    let mut worst: Option<PremiseWitness> = None;
    let mut violated = false;
    for p in premise_points(s, Some(window), w, wstar, budget, seed)? {
        let key = match window.side() {
            Side::Primal => &p.x,
            Side::Dual => &p.xstar,
        };
        if !window.contains(key)? {
            continue;
        }
        in_window += 1;
        let value = dot(&sub(&p.x, w), &sub(&p.xstar, wstar));
        if value < -premise_tol(&p, w, wstar) {
            violated = true;
        }
        if worst.as_ref().is_none_or(|b| value < b.value) {
            worst = Some(PremiseWitness { point: p, value });
        }
    }
    if in_window == 0 {
        return Err(Error::VacuousPremise("no graph sample landed in the window".into()));
    }
    let premise_holds = !violated;
    let conclusion = conclusion(s, w, wstar)?;
    Ok(ClassifierVerdict {
        premise_holds,
        worst,
        samples_in_window: in_window,
        consistent_with_class: !(premise_holds && conclusion == Membership::Out),
        conclusion,
        budget,
        seed,
    })
}

/// Domain-side windowed maximality: if `<s - w, s* - w*> >= 0` for all graph
/// points with `s` in the window, then `(w, w*)` should be in the graph.
pub fn check_fpv(
    s: &MonotoneOperator,
    window: &LocalWindow,
    w: &[f64],
    wstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<ClassifierVerdict> {
    if window.side() != Side::Primal {
        return Err(Error::InvalidArgument("domain-side window must be primal".into()));
    }
    windowed_check(s, window, w, wstar, budget, seed)
}

/// Range-side windowed maximality: the window constrains `s*`.
pub fn check_fp(
    s: &MonotoneOperator,
    window: &LocalWindow,
    w: &[f64],
    wstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<ClassifierVerdict> {
    if window.side() != Side::Dual {
        return Err(Error::InvalidArgument("range-side window must be dual".into()));
    }
    windowed_check(s, window, w, wstar, budget, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiReport {
    /// Best estimate of `inf <s* - w*, s - w**>` over the graph; exact on
    /// finite graphs.
    pub value: f64,
    pub witness: PairedPoint,
    /// `<w*, w**> - theta(w*, w**)` when theta is exact.
    pub cross_check: Option<f64>,
    pub evaluations: usize,
}

/// `inf <s* - w*, s - w**>` over the graph.
pub fn ni_infimum(
    s: &MonotoneOperator,
    wstar: &[f64],
    wstarstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<NiReport> {
    let opts = SearchOpts { budget, seed };
    let search = shifted_pairing_infimum(s, wstarstar, wstar, opts)?;
    let th = theta_with(s, wstar, wstarstar, opts)?;
    let cross_check = th.is_exact().then(|| dot(wstar, wstarstar) - th.value);
    Ok(NiReport {
        value: search.value,
        witness: search.witness,
        cross_check,
        evaluations: search.evaluations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongMaxVerdict {
    pub premise_holds: bool,
    pub worst: Option<PremiseWitness>,
    /// The point of the set found on the graph, when the search succeeded.
    pub found: Option<Vec<f64>>,
    /// Membership residual at the best point of the set.
    pub residual: f64,
    pub budget: usize,
    pub seed: u64,
}

/// If `max <s - w, s* - Wt> >= 0` for every graph point, searches for
/// `w*` in `Wt` with `(w, w*)` in the graph.
pub fn strong_max_dual(
    s: &MonotoneOperator,
    w: &[f64],
    wt: &CompactConvexSet,
    budget: usize,
    seed: u64,
) -> Result<StrongMaxVerdict> {
    s.pair().check(w)?;
    check_dim(s.dim(), wt.dim())?;
    let anchors = wt.anchor_points();
    let mut pts = Vec::new();
    for a in &anchors {
        pts.extend(premise_points(s, None, w, a, budget, seed)?);
    }
    let mut worst: Option<PremiseWitness> = None;
    let mut violated = false;
    for p in pts {
        let a = sub(&p.x, w);
        // max over wt of <a, s* - wt> = <a, s*> + sigma_Wt(-a)
        let value = dot(&a, &p.xstar) + wt.support(&neg(&a))?;
        let tol = 1e-10 * (1.0 + norm2(&p.x) + norm2(w)) * (1.0 + norm2(&p.xstar) + wt.support(&p.xstar)?.abs());
        if value < -tol {
            violated = true;
        }
        if worst.as_ref().is_none_or(|b| value < b.value) {
            worst = Some(PremiseWitness { point: p, value });
        }
    }
    let mut verdict = StrongMaxVerdict {
        premise_holds: !violated,
        worst,
        found: None,
        residual: f64::INFINITY,
        budget,
        seed,
    };
    if violated {
        return Ok(verdict);
    }
    let (best, residual) = search_set(wt, &anchors, |c| s.membership_residual(w, c))?;
    verdict.residual = residual;
    if residual <= SEARCH_TOL {
        verdict.found = Some(best);
    }
    Ok(verdict)
}

/// If `max <s - W, s* - w*> >= 0` for every graph point, searches for `w`
/// in `W` with `(w, w*)` in the graph; the dual-side test on the inverse.
pub fn strong_max_primal(
    s: &MonotoneOperator,
    w_set: &CompactConvexSet,
    wstar: &[f64],
    budget: usize,
    seed: u64,
) -> Result<StrongMaxVerdict> {
    let inv = MonotoneOperator::inverse(s.clone());
    let mut v = strong_max_dual(&inv, wstar, &w_set.clone().with_side(Side::Dual), budget, seed)?;
    if let Some(w) = v.worst.as_mut() {
        w.point = w.point.swapped();
    }
    Ok(v)
}

/// Minimizes `f` over the set: the best of the anchors and a few seeded
/// points, then projected coordinate pattern search.
fn search_set(
    set: &CompactConvexSet,
    anchors: &[Vec<f64>],
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cands: Vec<Vec<f64>> = anchors.to_vec();
    cands.extend((0..16).map(|_| set.sample(&mut rng)));
    let mut best = (cands[0].clone(), f64::INFINITY);
    for c in cands {
        let v = f(&c)?;
        if v < best.1 {
            best = (c, v);
        }
    }
    let diam = anchors
        .iter()
        .flat_map(|a| anchors.iter().map(move |b| norm2(&sub(a, b))))
        .fold(0.0, f64::max);
    let mut step = 0.25 * diam.max(set.support(&best.0)?.abs().min(1.0)).max(1e-3);
    let mut evals = 0;
    while step > 1e-12 && best.1 > 0.0 && evals < 20_000 {
        let mut improved = false;
        for i in 0..best.0.len() {
            for sign in [1.0, -1.0] {
                let mut c = best.0.clone();
                c[i] += sign * step;
                let c = set.project(&c)?;
                let v = f(&c)?;
                evals += 1;
                if v < best.1 {
                    best = (c, v);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum SeqVerdict {
    /// Both limits hold on the final quarter of the sequence.
    Consistent {
        pairing_limit: f64,
        target: f64,
    },
    Counterexample {
        index: usize,
        reason: String,
    },
}

/// Minimum sequence length for the tail criteria.
pub const SEQ_MIN_LEN: usize = 8;

/// Checks `<s_n - w, s_n* - w*> -> <z* - w*, z** - w>` and `|s_n* - z*| -> 0`
/// on the final quarter of a graph sequence: every tail term must be within
/// `tol` of its limit.
pub fn seqchar_check(
    s: &MonotoneOperator,
    zstar: &[f64],
    zstarstar: &[f64],
    sequence: &[PairedPoint],
    w: &[f64],
    wstar: &[f64],
    tol: f64,
) -> Result<SeqVerdict> {
    let pair = s.pair();
    for v in [zstar, zstarstar, w, wstar] {
        pair.check(v)?;
    }
    if sequence.len() < SEQ_MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "sequence needs at least {SEQ_MIN_LEN} points, got {}",
            sequence.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    for (i, p) in sequence.iter().enumerate() {
        p.check(pair)?;
        if s.contains(&p.x, &p.xstar, tol)? == Tri::No {
            return Err(Error::InvalidArgument(format!(
                "sequence point {i} is not on the graph"
            )));
        }
    }
    let target = dot(&sub(zstar, wstar), &sub(zstarstar, w));
    let start = sequence.len() - sequence.len() / 4;
    let mut last = f64::NAN;
    for (i, p) in sequence.iter().enumerate().skip(start) {
        let a = dot(&sub(&p.x, w), &sub(&p.xstar, wstar));
        last = a;
        if (a - target).abs() > tol * (1.0 + target.abs()) {
            return Ok(SeqVerdict::Counterexample {
                index: i,
                reason: format!("pairing {a} is not within tol of {target}"),
            });
        }
        let d = pair.dual_norm().eval(&sub(&p.xstar, zstar));
        if d > tol {
            return Ok(SeqVerdict::Counterexample {
                index: i,
                reason: format!("dual distance {d} to z* exceeds tol"),
            });
        }
    }
    Ok(SeqVerdict::Consistent {
        pairing_limit: last,
        target,
    })
}

/// A point of `D(S)` inside `int D(T)` (`Side::Primal`) or of `R(S)` inside
/// `int R(T)` (`Side::Dual`), searched among candidate points of both
/// operators.
pub fn interior_witness(
    s: &MonotoneOperator,
    t: &MonotoneOperator,
    side: Side,
    budget: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    check_dim(s.dim(), t.dim())?;
    let mut cands = s.side_candidates(side, budget, seed)?;
    cands.extend(t.side_candidates(side, budget, seed)?);
    for c in cands {
        if s.side_contains(side, &c)? == Tri::Yes && t.side_interior_contains(side, &c)? == Tri::Yes {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ConvexFn;
    use crate::operators::{abs_subdiff, identity, interval};
    use crate::spaces::DualPair;
    use proptest::prelude::*;

    fn pp(x: &[f64], y: &[f64]) -> PairedPoint {
        PairedPoint::new(x.to_vec(), y.to_vec())
    }

    fn origin_graph() -> MonotoneOperator {
        MonotoneOperator::finite_graph(DualPair::euclidean(1), vec![PairedPoint::zero(1)]).unwrap()
    }

    fn box_cone() -> MonotoneOperator {
        MonotoneOperator::normal_cone(DualPair::euclidean(1), interval(-1.0, 1.0)).unwrap()
    }

    fn primal_window(lo: f64, hi: f64) -> LocalWindow {
        LocalWindow::open_interval(lo, hi, Side::Primal).unwrap()
    }

    fn dual_window(lo: f64, hi: f64) -> LocalWindow {
        LocalWindow::open_interval(lo, hi, Side::Dual).unwrap()
    }

    #[test]
    fn fpv_examples() {
        let v = check_fpv(&abs_subdiff(), &primal_window(-1.0, 1.0), &[0.0], &[0.5], 64, 1).unwrap();
        assert!(v.premise_holds && v.conclusion == Membership::In && v.consistent_with_class);

        let v = check_fpv(&abs_subdiff(), &primal_window(-1.0, 1.0), &[0.5], &[0.9], 64, 1).unwrap();
        assert!(!v.premise_holds);
        let worst = v.worst.unwrap();
        assert!(worst.value < 0.0 && worst.point.x[0] < 0.5, "{worst:?}");
        assert!(v.consistent_with_class);

        let v = check_fpv(&origin_graph(), &primal_window(-1.0, 1.0), &[0.0], &[0.0], 8, 0).unwrap();
        assert!(v.premise_holds && v.conclusion == Membership::In);
    }

    #[test]
    fn fp_examples() {
        let v = check_fp(&box_cone(), &dual_window(-2.0, 2.0), &[1.0], &[1.0], 64, 2).unwrap();
        assert!(v.premise_holds && v.conclusion == Membership::In, "{v:?}");

        let v = check_fp(&identity(1), &dual_window(0.0, 2.0), &[1.0], &[0.5], 64, 2).unwrap();
        assert!(!v.premise_holds);
        let p = v.worst.unwrap().point;
        assert!(p.xstar[0] > 0.5 && p.xstar[0] < 1.0);

        let v = check_fp(&identity(1), &dual_window(0.9, 1.1), &[1.0], &[1.0], 16, 2).unwrap();
        assert!(v.premise_holds && v.conclusion == Membership::In);
    }

    #[test]
    fn window_preconditions() {
        assert!(LocalWindow::open_interval(1.0, 1.0, Side::Primal).is_err());
        let e = check_fpv(&abs_subdiff(), &primal_window(-1.0, 1.0), &[2.0], &[1.0], 8, 0);
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
        let e = check_fpv(&origin_graph(), &primal_window(1.0, 2.0), &[1.5], &[0.0], 8, 0);
        assert!(matches!(e, Err(Error::VacuousPremise(_))));
    }

    #[test]
    fn ni_examples() {
        let r = ni_infimum(&identity(1), &[0.0], &[0.0], 64, 0).unwrap();
        assert!(r.value.abs() < 1e-12);
        let r = ni_infimum(&identity(1), &[2.0], &[0.0], 64, 0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-9, "{r:?}");
        let r = ni_infimum(&origin_graph(), &[1.0], &[1.0], 8, 0).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.cross_check, Some(1.0));
    }

    #[test]
    fn strong_max_dual_examples() {
        let v = strong_max_dual(
            &abs_subdiff(),
            &[0.0],
            &CompactConvexSet::interval(0.2, 0.4, Side::Dual).unwrap(),
            64,
            0,
        )
        .unwrap();
        assert!(v.premise_holds);
        let f = v.found.unwrap();
        assert!((0.2..=0.4).contains(&f[0]));

        let one = CompactConvexSet::singleton(vec![1.0], Side::Dual).unwrap();
        let v = strong_max_dual(&identity(1), &[1.0], &one, 64, 0).unwrap();
        assert_eq!(v.found, Some(vec![1.0]));

        let v = strong_max_dual(
            &identity(1),
            &[0.0],
            &CompactConvexSet::interval(1.0, 2.0, Side::Dual).unwrap(),
            64,
            0,
        )
        .unwrap();
        assert!(!v.premise_holds && v.found.is_none());
        let p = v.worst.unwrap().point;
        assert!(p.x[0] > 0.0 && p.x[0] < 1.0);
    }

    #[test]
    fn strong_max_primal_examples() {
        let v = strong_max_primal(&box_cone(), &interval(-1.0, 1.0), &[5.0], 64, 0).unwrap();
        assert!(v.premise_holds);
        assert!((v.found.unwrap()[0] - 1.0).abs() < 1e-6);

        let two = CompactConvexSet::singleton(vec![2.0], Side::Primal).unwrap();
        let v = strong_max_primal(&identity(1), &two, &[2.0], 64, 0).unwrap();
        assert_eq!(v.found, Some(vec![2.0]));

        let v = strong_max_primal(&identity(1), &interval(-1.0, 1.0), &[3.0], 64, 0).unwrap();
        assert!(!v.premise_holds);
        let p = v.worst.unwrap().point;
        assert!(p.x[0] > 1.0 && p.x[0] < 3.0, "{p:?}");
    }

    #[test]
    fn seqchar_examples() {
        let constant = vec![pp(&[1.0], &[1.0]); 8];
        let v = seqchar_check(&identity(1), &[1.0], &[1.0], &constant, &[0.0], &[0.0], 1e-9).unwrap();
        assert!(matches!(v, SeqVerdict::Consistent { .. }));

        let ray: Vec<_> = (1..=4000).map(|n| pp(&[2.0 - 1.0 / n as f64], &[1.0])).collect();
        let v = seqchar_check(&abs_subdiff(), &[1.0], &[2.0], &ray, &[0.0], &[0.0], 1e-3).unwrap();
        assert!(matches!(v, SeqVerdict::Consistent { target, .. } if target == 2.0));

        let drift: Vec<_> = (1..=40).map(|n| pp(&[n as f64], &[n as f64])).collect();
        let v = seqchar_check(&identity(1), &[1.0], &[1.0], &drift, &[0.0], &[0.0], 1e-6).unwrap();
        assert!(matches!(v, SeqVerdict::Counterexample { index: 30, .. }), "{v:?}");

        assert!(seqchar_check(&identity(1), &[1.0], &[1.0], &constant[..7], &[0.0], &[0.0], 1e-9).is_err());
        let off = vec![pp(&[1.0], &[2.0]); 8];
        assert!(seqchar_check(&identity(1), &[1.0], &[1.0], &off, &[0.0], &[0.0], 1e-9).is_err());
    }

    #[test]
    fn interior_witnesses() {
        let w = interior_witness(&abs_subdiff(), &box_cone(), Side::Primal, 16, 0).unwrap();
        assert!(w.unwrap()[0].abs() < 1.0);
        let far = MonotoneOperator::normal_cone(DualPair::euclidean(1), interval(3.0, 4.0)).unwrap();
        assert_eq!(interior_witness(&box_cone(), &far, Side::Primal, 16, 0).unwrap(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fpv_never_contradicts_on_subdifferentials(c in -1.0f64..1.0, r in 0.2f64..2.0, ws in -3.0f64..3.0, seed in 0u64..1000) {
            let f = ConvexFn::sum(ConvexFn::norm(1.0, NormTag::L2).unwrap(), ConvexFn::half_square(1)).unwrap();
            let s = MonotoneOperator::subdifferential(DualPair::euclidean(1), f).unwrap();
            let win = primal_window(c - r, c + r);
            let v = check_fpv(&s, &win, &[c], &[ws], 32, seed).unwrap();
            prop_assert!(v.consistent_with_class);
        }

        #[test]
        fn ni_cross_check_on_finite_graphs(u in -2.0f64..2.0, v in -2.0f64..2.0) {
            let g = MonotoneOperator::finite_graph(
                DualPair::euclidean(1),
                vec![pp(&[0.0], &[0.0]), pp(&[1.0], &[2.0]), pp(&[-1.0], &[-0.5])],
            ).unwrap();
            let r = ni_infimum(&g, &[u], &[v], 8, 0).unwrap();
            prop_assert!((r.value - r.cross_check.unwrap()).abs() <= 1e-8);
        }
    }
}
