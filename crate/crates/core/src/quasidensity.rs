//! The quasidensity gap
//! `inf_G(S) 1/2 |s - x|^2 + 1/2 |s* - x*|^2 + <s - x, s* - x*>`,
//! its Euclidean resolvent oracle and the fuzzy variants in which one
//! component of the target is replaced by a compact convex set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex_sets::gaussian;
use crate::error::{Error, Result};
use crate::linalg::{add, axpy, dist2, dot, norm2, scale, sub};
use crate::operators::{MonotoneOperator, OperatorKind};
use crate::spaces::{DualPair, Side};
use crate::{CompactConvexSet, PairedPoint};

/// Step cap of one descent run.
pub const DESCENT_MAX_STEPS: usize = 100_000;
/// Steps without improvement that end a descent run.
pub const DESCENT_STALL: usize = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapStatus {
    Exact,
    UpperBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Enumeration,
    Resolvent,
    SubgradientDescent,
    /// Pattern search over resolvent-parametrized graph points.
    LocalSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapQuery {
    pub target: PairedPoint,
    pub dual_fuzz: Option<CompactConvexSet>,
    pub primal_fuzz: Option<CompactConvexSet>,
    pub eta: f64,
}

impl GapQuery {
    pub fn at(target: PairedPoint, eta: f64) -> Self {
        GapQuery {
            target,
            dual_fuzz: None,
            primal_fuzz: None,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dual_fuzz.is_some() && self.primal_fuzz.is_some() {
            return Err(Error::InvalidArgument("at most one fuzz set may be given".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub restarts: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    /// Objective at `witness`: the infimum when exact, otherwise an upper
    /// bound on it.
    pub value: f64,
    pub witness: PairedPoint,
    pub status: GapStatus,
    pub method: GapMethod,
    pub stats: SolverStats,
}

/// Effort and reproducibility knobs for the searches behind `gap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapOptions {
    pub seed: u64,
    pub budget: usize,
    /// Random restarts on top of the deterministic starting points.
    pub restarts: usize,
    pub max_steps: usize,
    /// Force a method instead of the default dispatch.
    pub method: Option<GapMethod>,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            seed: 0,
            budget: 128,
            restarts: 4,
            max_steps: DESCENT_MAX_STEPS,
            method: None,
        }
    }
}

/// `1/2 |s - x|^2 + 1/2 |s* - x*|_*^2 + <s - x, s* - x*>` in the pair's norms.
pub fn r_objective(pair: &DualPair, s: &PairedPoint, target: &PairedPoint) -> f64 {
    let a = sub(&s.x, &target.x);
    let b = sub(&s.xstar, &target.xstar);
    let na = pair.primal_norm().eval(&a);
    let nb = pair.dual_norm().eval(&b);
    0.5 * na * na + 0.5 * nb * nb + dot(&a, &b)
}

/// The quasidensity gap at `q.target`; exact by enumeration on finite
/// graphs and by the resolvent on Euclidean pairs, an upper bound from
/// descent or local search otherwise.
pub fn gap(s: &MonotoneOperator, q: &GapQuery) -> Result<GapReport> {
    gap_with(s, q, &GapOptions::default())
}

pub fn gap_with(s: &MonotoneOperator, q: &GapQuery, opts: &GapOptions) -> Result<GapReport> {
    q.validate()?;
    if q.dual_fuzz.is_some() || q.primal_fuzz.is_some() {
        return Err(Error::InvalidArgument(
            "fuzz sets go through fuzzy_gap_dual / fuzzy_gap_primal".into(),
        ));
    }
    q.target.check(s.pair())?;
    let pair = s.pair();
    let method = opts.method.unwrap_or(match s.kind() {
        OperatorKind::FiniteGraph { .. } => GapMethod::Enumeration,
        _ if pair.is_euclidean() => GapMethod::Resolvent,
        OperatorKind::Linear { .. } => GapMethod::SubgradientDescent,
        _ => GapMethod::LocalSearch,
    });
    let target = &q.target;
    match method {
        GapMethod::Enumeration => {
            let OperatorKind::FiniteGraph { points } = s.kind() else {
                return Err(Error::Unsupported("enumeration needs a finite graph".into()));
            };
            let (i, value) = argmin(points.iter().map(|p| r_objective(pair, p, target)));
            Ok(GapReport {
                value,
                witness: points[i].clone(),
                status: GapStatus::Exact,
                method,
                stats: SolverStats {
                    evaluations: points.len(),
                    ..Default::default()
                },
            })
        }
        GapMethod::Resolvent => {
            let r = s.resolvent(&add(&target.x, &target.xstar))?;
            Ok(GapReport {
                value: r_objective(pair, &r.point, target),
                status: if r.residual == 0.0 || is_finite_graph(s) {
                    GapStatus::Exact
                } else {
                    GapStatus::UpperBound
                },
                witness: r.point,
                method,
                stats: SolverStats {
                    evaluations: 1,
                    ..Default::default()
                },
            })
        }
        GapMethod::SubgradientDescent => {
            if s.apply_linear(&target.x).is_none() {
                return Err(Error::Unsupported("descent runs on linear maps".into()));
            }
            linear_descent(s, target, opts)
        }
        GapMethod::LocalSearch => {
            let obj = |p: &PairedPoint| r_objective(pair, p, target);
            let mut starts = vec![add(&target.x, &target.xstar)];
            starts.push(target.x.clone());
            graph_local_search(s, &obj, starts, opts)
        }
    }
}

fn is_finite_graph(s: &MonotoneOperator) -> bool {
    matches!(s.kind(), OperatorKind::FiniteGraph { .. })
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

/// `1/2 |(s + s*) - (x + x*)|_2^2` at the Euclidean resolvent of `x + x*`.
pub fn gap_euclidean_oracle(s: &MonotoneOperator, target: &PairedPoint) -> Result<GapReport> {
    target.check(s.pair())?;
    let z = add(&target.x, &target.xstar);
    let r = s.resolvent(&z)?;
    let d = dist2(&add(&r.point.x, &r.point.xstar), &z);
    Ok(GapReport {
        value: 0.5 * d * d,
        status: if r.residual == 0.0 || is_finite_graph(s) {
            GapStatus::Exact
        } else {
            GapStatus::UpperBound
        },
        witness: r.point,
        method: GapMethod::Resolvent,
        stats: SolverStats {
            evaluations: 1,
            ..Default::default()
        },
    })
}

/// Multi-start normalized subgradient descent on
/// `s -> r((s, Ms), target)` with steps `c / sqrt(k)`, followed by a
/// coordinate pattern-search polish of the best point.
fn linear_descent(s: &MonotoneOperator, target: &PairedPoint, opts: &GapOptions) -> Result<GapReport> {
    let pair = s.pair();
    let n = pair.dim();
    let m = |v: &[f64]| s.apply_linear(v).expect("linear");
    let mt = transpose_apply(s);
    let value_at = |v: &[f64]| r_objective(pair, &PairedPoint::new(v.to_vec(), m(v)), target);
    let subgrad = |v: &[f64]| {
        let a = sub(v, &target.x);
        let b = sub(&m(v), &target.xstar);
        let ja = pair.primal_norm().duality_map(&a);
        let jb = pair.dual_norm().duality_map(&b);
        // d/ds of the three terms: J(a) + M'J*(b) + b + M'a
        add(&add(&ja, &mt(&jb)), &add(&b, &mt(&a)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale_hint = 1.0 + norm2(&target.x) + norm2(&target.xstar);
    let mut starts = vec![vec![0.0; n], target.x.clone()];
    if let Ok(r) = s.resolvent_scaled(&add(&target.x, &target.xstar), 1.0) {
        starts.push(r.point.x);
    }
    for _ in 0..opts.restarts {
        starts.push((0..n).map(|_| scale_hint * gaussian(&mut rng)).collect());
    }

    let mut stats = SolverStats::default();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for start in starts {
        stats.restarts += 1;
        let mut v = start;
        let mut local = (value_at(&v), v.clone());
        let c = 0.5 * scale_hint;
        let mut since = 0;
        for k in 1..=opts.max_steps {
            stats.steps += 1;
            let g = subgrad(&v);
            let gn = norm2(&g);
            if gn == 0.0 {
                break;
            }
            v = axpy(&v, -c / (k as f64).sqrt() / gn, &g);
            let val = value_at(&v);
            if val < local.0 {
                local = (val, v.clone());
                since = 0;
            } else {
                since += 1;
                if since >= DESCENT_STALL {
                    break;
                }
            }
        }
        if local.0 < best.0 {
            best = local;
        }
    }
    let (value, v, evals) = pattern_polish(&value_at, best.1, scale_hint);
    stats.evaluations += evals;
    let witness = PairedPoint::new(v.clone(), m(&v));
    Ok(GapReport {
        value,
        witness,
        status: GapStatus::UpperBound,
        method: GapMethod::SubgradientDescent,
        stats,
    })
}

fn transpose_apply(s: &MonotoneOperator) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |v: &[f64]| match s.kind() {
        OperatorKind::Linear { matrix } => (matrix.transpose() * nalgebra::DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect(),
        _ => unreachable!("linear only"),
    }
}

/// Coordinate pattern search with step halving down to `1e-13` relative.
fn pattern_polish(f: &dyn Fn(&[f64]) -> f64, start: Vec<f64>, scale_hint: f64) -> (f64, Vec<f64>, usize) {
    let mut v = start;
    let mut val = f(&v);
    let mut evals = 1;
    let mut step = 0.1 * scale_hint;
    while step > 1e-13 * (1.0 + norm2(&v)) && evals < 200_000 {
        let mut improved = false;
        for i in 0..v.len() {
            for sign in [1.0, -1.0] {
                let mut cand = v.clone();
                cand[i] += sign * step;
                let cv = f(&cand);
                evals += 1;
                if cv < val {
                    val = cv;
                    v = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (val, v, evals)
}

/// Minimizes `obj` over graph points: a seeded graph sample, the given
/// resolvent starting points `z` at several steps, then pattern search on
/// `z -> J(z)` around the best.
fn graph_local_search(
    s: &MonotoneOperator,
    obj: &dyn Fn(&PairedPoint) -> f64,
    starts: Vec<Vec<f64>>,
    opts: &GapOptions,
) -> Result<GapReport> {
    let mut stats = SolverStats::default();
    let mut best: Option<(f64, PairedPoint, Option<Vec<f64>>)> = None;
    let consider = |p: PairedPoint, z: Option<Vec<f64>>, best: &mut Option<(f64, PairedPoint, Option<Vec<f64>>)>| {
        let v = obj(&p);
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.0) {
            *best = Some((v, p, z));
        }
    };
    for p in s.graph_sample(opts.budget.max(1), opts.seed)?.points {
        stats.evaluations += 1;
        let z = add(&p.x, &p.xstar);
        consider(p, Some(z), &mut best);
    }
    for z in &starts {
        for t in [1.0, 0.25, 4.0] {
            stats.evaluations += 1;
            if let Ok(r) = s.resolvent_scaled(z, t) {
                let zz = add(&r.point.x, &r.point.xstar);
                consider(r.point, Some(zz), &mut best);
            }
        }
    }
    let (mut value, mut witness, z0) = best.ok_or(Error::NoConvergence {
        iterations: stats.evaluations,
        residual: f64::NAN,
    })?;
    if !is_finite_graph(s) {
        let mut z = z0.unwrap_or_else(|| add(&witness.x, &witness.xstar));
        let mut step = 0.5 * (1.0 + norm2(&z));
        let cap = stats.evaluations + 4000;
        while step > 1e-10 * (1.0 + norm2(&z)) && stats.evaluations < cap {
            stats.steps += 1;
            let mut improved = false;
            for i in 0..z.len() {
                for sign in [1.0, -1.0] {
                    let mut cand = z.clone();
                    cand[i] += sign * step;
                    stats.evaluations += 1;
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
    }
    let exact = is_finite_graph(s);
    Ok(GapReport {
        value,
        witness,
        status: if exact { GapStatus::Exact } else { GapStatus::UpperBound },
        method: if exact {
            GapMethod::Enumeration
        } else {
            GapMethod::LocalSearch
        },
        stats,
    })
}

/// `1/2 |s - w|^2 + 1/2 dist(s*, Wt)^2 + max <s - w, s* - Wt>` over the graph.
pub fn fuzzy_dual_objective(pair: &DualPair, p: &PairedPoint, w: &[f64], wt: &CompactConvexSet) -> Result<f64> {
    let a = sub(&p.x, w);
    let na = pair.primal_norm().eval(&a);
    let d = wt.dist(&p.xstar, pair.dual_norm())?;
    // max over wt of <a, s* - wt> = <a, s*> + sigma_Wt(-a)
    Ok(0.5 * na * na + 0.5 * d * d + dot(&a, &p.xstar) + wt.support(&scale(-1.0, &a))?)
}

/// `1/2 dist(s, W)^2 + 1/2 |s* - w*|^2 + max <s - W, s* - w*>` over the graph.
pub fn fuzzy_primal_objective(
    pair: &DualPair,
    p: &PairedPoint,
    w_set: &CompactConvexSet,
    wstar: &[f64],
) -> Result<f64> {
    let b = sub(&p.xstar, wstar);
    let nb = pair.dual_norm().eval(&b);
    let d = w_set.dist(&p.x, pair.primal_norm())?;
    Ok(0.5 * d * d + 0.5 * nb * nb + dot(&p.x, &b) + w_set.support(&scale(-1.0, &b))?)
}

/// Fuzzy gap with the dual component of the target spread over `wt`. A
/// one-point set reduces to `gap` at `(w, w*)`.
pub fn fuzzy_gap_dual(s: &MonotoneOperator, w: &[f64], wt: &CompactConvexSet) -> Result<GapReport> {
    fuzzy_gap_dual_with(s, w, wt, &GapOptions::default())
}

pub fn fuzzy_gap_dual_with(
    s: &MonotoneOperator,
    w: &[f64],
    wt: &CompactConvexSet,
    opts: &GapOptions,
) -> Result<GapReport> {
    let pair = s.pair();
    pair.check(w)?;
    pair.check(&vec![0.0; wt.dim()])?;
    if let Some(p) = wt.single_point() {
        return gap_with(s, &GapQuery::at(PairedPoint::new(w.to_vec(), p.to_vec()), 1.0), opts);
    }
    let obj = |p: &PairedPoint| fuzzy_dual_objective(pair, p, w, wt).unwrap_or(f64::INFINITY);
    let starts = wt.anchor_points().into_iter().map(|c| add(w, &c)).collect();
    graph_local_search(s, &obj, starts, opts)
}

/// Fuzzy gap with the primal component of the target spread over `w_set`.
pub fn fuzzy_gap_primal(s: &MonotoneOperator, w_set: &CompactConvexSet, wstar: &[f64]) -> Result<GapReport> {
    fuzzy_gap_primal_with(s, w_set, wstar, &GapOptions::default())
}

pub fn fuzzy_gap_primal_with(
    s: &MonotoneOperator,
    w_set: &CompactConvexSet,
    wstar: &[f64],
    opts: &GapOptions,
) -> Result<GapReport> {
    let pair = s.pair();
    pair.check(wstar)?;
    pair.check(&vec![0.0; w_set.dim()])?;
    if let Some(p) = w_set.single_point() {
        return gap_with(
            s,
            &GapQuery::at(PairedPoint::new(p.to_vec(), wstar.to_vec()), 1.0),
            opts,
        );
    }
    let obj = |p: &PairedPoint| fuzzy_primal_objective(pair, p, w_set, wstar).unwrap_or(f64::INFINITY);
    let starts = w_set.anchor_points().into_iter().map(|c| add(&c, wstar)).collect();
    graph_local_search(s, &obj, starts, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeVerdict {
    pub probe: PairedPoint,
    pub report: GapReport,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasidensityReport {
    pub probes: Vec<ProbeVerdict>,
    /// True when every probe passed; a statement about the probe set only.
    pub all_passed: bool,
    pub summary: String,
}

/// Gap at each probe against `eta`. Probes run in parallel and are
/// reported in input order.
pub fn is_quasidense(s: &MonotoneOperator, probes: &[PairedPoint], eta: f64) -> Result<QuasidensityReport> {
    is_quasidense_with(s, probes, eta, &GapOptions::default())
}

pub fn is_quasidense_with(
    s: &MonotoneOperator,
    probes: &[PairedPoint],
    eta: f64,
    opts: &GapOptions,
) -> Result<QuasidensityReport> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument("eta must be positive".into()));
    }
    let verdicts: Vec<ProbeVerdict> = probes
        .par_iter()
        .map(|p| {
            let report = gap_with(s, &GapQuery::at(p.clone(), eta), opts)?;
            Ok(ProbeVerdict {
                probe: p.clone(),
                passed: report.value <= eta,
                report,
            })
        })
        .collect::<Result<_>>()?;
    let all_passed = verdicts.iter().all(|v| v.passed);
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    let summary = if all_passed {
        format!("quasidense on probe set ({} probes, eta {eta:e})", verdicts.len())
    } else {
        format!("gap above eta at {failed} of {} probes (eta {eta:e})", verdicts.len())
    };
    Ok(QuasidensityReport {
        probes: verdicts,
        all_passed,
        summary,
    })
}

/// Seeded probes uniform in `[-R, R]^{2n}` with `R` twice the largest
/// component norm of a graph sample.
pub fn default_probes(s: &MonotoneOperator, count: usize, seed: u64) -> Result<Vec<PairedPoint>> {
    use rand::Rng;
    let sample = s.graph_sample(64, seed)?;
    let radius = 2.0
        * sample
            .points
            .iter()
            .map(|p| norm2(&p.x).max(norm2(&p.xstar)))
            .fold(1.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = s.dim();
    Ok((0..count)
        .map(|_| {
            let mut draw = || (0..n).map(|_| rng.gen_range(-radius..=radius)).collect::<Vec<f64>>();
            let x = draw();
            PairedPoint::new(x, draw())
        })
        .collect())
}

/// The side of the target a fuzz set replaces.
pub fn fuzz_side(q: &GapQuery) -> Option<Side> {
    match (&q.primal_fuzz, &q.dual_fuzz) {
        (Some(_), _) => Some(Side::Primal),
        (_, Some(_)) => Some(Side::Dual),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ConvexFn;
    use crate::operators::{abs_subdiff, identity, interval};
    use crate::spaces::NormTag;
    use proptest::prelude::*;

    fn pp(x: &[f64], y: &[f64]) -> PairedPoint {
        PairedPoint::new(x.to_vec(), y.to_vec())
    }

    fn origin_graph(n: usize) -> MonotoneOperator {
        MonotoneOperator::finite_graph(DualPair::euclidean(n), vec![PairedPoint::zero(n)]).unwrap()
    }

    fn dual_interval(lo: f64, hi: f64) -> CompactConvexSet {
        CompactConvexSet::interval(lo, hi, Side::Dual).unwrap()
    }

    #[test]
    fn gap_examples() {
        let g = origin_graph(1);
        let r = gap(&g, &GapQuery::at(pp(&[1.0], &[1.0]), 1e-6)).unwrap();
        assert_eq!(
            (r.value, r.status, r.method),
            (2.0, GapStatus::Exact, GapMethod::Enumeration)
        );
        assert_eq!(gap(&g, &GapQuery::at(pp(&[1.0], &[-1.0]), 1e-6)).unwrap().value, 0.0);
        let a = gap(&abs_subdiff(), &GapQuery::at(pp(&[0.0], &[2.0]), 1e-6)).unwrap();
        assert_eq!(a.value, 0.0);
        assert_eq!(a.witness, pp(&[1.0], &[1.0]));
        assert_eq!(a.method, GapMethod::Resolvent);
    }

    #[test]
    fn oracle_examples() {
        let o = gap_euclidean_oracle(&origin_graph(1), &pp(&[1.0], &[1.0])).unwrap();
        assert_eq!(o.value, 2.0);
        let i = gap_euclidean_oracle(&identity(1), &pp(&[3.0], &[-3.0])).unwrap();
        assert_eq!((i.value, i.witness.clone()), (0.0, pp(&[0.0], &[0.0])));
        let q = MonotoneOperator::subdifferential(DualPair::euclidean(2), ConvexFn::half_square(2)).unwrap();
        assert!(gap_euclidean_oracle(&q, &pp(&[4.0, -1.0], &[0.5, 3.0])).unwrap().value < 1e-9);
    }

    #[test]
    fn fuzzy_dual_examples() {
        let abs = abs_subdiff();
        let r = fuzzy_gap_dual(&abs, &[0.0], &dual_interval(0.2, 0.4)).unwrap();
        assert!(r.value.abs() < 1e-12, "{r:?}");
        // origin graph, w = 1, Wt = [-3, -1]: 1/2 + 1/2 * 1 + max_wt (-1)(0 - wt) = 0
        let g = origin_graph(1);
        let r = fuzzy_gap_dual(&g, &[1.0], &dual_interval(-3.0, -1.0)).unwrap();
        assert_eq!(r.value, 0.0);
        let brute = (0..=2000)
            .map(|i| -3.0 + i as f64 * 0.001)
            .map(|wt: f64| (0.0 - 1.0) * (0.0 - wt))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((0.5 + 0.5 + brute).abs() < 1e-12);
    }

    #[test]
    fn fuzzy_primal_examples() {
        let nc = MonotoneOperator::normal_cone(DualPair::euclidean(1), interval(-1.0, 1.0)).unwrap();
        let r = fuzzy_gap_primal(&nc, &interval(-1.0, 1.0), &[5.0]).unwrap();
        assert!(r.value.abs() < 1e-9, "{r:?}");
        let g = origin_graph(1);
        let r = fuzzy_gap_primal(&g, &interval(2.0, 3.0), &[0.0]).unwrap();
        assert_eq!(r.value, 2.0);
    }

    #[test]
    fn singleton_fuzz_reduces_to_gap() {
        let ops = [abs_subdiff(), identity(1), origin_graph(1)];
        for s in &ops {
            for (w, ws) in [(0.3, -1.0), (2.0, 0.5), (-1.0, -1.0)] {
                let plain = gap(s, &GapQuery::at(pp(&[w], &[ws]), 1e-6)).unwrap().value;
                let d = fuzzy_gap_dual(s, &[w], &CompactConvexSet::singleton(vec![ws], Side::Dual).unwrap())
                    .unwrap()
                    .value;
                let p = fuzzy_gap_primal(s, &CompactConvexSet::singleton(vec![w], Side::Primal).unwrap(), &[ws])
                    .unwrap()
                    .value;
                assert!((plain - d).abs() <= 1e-12 && (plain - p).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fuzzy_objective_on_singleton_equals_r_objective() {
        let pair = DualPair::l1_linf(2);
        let wt = CompactConvexSet::singleton(vec![0.5, -1.0], Side::Dual).unwrap();
        let target = pp(&[1.0, 2.0], &[0.5, -1.0]);
        for p in [pp(&[0.0, 0.0], &[1.0, 1.0]), pp(&[-2.0, 1.0], &[0.3, 4.0])] {
            let a = fuzzy_dual_objective(&pair, &p, &target.x, &wt).unwrap();
            let b = r_objective(&pair, &p, &target);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn enlarging_the_fuzz_set_can_raise_the_gap() {
        // the objective's max-term grows with the set while the distance
        // term shrinks, so nested sets need not give monotone gaps
        let g = origin_graph(1);
        let small = fuzzy_gap_dual(&g, &[1.0], &dual_interval(-3.0, -1.0)).unwrap().value;
        let large = fuzzy_gap_dual(&g, &[1.0], &dual_interval(-3.0, 0.0)).unwrap().value;
        assert_eq!((small, large), (0.0, 0.5));
    }

    #[test]
    fn tail_one_dimensional_gap_is_zero() {
        let t = MonotoneOperator::tail(1).unwrap();
        let r = gap(&t, &GapQuery::at(pp(&[0.0], &[1.0]), 1e-3)).unwrap();
        assert_eq!(r.method, GapMethod::SubgradientDescent);
        assert!(r.value.abs() <= 1e-9, "{r:?}");
        assert!((r.witness.x[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn descent_matches_resolvent_on_euclidean_linear() {
        let t = MonotoneOperator::tail_on(DualPair::euclidean(3), 3).unwrap();
        let opts = GapOptions {
            method: Some(GapMethod::SubgradientDescent),
            ..Default::default()
        };
        for target in [
            pp(&[1.0, 0.0, -1.0], &[0.5, 0.5, 0.5]),
            pp(&[0.0, 2.0, 0.0], &[-1.0, 0.0, 3.0]),
        ] {
            let d = gap_with(&t, &GapQuery::at(target.clone(), 1e-6), &opts).unwrap();
            let o = gap_euclidean_oracle(&t, &target).unwrap();
            assert!((d.value - o.value).abs() < 1e-7, "{d:?} vs {o:?}");
        }
    }

    #[test]
    fn local_search_reaches_zero_on_maximal_l1_operator() {
        let s =
            MonotoneOperator::subdifferential(DualPair::l1_linf(2), ConvexFn::norm(1.0, NormTag::L2).unwrap()).unwrap();
        let r = gap(&s, &GapQuery::at(pp(&[0.5, -0.5], &[2.0, 1.0]), 1e-3)).unwrap();
        assert_eq!(r.method, GapMethod::LocalSearch);
        assert!(r.value <= 1e-6, "{r:?}");
    }

    #[test]
    fn quasidense_sweeps() {
        let q = MonotoneOperator::subdifferential(DualPair::euclidean(2), ConvexFn::half_square(2)).unwrap();
        let probes = default_probes(&q, 100, 3).unwrap();
        let rep = is_quasidense(&q, &probes, 1e-6).unwrap();
        assert!(rep.all_passed, "{}", rep.summary);
        let g = origin_graph(1);
        let rep = is_quasidense(&g, &[pp(&[1.0], &[1.0])], 1e-6).unwrap();
        assert!(!rep.all_passed);
        assert_eq!(rep.probes[0].report.value, 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn euclidean_quadratic_expansion(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3)) {
            let lhs = 0.5 * dot(&a, &a) + 0.5 * dot(&b, &b) + dot(&a, &b);
            let s = add(&a, &b);
            prop_assert!((lhs - 0.5 * dot(&s, &s)).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn graph_targets_have_zero_gap(z in prop::collection::vec(-3.0f64..3.0, 1)) {
            for s in [abs_subdiff(), identity(1)] {
                let p = s.resolvent(&z).unwrap().point;
                let r = gap(&s, &GapQuery::at(p.clone(), 1e-6)).unwrap();
                prop_assert!(r.value.abs() <= 1e-24, "{}", r.value);
                prop_assert!(dist2(&r.witness.x, &p.x) + dist2(&r.witness.xstar, &p.xstar) <= 1e-12);
            }
        }

        #[test]
        fn fuzzy_gaps_are_nonnegative_on_maximal_euclidean_operators(w in -3.0f64..3.0, lo in -3.0f64..3.0, len in 0.0f64..2.0) {
            let wt = dual_interval(lo, lo + len);
            let r = fuzzy_gap_dual(&abs_subdiff(), &[w], &wt).unwrap();
            prop_assert!(r.value >= -1e-12);
        }
    }
}
