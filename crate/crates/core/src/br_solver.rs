//! Constructive density procedures: the Brondsted-Rockafellar point
//! finder, its corollary form, the near-zero subgradient pair of `g + j`
//! with `j = 1/2 |.|^2`, and the quasidensity witness built from it.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functions::{ConvexFn, Tri};
use crate::linalg::{add, dot, golden_min, scale, sub};
use crate::spaces::{DualPair, NormTag};
use crate::PairedPoint;

/// Outer step cap of the Ekeland iteration.
pub const BR_MAX_OUTER: usize = 1_000;
/// Fenchel-Young tolerance for the returned subgradient pair.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Fenchel-Young gap below which a point counts as an exact minimizer.
const ZERO_SLOPE_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct BrRequest {
    pub h: ConvexFn,
    pub u: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub pair: DualPair,
}

impl BrRequest {
    pub fn euclidean(h: ConvexFn, u: Vec<f64>, alpha: f64, beta: f64) -> Self {
        let pair = DualPair::euclidean(u.len());
        BrRequest {
            h,
            u,
            alpha,
            beta,
            pair,
        }
    }
}

/// A measured inequality `measured <= bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub measured: f64,
    pub bound: f64,
}

impl Certificate {
    pub fn slack(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrCertificates {
    /// `h(s) <= h(u)`
    pub value: Certificate,
    /// `|s - u| <= alpha`
    pub distance: Certificate,
    /// `|x*|_* <= beta`
    pub slope: Certificate,
}

impl BrCertificates {
    pub fn measure(req: &BrRequest, s: &[f64], xstar: &[f64]) -> Result<Self> {
        Ok(BrCertificates {
            value: Certificate {
                measured: req.h.eval(s)?,
                bound: req.h.eval(&req.u)?,
            },
            distance: Certificate {
                measured: req.pair.primal_norm().eval(&sub(s, &req.u)),
                bound: req.alpha,
            },
            slope: Certificate {
                measured: req.pair.dual_norm().eval(xstar),
                bound: req.beta,
            },
        })
    }

    pub fn min_slack(&self) -> f64 {
        self.value.slack().min(self.distance.slack()).min(self.slope.slack())
    }

    pub fn hold(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrStatus {
    Certified,
    /// Outer cap reached; the result holds the best iterate.
    CapReached,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrResult {
    pub s: Vec<f64>,
    pub xstar: Vec<f64>,
    pub certs: BrCertificates,
    /// Fenchel-Young test of `x* in dh(s)`.
    pub membership: Tri,
    pub status: BrStatus,
    /// False when `inf h` was estimated from iterates rather than certified.
    pub premise_certified: bool,
    pub outer_steps: usize,
}

/// Finds `(s, x*)` in the graph of `dh` with `h(s) <= h(u)`,
/// `|s - u| <= alpha` and `|x*|_* <= beta`.
///
/// Each outer step is a Euclidean proximal step `s = prox_{t h}(c)`,
/// `x* = (c - s) / t`, which satisfies `h(s) + <x*, c - s> <= h(c)`. With
/// `t = (alpha / beta) (c_* / c)`, where `c` and `c_*` bound the pair's
/// norms by the Euclidean one, the first step already certifies whenever
/// `h(u) - inf h < alpha beta / (c c_*)`; otherwise the iteration keeps
/// descending from the last iterate.
pub fn br_point(req: &BrRequest) -> Result<BrResult> {
    br_point_inner(req, true)
}

/// With `prefer_zero`, a final iterate that minimizes `h` up to
/// `ZERO_SLOPE_TOL` is reported with slope zero; otherwise the proximal
/// slope is kept, which is what an exact subgradient split needs.
fn br_point_inner(req: &BrRequest, prefer_zero: bool) -> Result<BrResult> {
    let n = req.pair.dim();
    check_dim(n, req.u.len())?;
    if !(req.alpha > 0.0 && req.beta > 0.0) || !req.alpha.is_finite() || !req.beta.is_finite() {
        return Err(Error::InvalidArgument(
            "alpha and beta must be positive and finite".into(),
        ));
    }
    let hu = req.h.eval(&req.u)?;
    if !hu.is_finite() {
        return Err(Error::InvalidArgument("h(u) must be finite".into()));
    }
    let (inf, premise_certified) = match req.h.certified_infimum(n)? {
        Some(m) => (m, true),
        None => (sampled_infimum(&req.h, &req.u)?, false),
    };
    if hu - inf >= req.alpha * req.beta {
        return Err(Error::InvalidArgument(format!(
            "h(u) - inf h = {:e} is not below alpha * beta = {:e}",
            hu - inf,
            req.alpha * req.beta
        )));
    }

    let zero = vec![0.0; n];
    let finish = |s: Vec<f64>, xstar: Vec<f64>, status, steps| -> Result<BrResult> {
        // an exact minimizer is reported with the zero slope
        let xstar = if prefer_zero && req.h.subdiff_contains(&s, &zero, ZERO_SLOPE_TOL)? == Tri::Yes {
            zero.clone()
        } else {
            xstar
        };
        Ok(BrResult {
            certs: BrCertificates::measure(req, &s, &xstar)?,
            membership: req.h.subdiff_contains(&s, &xstar, MEMBERSHIP_TOL)?,
            s,
            xstar,
            status,
            premise_certified,
            outer_steps: steps,
        })
    };
    if req.h.subdiff_contains(&req.u, &zero, ZERO_SLOPE_TOL)? == Tri::Yes {
        return finish(req.u.clone(), zero.clone(), BrStatus::Certified, 0);
    }

    let cp = req.pair.primal_norm().max_ratio_to_l2(n);
    let cd = req.pair.dual_norm().max_ratio_to_l2(n);
    let t = req.alpha / req.beta * cd / cp;
    let mut c = req.u.clone();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for step in 1..=BR_MAX_OUTER {
        let s = req.h.prox_scaled(&c, t)?;
        let xstar = scale(1.0 / t, &sub(&c, &s));
        let certs = BrCertificates::measure(req, &s, &xstar)?;
        if certs.hold(1e-12 * (1.0 + certs.value.bound.abs())) {
            return finish(s, xstar, BrStatus::Certified, step);
        }
        if best.as_ref().is_none_or(|b| certs.min_slack() > b.0) {
            best = Some((certs.min_slack(), s.clone(), xstar));
        }
        if certs.distance.slack() < 0.0 || s == c {
            break;
        }
        c = s;
    }
    let (_, s, xstar) = best.expect("at least one outer step");
    finish(s, xstar, BrStatus::CapReached, BR_MAX_OUTER)
}

/// Best value along a proximal path from `u`: an upper estimate of `inf h`.
fn sampled_infimum(h: &ConvexFn, u: &[f64]) -> Result<f64> {
    let mut c = u.to_vec();
    let mut best = h.eval(u)?;
    let mut t = 1.0;
    for _ in 0..60 {
        c = h.prox_scaled(&c, t)?;
        best = best.min(h.eval(&c)?);
        t *= 2.0;
    }
    Ok(best)
}

/// `(s, x*)` in the graph of `dh` with `h(s) <= inf h + beta` and
/// `|x*|_* <= beta`: a point `u` with `h(u) <= inf h + beta / 2` from a
/// proximal path, then `br_point` with `alpha = 1`.
pub fn br_corollary(h: &ConvexFn, beta: f64, pair: &DualPair) -> Result<BrResult> {
    br_corollary_inner(h, beta, pair, true)
}

fn br_corollary_inner(h: &ConvexFn, beta: f64, pair: &DualPair, prefer_zero: bool) -> Result<BrResult> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let n = pair.dim();
    let inf = h.certified_infimum(n)?;
    let mut c = h.prox(&vec![0.0; n])?;
    let mut t = 1.0;
    let mut best = (h.eval(&c)?, c.clone());
    for _ in 0..200 {
        if inf.is_some_and(|m| best.0 <= m + 0.5 * beta) {
            break;
        }
        c = h.prox_scaled(&c, t)?;
        let v = h.eval(&c)?;
        if v < best.0 {
            best = (v, c.clone());
        }
        t *= 2.0;
    }
    if let Some(m) = inf {
        if best.0 >= m + beta {
            return Err(Error::NoConvergence {
                iterations: 200,
                residual: best.0 - m,
            });
        }
    }
    br_point_inner(
        &BrRequest {
            h: h.clone(),
            u: best.1,
            alpha: 1.0,
            beta,
            pair: *pair,
        },
        prefer_zero,
    )
}

/// `1/2 |s|^2 + <s, s*> + 1/2 |s*|_*^2` in the pair's norms.
pub fn van_quantity(pair: &DualPair, p: &PairedPoint) -> f64 {
    let a = pair.primal_norm().eval(&p.x);
    let b = pair.dual_norm().eval(&p.xstar);
    0.5 * a * a + dot(&p.x, &p.xstar) + 0.5 * b * b
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanPoint {
    pub point: PairedPoint,
    /// `1/2 |s|^2 + <s, s*> + 1/2 |s*|^2`
    pub quantity: f64,
    pub membership: Tri,
    /// Slope tolerance handed to `br_corollary`.
    pub beta: f64,
    /// Bound on `|s|` from the affine minorant.
    pub radius_bound: f64,
}

/// `(s, s*)` in the graph of `dg` with `1/2 |s|^2 + <s, s*> + 1/2 |s*|^2 < eps`.
///
/// Runs `br_corollary` on `g + j`, `j = 1/2 |.|^2` in the primal norm, with
/// `beta` small enough that `2 M beta + beta^2 / 2 < eps / 2`, where `M`
/// bounds `|s|` through `g >= -gamma0 |.| - delta0`. The slope `x*` of
/// `g + j` is split as `s* = x* - J(s)` with `J` the duality map.
pub fn van_point(g: &ConvexFn, eps: f64, pair: &DualPair) -> Result<VanPoint> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let n = pair.dim();
    let j = ConvexFn::HalfSqNorm {
        norm: pair.primal_norm(),
    };
    let h = ConvexFn::sum(g.clone(), j)?;
    let m = g.affine_minorant(pair)?;
    // |s| <= M from -gamma0 |s| - delta0 + 1/2 |s|^2 <= h(s) <= h(p) + 1
    let p = h.prox(&vec![0.0; n])?;
    let hp = h.eval(&p)?;
    let radius = m.gamma0 + (m.gamma0 * m.gamma0 + 2.0 * (m.delta0 + hp + 1.0)).max(0.0).sqrt();
    let beta = (0.5 * eps / (2.0 * radius + (4.0 * radius * radius + 0.5 * eps).sqrt())).min(1.0);
    let r = br_corollary_inner(&h, beta, pair, false)?;
    if r.status != BrStatus::Certified {
        return Err(Error::NoConvergence {
            iterations: r.outer_steps,
            residual: -r.certs.min_slack(),
        });
    }
    let sstar = split_slope(g, pair, &r.s, &r.xstar)?;
    let point = PairedPoint::new(r.s, sstar);
    Ok(VanPoint {
        quantity: van_quantity(pair, &point),
        membership: g.subdiff_contains(&point.x, &point.xstar, MEMBERSHIP_TOL)?,
        point,
        beta,
        radius_bound: radius,
    })
}

/// `s* = x* - j'` with `j'` in the subdifferential of `1/2 |.|^2` at `s`.
///
/// The duality map gives `j'` except on the zero coordinates of `s` under
/// the l1 norm, where `j'_i` ranges over `[-|s|_1, |s|_1]`; those
/// coordinates are chosen by coordinate sweeps minimizing the
/// Fenchel-Young gap of `g` at `(s, s*)`.
fn split_slope(g: &ConvexFn, pair: &DualPair, s: &[f64], xstar: &[f64]) -> Result<Vec<f64>> {
    let norm = pair.primal_norm();
    let base = sub(xstar, &norm.duality_map(s));
    let r = norm.eval(s);
    let free: Vec<usize> = (0..s.len()).filter(|&i| s[i] == 0.0).collect();
    if norm != NormTag::L1 || r == 0.0 || free.is_empty() {
        return Ok(base);
    }
    let fs = g.eval(s)?;
    let fy_gap = |y: &[f64]| -> f64 {
        g.conjugate(y)
            .map(|c| fs + c.value - dot(s, y))
            .unwrap_or(f64::INFINITY)
    };
    let mut y = base;
    for _ in 0..4 {
        for &i in &free {
            let (v, _) = golden_min(xstar[i] - r, xstar[i] + r, 1e-13 * (1.0 + r), |v| {
                let mut cand = y.clone();
                cand[i] = v;
                fy_gap(&cand)
            });
            y[i] = v;
        }
        if fy_gap(&y) <= 0.1 * MEMBERSHIP_TOL {
            break;
        }
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasidenseWitness {
    pub point: PairedPoint,
    /// The quasidensity objective at `point` against the target.
    pub objective: f64,
    pub membership: Tri,
}

/// `(s, s*)` in the graph of `df` with quasidensity objective below `eps` at
/// `(x, x*)`: `van_point` of `g = f(. + x) - <., x*>`, shifted back.
pub fn quasidense_witness(
    f: &ConvexFn,
    x: &[f64],
    xstar: &[f64],
    eps: f64,
    pair: &DualPair,
) -> Result<QuasidenseWitness> {
    pair.check(x)?;
    pair.check(xstar)?;
    let g = ConvexFn::translate(f.clone(), x.to_vec(), xstar.to_vec())?;
    let v = van_point(&g, eps, pair)?;
    let point = PairedPoint::new(add(&v.point.x, x), add(&v.point.xstar, xstar));
    Ok(QuasidenseWitness {
        objective: v.quantity,
        membership: f.subdiff_contains(&point.x, &point.xstar, MEMBERSHIP_TOL)?,
        point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::interval;
    use crate::CompactConvexSet;
    use crate::Side;
    use proptest::prelude::*;

    fn sq() -> ConvexFn {
        ConvexFn::quadratic(vec![vec![2.0]], vec![0.0], 0.0).unwrap()
    }

    fn abs_shift(c: f64) -> ConvexFn {
        ConvexFn::translate(ConvexFn::norm(1.0, NormTag::L2).unwrap(), vec![-c], vec![0.0]).unwrap()
    }

    fn e1() -> DualPair {
        DualPair::euclidean(1)
    }

    #[test]
    fn br_point_examples() {
        let r = br_point(&BrRequest::euclidean(sq(), vec![0.3], 1.0, 0.1)).unwrap();
        assert_eq!(r.status, BrStatus::Certified);
        assert!(r.certs.hold(1e-7), "{r:?}");
        assert!((r.xstar[0] - 2.0 * r.s[0]).abs() < 1e-12);
        assert!(r.s[0].abs() <= 0.05 + 1e-12);

        let m = br_point(&BrRequest::euclidean(sq(), vec![0.0], 0.5, 0.5)).unwrap();
        assert_eq!((m.s.clone(), m.xstar.clone()), (vec![0.0], vec![0.0]));

        let a = br_point(&BrRequest::euclidean(abs_shift(0.0), vec![0.05], 1.0, 0.1)).unwrap();
        assert_eq!((a.s.clone(), a.xstar.clone()), (vec![0.0], vec![0.0]));
        assert_eq!(a.membership, Tri::Yes);
    }

    #[test]
    fn br_point_rejects_a_far_start() {
        let e = br_point(&BrRequest::euclidean(sq(), vec![1.0], 1.0, 0.1));
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn br_corollary_examples() {
        let r = br_corollary(&ConvexFn::half_square(1), 0.1, &e1()).unwrap();
        assert!(r.certs.value.measured <= 0.1 && r.xstar[0].abs() <= 0.1);
        let a = br_corollary(&abs_shift(2.0), 0.5, &e1()).unwrap();
        assert_eq!((a.s.clone(), a.xstar.clone()), (vec![2.0], vec![0.0]));
    }

    #[test]
    fn br_sequence_converges_monotonically() {
        let h = ConvexFn::quadratic(vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![1.0, -1.0], 0.3).unwrap();
        let pair = DualPair::euclidean(2);
        let inf = h.certified_infimum(2).unwrap().unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in 1..=20 {
            let r = br_corollary(&h, 1.0 / k as f64, &pair).unwrap();
            let v = r.certs.value.measured - inf;
            let g = r.certs.slope.measured;
            assert!(
                v <= prev.0 + 1e-8 && g <= prev.1 + 1e-8,
                "step {k}: {v} {g} after {prev:?}"
            );
            assert!(v <= 1.0 / k as f64 && g <= 1.0 / k as f64);
            prev = (v, g);
        }
    }

    #[test]
    fn van_point_examples() {
        let v = van_point(&abs_shift(2.0), 1e-3, &e1()).unwrap();
        assert!(v.quantity < 1e-3 && v.membership == Tri::Yes, "{v:?}");
        assert!((v.point.x[0] - 1.0).abs() < 1e-2 && (v.point.xstar[0] + 1.0).abs() < 1e-9);

        let q = van_point(&ConvexFn::half_square(2), 1e-6, &DualPair::euclidean(2)).unwrap();
        assert_eq!(q.point, PairedPoint::zero(2));

        let i = van_point(&ConvexFn::indicator(interval(1.0, 2.0)), 1e-6, &e1()).unwrap();
        assert!((i.point.x[0] - 1.0).abs() < 1e-9 && i.quantity < 1e-6, "{i:?}");
    }

    #[test]
    fn quasidense_witness_examples() {
        let w = quasidense_witness(&ConvexFn::half_square(1), &[0.0], &[2.0], 1e-6, &e1()).unwrap();
        assert!(w.objective < 1e-6 && w.membership == Tri::Yes);
        assert!((w.point.x[0] - 1.0).abs() < 1e-6);

        let on = quasidense_witness(&ConvexFn::half_square(1), &[1.5], &[1.5], 1e-6, &e1()).unwrap();
        assert!((on.point.x[0] - 1.5).abs() < 1e-9 && on.objective.abs() < 1e-12);

        let abs = ConvexFn::norm(1.0, NormTag::L2).unwrap();
        let a = quasidense_witness(&abs, &[3.0], &[0.0], 1e-6, &e1()).unwrap();
        assert!(
            (a.point.x[0] - 2.0).abs() < 1e-3 && (a.point.xstar[0] - 1.0).abs() < 1e-12,
            "{a:?}"
        );
        // grid cross-check of the branch analysis: on s > 0 the objective is
        // 1/2 (s - 2)^2, on s = 0 it is 9/2 - 3 s* + ... >= 0 for s* in [-1, 1]
        let grid = (0..=4000)
            .map(|i| i as f64 * 0.001)
            .map(|s: f64| 0.5 * (s - 3.0).powi(2) + 0.5 + (s - 3.0))
            .fold(f64::INFINITY, f64::min);
        assert!(grid.abs() < 1e-12);
    }

    #[test]
    fn l1_pair_witness() {
        let pair = DualPair::l1_linf(2);
        let f = ConvexFn::support(CompactConvexSet::boxed(&[-1.0, -1.0], &[1.0, 1.0], Side::Primal).unwrap());
        let w = quasidense_witness(&f, &[0.5, 2.0], &[3.0, 0.0], 1e-4, &pair).unwrap();
        assert!(w.objective < 1e-4, "{w:?}");
        assert_ne!(w.membership, Tri::No);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn certificates_hold(u in -3.0f64..3.0, alpha in 0.1f64..3.0, c in -2.0f64..2.0) {
            let h = abs_shift(c);
            let gap = (u - c).abs();
            let beta = 1.01 * gap / alpha + 1e-3;
            let r = br_point(&BrRequest::euclidean(h.clone(), vec![u], alpha, beta)).unwrap();
            prop_assert!(r.certs.hold(1e-7), "{:?}", r);
            prop_assert_eq!(r.membership, Tri::Yes);
            let q = br_point(&BrRequest::euclidean(sq(), vec![u], alpha, 1.01 * u * u / alpha + 1e-3)).unwrap();
            prop_assert!(q.certs.hold(1e-7), "{:?}", q);
        }

        #[test]
        fn van_points_are_graph_points(c in -3.0f64..3.0, eps in 1e-6f64..1e-2) {
            let v = van_point(&abs_shift(c), eps, &e1()).unwrap();
            prop_assert!(v.quantity < eps);
            prop_assert_eq!(v.membership, Tri::Yes);
        }
    }
}
