//! Compact convex sets in `R^n`: polytopes given by vertices, norm balls and
//! capsules (segment plus ball). Each carries its support function, a
//! deterministic maximizer of the support function, the Euclidean projection
//! and distances under the three classical norms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::spaces::{NormTag, Side};

/// Iteration cap for the non-Euclidean distance descent.
pub const DIST_MAX_ITERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetShape<T> {
    Polytope {
        vertices: Vec<Vec<T>>,
    },
    Ball {
        center: Vec<T>,
        radius: T,
        norm: NormTag,
    },
    /// `[a, b] + radius * B_norm`
    Capsule {
        a: Vec<T>,
        b: Vec<T>,
        radius: T,
        norm: NormTag,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactConvexSet<T> {
    shape: SetShape<T>,
    side: Side,
}

/// Two-sided bound on a distance. `lower == upper` when the value is exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistBracket<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> DistBracket<T> {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

impl<T: Real> CompactConvexSet<T> {
    pub fn polytope(vertices: Vec<Vec<T>>, side: Side) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::InvalidArgument("polytope needs at least one vertex".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidArgument("zero-dimensional vertex".into()));
        }
        for v in &vertices {
            check_dim(n, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite vertex coordinate".into()));
            }
        }
        Ok(CompactConvexSet {
            shape: SetShape::Polytope { vertices },
            side,
        })
    }

    pub fn singleton(point: Vec<T>, side: Side) -> Result<Self> {
        Self::polytope(vec![point], side)
    }

    /// The interval `[lo, hi]` in `R^1`.
    pub fn interval(lo: T, hi: T, side: Side) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument("interval with lo > hi".into()));
        }
        Self::polytope(vec![vec![lo], vec![hi]], side)
    }

    /// The axis-aligned box `prod [lo_i, hi_i]` as a polytope (2^n vertices).
    pub fn boxed(lo: &[T], hi: &[T], side: Side) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        let n = lo.len();
        if n > 16 {
            return Err(Error::InvalidArgument("box vertex list too large".into()));
        }
        let mut vertices = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let v = (0..n)
                .map(|i| if mask & (1 << i) != 0 { hi[i] } else { lo[i] })
                .collect();
            vertices.push(v);
        }
        Self::polytope(vertices, side)
    }

    pub fn ball(center: Vec<T>, radius: T, norm: NormTag, side: Side) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional ball".into()));
        }
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument("ball radius must be finite and >= 0".into()));
        }
        Ok(CompactConvexSet {
            shape: SetShape::Ball { center, radius, norm },
            side,
        })
    }

    pub fn capsule(a: Vec<T>, b: Vec<T>, radius: T, norm: NormTag, side: Side) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        if a.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional capsule".into()));
        }
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument("capsule radius must be finite and >= 0".into()));
        }
        Ok(CompactConvexSet {
            shape: SetShape::Capsule { a, b, radius, norm },
            side,
        })
    }

    pub fn shape(&self) -> &SetShape<T> {
        &self.shape
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            SetShape::Polytope { vertices } => vertices[0].len(),
            SetShape::Ball { center, .. } => center.len(),
            SetShape::Capsule { a, .. } => a.len(),
        }
    }

    /// `{ t * k : k in self }`, `t >= 0`.
    pub fn scaled(&self, t: T) -> Self {
        let shape = match &self.shape {
            SetShape::Polytope { vertices } => SetShape::Polytope {
                vertices: vertices.iter().map(|v| linalg::scale(t, v)).collect(),
            },
            SetShape::Ball { center, radius, norm } => SetShape::Ball {
                center: linalg::scale(t, center),
                radius: t * *radius,
                norm: *norm,
            },
            SetShape::Capsule { a, b, radius, norm } => SetShape::Capsule {
                a: linalg::scale(t, a),
                b: linalg::scale(t, b),
                radius: t * *radius,
                norm: *norm,
            },
        };
        CompactConvexSet { shape, side: self.side }
    }

    /// `{ k + offset : k in self }`
    pub fn translated(&self, offset: &[T]) -> Result<Self> {
        check_dim(self.dim(), offset.len())?;
        let shape = match &self.shape {
            SetShape::Polytope { vertices } => SetShape::Polytope {
                vertices: vertices.iter().map(|v| linalg::add(v, offset)).collect(),
            },
            SetShape::Ball { center, radius, norm } => SetShape::Ball {
                center: linalg::add(center, offset),
                radius: *radius,
                norm: *norm,
            },
            SetShape::Capsule { a, b, radius, norm } => SetShape::Capsule {
                a: linalg::add(a, offset),
                b: linalg::add(b, offset),
                radius: *radius,
                norm: *norm,
            },
        };
        Ok(CompactConvexSet { shape, side: self.side })
    }

    /// `max_{k in self} <k, y>`
    pub fn support(&self, y: &[T]) -> Result<T> {
        check_dim(self.dim(), y.len())?;
        Ok(match &self.shape {
            SetShape::Polytope { vertices } => vertices
                .iter()
                .map(|v| linalg::dot(v, y))
                .fold(T::neg_infinity(), T::max),
            SetShape::Ball { center, radius, norm } => linalg::dot(center, y) + *radius * norm.dual().eval(y),
            SetShape::Capsule { a, b, radius, norm } => {
                linalg::dot(a, y).max(linalg::dot(b, y)) + *radius * norm.dual().eval(y)
            }
        })
    }

    /// A point of the set attaining `support(y)`. Among polytope vertices tied
    /// within a relative `1e-12`, the lexicographically smallest wins; for
    /// balls the maximizer is `center + radius * u` with `u` the norm's
    /// canonical unit subgradient of `y`.
    pub fn argmax_support(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), y.len())?;
        Ok(match &self.shape {
            SetShape::Polytope { vertices } => lex_argmax(vertices, y),
            SetShape::Ball { center, radius, norm } => ball_argmax(center, *radius, *norm, y),
            SetShape::Capsule { a, b, radius, norm } => {
                let ends = [a.clone(), b.clone()];
                let base = lex_argmax(&ends, y);
                ball_argmax(&base, *radius, *norm, y)
            }
        })
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), y.len())?;
        Ok(match &self.shape {
            SetShape::Polytope { vertices } => {
                if vertices.len() == 1 {
                    vertices[0].clone()
                } else if self.dim() == 1 {
                    let (lo, hi) = interval_hull(vertices);
                    vec![y[0].max(lo).min(hi)]
                } else {
                    min_norm_point(vertices, y)
                }
            }
            SetShape::Ball { center, radius, norm } => project_ball(center, *radius, *norm, y),
            SetShape::Capsule {
                a,
                b,
                radius,
                norm: NormTag::L2,
            } => {
                let p = project_segment(a, b, y);
                project_ball(&p, *radius, NormTag::L2, y)
            }
            SetShape::Capsule { a, b, radius, norm } => {
                let t = capsule_parameter(a, b, *radius, *norm, y);
                let p = segment_point(a, b, t);
                project_ball(&p, *radius, *norm, y)
            }
        })
    }

    /// `inf_{z in self} |y - z|_norm`, the best upper bound found. Exact in the
    /// Euclidean norm, in dimension one, for balls and capsules measured in
    /// their own norm, and for singletons.
    pub fn dist(&self, y: &[T], norm: NormTag) -> Result<T> {
        Ok(self.dist_bracket(y, norm)?.upper)
    }

    /// Distance with a certified lower bound from norm equivalence with the
    /// Euclidean distance.
    pub fn dist_bracket(&self, y: &[T], norm: NormTag) -> Result<DistBracket<T>> {
        check_dim(self.dim(), y.len())?;
        let n = self.dim();
        let exact = |v: T| DistBracket { lower: v, upper: v };
        match &self.shape {
            SetShape::Polytope { vertices } if vertices.len() == 1 => {
                return Ok(exact(norm.eval(&linalg::sub(y, &vertices[0]))));
            }
            SetShape::Ball {
                center,
                radius,
                norm: bn,
            } if *bn == norm => {
                let d = norm.eval(&linalg::sub(y, center)) - *radius;
                return Ok(exact(d.max(T::zero())));
            }
            SetShape::Capsule { a, b, radius, norm: bn } if *bn == norm => {
                let (_, d) = linalg::golden_min(0.0, 1.0, 1e-13, |t| {
                    let p = segment_point(a, b, T::lit(t));
                    norm.eval(&linalg::sub(y, &p)).to_f64().unwrap_or(f64::INFINITY)
                });
                let d = T::lit(d) - *radius;
                return Ok(exact(d.max(T::zero())));
            }
            _ => {}
        }
        let p = self.project(y)?;
        let d2 = linalg::dist2(y, &p);
        if norm == NormTag::L2 || n == 1 {
            return Ok(exact(norm.eval(&linalg::sub(y, &p))));
        }
        let lower = d2 * T::lit(norm.min_ratio_to_l2(n));
        let mut best = norm.eval(&linalg::sub(y, &p));
        if best <= T::zero() {
            return Ok(exact(T::zero()));
        }
        // projected subgradient on z -> |y - z|, step d0 / k
        let d0 = best;
        let mut z = p;
        for k in 1..=DIST_MAX_ITERS {
            let r = linalg::sub(y, &z);
            let u = norm.unit_subgradient(&r);
            let step = d0 / T::lit(k as f64);
            let cand = linalg::axpy(&z, step, &u);
            z = self.project(&cand)?;
            let v = norm.eval(&linalg::sub(y, &z));
            if v < best {
                best = v;
            }
            if best - lower <= T::lit(1e-14) * (T::one() + best) {
                break;
            }
        }
        Ok(DistBracket {
            lower: lower.min(best),
            upper: best,
        })
    }

    /// Membership up to an absolute Euclidean tolerance.
    pub fn contains(&self, y: &[T], tol: T) -> Result<bool> {
        check_dim(self.dim(), y.len())?;
        let inside = match &self.shape {
            SetShape::Ball { center, radius, norm } => norm.eval(&linalg::sub(y, center)) <= *radius + tol,
            _ => linalg::dist2(y, &self.project(y)?) <= tol,
        };
        Ok(inside)
    }

    /// Whether `y` lies in the topological interior of the set.
    pub fn interior_contains(&self, y: &[T]) -> Result<bool> {
        check_dim(self.dim(), y.len())?;
        let eps = T::lit(1e-9);
        Ok(match &self.shape {
            SetShape::Ball { center, radius, norm } => norm.eval(&linalg::sub(y, center)) < *radius - eps,
            SetShape::Capsule { a, b, radius, norm } => {
                let (_, d) = linalg::golden_min(0.0, 1.0, 1e-13, |t| {
                    let p = segment_point(a, b, T::lit(t));
                    norm.eval(&linalg::sub(y, &p)).to_f64().unwrap_or(f64::INFINITY)
                });
                T::lit(d) < *radius - eps
            }
            SetShape::Polytope { .. } => {
                // the cross-polytope of radius delta around y fits inside
                let delta = T::lit(1e-7) * (T::one() + linalg::norm2(y));
                let tol = T::lit(1e-12);
                let mut inside = true;
                for i in 0..y.len() {
                    for s in [T::one(), -T::one()] {
                        let mut q = y.to_vec();
                        q[i] += s * delta;
                        if !self.contains(&q, tol)? {
                            inside = false;
                        }
                    }
                }
                inside
            }
        })
    }

    /// Whether the set has nonempty interior in `R^n`.
    pub fn has_interior(&self) -> bool {
        match &self.shape {
            SetShape::Ball { radius, .. } | SetShape::Capsule { radius, .. } => *radius > T::zero(),
            SetShape::Polytope { vertices } => affine_rank(vertices) == self.dim(),
        }
    }

    /// The point of a one-point set.
    pub fn single_point(&self) -> Option<&[T]> {
        match &self.shape {
            SetShape::Polytope { vertices } if vertices.iter().all(|v| v == &vertices[0]) => Some(&vertices[0]),
            SetShape::Ball { center, radius, .. } if *radius == T::zero() => Some(center),
            SetShape::Capsule { a, b, radius, .. } if a == b && *radius == T::zero() => Some(a),
            _ => None,
        }
    }

    /// Vertices, centre and endpoints: a deterministic handful of points of
    /// the set used as starting candidates by searches.
    pub fn anchor_points(&self) -> Vec<Vec<T>> {
        match &self.shape {
            SetShape::Polytope { vertices } => {
                let mut pts = vertices.clone();
                let m = T::lit(vertices.len() as f64);
                let mut c = linalg::zeros(self.dim());
                for v in vertices {
                    c = linalg::add(&c, v);
                }
                pts.push(linalg::scale(T::one() / m, &c));
                pts
            }
            SetShape::Ball { center, .. } => vec![center.clone()],
            SetShape::Capsule { a, b, .. } => {
                let mid = segment_point(a, b, T::lit(0.5));
                vec![a.clone(), b.clone(), mid]
            }
        }
    }

    /// A random point of the set.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match &self.shape {
            SetShape::Polytope { vertices } => {
                let w: Vec<f64> = vertices.iter().map(|_| -(rng.gen::<f64>().max(1e-300)).ln()).collect();
                let total: f64 = w.iter().sum();
                let mut p = linalg::zeros(self.dim());
                for (v, wi) in vertices.iter().zip(&w) {
                    p = linalg::axpy(&p, T::lit(wi / total), v);
                }
                p
            }
            SetShape::Ball { center, radius, norm } => {
                let u = sample_unit_ball(center.len(), *norm, rng);
                linalg::axpy(center, *radius, &u)
            }
            SetShape::Capsule { a, b, radius, norm } => {
                let t = T::lit(rng.gen::<f64>());
                let p = segment_point(a, b, t);
                let u = sample_unit_ball(a.len(), *norm, rng);
                linalg::axpy(&p, *radius, &u)
            }
        }
    }
}

fn lex_argmax<T: Real>(vertices: &[Vec<T>], y: &[T]) -> Vec<T> {
    let vals: Vec<T> = vertices.iter().map(|v| linalg::dot(v, y)).collect();
    let best = vals.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = T::lit(1e-12) * (T::one() + best.abs());
    let mut arg: Option<&Vec<T>> = None;
    for (v, &val) in vertices.iter().zip(&vals) {
        if val >= best - tol {
            arg = match arg {
                Some(cur) if !linalg::lex_less(v, cur) => Some(cur),
                _ => Some(v),
            };
        }
    }
    arg.expect("nonempty vertex list").clone()
}

fn ball_argmax<T: Real>(center: &[T], radius: T, norm: NormTag, y: &[T]) -> Vec<T> {
    // maximize <u, y> over |u|_norm <= 1: a unit subgradient of the dual norm at y
    let u = norm.dual().unit_subgradient(y);
    linalg::axpy(center, radius, &u)
}

fn segment_point<T: Real>(a: &[T], b: &[T], t: T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + t * (y - x)).collect()
}

fn project_segment<T: Real>(a: &[T], b: &[T], y: &[T]) -> Vec<T> {
    let d = linalg::sub(b, a);
    let dd = linalg::dot(&d, &d);
    if dd <= T::zero() {
        return a.to_vec();
    }
    let t = (linalg::dot(&linalg::sub(y, a), &d) / dd).max(T::zero()).min(T::one());
    segment_point(a, b, t)
}

fn interval_hull<T: Real>(vertices: &[Vec<T>]) -> (T, T) {
    vertices.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
        (lo.min(v[0]), hi.max(v[0]))
    })
}

/// Euclidean projection onto `center + radius * B_norm`.
fn project_ball<T: Real>(center: &[T], radius: T, norm: NormTag, y: &[T]) -> Vec<T> {
    let d = linalg::sub(y, center);
    let local = match norm {
        NormTag::L2 => {
            let r = linalg::norm2(&d);
            if r <= radius {
                d
            } else {
                linalg::scale(radius / r, &d)
            }
        }
        NormTag::LInf => d.iter().map(|&v| v.max(-radius).min(radius)).collect(),
        NormTag::L1 => project_l1_ball(&d, radius),
    };
    linalg::add(center, &local)
}

/// Projection onto `{ |v|_1 <= radius }` by sorting magnitudes.
pub(crate) fn project_l1_ball<T: Real>(v: &[T], radius: T) -> Vec<T> {
    if NormTag::L1.eval(v) <= radius {
        return v.to_vec();
    }
    if radius <= T::zero() {
        return linalg::zeros(v.len());
    }
    let mut mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (j, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / T::lit((j + 1) as f64);
        if m - t > T::zero() {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(T::zero()))
        .collect()
}

/// Segment parameter of the Euclidean projection onto `[a, b] + radius * B_norm`;
/// `t -> dist_2(y, p_t + radius * B)` is convex.
fn capsule_parameter<T: Real>(a: &[T], b: &[T], radius: T, norm: NormTag, y: &[T]) -> T {
    let (t, _) = linalg::golden_min(0.0, 1.0, 1e-13, |t| {
        let p = segment_point(a, b, T::lit(t));
        let q = project_ball(&p, radius, norm, y);
        linalg::dist2(y, &q).to_f64().unwrap_or(f64::INFINITY)
    });
    T::lit(t)
}

fn affine_rank<T: Real>(vertices: &[Vec<T>]) -> usize {
    let base = &vertices[0];
    let mut rows: Vec<Vec<T>> = vertices[1..].iter().map(|v| linalg::sub(v, base)).collect();
    let n = base.len();
    let mut rank = 0;
    let tol = T::lit(1e-10);
    for col in 0..n {
        let piv = (rank..rows.len()).max_by(|&i, &j| {
            rows[i][col]
                .abs()
                .partial_cmp(&rows[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let Some(piv) = piv else { break };
        if rows[piv][col].abs() <= tol {
            continue;
        }
        rows.swap(rank, piv);
        for r in rank + 1..rows.len() {
            let f = rows[r][col] / rows[rank][col];
            for k in col..n {
                let v = rows[rank][k];
                rows[r][k] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

fn sample_unit_ball<T: Real, R: Rng + ?Sized>(n: usize, norm: NormTag, rng: &mut R) -> Vec<T> {
    let radial = rng.gen::<f64>().powf(1.0 / n as f64);
    let v: Vec<f64> = match norm {
        NormTag::LInf => (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        NormTag::L2 => {
            let g: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
            let r = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            g.iter().map(|x| radial * x / r).collect()
        }
        NormTag::L1 => {
            let e: Vec<f64> = (0..n).map(|_| -(rng.gen::<f64>().max(1e-300)).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter()
                .map(|x| {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    sign * radial * x / s
                })
                .collect()
        }
    };
    v.into_iter().map(T::lit).collect()
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Wolfe's minimum-norm-point algorithm applied to `{v_i - y}`; returns the
/// Euclidean projection of `y` onto `conv{v_i}`.
fn min_norm_point<T: Real>(vertices: &[Vec<T>], y: &[T]) -> Vec<T> {
    let pts: Vec<Vec<T>> = vertices.iter().map(|v| linalg::sub(v, y)).collect();
    let scale = pts
        .iter()
        .map(|p| linalg::dot(p, p))
        .fold(T::zero(), T::max)
        .max(T::lit(1e-300));
    let eps = T::lit(1e-13);

    let start = (0..pts.len())
        .min_by(|&i, &j| {
            linalg::dot(&pts[i], &pts[i])
                .partial_cmp(&linalg::dot(&pts[j], &pts[j]))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![T::one()];
    let mut x = pts[start].clone();

    for _major in 0..(50 * pts.len() + 100) {
        let xx = linalg::dot(&x, &x);
        let (j, xj) =
            (0..pts.len())
                .map(|i| (i, linalg::dot(&x, &pts[i])))
                .fold(
                    (usize::MAX, T::infinity()),
                    |acc, cur| if cur.1 < acc.1 { cur } else { acc },
                );
        if xj >= xx - eps * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(T::zero());

        for _minor in 0..(pts.len() + 10) {
            let Some(alpha) = affine_min_norm(&pts, &active) else {
                // degenerate affine hull: drop the newest point and stop
                active.pop();
                lambda.pop();
                break;
            };
            if alpha.iter().all(|&a| a > eps) {
                lambda = alpha;
                break;
            }
            let mut theta = T::one();
            for (&l, &a) in lambda.iter().zip(&alpha) {
                if a <= eps {
                    let d = l - a;
                    if d > T::zero() {
                        theta = theta.min(l / d);
                    }
                }
            }
            for (l, &a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (T::one() - theta) * *l;
            }
            let mut keep_a = Vec::new();
            let mut keep_l = Vec::new();
            for (&i, &l) in active.iter().zip(&lambda) {
                if l > eps {
                    keep_a.push(i);
                    keep_l.push(l);
                }
            }
            if keep_a.is_empty() {
                keep_a.push(active[0]);
                keep_l.push(T::one());
            }
            let total = keep_l.iter().fold(T::zero(), |acc, &l| acc + l);
            active = keep_a;
            lambda = keep_l.into_iter().map(|l| l / total).collect();
        }
        x = combine(&pts, &active, &lambda);
    }
    let x = combine(&pts, &active, &lambda);
    if linalg::dot(&x, &x) <= eps * eps * scale {
        // y is inside the hull; avoid the rounding of the barycentric sum
        return y.to_vec();
    }
    linalg::add(y, &x)
}

fn combine<T: Real>(pts: &[Vec<T>], active: &[usize], lambda: &[T]) -> Vec<T> {
    let mut x = linalg::zeros(pts[0].len());
    for (&i, &l) in active.iter().zip(lambda) {
        x = linalg::axpy(&x, l, &pts[i]);
    }
    x
}

/// Weights `alpha` (summing to one) of the minimum-norm point of the affine
/// hull of the active points.
fn affine_min_norm<T: Real>(pts: &[Vec<T>], active: &[usize]) -> Option<Vec<T>> {
    let k = active.len();
    let mut a = vec![vec![T::zero(); k + 1]; k + 1];
    let mut b = vec![T::zero(); k + 1];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = linalg::dot(&pts[active[r]], &pts[active[c]]);
        }
        a[r][k] = T::one();
        a[k][r] = T::one();
    }
    b[k] = T::one();
    let scale = a.iter().flat_map(|r| r.iter()).fold(T::zero(), |m, v| m.max(v.abs()));
    let sol = linalg::solve_dense(a, b, T::lit(1e-14) * scale.max(T::one()))?;
    Some(sol[..k].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> CompactConvexSet<f64> {
        CompactConvexSet::boxed(&[-1.0, -1.0], &[1.0, 1.0], Side::Primal).unwrap()
    }

    #[test]
    fn support_examples() {
        assert_eq!(square().support(&[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(square().support(&[0.0, 0.0]).unwrap(), 0.0);
        let ball = CompactConvexSet::ball(vec![0.0, 0.0], 1.0, NormTag::LInf, Side::Primal).unwrap();
        assert_eq!(ball.support(&[2.0, -1.0]).unwrap(), 3.0);
        // dense-grid cross-check of the ball support value
        let mut grid_max = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let u = [-1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0];
                grid_max = grid_max.max(2.0 * u[0] - u[1]);
            }
        }
        assert!((grid_max - 3.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(square().argmax_support(&[1.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(square().argmax_support(&[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
        let single = CompactConvexSet::singleton(vec![0.3, -0.7], Side::Dual).unwrap();
        for y in [[1.0, 0.0], [0.0, 0.0], [-3.0, 2.0]] {
            assert_eq!(single.argmax_support(&y).unwrap(), vec![0.3, -0.7]);
        }
    }

    #[test]
    fn dist_examples() {
        assert!((square().dist(&[2.0, 0.0], NormTag::L2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(square().dist(&[0.5, -0.2], NormTag::L1).unwrap(), 0.0);
        let w = CompactConvexSet::singleton(vec![1.0, 2.0], Side::Dual).unwrap();
        let y = [4.0, -2.0];
        for t in [NormTag::L1, NormTag::L2, NormTag::LInf] {
            let b = w.dist_bracket(&y, t).unwrap();
            assert!(b.is_exact());
            assert_eq!(b.upper, t.eval(&linalg::sub(&y, &[1.0, 2.0])));
        }
    }

    #[test]
    fn non_euclidean_distance_to_square() {
        // from (3, 2) the nearest points of [-1,1]^2 are (1, 1): l1 distance 3, l_inf 2
        let b1 = square().dist_bracket(&[3.0, 2.0], NormTag::L1).unwrap();
        assert!((b1.upper - 3.0).abs() < 1e-9, "{b1:?}");
        let binf = square().dist_bracket(&[3.0, 2.0], NormTag::LInf).unwrap();
        assert!((binf.upper - 2.0).abs() < 1e-9, "{binf:?}");
        assert!(binf.lower <= binf.upper);
    }

    #[test]
    fn non_euclidean_distance_needs_descent() {
        // triangle where the l1-nearest point differs from the Euclidean projection
        let tri =
            CompactConvexSet::polytope(vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 1.0]], Side::Primal).unwrap();
        let y = [3.0, 2.0];
        // brute force over a fine barycentric grid
        let mut brute = f64::INFINITY;
        let m = 400;
        for i in 0..=m {
            for j in 0..=(m - i) {
                let (a, b) = (i as f64 / m as f64, j as f64 / m as f64);
                let z = [4.0 * a, b];
                brute = brute.min((y[0] - z[0]).abs() + (y[1] - z[1]).abs());
            }
        }
        let got = tri.dist_bracket(&y, NormTag::L1).unwrap();
        assert!(got.lower <= brute + 1e-9);
        assert!((got.upper - brute).abs() < 1e-3, "{got:?} vs {brute}");
    }

    #[test]
    fn project_examples() {
        assert_eq!(square().project(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(square().project(&[0.25, -0.5]).unwrap(), vec![0.25, -0.5]);
        let iv = CompactConvexSet::interval(0.2, 0.4, Side::Dual).unwrap();
        assert_eq!(iv.project(&[1.0]).unwrap(), vec![0.4]);
    }

    #[test]
    fn projection_onto_hexagon_matches_brute_force() {
        let hex: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let set = CompactConvexSet::polytope(hex.clone(), Side::Primal).unwrap();
        let y = [2.0, 0.7];
        let p = set.project(&y).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..6 {
            let (a, b) = (&hex[k], &hex[(k + 1) % 6]);
            for i in 0..=20000 {
                let t = i as f64 / 20000.0;
                let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                best = best.min(linalg::dist2(&y, &q));
            }
        }
        assert!((linalg::dist2(&y, &p) - best).abs() < 1e-8);
    }

    #[test]
    fn capsule_support_and_projection() {
        let cap: CompactConvexSet<f64> =
            CompactConvexSet::capsule(vec![0.0, 0.0], vec![2.0, 0.0], 0.5, NormTag::L2, Side::Primal).unwrap();
        assert!((cap.support(&[1.0, 0.0]).unwrap() - 2.5).abs() < 1e-15);
        assert!((cap.support(&[0.0, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        let p = cap.project(&[1.0, 3.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
        let box_cap: CompactConvexSet<f64> =
            CompactConvexSet::capsule(vec![0.0, 0.0], vec![2.0, 2.0], 0.5, NormTag::LInf, Side::Primal).unwrap();
        assert!(box_cap.contains(&[2.5, 2.5], 1e-12).unwrap());
        assert!(!box_cap.contains(&[2.6, 2.5], 1e-12).unwrap());
        let d = box_cap.dist(&[3.5, 2.0], NormTag::LInf).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_tests() {
        assert!(square().interior_contains(&[0.0, 0.9]).unwrap());
        assert!(!square().interior_contains(&[1.0, 0.0]).unwrap());
        let seg = CompactConvexSet::polytope(vec![vec![0.0, 0.0], vec![1.0, 1.0]], Side::Primal).unwrap();
        assert!(!seg.has_interior());
        assert!(square().has_interior());
        let iv = CompactConvexSet::interval(-1.0, 1.0, Side::Primal).unwrap();
        assert!(iv.interior_contains(&[0.0]).unwrap());
        assert!(!iv.interior_contains(&[1.0]).unwrap());
    }

    #[test]
    fn constructor_errors() {
        assert!(CompactConvexSet::<f64>::polytope(vec![], Side::Primal).is_err());
        assert!(CompactConvexSet::polytope(vec![vec![1.0], vec![1.0, 2.0]], Side::Primal).is_err());
        assert!(CompactConvexSet::ball(vec![0.0], -1.0, NormTag::L2, Side::Primal).is_err());
        assert_eq!(
            square().support(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn f32_sets() {
        let s = CompactConvexSet::<f32>::boxed(&[-1.0, -1.0], &[1.0, 1.0], Side::Primal).unwrap();
        assert_eq!(s.support(&[1.0, 2.0]).unwrap(), 3.0f32);
        assert_eq!(s.project(&[2.0, 0.0]).unwrap(), vec![1.0f32, 0.0]);
    }

    #[test]
    fn samples_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sets = vec![
            square(),
            CompactConvexSet::ball(vec![1.0, -1.0], 0.7, NormTag::L1, Side::Dual).unwrap(),
            CompactConvexSet::ball(vec![1.0, -1.0], 0.7, NormTag::L2, Side::Dual).unwrap(),
            CompactConvexSet::capsule(vec![0.0, 0.0], vec![1.0, 3.0], 0.2, NormTag::LInf, Side::Dual).unwrap(),
        ];
        for s in &sets {
            for _ in 0..100 {
                let p = s.sample(&mut rng);
                assert!(s.dist(&p, NormTag::L2).unwrap() <= 1e-10);
            }
        }
    }

    fn polytope_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..7)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn support_is_positively_homogeneous(
            verts in polytope_strategy(),
            y in prop::collection::vec(-5.0f64..5.0, 2),
            lam in 0.0f64..10.0,
        ) {
            let s = CompactConvexSet::polytope(verts, Side::Primal).unwrap();
            let lhs = s.support(&linalg::scale(lam, &y)).unwrap();
            let rhs = lam * s.support(&y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn argmax_is_member_and_attains(
            verts in polytope_strategy(),
            y in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let s = CompactConvexSet::polytope(verts, Side::Primal).unwrap();
            let v = s.argmax_support(&y).unwrap();
            prop_assert!(s.dist(&v, NormTag::L2).unwrap() <= 1e-10);
            prop_assert!((linalg::dot(&v, &y) - s.support(&y).unwrap()).abs() <= 1e-10);
            let b = CompactConvexSet::ball(vec![0.5, -0.5], 1.5, NormTag::L1, Side::Primal).unwrap();
            let v = b.argmax_support(&y).unwrap();
            prop_assert!(b.contains(&v, 1e-10).unwrap());
            prop_assert!((linalg::dot(&v, &y) - b.support(&y).unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn projection_is_idempotent_and_optimal(
            verts in polytope_strategy(),
            y in prop::collection::vec(-6.0f64..6.0, 2),
        ) {
            let s = CompactConvexSet::polytope(verts.clone(), Side::Primal).unwrap();
            let p = s.project(&y).unwrap();
            let pp = s.project(&p).unwrap();
            prop_assert!(linalg::dist2(&p, &pp) <= 1e-9);
            // variational inequality <y - p, v - p> <= 0 for every vertex
            let r = linalg::sub(&y, &p);
            for v in &verts {
                prop_assert!(linalg::dot(&r, &linalg::sub(v, &p)) <= 1e-9 * (1.0 + linalg::dot(&r, &r)));
            }
        }

        #[test]
        fn support_matches_projected_gradient_ascent(
            verts in polytope_strategy(),
            y in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let s = CompactConvexSet::polytope(verts, Side::Primal).unwrap();
            // independent route: projected gradient ascent on <z, y>
            let mut z = s.anchor_points().pop().unwrap();
            for k in 0..200 {
                let step = 10.0 * (1.0 + k as f64);
                z = s.project(&linalg::axpy(&z, step, &y)).unwrap();
            }
            let ascent = linalg::dot(&z, &y);
            prop_assert!((ascent - s.support(&y).unwrap()).abs() <= 1e-8);
        }

        #[test]
        fn sampled_points_have_zero_distance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = CompactConvexSet::polytope(
                vec![vec![0.0, 0.0], vec![2.0, 0.5], vec![-1.0, 1.5], vec![0.5, -1.0]],
                Side::Primal,
            ).unwrap();
            let p = s.sample(&mut rng);
            prop_assert!(s.dist(&p, NormTag::L2).unwrap() <= 1e-10);
            prop_assert!(s.dist(&p, NormTag::L1).unwrap() <= 1e-10);
        }
    }
}
