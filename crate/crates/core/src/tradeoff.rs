// SPDX-License-Identifier: Apache-2.0

//! f-DP trade-off functions and their parallel composition.
//!
//! Everything here is exactly piecewise linear. A [`PiecewiseLinear`] is a
//! continuous function given by breakpoints, optionally continued by affine
//! rays on either side; outside its domain it is `+∞`. That is enough to
//! represent a trade-off curve on `[0, 1]`, its convex conjugate on `ℝ`, and
//! the conjugate of that conjugate, so the double-conjugate composition rule
//! can be executed without any quadrature.
//!
//! The composed guarantee of modules run on disjoint parts of the data is
//! `min{f_1, …, f_k}**`, see [`compose_parallel`].

use crate::error::{Error, Result};
use crate::normal;
use crate::scalar::Real;

/// A classical `(ε, δ)` differential privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpsDelta<T = f64> {
    pub epsilon: T,
    pub delta: T,
}

impl<T: Real> EpsDelta<T> {
    pub fn new(epsilon: T, delta: T) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < T::zero() {
            return Err(Error::InvalidPrivacy(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !(delta >= T::zero() && delta <= T::one()) {
            return Err(Error::InvalidPrivacy(format!(
                "delta must lie in [0, 1], got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Continuous piecewise-linear function with optional affine end rays.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T> {
    points: Vec<(T, T)>,
    left_ray: Option<T>,
    right_ray: Option<T>,
}

impl<T: Real> PiecewiseLinear<T> {
    /// Function defined only on `[points[0].0, points[last].0]`.
    pub fn compact(points: Vec<(T, T)>) -> Result<Self> {
        Self::with_rays(points, None, None)
    }

    /// `left_ray` / `right_ray` are the slopes of the affine continuation
    /// beyond the first / last breakpoint; `None` means `+∞` there.
    pub fn with_rays(
        points: Vec<(T, T)>,
        left_ray: Option<T>,
        right_ray: Option<T>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCurve("no breakpoints".into()));
        }
        for w in points.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::InvalidCurve(format!(
                    "breakpoints not strictly increasing at x = {}",
                    w[1].0
                )));
            }
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidCurve("non-finite breakpoint".into()));
        }
        if left_ray.is_some_and(|s| !s.is_finite()) || right_ray.is_some_and(|s| !s.is_finite()) {
            return Err(Error::InvalidCurve("non-finite ray slope".into()));
        }
        Ok(Self {
            points,
            left_ray,
            right_ray,
        })
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn left_ray(&self) -> Option<T> {
        self.left_ray
    }

    pub fn right_ray(&self) -> Option<T> {
        self.right_ray
    }

    /// Closed domain `[lo, hi]`, with infinite ends where a ray continues.
    pub fn domain(&self) -> (T, T) {
        let lo = match self.left_ray {
            Some(_) => T::neg_infinity(),
            None => self.points[0].0,
        };
        let hi = match self.right_ray {
            Some(_) => T::infinity(),
            None => self.points[self.points.len() - 1].0,
        };
        (lo, hi)
    }

    pub fn eval(&self, x: T) -> T {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if x < first.0 {
            return match self.left_ray {
                Some(s) => first.1 + s * (x - first.0),
                None => T::infinity(),
            };
        }
        if x > last.0 {
            return match self.right_ray {
                Some(s) => last.1 + s * (x - last.0),
                None => T::infinity(),
            };
        }
        let i = self.points.partition_point(|p| p.0 <= x);
        if i == self.points.len() {
            return last.1;
        }
        let (x0, y0) = self.points[i - 1];
        let (x1, y1) = self.points[i];
        if x == x0 {
            return y0;
        }
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    /// Slopes of consecutive segments are non-decreasing, and the rays do not
    /// bend the function downwards.
    pub fn is_convex(&self, tol: T) -> bool {
        let mut slopes: Vec<T> = Vec::with_capacity(self.points.len() + 1);
        if let Some(s) = self.left_ray {
            slopes.push(s);
        }
        slopes.extend(
            self.points
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)),
        );
        if let Some(s) = self.right_ray {
            slopes.push(s);
        }
        slopes
            .windows(2)
            .all(|w| w[1] >= w[0] - tol * (T::one() + w[0].abs().max(w[1].abs())))
    }

    /// Largest absolute difference over the union of both breakpoint sets.
    /// For two piecewise-linear functions on a common compact domain this is
    /// the sup-norm distance.
    pub fn max_deviation(&self, other: &Self) -> T {
        self.points
            .iter()
            .chain(other.points.iter())
            .map(|&(x, _)| (self.eval(x) - other.eval(x)).abs())
            .fold(T::zero(), T::max)
    }
}

/// Convex, non-increasing trade-off function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve<T = f64> {
    inner: PiecewiseLinear<T>,
}

impl<T: Real> TradeoffCurve<T> {
    pub fn from_breakpoints(points: Vec<(T, T)>) -> Result<Self> {
        Self::from_piecewise(PiecewiseLinear::compact(points)?)
    }

    fn from_piecewise(pl: PiecewiseLinear<T>) -> Result<Self> {
        let tol = T::exact_tol();
        let (first, last) = (pl.points[0], pl.points[pl.points.len() - 1]);
        if pl.left_ray.is_some() || pl.right_ray.is_some() {
            return Err(Error::InvalidCurve(
                "trade-off curves live on [0, 1]".into(),
            ));
        }
        if first.0 != T::zero() || last.0 != T::one() {
            return Err(Error::InvalidCurve(format!(
                "domain must be [0, 1], got [{}, {}]",
                first.0, last.0
            )));
        }
        if pl.points.iter().any(|p| p.1 < -tol || p.1 > T::one() + tol) {
            return Err(Error::InvalidCurve("values must lie in [0, 1]".into()));
        }
        if pl.points.windows(2).any(|w| w[1].1 > w[0].1 + tol) {
            return Err(Error::InvalidCurve("curve must be non-increasing".into()));
        }
        if !pl.is_convex(tol) {
            return Err(Error::InvalidCurve("curve must be convex".into()));
        }
        let points = pl
            .points
            .into_iter()
            .map(|(a, b)| (a, b.max(T::zero()).min(T::one())))
            .collect();
        Ok(Self {
            inner: PiecewiseLinear {
                points,
                left_ray: None,
                right_ray: None,
            },
        })
    }

    /// `Id(α) = 1 − α`, perfect privacy.
    pub fn identity() -> Self {
        Self::from_breakpoints(vec![(T::zero(), T::one()), (T::one(), T::zero())])
            .expect("identity is a valid curve")
    }

    /// `f ≡ 0`, no guarantee at all.
    pub fn zero() -> Self {
        Self::from_breakpoints(vec![(T::zero(), T::zero()), (T::one(), T::zero())])
            .expect("zero is a valid curve")
    }

    /// `f(α) = max{0, 1 − δ − e^ε α, e^{−ε}(1 − δ − α)}`.
    pub fn eps_delta(b: EpsDelta<T>) -> Self {
        let one = T::one();
        let c = one - b.delta;
        if c <= T::zero() {
            return Self::zero();
        }
        let kink = c / (one + b.epsilon.exp());
        let mut pts = vec![(T::zero(), c)];
        if kink > T::zero() && kink < c {
            pts.push((kink, kink));
        }
        if c < one {
            pts.push((c, T::zero()));
        }
        pts.push((one, T::zero()));
        Self::from_breakpoints(pts).expect("closed-form (eps, delta) curve is valid")
    }

    /// Conservative piecewise-linear version of the Gaussian trade-off
    /// `G_μ(α) = Φ(Φ⁻¹(1 − α) − μ)`.
    ///
    /// Built as the upper envelope of `grid_size − 2` tangent lines of `G_μ`
    /// (and the zero line), so the result is convex and lies below `G_μ`
    /// everywhere: any guarantee stated with it is implied by the exact one.
    pub fn gaussian(mu: T, grid_size: usize) -> Result<Self> {
        if !(mu >= T::zero()) || !mu.is_finite() {
            return Err(Error::InvalidPrivacy(format!(
                "mu must be finite and >= 0, got {mu}"
            )));
        }
        if grid_size < 16 {
            return Err(Error::InvalidInput(format!(
                "gaussian grid needs at least 16 points, got {grid_size}"
            )));
        }
        let m = mu.as_f64();
        if m == 0.0 {
            return Ok(Self::identity());
        }
        // Tangent points equally spaced in z = Φ⁻¹(1 − α), symmetric around
        // the fixed point α = G_μ(α) at z = μ/2.
        let interior = grid_size - 2;
        let half_width = 7.0;
        let mut lines: Vec<(T, T)> = Vec::with_capacity(interior + 1);
        for i in 0..interior {
            let z = m / 2.0 + half_width - 2.0 * half_width * (i as f64 + 0.5) / interior as f64;
            let alpha = normal::cdf(-z);
            let value = normal::cdf(z - m);
            let slope = -(m * z - 0.5 * m * m).exp();
            lines.push((T::of(slope), T::of(value - slope * alpha)));
        }
        lines.push((T::zero(), T::zero()));
        let env = upper_envelope(&lines, T::zero(), T::one())?;
        // Far-tail tangents meet in clusters a few ulps apart; re-hulling the
        // envelope points removes the rounding kinks and only lowers values.
        let pts = env
            .points
            .into_iter()
            .map(|(a, b)| (a, b.min(T::one())))
            .collect();
        lower_convex_envelope(&PiecewiseLinear::compact(pts)?)
    }

    pub fn eval(&self, alpha: T) -> T {
        self.inner.eval(alpha)
    }

    pub fn breakpoints(&self) -> &[(T, T)] {
        self.inner.points()
    }

    pub fn as_piecewise(&self) -> &PiecewiseLinear<T> {
        &self.inner
    }

    /// `self(α) ≥ other(α) − tol` at every breakpoint of either curve.
    pub fn dominates(&self, other: &Self) -> bool {
        let tol = T::exact_tol();
        self.breakpoints()
            .iter()
            .chain(other.breakpoints())
            .all(|&(a, _)| self.eval(a) >= other.eval(a) - tol)
    }

    pub fn max_deviation(&self, other: &Self) -> T {
        self.inner.max_deviation(&other.inner)
    }

    /// The smallest ε such that this curve dominates `f_{ε,δ}`, or `None` when
    /// no finite ε works for this δ.
    pub fn certified_epsilon(&self, delta: T) -> Option<T> {
        let tol = T::exact_tol();
        let c = T::one() - delta;
        if c <= T::zero() {
            return Some(T::zero());
        }
        if self.eval(T::zero()) < c - tol {
            return None;
        }
        let mut alphas: Vec<T> = self
            .breakpoints()
            .iter()
            .map(|p| p.0)
            .filter(|&a| a > T::zero() && a < c)
            .collect();
        alphas.push(c);
        let mut ratio = T::one();
        for &a in &alphas {
            let f = self.eval(a);
            // f ≥ 1 − δ − e^ε α
            ratio = ratio.max((c - f) / a);
        }
        alphas.insert(0, T::zero());
        for &a in &alphas {
            let f = self.eval(a);
            let num = c - a;
            // f ≥ e^{−ε}(1 − δ − α)
            if num > tol {
                if f <= T::zero() {
                    return None;
                }
                ratio = ratio.max(num / f);
            }
        }
        Some(ratio.ln().max(T::zero()))
    }
}

/// Exact pointwise minimum of curves sharing the domain `[0, 1]`.
///
/// The breakpoints are the union of the inputs' breakpoints plus every
/// crossing of two inputs inside a common linear piece.
pub fn pointwise_min<T: Real>(curves: &[TradeoffCurve<T>]) -> Result<PiecewiseLinear<T>> {
    if curves.is_empty() {
        return Err(Error::InvalidInput("pointwise_min of an empty set".into()));
    }
    let mut xs: Vec<T> = curves
        .iter()
        .flat_map(|c| c.breakpoints().iter().map(|p| p.0))
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    xs.dedup();

    let mut out: Vec<(T, T)> = Vec::with_capacity(xs.len() * 2);
    let values: Vec<Vec<T>> = xs
        .iter()
        .map(|&x| curves.iter().map(|c| c.eval(x)).collect())
        .collect();
    let min_at = |x: T| curves.iter().map(|c| c.eval(x)).fold(T::infinity(), T::min);
    for i in 0..xs.len() {
        out.push((xs[i], values[i].iter().copied().fold(T::infinity(), T::min)));
        if i + 1 == xs.len() {
            break;
        }
        let (xl, xr) = (xs[i], xs[i + 1]);
        let mut crossings: Vec<T> = Vec::new();
        for a in 0..curves.len() {
            for b in (a + 1)..curves.len() {
                let dl = values[i][a] - values[i][b];
                let dr = values[i + 1][a] - values[i + 1][b];
                if (dl > T::zero() && dr < T::zero()) || (dl < T::zero() && dr > T::zero()) {
                    let t = dl / (dl - dr);
                    let x = xl + t * (xr - xl);
                    if x > xl && x < xr {
                        crossings.push(x);
                    }
                }
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossing"));
        crossings.dedup();
        out.extend(crossings.into_iter().map(|x| (x, min_at(x))));
    }
    PiecewiseLinear::compact(out)
}

/// Upper envelope `s ↦ max_k (a_k s + b_k)` restricted to `[lo, hi]`.
///
/// `lines` are `(slope, intercept)` pairs with strictly increasing slopes.
/// Infinite ends of the interval become rays.
fn upper_envelope<T: Real>(lines: &[(T, T)], lo: T, hi: T) -> Result<PiecewiseLinear<T>> {
    debug_assert!(!lines.is_empty());
    debug_assert!(lines.windows(2).all(|w| w[0].0 < w[1].0));
    let meet = |p: (T, T), q: (T, T)| (p.1 - q.1) / (q.0 - p.0);

    // Convex hull trick: a line survives only if it is strictly on top
    // somewhere between its neighbours.
    let mut active: Vec<(T, T)> = Vec::with_capacity(lines.len());
    for &line in lines {
        while active.len() >= 2 {
            let a = active[active.len() - 2];
            let b = active[active.len() - 1];
            if meet(a, b) >= meet(b, line) {
                active.pop();
            } else {
                break;
            }
        }
        active.push(line);
    }
    // Lines that only win outside [lo, hi] are dropped from the ends.
    while active.len() >= 2 && meet(active[0], active[1]) <= lo {
        active.remove(0);
    }
    while active.len() >= 2 {
        let k = active.len();
        if meet(active[k - 2], active[k - 1]) >= hi {
            active.pop();
        } else {
            break;
        }
    }

    let value = |s: T| {
        active
            .iter()
            .map(|&(a, b)| a * s + b)
            .fold(T::neg_infinity(), T::max)
    };
    let mut points: Vec<(T, T)> = Vec::with_capacity(active.len() + 1);
    if lo.is_finite() {
        points.push((lo, value(lo)));
    }
    for w in active.windows(2) {
        let s = meet(w[0], w[1]);
        if s > lo && s < hi {
            // The crossing value taken from the left line of the pair.
            let v = w[0].0 * s + w[0].1;
            if points.last().is_none_or(|p| s > p.0) {
                points.push((s, v));
            }
        }
    }
    if hi.is_finite() && points.last().is_none_or(|p| hi > p.0) {
        points.push((hi, value(hi)));
    }
    if points.is_empty() {
        points.push((T::zero(), value(T::zero())));
    }
    let left_ray = (!lo.is_finite()).then(|| active[0].0);
    let right_ray = (!hi.is_finite()).then(|| active[active.len() - 1].0);
    PiecewiseLinear::with_rays(points, left_ray, right_ray)
}

/// `g*(y) = sup_x (x y − g(x))`, exactly.
///
/// The supremum of `x y − g(x)` over a piecewise-linear `g` is attained at a
/// breakpoint (or escapes along a ray), so `g*` is the upper envelope of one
/// line per breakpoint. A ray of slope `r` on the right of `g` caps the
/// conjugate's domain at `y ≤ r`; a left ray of slope `l` gives `y ≥ l`.
pub fn convex_conjugate<T: Real>(g: &PiecewiseLinear<T>) -> Result<PiecewiseLinear<T>> {
    let lines: Vec<(T, T)> = g.points.iter().map(|&(x, v)| (x, -v)).collect();
    let lo = g.left_ray.unwrap_or(T::neg_infinity());
    let hi = g.right_ray.unwrap_or(T::infinity());
    if lo > hi {
        return Err(Error::InvalidCurve(
            "conjugate is +inf everywhere (left ray steeper than right ray)".into(),
        ));
    }
    upper_envelope(&lines, lo, hi)
}

/// Greatest convex function below `f`, via a monotone-chain lower hull of its
/// breakpoints.
pub fn lower_convex_envelope<T: Real>(f: &PiecewiseLinear<T>) -> Result<TradeoffCurve<T>> {
    if f.left_ray.is_some() || f.right_ray.is_some() {
        return Err(Error::InvalidCurve(
            "envelope is only defined for functions on a compact domain".into(),
        ));
    }
    let cross =
        |o: (T, T), a: (T, T), b: (T, T)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(T, T)> = Vec::with_capacity(f.points.len());
    for &p in &f.points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    TradeoffCurve::from_breakpoints(hull)
}

/// Privacy of modules run on disjoint parts of the data:
/// `min{f_1, …, f_k}**`.
pub fn compose_parallel<T: Real>(curves: &[TradeoffCurve<T>]) -> Result<TradeoffCurve<T>> {
    let m = pointwise_min(curves)?;
    lower_convex_envelope(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ed(e: f64, d: f64) -> TradeoffCurve {
        TradeoffCurve::eps_delta(EpsDelta::new(e, d).unwrap())
    }

    #[test]
    fn eps_delta_special_cases() {
        assert_eq!(ed(0.0, 0.0).max_deviation(&TradeoffCurve::identity()), 0.0);
        assert_eq!(ed(0.0, 1.0).max_deviation(&TradeoffCurve::zero()), 0.0);
        let f = ed(1.0, 0.0);
        let kink = 1.0 / (1.0 + std::f64::consts::E);
        assert_abs_diff_eq!(kink, 0.268_941_421_369_995_1, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(kink), kink, epsilon = 1e-15);
        assert_eq!(f.breakpoints().len(), 3);
        // the two lines agree at the kink: 1 − eα = e^{−1}(1 − α)
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(1.0 - e * kink, (1.0 - kink) / e, epsilon = 1e-15);
        assert!(f.breakpoints().len() <= 4 && ed(2.0, 0.1).breakpoints().len() == 4);
    }

    #[test]
    fn eps_delta_rejects_bad_params() {
        assert!(EpsDelta::new(-1.0, 0.0).is_err());
        assert!(EpsDelta::new(f64::INFINITY, 0.0).is_err());
        assert!(EpsDelta::new(1.0, 1.5).is_err());
        assert!(EpsDelta::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn symmetric_fixed_point() {
        for &e in &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let f = ed(e, 0.0);
            let a = 1.0 / (1.0 + f64::exp(e));
            assert_abs_diff_eq!(f.eval(a), a, epsilon = 1e-15);
        }
    }

    #[test]
    fn gaussian_examples() {
        let g0 = TradeoffCurve::<f64>::gaussian(0.0, 16).unwrap();
        assert_eq!(g0.max_deviation(&TradeoffCurve::identity()), 0.0);

        let g1 = TradeoffCurve::<f64>::gaussian(1.0, 1024).unwrap();
        let exact = normal::cdf(-1.0);
        assert_abs_diff_eq!(exact, 0.158_655, epsilon = 1e-6);
        assert!(g1.eval(0.5) <= exact + 1e-12);
        assert_abs_diff_eq!(g1.eval(0.5), exact, epsilon = 1e-4);

        let g50 = TradeoffCurve::<f64>::gaussian(50.0, 64).unwrap();
        for i in 0..=1000 {
            let a = 1e-3 + (1.0 - 1e-3) * i as f64 / 1000.0;
            assert!(g50.eval(a) <= 1e-6, "alpha {a}");
        }
        assert!(TradeoffCurve::<f64>::gaussian(-0.1, 32).is_err());
        assert!(TradeoffCurve::<f64>::gaussian(1.0, 15).is_err());
    }

    #[test]
    fn gaussian_is_lower_bound() {
        for &mu in &[0.3, 1.0, 2.5, 6.0] {
            let g = TradeoffCurve::<f64>::gaussian(mu, 64).unwrap();
            for i in 0..=2000 {
                let a = i as f64 / 2000.0;
                let exact = normal::cdf(normal::quantile(1.0 - a) - mu);
                assert!(g.eval(a) <= exact + 1e-12, "mu {mu} alpha {a}");
            }
        }
    }

    #[test]
    fn pointwise_min_examples() {
        let f = ed(1.0, 1e-3);
        let single = pointwise_min(std::slice::from_ref(&f)).unwrap();
        assert_eq!(single.max_deviation(f.as_piecewise()), 0.0);

        let with_id = pointwise_min(&[f.clone(), TradeoffCurve::identity()]).unwrap();
        assert!(with_id.max_deviation(f.as_piecewise()) < 1e-15);

        let (f1, f2) = (ed(1.0, 0.0), ed(2.0, 0.0));
        for i in 0..=1000 {
            let a = i as f64 / 1000.0;
            assert!(f2.eval(a) <= f1.eval(a) + 1e-15);
        }
        let m = pointwise_min(&[f1, f2.clone()]).unwrap();
        assert!(m.max_deviation(f2.as_piecewise()) < 1e-15);
    }

    #[test]
    fn pointwise_min_inserts_crossings() {
        // (1, 0) is steeper near 0 than a loose delta curve, they cross twice
        let a = ed(1.0, 0.0);
        let b = ed(0.2, 0.2);
        let m = pointwise_min(&[a.clone(), b.clone()]).unwrap();
        for i in 0..=4000 {
            let x = i as f64 / 4000.0;
            assert_abs_diff_eq!(m.eval(x), a.eval(x).min(b.eval(x)), epsilon = 1e-14);
        }
        assert!(!m.is_convex(1e-12));
    }

    #[test]
    fn conjugate_examples() {
        let id = PiecewiseLinear::compact(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let c = convex_conjugate(&id).unwrap();
        assert_abs_diff_eq!(c.eval(-1.0), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eval(3.0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eval(-7.0), -1.0, epsilon = 1e-15);

        let zero = PiecewiseLinear::compact(vec![(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let z = convex_conjugate(&zero).unwrap();
        for &y in &[-5.0, -0.5, 0.0, 0.25, 4.0] {
            assert_abs_diff_eq!(z.eval(y), f64::max(0.0, y), epsilon = 1e-15);
        }
        assert_eq!(z.left_ray(), Some(0.0));
        assert_eq!(z.right_ray(), Some(1.0));
    }

    #[test]
    fn double_conjugate_recovers_convex_curves() {
        let curves = vec![
            ed(1.0, 1e-5),
            ed(16.0, 1e-5),
            ed(0.0, 0.3),
            TradeoffCurve::gaussian(1.3, 128).unwrap(),
            TradeoffCurve::identity(),
            TradeoffCurve::zero(),
        ];
        for f in curves {
            let cc = convex_conjugate(&convex_conjugate(f.as_piecewise()).unwrap()).unwrap();
            assert_eq!(cc.domain(), (0.0, 1.0));
            for &(x, v) in f.breakpoints() {
                assert!((cc.eval(x) - v).abs() <= 1e-12, "x {x}");
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let f = ed(2.0, 0.01);
        let env = lower_convex_envelope(f.as_piecewise()).unwrap();
        assert_eq!(env.max_deviation(&f), 0.0);

        // V-shape above its chord: min of two lines meeting at (0.5, 0.9)
        let tent = PiecewiseLinear::compact(vec![(0.0, 1.0), (0.5, 0.9), (1.0, 0.0)]).unwrap();
        let env = lower_convex_envelope(&tent).unwrap();
        assert_eq!(env.breakpoints(), &[(0.0, 1.0), (1.0, 0.0)]);
    }

    #[test]
    fn envelope_equals_double_conjugate_on_nonconvex_min() {
        let m = pointwise_min(&[
            ed(1.0, 0.0),
            ed(0.2, 0.2),
            TradeoffCurve::gaussian(0.9, 40).unwrap(),
        ])
        .unwrap();
        let env = lower_convex_envelope(&m).unwrap();
        let cc = convex_conjugate(&convex_conjugate(&m).unwrap()).unwrap();
        assert!(env.as_piecewise().max_deviation(&cc) <= 1e-12);
    }

    #[test]
    fn compose_examples() {
        for &e in &[1.0, 2.0, 4.0, 8.0, 16.0] {
            let f = ed(e, 1e-5);
            let c = compose_parallel(&[f.clone(), f.clone(), f.clone()]).unwrap();
            assert!(c.max_deviation(&f) <= 1e-12);
            let single = compose_parallel(std::slice::from_ref(&f)).unwrap();
            assert!(single.max_deviation(&f) <= 1e-12);
        }
        let f = ed(1.0, 1e-5);
        let z = compose_parallel(&[f, TradeoffCurve::zero()]).unwrap();
        assert_eq!(z.max_deviation(&TradeoffCurve::zero()), 0.0);
        assert!(compose_parallel::<f64>(&[]).is_err());
    }

    #[test]
    fn dominates_examples() {
        let id = TradeoffCurve::identity();
        for f in [
            ed(1.0, 0.0),
            ed(3.0, 0.1),
            TradeoffCurve::gaussian(2.0, 32).unwrap(),
        ] {
            assert!(id.dominates(&f));
            assert!(f.dominates(&f));
        }
        assert!(ed(1.0, 0.0).dominates(&ed(2.0, 0.0)));
        assert!(!ed(2.0, 0.0).dominates(&ed(1.0, 0.0)));
    }

    #[test]
    fn certified_epsilon_recovers_parameters() {
        for &(e, d) in &[(0.0, 0.0), (1.0, 1e-5), (4.0, 1e-3), (16.0, 1e-5)] {
            let got = ed(e, d).certified_epsilon(d).unwrap();
            assert_abs_diff_eq!(got, e, epsilon = 1e-9);
        }
        // a smaller delta than the curve was built for cannot be certified
        assert!(ed(1.0, 1e-3).certified_epsilon(1e-5).is_none());
        assert!(TradeoffCurve::<f64>::zero()
            .certified_epsilon(0.5)
            .is_none());
        // any curve dominates f_{∞-ish}; identity certifies ε = 0
        assert_eq!(
            TradeoffCurve::<f64>::identity().certified_epsilon(0.0),
            Some(0.0)
        );
    }

    #[test]
    fn f32_curves_compose() {
        let f = TradeoffCurve::<f32>::eps_delta(EpsDelta::new(1.0f32, 1e-3).unwrap());
        let c = compose_parallel(&[f.clone(), f.clone()]).unwrap();
        assert!(c.max_deviation(&f) <= 1e-6);
    }

    #[test]
    fn invalid_curves_rejected() {
        assert!(TradeoffCurve::from_breakpoints(vec![
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.0),
            (1.0, 0.0)
        ])
        .is_err());
        assert!(TradeoffCurve::from_breakpoints(vec![(0.0, 1.0), (0.5, 0.9), (1.0, 0.0)]).is_err());
        assert!(TradeoffCurve::from_breakpoints(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(TradeoffCurve::from_breakpoints(vec![(0.1, 0.5), (1.0, 0.0)]).is_err());
    }
}
