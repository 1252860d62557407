//! Gauge triples `(h, τ, I)` and the scalar functions derived from them.
//!
//! A gauge is a pair of smooth functions with `τ' > 0` on an open interval
//! `I ⊂ (0, ∞)` and `h'' > 0` on `τ(I)`. Everything else in the crate (the
//! divergence kernel, the deformed exponential, escort weights, entropies)
//! is read off the gauge through [`GaugeTriple`] and [`Derived`].
//!
//! | symbol | definition            |
//! |--------|-----------------------|
//! | `ℓ`    | `h' ∘ τ`              |
//! | `m`    | `ℓ' τ'`               |
//! | `γ`    | `ℓ'' τ'`              |
//! | `χ`    | `1 / ℓ'`              |
//! | `s`    | `−h ∘ τ`              |
//! | `s★`   | `−τ ℓ + h ∘ τ`        |

#[allow(unused_imports)]
use num_traits::Float;
use crate::diff;
use crate::error::{bail, Result};
use crate::num::{exp_q, ln_q};
use crate::quad::{integrate, QuadOptions};
use crate::roots::{bracket_increasing, newton_bisect, RootOptions};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

/// Open interval `(lo, hi)` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            bail!(Domain, "invalid interval ({lo}, {hi})");
        }
        Ok(Self { lo, hi })
    }

    /// Interval admissible as a gauge domain: contained in (0, ∞).
    pub fn positive(lo: f64, hi: f64) -> Result<Self> {
        let i = Self::new(lo, hi)?;
        if lo < 0.0 {
            bail!(Domain, "gauge interval must lie in (0, inf), got ({lo}, {hi})");
        }
        Ok(i)
    }

    pub const fn positive_half_line() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub const fn real_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// A representative interior point.
    pub fn center(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => {
                if self.lo == 0.0 {
                    1.0
                } else {
                    self.lo + self.lo.abs().max(1.0)
                }
            }
            (false, true) => self.hi - self.hi.abs().max(1.0),
            (false, false) => 0.0,
        }
    }

    /// A compact subinterval used for grid checks: the interval itself
    /// shrunk by 1% of its width when bounded, otherwise a window of two
    /// decades around [`Interval::center`].
    pub fn compact_core(&self) -> (f64, f64) {
        let c = self.center();
        let lo = if self.lo.is_finite() {
            if self.hi.is_finite() {
                self.lo + 0.01 * (self.hi - self.lo)
            } else if self.lo == 0.0 {
                1e-2
            } else {
                self.lo + 0.01 * (c - self.lo)
            }
        } else {
            c - 1e2
        };
        let hi = if self.hi.is_finite() {
            if self.lo.is_finite() {
                self.hi - 0.01 * (self.hi - self.lo)
            } else {
                self.hi - 0.01 * (self.hi - c)
            }
        } else if self.lo == 0.0 {
            1e2
        } else {
            c + 1e2
        };
        (lo, hi)
    }

    /// `n` points spread over a compact window: log-uniform when the window
    /// is positive, uniform otherwise.
    pub fn grid(&self, n: usize, window: Option<(f64, f64)>) -> Vec<f64> {
        let (a, b) = window.unwrap_or_else(|| self.compact_core());
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                if a > 0.0 {
                    (a.ln() + f * (b.ln() - a.ln())).exp()
                } else {
                    a + f * (b - a)
                }
            })
            .collect()
    }

    /// Affine image `(self − shift)/scale` for `scale > 0`.
    pub fn affine(&self, shift: f64, scale: f64) -> Self {
        Self {
            lo: (self.lo - shift) / scale,
            hi: (self.hi - shift) / scale,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

type Fun = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Whether the derivatives of a [`ScalarFn`] are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accuracy {
    Analytic,
    /// At least one derivative comes from a finite-difference stencil.
    Reduced,
}

/// A real function together with its first two derivatives on an open
/// domain.
#[derive(Clone)]
pub struct ScalarFn {
    value: Fun,
    d1: Fun,
    d2: Fun,
    pub domain: Interval,
    pub accuracy: Accuracy,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("domain", &self.domain)
            .field("accuracy", &self.accuracy)
            .finish_non_exhaustive()
    }
}

impl ScalarFn {
    pub fn new<F, G, H>(domain: Interval, value: F, d1: G, d2: H) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            domain,
            accuracy: Accuracy::Analytic,
        }
    }

    /// Only the value is known; both derivatives use the five-point stencil
    /// with step ε^{1/3}·max(1, |x|).
    pub fn from_value<F>(domain: Interval, value: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let value: Fun = Arc::new(value);
        let (v1, v2) = (value.clone(), value.clone());
        Self {
            value,
            d1: Arc::new(move |x| diff::d1_five_point(&*v1, x, diff::stencil_step(x))),
            d2: Arc::new(move |x| diff::d2_five_point(&*v2, x, diff::stencil_step(x))),
            domain,
            accuracy: Accuracy::Reduced,
        }
    }

    /// Value and first derivative known; the second derivative is a
    /// five-point stencil applied to `d1`.
    pub fn from_value_d1<F, G>(domain: Interval, value: F, d1: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let d1: Fun = Arc::new(d1);
        let g = d1.clone();
        Self {
            value: Arc::new(value),
            d1,
            d2: Arc::new(move |x| diff::d1_five_point(&*g, x, diff::stencil_step(x))),
            domain,
            accuracy: Accuracy::Reduced,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        (self.d1)(x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        (self.d2)(x)
    }

    fn with_accuracy(mut self, a: Accuracy) -> Self {
        self.accuracy = a;
        self
    }

    /// Largest disagreement, relative to `max(1, |derivative|)`, between the
    /// stored derivatives and centered differences of `value` over `points`.
    pub fn derivative_defect(&self, points: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in points {
            let h = 1e-3 * x.abs().clamp(1e-3, 1.0);
            let h = h.min(0.25 * self.distance_to_boundary(x));
            let f = |t: f64| self.value(t);
            let fd1 = diff::d1_richardson(&f, x, h);
            let g = |t: f64| self.d1(t);
            let fd2 = diff::d1_richardson(&g, x, h);
            let r1 = (fd1 - self.d1(x)).abs() / self.d1(x).abs().max(1.0);
            let r2 = (fd2 - self.d2(x)).abs() / self.d2(x).abs().max(1.0);
            worst = worst.max(r1).max(r2);
        }
        worst
    }

    fn distance_to_boundary(&self, x: f64) -> f64 {
        (x - self.domain.lo).min(self.domain.hi - x)
    }

    /// Evaluate `value` at an endpoint of the domain, taking the one-sided
    /// limit from inside when the closure does not extend there.
    fn limit_value(&self, at_hi: bool) -> f64 {
        let end = if at_hi { self.domain.hi } else { self.domain.lo };
        let v = self.value(end);
        if !v.is_nan() {
            return v;
        }
        let inside = if end.is_infinite() {
            end.signum() * 1e300
        } else if at_hi {
            end - 1e-12 * end.abs().max(1e-300)
        } else {
            end + 1e-12 * end.abs().max(1e-300)
        };
        self.value(inside)
    }

    /// `(inf, sup)` of an increasing function over its domain.
    pub fn increasing_range(&self) -> (f64, f64) {
        (self.limit_value(false), self.limit_value(true))
    }

    /// Inverse of an increasing function by safeguarded root finding.
    pub fn invert_increasing(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.increasing_range();
        if !(y > lo && y < hi) {
            bail!(Domain, "{y} outside the range ({lo}, {hi})");
        }
        let (a, b) = bracket_increasing(
            |x| self.value(x) - y,
            self.domain.center(),
            self.domain.lo,
            self.domain.hi,
        )?;
        newton_bisect(|x| (self.value(x) - y, self.d1(x)), a, b, RootOptions::default())
    }
}

/// Parameters of the affine equivalence `h₁(r) = h(λr + a₃) + a₁r + a₂`,
/// `τ₁ = (τ − a₃)/λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceTransform {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub lambda: f64,
}

impl EquivalenceTransform {
    pub const IDENTITY: Self = Self {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
        lambda: 1.0,
    };

    pub fn new(a1: f64, a2: f64, a3: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            bail!(Domain, "equivalence scale must be positive, got {lambda}");
        }
        if !(a1.is_finite() && a2.is_finite() && a3.is_finite()) {
            bail!(Domain, "equivalence offsets must be finite");
        }
        Ok(Self { a1, a2, a3, lambda })
    }
}

/// Builtin gauge families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeKind {
    /// `(r log r, id)`.
    Kl,
    /// `(h_q, id)` with `h_q' = ln_q`.
    Power { q: f64 },
    /// `(f_q, t^q)` with `f_q' = ln_q(r^{1/q})`.
    Escort { q: f64 },
    /// `((r log r − r)/λ, t^λ)`.
    ScaledLog { lambda: f64 },
}

impl GaugeKind {
    pub fn label(&self) -> String {
        match self {
            GaugeKind::Kl => "kl".to_string(),
            GaugeKind::Power { q } => format!("power({q})"),
            GaugeKind::Escort { q } => format!("escort({q})"),
            GaugeKind::ScaledLog { lambda } => format!("scaled_log({lambda})"),
        }
    }
}

/// Serializable description of a builtin gauge on `(lo, hi)`; a missing
/// `hi` means `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeDescriptor {
    #[serde(flatten)]
    pub kind: GaugeKind,
    #[serde(default)]
    pub lo: f64,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl GaugeDescriptor {
    pub fn new(kind: GaugeKind) -> Self {
        Self {
            kind,
            lo: 0.0,
            hi: None,
        }
    }

    pub fn interval(&self) -> Result<Interval> {
        Interval::positive(self.lo, self.hi.unwrap_or(f64::INFINITY))
    }

    pub fn build(&self) -> Result<GaugeTriple> {
        builtin_gauge(self.kind, self.interval()?)
    }
}

#[derive(Clone)]
enum Kernel {
    /// `d` from `h` and `τ` directly.
    Closed,
    /// `d(t,s) = ∫_s^t (ℓ(u) − ℓ(s)) τ'(u) du`, used when `h` itself is only
    /// known through a quadrature.
    Quadrature,
}

/// A gauge `(h, τ, I)` with its deformed logarithm `ℓ = h'∘τ`.
#[derive(Clone)]
pub struct GaugeTriple {
    name: String,
    interval: Interval,
    h: ScalarFn,
    tau: ScalarFn,
    ell: ScalarFn,
    ell_range: (f64, f64),
    ell_inverse: Option<Fun>,
    h_of_tau: Fun,
    kernel: Kernel,
}

impl fmt::Debug for GaugeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaugeTriple")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .finish_non_exhaustive()
    }
}

/// The derived scalar functions of a gauge, all on `I`.
#[derive(Debug, Clone)]
pub struct Derived {
    pub ell: ScalarFn,
    pub m: ScalarFn,
    pub gamma: ScalarFn,
    pub chi: ScalarFn,
    pub s: ScalarFn,
    pub s_star: ScalarFn,
}

const GRID_POINTS: usize = 64;

impl GaugeTriple {
    /// A custom gauge from `h` (on `τ(I)`) and `τ` (on `I`).
    ///
    /// `ℓ` gets an analytic first derivative `h''(τ)τ'`; its second
    /// derivative is a finite difference, so the result is flagged
    /// [`Accuracy::Reduced`].
    pub fn new(name: impl Into<String>, interval: Interval, h: ScalarFn, tau: ScalarFn) -> Result<Self> {
        let (hh, tt) = (h.clone(), tau.clone());
        let (hh1, tt1) = (h.clone(), tau.clone());
        let ell = ScalarFn::from_value_d1(
            interval,
            move |t| hh.d1(tt.value(t)),
            move |t| hh1.d2(tt1.value(t)) * tt1.d1(t),
        );
        let (hh, tt) = (h.clone(), tau.clone());
        let g = Self::assemble(
            name.into(),
            interval,
            h,
            tau,
            ell,
            None,
            Arc::new(move |t| hh.value(tt.value(t))),
            Kernel::Closed,
        );
        g.validate()?;
        Ok(g)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: String,
        interval: Interval,
        h: ScalarFn,
        tau: ScalarFn,
        ell: ScalarFn,
        ell_inverse: Option<Fun>,
        h_of_tau: Fun,
        kernel: Kernel,
    ) -> Self {
        let ell_range = ell.increasing_range();
        Self {
            name,
            interval,
            h,
            tau,
            ell,
            ell_range,
            ell_inverse,
            h_of_tau,
            kernel,
        }
    }

    /// Check `τ' > 0` on the grid and `h'' > 0` on its image.
    pub fn validate(&self) -> Result<()> {
        for t in self.interval.grid(GRID_POINTS, None) {
            let dt = self.tau.d1(t);
            if !(dt > 0.0) {
                bail!(Invariant, "{}: tau' = {dt} at t = {t}", self.name);
            }
            let r = self.tau.value(t);
            let h2 = self.h.d2(r);
            if !(h2 > 0.0) {
                bail!(Invariant, "{}: h'' = {h2} at r = tau({t}) = {r}", self.name);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn h(&self) -> &ScalarFn {
        &self.h
    }

    pub fn tau(&self) -> &ScalarFn {
        &self.tau
    }

    pub fn ell(&self) -> &ScalarFn {
        &self.ell
    }

    /// `(inf ℓ(I), sup ℓ(I))`.
    pub fn ell_range(&self) -> (f64, f64) {
        self.ell_range
    }

    /// `h(τ(t))`.
    pub fn h_of_tau(&self, t: f64) -> f64 {
        (self.h_of_tau)(t)
    }

    pub fn chi(&self, t: f64) -> f64 {
        1.0 / self.ell.d1(t)
    }

    /// `χ'(t) = −ℓ''/ℓ'²`.
    pub fn chi_d1(&self, t: f64) -> f64 {
        let l1 = self.ell.d1(t);
        -self.ell.d2(t) / (l1 * l1)
    }

    /// `s★(t) = −τ(t)ℓ(t) + h(τ(t))`.
    pub fn s_star(&self, t: f64) -> f64 {
        -self.tau.value(t) * self.ell.value(t) + self.h_of_tau(t)
    }

    pub fn s_star_d1(&self, t: f64) -> f64 {
        -self.tau.value(t) * self.ell.d1(t)
    }

    /// `s(t) = −h(τ(t))`.
    pub fn entropy_density(&self, t: f64) -> f64 {
        -self.h_of_tau(t)
    }

    fn check_in(&self, t: f64) -> Result<()> {
        if !self.interval.contains(t) {
            bail!(Domain, "{t} outside the gauge interval {}", self.interval);
        }
        Ok(())
    }

    /// The divergence kernel `d(t,s) = h(τt) − h(τs) − (τt − τs) h'(τs)`.
    pub fn d(&self, t: f64, s: f64) -> Result<f64> {
        self.check_in(t)?;
        self.check_in(s)?;
        if t == s {
            return Ok(0.0);
        }
        let v = match self.kernel {
            Kernel::Closed => {
                let (tt, ts) = (self.tau.value(t), self.tau.value(s));
                self.h_of_tau(t) - self.h_of_tau(s) - (tt - ts) * self.ell.value(s)
            }
            Kernel::Quadrature => self.d_by_quadrature(t, s)?,
        };
        if !v.is_finite() {
            bail!(Numeric, "{}: d({t}, {s}) is not finite", self.name);
        }
        // rounding can push a true zero slightly negative
        Ok(v.max(0.0))
    }

    /// `∫_s^t (ℓ(u) − ℓ(s)) τ'(u) du` by adaptive quadrature.
    pub fn d_by_quadrature(&self, t: f64, s: f64) -> Result<f64> {
        self.check_in(t)?;
        self.check_in(s)?;
        let ls = self.ell.value(s);
        let r = integrate(
            |u| (self.ell.value(u) - ls) * self.tau.d1(u),
            s,
            t,
            QuadOptions::tol(1e-13, 1e-12),
        )?;
        Ok(r.value)
    }

    /// The deformed exponential: the inverse of `ℓ`, clipped to `0` below
    /// `inf ℓ(I)` and to `+∞` at or above `sup ℓ(I)`.
    pub fn exp(&self, u: f64) -> f64 {
        let (lo, hi) = self.ell_range;
        if u.is_nan() {
            return f64::NAN;
        }
        if u >= hi {
            return f64::INFINITY;
        }
        if u <= lo {
            return 0.0;
        }
        if let Some(inv) = &self.ell_inverse {
            let t = inv(u);
            // keep the result inside I despite rounding at the ends
            return t.clamp(self.interval.lo, self.interval.hi);
        }
        self.ell.invert_increasing(u).unwrap_or(f64::NAN)
    }

    pub fn derived(&self) -> Derived {
        let i = self.interval;
        let acc = self.ell.accuracy;
        let (e, t) = (self.ell.clone(), self.tau.clone());
        let (e1, t1) = (e.clone(), t.clone());
        let m = ScalarFn::from_value_d1(
            i,
            move |x| e.d1(x) * t.d1(x),
            move |x| e1.d2(x) * t1.d1(x) + e1.d1(x) * t1.d2(x),
        );
        let (e, t) = (self.ell.clone(), self.tau.clone());
        let gamma = ScalarFn::from_value(i, move |x| e.d2(x) * t.d1(x));
        let (e, e1) = (self.ell.clone(), self.ell.clone());
        let chi = ScalarFn::from_value_d1(
            i,
            move |x| 1.0 / e.d1(x),
            move |x| {
                let l1 = e1.d1(x);
                -e1.d2(x) / (l1 * l1)
            },
        );
        let (g0, g1, g2) = (self.clone(), self.clone(), self.clone());
        let s = ScalarFn::new(
            i,
            move |x| -g0.h_of_tau(x),
            move |x| -g1.ell.value(x) * g1.tau.d1(x),
            move |x| {
                // h''(τ)τ'² = ℓ'τ'
                -(g2.ell.d1(x) * g2.tau.d1(x) + g2.ell.value(x) * g2.tau.d2(x))
            },
        )
        .with_accuracy(acc);
        let (g0, g1, g2) = (self.clone(), self.clone(), self.clone());
        let s_star = ScalarFn::new(
            i,
            move |x| g0.s_star(x),
            move |x| g1.s_star_d1(x),
            move |x| -g2.tau.d1(x) * g2.ell.d1(x) - g2.tau.value(x) * g2.ell.d2(x),
        )
        .with_accuracy(acc);
        Derived {
            ell: self.ell.clone(),
            m,
            gamma,
            chi,
            s,
            s_star,
        }
    }

    /// `(m, γ)` sampled on `grid`; equal for equivalent gauges.
    pub fn fingerprint(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&t| {
                let tp = self.tau.d1(t);
                (self.ell.d1(t) * tp, self.ell.d2(t) * tp)
            })
            .collect()
    }

    /// Apply `h₁(r) = h(λr + a₃) + a₁r + a₂`, `τ₁ = (τ − a₃)/λ`.
    pub fn apply_equivalence(&self, tr: &EquivalenceTransform) -> Result<Self> {
        let EquivalenceTransform { a1, a2, a3, lambda } = EquivalenceTransform::new(tr.a1, tr.a2, tr.a3, tr.lambda)?;
        let hd = self.h.domain.affine(a3, lambda);
        let h0 = self.h.clone();
        let (h1, h2) = (h0.clone(), h0.clone());
        let h = ScalarFn::new(
            hd,
            move |r| h0.value(lambda * r + a3) + a1 * r + a2,
            move |r| lambda * h1.d1(lambda * r + a3) + a1,
            move |r| lambda * lambda * h2.d2(lambda * r + a3),
        )
        .with_accuracy(self.h.accuracy);
        let t0 = self.tau.clone();
        let (t1, t2) = (t0.clone(), t0.clone());
        let tau = ScalarFn::new(
            self.interval,
            move |t| (t0.value(t) - a3) / lambda,
            move |t| t1.d1(t) / lambda,
            move |t| t2.d2(t) / lambda,
        )
        .with_accuracy(self.tau.accuracy);
        let e0 = self.ell.clone();
        let (e1, e2) = (e0.clone(), e0.clone());
        let ell = ScalarFn::new(
            self.interval,
            move |t| lambda * e0.value(t) + a1,
            move |t| lambda * e1.d1(t),
            move |t| lambda * e2.d2(t),
        )
        .with_accuracy(self.ell.accuracy);
        let ell_inverse = self.ell_inverse.clone().map(|inv| -> Fun {
            Arc::new(move |u: f64| inv((u - a1) / lambda))
        });
        let hot = self.h_of_tau.clone();
        let tt = self.tau.clone();
        let h_of_tau: Fun = Arc::new(move |t| hot(t) + a1 * (tt.value(t) - a3) / lambda + a2);
        let mut g = Self::assemble(
            format!("{}~", self.name),
            self.interval,
            h,
            tau,
            ell,
            ell_inverse,
            h_of_tau,
            self.kernel.clone(),
        );
        let (lo, hi) = self.ell_range;
        g.ell_range = (lambda * lo + a1, lambda * hi + a1);
        Ok(g)
    }

    /// `h★(r★) = r h'(r) − h(r)` at `r = τ(exp(r★))`.
    pub fn legendre_conjugate(&self, r_star: f64) -> Result<f64> {
        let (lo, hi) = self.ell_range;
        if !(r_star > lo && r_star < hi) {
            bail!(Domain, "{r_star} outside the image ({lo}, {hi}) of h'");
        }
        let t = self.exp(r_star);
        if !self.interval.contains(t) {
            bail!(Numeric, "inverse of ell at {r_star} left the interval");
        }
        Ok(self.tau.value(t) * r_star - self.h_of_tau(t))
    }

    /// The conjugate `h★` as a scalar function on `ℓ(I)`.
    pub fn h_star(&self) -> ScalarFn {
        let (g0, g1, g2) = (self.clone(), self.clone(), self.clone());
        let (lo, hi) = self.ell_range;
        ScalarFn::new(
            Interval { lo, hi },
            move |y| g0.legendre_conjugate(y).unwrap_or(f64::NAN),
            // (h★)' = (h')^{-1}
            move |y| g1.tau.value(g1.exp(y)),
            // (h★)'' = 1/h''(r) = τ'(t)/ℓ'(t)
            move |y| {
                let t = g2.exp(y);
                g2.tau.d1(t) / g2.ell.d1(t)
            },
        )
        .with_accuracy(self.ell.accuracy)
    }

    /// Whether `h` is of Legendre type on `J = τ(I)`: `h'` diverges at
    /// every finite endpoint of `J`.
    pub fn is_legendre_type(&self) -> bool {
        let (lo, hi) = self.ell_range;
        let j = self.tau.increasing_range();
        (j.0.is_infinite() || lo == f64::NEG_INFINITY) && (j.1.is_infinite() || hi == f64::INFINITY)
    }
}

/// Legendre conjugate of a convex scalar function with increasing `f'`:
/// `f★(y) = x y − f(x)` at `x = (f')^{-1}(y)`, with `f★' = (f')^{-1}` and
/// `f★'' = 1/f''`.
pub fn legendre_conjugate_fn(f: &ScalarFn) -> ScalarFn {
    let deriv = ScalarFn::new(
        f.domain,
        {
            let f = f.clone();
            move |x| f.d1(x)
        },
        {
            let f = f.clone();
            move |x| f.d2(x)
        },
        |_| f64::NAN,
    );
    let (lo, hi) = deriv.increasing_range();
    let dom = f.domain;
    let argmax = {
        let deriv = deriv.clone();
        move |y: f64| -> f64 {
            if y <= lo {
                dom.lo
            } else if y >= hi {
                dom.hi
            } else {
                deriv.invert_increasing(y).unwrap_or(f64::NAN)
            }
        }
    };
    let (a0, a1, a2) = (argmax.clone(), argmax.clone(), argmax);
    let (f0, f2) = (f.clone(), f.clone());
    ScalarFn::new(
        Interval { lo, hi },
        move |y| {
            let x = a0(y);
            x * y - f0.value(x)
        },
        a1,
        move |y| 1.0 / f2.d2(a2(y)),
    )
    .with_accuracy(f.accuracy)
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        bail!(Domain, "{name} must be finite, got {v}");
    }
    Ok(())
}

/// Construct a builtin gauge on `interval ⊂ (0, ∞)`.
pub fn builtin_gauge(kind: GaugeKind, interval: Interval) -> Result<GaugeTriple> {
    let interval = Interval::positive(interval.lo, interval.hi)?;
    let name = kind.label();
    let id = |i: Interval| ScalarFn::new(i, |t| t, |_| 1.0, |_| 0.0);
    let g = match kind {
        GaugeKind::Kl => {
            let h = ScalarFn::new(interval, xlogx, |r| r.ln() + 1.0, |r| 1.0 / r);
            let ell = ScalarFn::new(interval, |t| t.ln() + 1.0, |t| 1.0 / t, |t| -1.0 / (t * t));
            GaugeTriple::assemble(
                name,
                interval,
                h,
                id(interval),
                ell,
                Some(Arc::new(|u| (u - 1.0).exp())),
                Arc::new(xlogx),
                Kernel::Closed,
            )
        }
        GaugeKind::Power { q } => {
            require_finite("q", q)?;
            let h = ScalarFn::new(interval, move |r| h_q(q, r), move |r| ln_q(q, r), move |r| r.powf(-q));
            let ell = ScalarFn::new(
                interval,
                move |t| ln_q(q, t),
                move |t| t.powf(-q),
                move |t| -q * t.powf(-q - 1.0),
            );
            GaugeTriple::assemble(
                name,
                interval,
                h,
                id(interval),
                ell,
                Some(Arc::new(move |u| exp_q(q, u))),
                Arc::new(move |t| h_q(q, t)),
                Kernel::Closed,
            )
        }
        GaugeKind::Escort { q } => {
            require_finite("q", q)?;
            if !(q > 0.0) {
                bail!(Domain, "escort gauge needs q > 0, got {q}");
            }
            let j = Interval {
                lo: interval.lo.powf(q),
                hi: interval.hi.powf(q),
            };
            let h = ScalarFn::new(
                j,
                move |r| f_q(q, r),
                move |r| ln_q(q, r.powf(1.0 / q)),
                move |r| r.powf(1.0 / q - 2.0) / q,
            );
            let tau = ScalarFn::new(
                interval,
                move |t| t.powf(q),
                move |t| q * t.powf(q - 1.0),
                move |t| q * (q - 1.0) * t.powf(q - 2.0),
            );
            let ell = ScalarFn::new(
                interval,
                move |t| ln_q(q, t),
                move |t| t.powf(-q),
                move |t| -q * t.powf(-q - 1.0),
            );
            GaugeTriple::assemble(
                name,
                interval,
                h,
                tau,
                ell,
                Some(Arc::new(move |u| exp_q(q, u))),
                // f_q(t^q) = q t^q ln_q(t) − t^q
                Arc::new(move |t| {
                    let tq = t.powf(q);
                    q * tq * ln_q(q, t) - tq
                }),
                Kernel::Closed,
            )
        }
        GaugeKind::ScaledLog { lambda } => {
            require_finite("lambda", lambda)?;
            if !(lambda > 0.0) {
                bail!(Domain, "scaled_log gauge needs lambda > 0, got {lambda}");
            }
            let j = Interval {
                lo: interval.lo.powf(lambda),
                hi: interval.hi.powf(lambda),
            };
            let h = ScalarFn::new(
                j,
                move |r| (xlogx(r) - r) / lambda,
                move |r| r.ln() / lambda,
                move |r| 1.0 / (lambda * r),
            );
            let tau = ScalarFn::new(
                interval,
                move |t| t.powf(lambda),
                move |t| lambda * t.powf(lambda - 1.0),
                move |t| lambda * (lambda - 1.0) * t.powf(lambda - 2.0),
            );
            let ell = ScalarFn::new(interval, |t| t.ln(), |t| 1.0 / t, |t| -1.0 / (t * t));
            GaugeTriple::assemble(
                name,
                interval,
                h,
                tau,
                ell,
                Some(Arc::new(|u: f64| u.exp())),
                // h(t^λ) = t^λ (ln t − 1/λ)
                Arc::new(move |t| t.powf(lambda) * (t.ln() - 1.0 / lambda)),
                Kernel::Closed,
            )
        }
    };
    Ok(g)
}

/// Build the gauge `h_{τ,ℓ;a}(r) = ∫_a^{τ^{-1}(r)} ℓ(t) τ'(t) dt` whose
/// deformed logarithm is the given `ℓ`.
///
/// Values of `h` come from adaptive quadrature; the divergence kernel is
/// evaluated as `∫_s^t (ℓ(u) − ℓ(s)) τ'(u) du`.
pub fn gauge_from_pair(tau: ScalarFn, ell: ScalarFn, a: f64) -> Result<GaugeTriple> {
    let interval = tau.domain;
    Interval::positive(interval.lo, interval.hi)?;
    if !interval.contains(a) {
        bail!(Domain, "base point {a} outside {interval}");
    }
    for t in interval.grid(GRID_POINTS, None) {
        if !(tau.d1(t) > 0.0) {
            bail!(Invariant, "tau is not increasing at {t}");
        }
        if !(ell.d1(t) > 0.0) {
            bail!(Invariant, "ell is not increasing at {t}");
        }
    }
    let opts = QuadOptions::tol(1e-13, 1e-12);
    let primitive: Fun = {
        let (tau, ell) = (tau.clone(), ell.clone());
        Arc::new(move |t: f64| {
            integrate(|u| ell.value(u) * tau.d1(u), a, t, opts)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        })
    };
    let (lo, hi) = tau.increasing_range();
    let j = Interval { lo, hi };
    let h = {
        let (t0, t1, t2) = (tau.clone(), tau.clone(), tau.clone());
        let (e1, e2) = (ell.clone(), ell.clone());
        let p = primitive.clone();
        ScalarFn::new(
            j,
            move |r| t0.invert_increasing(r).map(|t| p(t)).unwrap_or(f64::NAN),
            move |r| t1.invert_increasing(r).map(|t| e1.value(t)).unwrap_or(f64::NAN),
            move |r| {
                t2.invert_increasing(r)
                    .map(|t| e2.d1(t) / t2.d1(t))
                    .unwrap_or(f64::NAN)
            },
        )
        .with_accuracy(Accuracy::Reduced)
    };
    let g = GaugeTriple::assemble(
        format!("from_pair(a={a})"),
        interval,
        h,
        tau,
        ell,
        None,
        primitive,
        Kernel::Quadrature,
    );
    Ok(g)
}

fn xlogx(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r.ln()
    }
}

/// `h_q(r) = ∫_1^r ln_q(t) dt`.
pub fn h_q(q: f64, r: f64) -> f64 {
    if q == 1.0 {
        xlogx(r) - r + 1.0
    } else if q == 2.0 {
        r - 1.0 - r.ln()
    } else {
        // ((r^{2−q} − 1)/(2−q) − (r − 1))/(1 − q)
        (ln_q(q - 1.0, r) - (r - 1.0)) / (1.0 - q)
    }
}

/// `f_q(r) = q(r^{1/q} − r)/(1 − q) − r`, written as `q r ln_q(r^{1/q}) − r`.
pub fn f_q(q: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    q * r * ln_q(q, r.powf(1.0 / q)) - r
}

/// Named scalar functions of a gauge, for pointwise evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeFn {
    H,
    Tau,
    Ell,
    Exp,
    M,
    Gamma,
    Chi,
    S,
    SStar,
    HStar,
}

/// `(h★)★` against `h` on a grid of `τ(I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvolutionReport {
    pub points: Vec<f64>,
    pub h: Vec<f64>,
    pub h_star_star: Vec<f64>,
    /// max |h − h★★| / max(|h|, 1)
    pub max_rel_defect: f64,
}

/// Kernel and `(m, γ)` agreement between a gauge and its transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub transform: EquivalenceTransform,
    pub pairs: usize,
    /// max |d − d₁| / max(d, 1)
    pub max_kernel_defect: f64,
    /// max relative defect over both fingerprint components
    pub max_fingerprint_defect: f64,
}

impl GaugeTriple {
    /// Evaluate `f` at `x`. `h` takes points of `τ(I)`, `h_star` points of
    /// `ℓ(I)`, `exp` any real; the rest are functions on `I`.
    pub fn eval(&self, f: GaugeFn, x: f64) -> Result<f64> {
        match f {
            GaugeFn::H => {
                if !self.h.domain.contains(x) {
                    bail!(Domain, "{x} outside the domain {} of h", self.h.domain);
                }
                Ok(self.h.value(x))
            }
            GaugeFn::Exp => Ok(self.exp(x)),
            GaugeFn::HStar => self.legendre_conjugate(x),
            _ => {
                self.check_in(x)?;
                Ok(match f {
                    GaugeFn::Tau => self.tau.value(x),
                    GaugeFn::Ell => self.ell.value(x),
                    GaugeFn::M => self.ell.d1(x) * self.tau.d1(x),
                    GaugeFn::Gamma => self.ell.d2(x) * self.tau.d1(x),
                    GaugeFn::Chi => self.chi(x),
                    GaugeFn::S => self.entropy_density(x),
                    _ => self.s_star(x),
                })
            }
        }
    }

    /// Compare `h` with the numerically double-conjugated `h★★` at `τ` of an
    /// `n`-point grid of `I`.
    pub fn involution_check(&self, n: usize) -> InvolutionReport {
        let star_star = legendre_conjugate_fn(&self.h_star());
        let points: Vec<f64> = self.interval.grid(n, None).into_iter().map(|t| self.tau.value(t)).collect();
        let h: Vec<f64> = points.iter().map(|&r| self.h.value(r)).collect();
        let h_star_star: Vec<f64> = points.iter().map(|&r| star_star.value(r)).collect();
        let max_rel_defect = h
            .iter()
            .zip(&h_star_star)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v) });
        InvolutionReport {
            points,
            h,
            h_star_star,
            max_rel_defect,
        }
    }

    /// Apply `tr` and compare kernels on all pairs of an `n`-point grid and
    /// fingerprints on the grid itself.
    pub fn equivalence_check(&self, tr: &EquivalenceTransform, n: usize) -> Result<EquivalenceReport> {
        let other = self.apply_equivalence(tr)?;
        let grid = self.interval.grid(n, None);
        let mut max_kernel_defect = 0.0f64;
        for &t in &grid {
            for &s in &grid {
                let (a, b) = (self.d(t, s)?, other.d(t, s)?);
                max_kernel_defect = max_kernel_defect.max((a - b).abs() / a.max(1.0));
            }
        }
        let mut max_fingerprint_defect = 0.0f64;
        for ((m, c), (m1, c1)) in self.fingerprint(&grid).into_iter().zip(other.fingerprint(&grid)) {
            max_fingerprint_defect = max_fingerprint_defect
                .max((m - m1).abs() / m.abs().max(1.0))
                .max((c - c1).abs() / c.abs().max(1.0));
        }
        Ok(EquivalenceReport {
            transform: *tr,
            pairs: grid.len() * grid.len(),
            max_kernel_defect,
            max_fingerprint_defect,
        })
    }
}

impl From<GaugeKind> for GaugeDescriptor {
    fn from(kind: GaugeKind) -> Self {
        Self::new(kind)
    }
}
