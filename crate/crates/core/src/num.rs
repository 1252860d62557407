//! Scalar special functions and accumulation helpers.

#[allow(unused_imports)]
use num_traits::Float;


/// ln Γ(x) for x > 0.
///
/// Backed by the musl-derived `lgamma` in `libm`, which is accurate to a few
/// ulp on the positive axis.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// ln Γ(x) − ln Γ(x − a) for x > a ≥ 0 without cancellation at large x.
pub fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if x < 1e4 {
        return ln_gamma(x) - ln_gamma(x - a);
    }
    // Stirling series difference; the (z − ½) ln z parts are regrouped
    let y = x - a;
    let tail = |z: f64| 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z * z);
    -(y - 0.5) * libm::log1p(-a / x) + a * x.ln() - a + tail(x) - tail(y)
}

/// Tsallis logarithm ln_q(r) = ∫_1^r t^{-q} dt.
pub fn ln_q(q: f64, r: f64) -> f64 {
    if q == 1.0 {
        r.ln()
    } else {
        // (r^{1-q} - 1)/(1-q) without cancellation near q = 1
        let a = (1.0 - q) * r.ln();
        libm::expm1(a) / (1.0 - q)
    }
}

/// Tsallis exponential, the clipped inverse of [`ln_q`].
///
/// Returns `+∞` at and above the singular point 1/(q-1) when q > 1 and `0`
/// at and below -1/(1-q) when q < 1.
pub fn exp_q(q: f64, u: f64) -> f64 {
    if q == 1.0 {
        return u.exp();
    }
    let base = 1.0 + (1.0 - q) * u;
    if base <= 0.0 {
        return if q > 1.0 { f64::INFINITY } else { 0.0 };
    }
    (libm::log1p((1.0 - q) * u) / (1.0 - q)).exp()
}

/// Kahan–Babuška compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if !t.is_finite() {
            // compensation is meaningless once the sum overflows
            self.sum = t;
            self.comp = 0.0;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.comp
    }
}

impl core::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of a sequence.
pub fn ksum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Relative difference `|a − b| / max(|a|, |b|)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
