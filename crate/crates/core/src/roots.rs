//! Safeguarded Newton–bisection for monotone scalar equations.

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Success when |f(x)| is at most this (after the bracket has collapsed).
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Solve `f(x) = 0` on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of
/// opposite sign. `f` returns the value and the derivative.
///
/// Newton steps are taken when they stay strictly inside the current bracket
/// and shrink the residual fast enough; otherwise the bracket is bisected.
pub fn newton_bisect<F>(f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        bail!(Numeric, "root not bracketed: f({a})={fa}, f({b})={fb}");
    }
    // orient so that f(a) < 0 < f(b)
    let flip = fa > 0.0;
    let g = |x: f64| {
        let (v, d) = f(x);
        if flip {
            (-v, -d)
        } else {
            (v, d)
        }
    };

    let mut x = 0.5 * (a + b);
    let mut prev_step = b - a;
    let mut best = (f64::INFINITY, x);
    for _ in 0..opts.max_iter {
        let (fx, dfx) = g(x);
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = if dfx != 0.0 && dfx.is_finite() {
            x - fx / dfx
        } else {
            f64::NAN
        };
        let step;
        if newton > a && newton < b && (newton - x).abs() < 0.5 * prev_step.abs() {
            step = newton - x;
            x = newton;
        } else {
            let mid = 0.5 * (a + b);
            step = mid - x;
            x = mid;
        }
        prev_step = step;
        let scale = x.abs().max(1e-300);
        if (b - a) <= 4.0 * f64::EPSILON * scale || step.abs() <= f64::EPSILON * scale {
            let (fx, _) = g(x);
            if fx.abs() < best.0 {
                best = (fx.abs(), x);
            }
            break;
        }
    }
    if best.0 <= opts.abs_tol {
        Ok(best.1)
    } else {
        // The bracket collapsed to adjacent floats: the residual is as small
        // as the function's own rounding allows.
        let width = b - a;
        if width <= 8.0 * f64::EPSILON * best.1.abs().max(1e-300) {
            Ok(best.1)
        } else {
            bail!(
                Numeric,
                "no convergence: residual {:e} on bracket width {:e}",
                best.0,
                width
            )
        }
    }
}

/// Grow a bracket for an increasing function `f` around `start` until
/// `f(lo) <= 0 <= f(hi)`, staying strictly inside the open interval
/// `(dom_lo, dom_hi)`.
pub fn bracket_increasing<F>(f: F, start: f64, dom_lo: f64, dom_hi: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut lo = start;
    let mut hi = start;
    let step_out = |x: f64, toward: f64, k: u32| -> f64 {
        if toward.is_infinite() {
            let s = (1.0 + x.abs()) * 2f64.powi(k as i32);
            if toward > 0.0 {
                x + s
            } else {
                x - s
            }
        } else {
            // halve the remaining distance to the open end
            x + 0.5 * (toward - x)
        }
    };
    let mut k = 0;
    while f(hi) < 0.0 {
        hi = step_out(hi, dom_hi, k);
        k += 1;
        if k > 1100 || !(hi < dom_hi) {
            bail!(Domain, "target above the range of the function");
        }
    }
    k = 0;
    while f(lo) > 0.0 {
        // positive lower ends are approached geometrically (log scale)
        lo = if dom_lo == 0.0 {
            lo * 0.5
        } else {
            step_out(lo, dom_lo, k)
        };
        k += 1;
        if k > 1100 || !(lo > dom_lo) {
            bail!(Domain, "target below the range of the function");
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_cubic() {
        let r = newton_bisect(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, RootOptions::default())
            .unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn decreasing_function_is_fine() {
        let r = newton_bisect(|x| (1.0 - x, -1.0), -5.0, 5.0, RootOptions::default()).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unbracketed_is_error() {
        assert!(newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, RootOptions::default()).is_err());
    }

    #[test]
    fn bracket_on_half_line() {
        let (lo, hi) = bracket_increasing(|x| x.ln() + 30.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert!(lo > 0.0 && (lo.ln() + 30.0) <= 0.0 && (hi.ln() + 30.0) >= 0.0);
        let (lo, hi) = bracket_increasing(|x| x - 1e6, 1.0, 0.0, f64::INFINITY).unwrap();
        assert!(lo <= 1e6 && hi >= 1e6);
    }

    #[test]
    fn bracket_respects_finite_end() {
        // 1/(1-x) - 1e8 on (0,1)
        let (lo, hi) = bracket_increasing(|x| 1.0 / (1.0 - x) - 1e8, 0.5, 0.0, 1.0).unwrap();
        assert!(hi < 1.0 && lo < hi);
    }
}
