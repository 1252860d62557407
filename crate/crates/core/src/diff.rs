//! Finite-difference derivatives used by checks and by the reduced-accuracy
//! fallback for user-supplied scalar functions.

#[allow(unused_imports)]
use num_traits::Float;


/// Step ε^{1/3}·max(1, |x|) used by the five-point stencils.
pub fn stencil_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// First derivative by the five-point centered stencil.
pub fn d1_five_point<F: Fn(f64) -> f64 + ?Sized>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Second derivative by the five-point centered stencil.
pub fn d2_five_point<F: Fn(f64) -> f64 + ?Sized>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

/// Centered first difference with one Richardson extrapolation.
pub fn d1_richardson<F: Fn(f64) -> f64 + ?Sized>(f: &F, x: f64, h: f64) -> f64 {
    let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d_h = c(h);
    let d_2h = c(2.0 * h);
    (4.0 * d_h - d_2h) / 3.0
}

/// Centered second difference with one Richardson extrapolation.
pub fn d2_richardson<F: Fn(f64) -> f64 + ?Sized>(f: &F, x: f64, h: f64) -> f64 {
    let fx = f(x);
    let c = |h: f64| (f(x + h) - 2.0 * fx + f(x - h)) / (h * h);
    let d_h = c(h);
    let d_2h = c(2.0 * h);
    (4.0 * d_h - d_2h) / 3.0
}

/// Gradient of `f: ℝⁿ → ℝ` by Richardson-extrapolated centered differences
/// with per-coordinate step `rel·max(1, |x_i|)`.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> alloc::vec::Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1.0);
            let mut g = |t: f64| {
                y[i] = t;
                let v = f(&y);
                y[i] = x[i];
                v
            };
            let c = |h: f64, g: &mut dyn FnMut(f64) -> f64| (g(x[i] + h) - g(x[i] - h)) / (2.0 * h);
            let d_h = c(h, &mut g);
            let d_2h = c(2.0 * h, &mut g);
            (4.0 * d_h - d_2h) / 3.0
        })
        .collect()
}

/// Hessian of `f: ℝⁿ → ℝ` by centered second differences, Richardson
/// extrapolated once, step `rel·max(1, |x_i|)`.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> alloc::vec::Vec<alloc::vec::Vec<f64>> {
    let n = x.len();
    let f0 = f(x);
    let eval = |di: (usize, f64), dj: (usize, f64)| {
        let mut y = x.to_vec();
        y[di.0] += di.1;
        y[dj.0] += dj.1;
        f(&y)
    };
    let raw = |i: usize, j: usize, hi: f64, hj: f64| {
        if i == j {
            (eval((i, hi), (i, 0.0)) - 2.0 * f0 + eval((i, -hi), (i, 0.0))) / (hi * hi)
        } else {
            (eval((i, hi), (j, hj)) - eval((i, hi), (j, -hj)) - eval((i, -hi), (j, hj))
                + eval((i, -hi), (j, -hj)))
                / (4.0 * hi * hj)
        }
    };
    let mut out = alloc::vec![alloc::vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let hi = rel * x[i].abs().max(1.0);
            let hj = rel * x[j].abs().max(1.0);
            let v = (4.0 * raw(i, j, hi, hj) - raw(i, j, 2.0 * hi, 2.0 * hj)) / 3.0;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Jacobian of `f: ℝⁿ → ℝᵐ` (rows = outputs) by Richardson-extrapolated
/// centered differences.
pub fn jacobian<F: Fn(&[f64]) -> alloc::vec::Vec<f64>>(f: &F, x: &[f64], rel: f64) -> alloc::vec::Vec<alloc::vec::Vec<f64>> {
    let n = x.len();
    let mut cols = alloc::vec::Vec::with_capacity(n);
    for j in 0..n {
        let h = rel * x[j].abs().max(1.0);
        let at = |d: f64| {
            let mut y = x.to_vec();
            y[j] += d;
            f(&y)
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        let col: alloc::vec::Vec<f64> = (0..p1.len())
            .map(|i| {
                let d_h = (p1[i] - m1[i]) / (2.0 * h);
                let d_2h = (p2[i] - m2[i]) / (4.0 * h);
                (4.0 * d_h - d_2h) / 3.0
            })
            .collect();
        cols.push(col);
    }
    let m = cols.first().map_or(0, |c| c.len());
    (0..m).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_on_exp() {
        let f = |x: f64| x.exp();
        let x = 0.7;
        let h = stencil_step(x);
        assert!((d1_five_point(&f, x, h) - x.exp()).abs() < 1e-10);
        assert!((d2_five_point(&f, x, 1e-3) - x.exp()).abs() < 1e-7);
        assert!((d1_richardson(&f, x, 1e-3) - x.exp()).abs() < 1e-11);
        assert!((d2_richardson(&f, x, 1e-3) - x.exp()).abs() < 1e-7);
    }

    #[test]
    fn multivariate_hessian() {
        let f = |x: &[f64]| x[0] * x[0] * x[1] + (x[1]).sin();
        let x = [0.3, 1.1];
        let hs = hessian(&f, &x, 1e-4);
        assert!((hs[0][0] - 2.0 * x[1]).abs() < 1e-7);
        assert!((hs[0][1] - 2.0 * x[0]).abs() < 1e-7);
        assert!((hs[1][1] + x[1].sin()).abs() < 1e-7);
        let g = gradient(&f, &x, 1e-4);
        assert!((g[0] - 2.0 * x[0] * x[1]).abs() < 1e-10);
        let j = jacobian(&|x: &[f64]| alloc::vec![x[0] * x[1], x[1]], &x, 1e-4);
        assert!((j[0][0] - x[1]).abs() < 1e-10 && (j[0][1] - x[0]).abs() < 1e-10);
        assert!(j[1][0].abs() < 1e-12 && (j[1][1] - 1.0).abs() < 1e-10);
    }
}
