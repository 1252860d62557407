//! Likelihood maximization on the block q_k-Gaussian family M_{q_k,dk}.
//!
//! For data with averaged statistic T̄ the objective is
//! `⟨θ, T̄⟩ − ψ(θ)`, which is ln_{q_k} of the density at a single observation
//! when T̄ = T(x★) and the Gaussian log-likelihood per sample when q = 1. It is
//! strictly concave, its gradient is T̄ − 𝕀_{Tχ}/𝕀_χ, and at the maximizer
//! 𝕀_{Tχ} = 𝕀_χ·T̄.

#[allow(unused_imports)]
use num_traits::Float;
use super::{block_statistic_len, check_hypothesis, q_const, statistics, Block, BlockQGaussian, QGaussianParams};
use crate::diff;
use crate::error::{bail, Error, Result};
use crate::linalg;
use crate::num::KahanSum;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MleFamily {
    /// ι_k(p_q^{v,I_d}) with only v free.
    #[serde(rename = "identity_mean_only")]
    IdentityMeanOnly,
    /// All of M_{q_k,dk}: a location and a shape matrix per block.
    #[serde(rename = "full_M_qk")]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub family: MleFamily,
    pub q: f64,
    pub q_k: f64,
    pub d: usize,
    pub k: usize,
    /// Natural coordinates of the maximizer in M_{q_k,dk}.
    pub theta: Vec<f64>,
    pub blocks: Vec<Block>,
    pub lambda: f64,
    pub psi: f64,
    pub t_bar: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// 𝕀_χ at the maximizer.
    pub escort_mass: f64,
    /// 𝕀_χ(ρ_{q,k}^{0,I_d}).
    pub reference_mass: f64,
    /// ‖𝕀_{Tχ} − 𝕀_χ·T̄‖∞ at the maximizer.
    pub moment_defect: f64,
    /// ‖𝕀_{Tχ} − 𝕀_χ(ρ^{0,I})·T̄‖∞ at the maximizer.
    pub theorem_defect: f64,
}

/// MLE from a batch of observations, each a flat vector in (ℝ^d)^k.
pub fn mle(q: f64, d: usize, k: usize, data: &[Vec<f64>], family: MleFamily) -> Result<MleResult> {
    if data.is_empty() {
        bail!(Domain, "no observations");
    }
    let n = k * block_statistic_len(d);
    let mut acc = vec![KahanSum::new(); n];
    for (r, x) in data.iter().enumerate() {
        if x.len() != d * k {
            bail!(Domain, "observation {r} has {} entries, expected {}", x.len(), d * k);
        }
        if !x.iter().all(|v| v.is_finite()) {
            bail!(Domain, "observation {r} has non-finite entries");
        }
        for (a, t) in acc.iter_mut().zip(statistics(d, x)) {
            a.add(t);
        }
    }
    let t_bar: Vec<f64> = acc.iter().map(|a| a.value() / data.len() as f64).collect();
    mle_from_statistic(q, d, k, &t_bar, family)
}

/// ⟨θ, T̄⟩ − ψ(θ), or `None` outside the natural parameter domain.
pub fn objective(q_k: f64, d: usize, t_bar: &[f64], theta: &[f64]) -> Option<f64> {
    let m = BlockQGaussian::from_theta(q_k, d, theta).ok()?;
    Some(linalg::dot(theta, t_bar) - m.psi())
}

/// MLE given the averaged statistic T̄ directly.
pub fn mle_from_statistic(q: f64, d: usize, k: usize, t_bar: &[f64], family: MleFamily) -> Result<MleResult> {
    check_hypothesis(q, d)?;
    if k == 0 {
        bail!(Domain, "k must be positive");
    }
    let n = block_statistic_len(d);
    if t_bar.len() != k * n {
        bail!(Domain, "statistic has {} entries, expected {}", t_bar.len(), k * n);
    }
    let reference_mass = QGaussianParams::identity(q, vec![0.0; d])?.repetition(k)?.escort_mass()?;
    match family {
        MleFamily::IdentityMeanOnly => mean_only(q, d, k, t_bar, reference_mass),
        MleFamily::Full => full(q, d, k, t_bar, reference_mass),
    }
}

fn mean_only(q: f64, d: usize, k: usize, t_bar: &[f64], reference_mass: f64) -> Result<MleResult> {
    let n = block_statistic_len(d);
    // The objective restricted to the curve v ↦ ι_k(p^{v,I}) is the concave
    // quadratic −a_k β_k Σ_m |x̄_m − v|² + const, maximized at the block mean.
    let sum: Vec<f64> = (0..d).map(|i| (0..k).map(|m| t_bar[m * n + i]).sum()).collect();
    let v: Vec<f64> = sum.iter().map(|s| s / k as f64).collect();
    let law = QGaussianParams::identity(q, v.clone())?.repetition(k)?;
    let member = law.member()?;
    let theta = member.theta();
    let mass = member.escort_mass()?;
    let curvature = 2.0 * law.a_k * law.beta_k;
    let gradient_norm = (0..d).map(|i| (curvature * (sum[i] - k as f64 * v[i])).abs()).fold(0.0, f64::max);
    let defect = |c: f64| (0..d).map(|i| (mass * k as f64 * v[i] - c * sum[i]).abs()).fold(0.0, f64::max);
    Ok(MleResult {
        family: MleFamily::IdentityMeanOnly,
        q,
        q_k: law.q_k,
        d,
        k,
        objective: linalg::dot(&theta, t_bar) - member.psi(),
        psi: member.psi(),
        lambda: member.lambda(),
        blocks: member.blocks().to_vec(),
        theta,
        t_bar: t_bar.to_vec(),
        gradient_norm,
        iterations: 1,
        escort_mass: mass,
        reference_mass,
        moment_defect: defect(mass),
        theorem_defect: defect(reference_mass),
    })
}

fn full(q: f64, d: usize, k: usize, t_bar: &[f64], reference_mass: f64) -> Result<MleResult> {
    let n = block_statistic_len(d);
    let q_k = q_const(q, d, k);
    let pairs = super::upper_pairs(d);

    // moment-matched start; also decides feasibility
    let mut blocks = Vec::with_capacity(k);
    for m in 0..k {
        let tb = &t_bar[m * n..(m + 1) * n];
        let mean = tb[..d].to_vec();
        let mut cov = vec![vec![0.0; d]; d];
        for (&(i, j), &t) in pairs.iter().zip(&tb[d..]) {
            cov[i][j] = t - mean[i] * mean[j];
            cov[j][i] = cov[i][j];
        }
        let Ok(inv) = linalg::cholesky(&cov).and_then(|_| linalg::inverse(&cov)) else {
            bail!(Infeasible, "block {m}: the second-moment part of T is not inside the family's moment domain");
        };
        let s = (0..d).map(|i| (0..d).map(|j| 0.25 * (inv[i][j] + inv[j][i])).collect()).collect();
        blocks.push(Block { v: mean, s });
    }
    let mut theta = BlockQGaussian::new(q_k, blocks)?.theta();

    let f = |th: &[f64]| objective(q_k, d, t_bar, th);
    let escort = |th: &[f64]| -> Vec<f64> {
        BlockQGaussian::from_theta(q_k, d, th)
            .and_then(|m| m.escort_mean())
            .unwrap_or_else(|_| vec![f64::NAN; th.len()])
    };
    let grad = |th: &[f64]| -> Vec<f64> { t_bar.iter().zip(escort(th)).map(|(t, e)| t - e).collect() };

    let mut fx = f(&theta).ok_or_else(|| Error::Numeric("start point left the domain".into()))?;
    let mut g = grad(&theta);
    let mut gn = linalg::norm_inf(&g);
    let mut iterations = 0;
    let mut polish = 0;
    while iterations < MAX_ITER {
        if gn <= GRAD_TOL {
            // a few extra Newton steps buy the last digits for free
            if polish == 3 {
                break;
            }
            polish += 1;
        }
        iterations += 1;
        let mut h = diff::jacobian(&escort, &theta, 1e-5);
        for i in 0..h.len() {
            for j in 0..i {
                let s = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = s;
                h[j][i] = s;
            }
        }
        let mut dir = match linalg::solve(&h, &g) {
            Ok(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => g.clone(),
        };
        if linalg::dot(&dir, &g) <= 0.0 {
            dir = g.clone();
        }
        let slope = linalg::dot(&dir, &g);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Some(fc) = f(&cand) {
                let gc = grad(&cand);
                let gcn = linalg::norm_inf(&gc);
                if fc >= fx + 1e-4 * t * slope || (t == 1.0 && gcn < gn) {
                    accepted = Some((cand, fc, gc, gcn));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc, gc, gcn)) => {
                if gn <= GRAD_TOL && gcn >= gn {
                    break;
                }
                theta = cand;
                fx = fc;
                g = gc;
                gn = gcn;
            }
            None => break,
        }
    }
    if !(gn <= GRAD_TOL) {
        return Err(Error::NoConvergence { iterations, residual: gn, best: theta });
    }

    let member = BlockQGaussian::from_theta(q_k, d, &theta)?;
    let mass = member.escort_mass()?;
    let em = member.escort_mean()?;
    let defect = |c: f64| em.iter().zip(t_bar).map(|(e, t)| (mass * e - c * t).abs()).fold(0.0, f64::max);
    Ok(MleResult {
        family: MleFamily::Full,
        q,
        q_k,
        d,
        k,
        objective: fx,
        psi: member.psi(),
        lambda: member.lambda(),
        blocks: member.blocks().to_vec(),
        theta,
        t_bar: t_bar.to_vec(),
        gradient_norm: gn,
        iterations,
        escort_mass: mass,
        reference_mass,
        moment_defect: defect(mass),
        theorem_defect: defect(reference_mass),
    })
}
