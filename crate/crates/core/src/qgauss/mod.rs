//! q-Gaussian families on ℝ^d and their repetition laws.
//!
//! For q ≥ 1 with d(q−1) < 2,
//!
//! ```text
//! p_q^{v,S}(x) = exp_q(−|x−v|²_S − λ_q(S)),   |y|²_S = yᵀ S y,
//! ```
//!
//! and the repetition
//!
//! ```text
//! ρ_{q,k}^{v,S}(x_1..x_k) = exp_q(−Σ_m |x_m−v|²_{β_k S} − ν_k)^{a_k}
//! ```
//!
//! is a consistent family of joint densities: integrating out the last k'
//! blocks of ρ_{q,k+k'} gives ρ_{q,k}. Each ρ_{q,k} is a dk-dimensional
//! Student-t law with ν = 2/(q−1) + 3d degrees of freedom whatever k is,
//! which gives exact sampling and closed-form moments.
//!
//! Vectors in (ℝ^d)^k are passed flat, block after block.

mod mle;
mod student;

pub use mle::{mle, mle_from_statistic, objective as mle_objective, MleFamily, MleResult};
pub use student::{draw_mix, StudentT, TBlock};

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{bail, Error, Result};
use crate::linalg::{self, Matrix};
use crate::num::{exp_q, ln_gamma, ln_gamma_ratio};
use crate::quad::{self, QuadOptions};
use crate::rng;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which slice of the q-Gaussian family a parameter set lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// S = I_d; only the location varies.
    Identity,
    /// tr S = d.
    TraceD,
}

/// Standing hypothesis of the q-Gaussian family: q ≥ 1 and d(q−1) < 2.
pub fn check_hypothesis(q: f64, d: usize) -> Result<()> {
    if !q.is_finite() || q < 1.0 {
        bail!(Domain, "q-Gaussian families need q >= 1, got q = {q}");
    }
    if d == 0 {
        bail!(Domain, "dimension must be positive");
    }
    if d as f64 * (q - 1.0) >= 2.0 {
        bail!(Domain, "d(q-1) < 2 fails: d = {d}, q = {q}");
    }
    Ok(())
}

/// λ_q for a positive-definite S of dimension `dim` given log det S.
///
/// Evaluated in log space; q = 1 takes the Gaussian branch.
pub fn lambda_from_log_det(q: f64, dim: usize, log_det: f64) -> f64 {
    let n = dim as f64;
    if q == 1.0 {
        return -0.5 * log_det + 0.5 * n * PI.ln();
    }
    let kappa = 1.0 / (q - 1.0);
    let log_x = 0.5 * (n * (q - 1.0).ln() - n * PI.ln() + log_det) + ln_gamma_ratio(kappa, 0.5 * n);
    // λ = −ln_q(X^{2/(2+n(1−q))})
    -ln_q_of_exp(q, 2.0 * log_x / (2.0 + n * (1.0 - q)))
}

/// ln_q(e^L) without forming e^L.
fn ln_q_of_exp(q: f64, l: f64) -> f64 {
    libm::expm1((1.0 - q) * l) / (1.0 - q)
}

/// λ_q(S), the normalizer of p_q^{v,S}.
pub fn lambda_q(q: f64, s: &[Vec<f64>]) -> Result<f64> {
    check_hypothesis(q, s.len())?;
    check_spd(s)?;
    Ok(lambda_from_log_det(q, s.len(), linalg::log_det_spd(s)?))
}

fn check_spd(s: &[Vec<f64>]) -> Result<()> {
    if s.is_empty() || !linalg::is_symmetric(s, 1e-12) {
        bail!(Domain, "S must be a nonempty symmetric matrix");
    }
    if !s.iter().flatten().all(|v| v.is_finite()) {
        bail!(Domain, "S has non-finite entries");
    }
    linalg::cholesky(s).map_err(|_| Error::Domain("S must be positive definite".into()))?;
    Ok(())
}

fn check_variant(s: &[Vec<f64>], variant: Variant) -> Result<()> {
    let d = s.len();
    match variant {
        Variant::Full => {}
        Variant::Identity => {
            if linalg::max_abs_diff(s, &linalg::identity(d)) > 1e-12 {
                bail!(Domain, "variant identity requires S = I_d");
            }
        }
        Variant::TraceD => {
            let tr: f64 = (0..d).map(|i| s[i][i]).sum();
            if (tr - d as f64).abs() > 1e-10 * d as f64 {
                bail!(Domain, "variant trace_d requires tr S = {d}, got {tr}");
            }
        }
    }
    Ok(())
}

/// Length d(d+3)/2 of the per-block statistic (F_i, F_ij)_{i ≤ j}.
pub fn block_statistic_len(d: usize) -> usize {
    d * (d + 3) / 2
}

/// (i, j) pairs with i ≤ j in the order the statistics use.
pub fn upper_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect()
}

/// T(x) for x ∈ (ℝ^d)^k: per block F_i(x_m) = x_{m,i}, then F_ij(x_m) = x_{m,i} x_{m,j}.
pub fn statistics(d: usize, x: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(x.len() / d * block_statistic_len(d));
    for xm in x.chunks(d) {
        t.extend_from_slice(xm);
        t.extend(upper_pairs(d).into_iter().map(|(i, j)| xm[i] * xm[j]));
    }
    t
}

/// Location and shape of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub v: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Matrix,
}

impl Block {
    fn theta(&self) -> Vec<f64> {
        let d = self.v.len();
        let sv = linalg::mat_vec(&self.s, &self.v);
        let mut th: Vec<f64> = sv.iter().map(|x| 2.0 * x).collect();
        th.extend(upper_pairs(d).into_iter().map(|(i, j)| if i == j { -self.s[i][i] } else { -2.0 * self.s[i][j] }));
        th
    }

    fn from_theta(d: usize, th: &[f64]) -> Result<Self> {
        let mut s = vec![vec![0.0; d]; d];
        for ((i, j), t) in upper_pairs(d).into_iter().zip(&th[d..]) {
            if i == j {
                s[i][i] = -t;
            } else {
                s[i][j] = -t / 2.0;
                s[j][i] = -t / 2.0;
            }
        }
        check_spd(&s)?;
        let half: Vec<f64> = th[..d].iter().map(|x| x / 2.0).collect();
        let v = linalg::solve(&s, &half)?;
        Ok(Self { v, s })
    }
}

/// exp_q(−Σ_m |x_m − v_m|²_{S_m} − λ) on (ℝ^d)^k: a q-Gaussian whose quadratic
/// form is block diagonal. With k = 1 this is p_q^{v,S}; the repetition
/// densities are members with q_k in place of q.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQGaussian {
    q: f64,
    d: usize,
    blocks: Vec<Block>,
    lambda: f64,
}

impl BlockQGaussian {
    pub fn new(q: f64, blocks: Vec<Block>) -> Result<Self> {
        let Some(d) = blocks.first().map(|b| b.v.len()) else {
            bail!(Domain, "at least one block is required");
        };
        check_hypothesis(q, d * blocks.len())?;
        let mut log_det = 0.0;
        for b in &blocks {
            if b.v.len() != d || b.s.len() != d {
                bail!(Domain, "all blocks must have dimension {d}");
            }
            if !b.v.iter().all(|x| x.is_finite()) {
                bail!(Domain, "location has non-finite entries");
            }
            check_spd(&b.s)?;
            log_det += linalg::log_det_spd(&b.s)?;
        }
        let lambda = lambda_from_log_det(q, d * blocks.len(), log_det);
        Ok(Self { q, d, blocks, lambda })
    }

    /// Member with natural coordinates θ (block-major, see [`statistics`]).
    pub fn from_theta(q: f64, d: usize, theta: &[f64]) -> Result<Self> {
        let n = block_statistic_len(d);
        if theta.is_empty() || !theta.len().is_multiple_of(n) {
            bail!(Domain, "theta length {} is not a multiple of {n}", theta.len());
        }
        let blocks = theta.chunks(n).map(|c| Block::from_theta(d, c)).collect::<Result<Vec<_>>>()?;
        Self::new(q, blocks)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.d * self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(Block::theta).collect()
    }

    /// ψ = Σ_m |v_m|²_{S_m} + λ.
    pub fn psi(&self) -> f64 {
        self.blocks.iter().map(|b| linalg::quad_form(&b.s, &b.v)).sum::<f64>() + self.lambda
    }

    fn quadratic(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .zip(x.chunks(self.d))
            .map(|(b, xm)| {
                let y: Vec<f64> = xm.iter().zip(&b.v).map(|(a, c)| a - c).collect();
                linalg::quad_form(&b.s, &y)
            })
            .sum()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        exp_q(self.q, -self.quadratic(x) - self.lambda)
    }

    /// A/(2 − D(q−1)) with A = 1 + (q−1)λ: the factor c in Σ_m = c·S_m⁻¹.
    fn scale_factor(&self) -> f64 {
        let a = 1.0 + (self.q - 1.0) * self.lambda;
        a / (2.0 - self.dim() as f64 * (self.q - 1.0))
    }

    /// The same law written as a block-diagonal Student-t.
    pub fn student_t(&self) -> Result<StudentT> {
        let c = self.scale_factor();
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let inv = linalg::inverse(&b.s)?;
                TBlock::new(b.v.clone(), scale_matrix(&symmetrize(&inv), c))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.q == 1.0 {
            StudentT::gaussian(blocks)
        } else {
            StudentT::new(2.0 / (self.q - 1.0) - self.dim() as f64, blocks)
        }
    }

    /// 𝕀_χ = ∫ p^q, the escort mass.
    pub fn escort_mass(&self) -> Result<f64> {
        let (log_mass, _) = self.student_t()?.escort(self.q)?;
        Ok(log_mass.exp())
    }

    /// 𝕀_{Tχ}/𝕀_χ, the escort expectation of the statistics.
    ///
    /// The escort of a member is a t law with two more degrees of freedom
    /// whose covariance equals the member's scale matrix c·S⁻¹.
    pub fn escort_mean(&self) -> Result<Vec<f64>> {
        let c = self.scale_factor();
        let mut out = Vec::with_capacity(self.k() * block_statistic_len(self.d));
        for b in &self.blocks {
            let cov = scale_matrix(&linalg::inverse(&b.s)?, c);
            out.extend_from_slice(&b.v);
            out.extend(upper_pairs(self.d).into_iter().map(|(i, j)| b.v[i] * b.v[j] + cov[i][j]));
        }
        Ok(out)
    }
}

fn scale_matrix(m: &[Vec<f64>], c: f64) -> Matrix {
    m.iter().map(|r| r.iter().map(|v| v * c).collect()).collect()
}

fn symmetrize(m: &[Vec<f64>]) -> Matrix {
    let n = m.len();
    (0..n).map(|i| (0..n).map(|j| 0.5 * (m[i][j] + m[j][i])).collect()).collect()
}

/// Unvalidated parameter file: `{"q": .., "d": .., "v": [..], "S": [[..]], "variant": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsRepr {
    pub q: f64,
    #[serde(default)]
    pub d: Option<usize>,
    pub v: Vec<f64>,
    #[serde(rename = "S", default)]
    pub s: Option<Matrix>,
    #[serde(default)]
    pub variant: Variant,
}

impl ParamsRepr {
    /// Every violated standing assumption, empty when the parameters are usable.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.d.unwrap_or(self.v.len());
        if !(self.q.is_finite() && self.q >= 1.0) {
            out.push(format!("q >= 1 violated: q = {}", self.q));
        }
        if d == 0 {
            out.push("dimension must be positive".into());
        } else if self.q.is_finite() && d as f64 * (self.q - 1.0) >= 2.0 {
            out.push(format!("d(q-1) < 2 violated: d = {d}, q = {}", self.q));
        }
        if d != self.v.len() {
            out.push(format!("d = {d} but v has {} entries", self.v.len()));
        }
        if !self.v.iter().all(|x| x.is_finite()) {
            out.push("v has non-finite entries".into());
        }
        let s = self.s.clone().unwrap_or_else(|| linalg::identity(self.v.len()));
        if s.len() != self.v.len() || s.iter().any(|r| r.len() != self.v.len()) {
            out.push(format!("S must be {0}x{0}", self.v.len()));
        } else if let Err(e) = check_spd(&s) {
            out.push(e.to_string());
        } else if let Err(e) = check_variant(&s, self.variant) {
            out.push(e.to_string());
        }
        out
    }
}

impl TryFrom<ParamsRepr> for QGaussianParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        if let Some(d) = r.d {
            if d != r.v.len() {
                bail!(Domain, "d = {d} but v has {} entries", r.v.len());
            }
        }
        let s = r.s.unwrap_or_else(|| linalg::identity(r.v.len()));
        Self::new(r.q, r.v, s, r.variant)
    }
}

/// Parameters (q, d, v, S) of p_q^{v,S}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr")]
pub struct QGaussianParams {
    q: f64,
    d: usize,
    v: Vec<f64>,
    #[serde(rename = "S")]
    s: Matrix,
    variant: Variant,
}

impl QGaussianParams {
    pub fn new(q: f64, v: Vec<f64>, s: Matrix, variant: Variant) -> Result<Self> {
        let d = v.len();
        check_hypothesis(q, d)?;
        if s.len() != d || s.iter().any(|r| r.len() != d) {
            bail!(Domain, "S must be {d}x{d}");
        }
        if !v.iter().all(|x| x.is_finite()) {
            bail!(Domain, "v has non-finite entries");
        }
        check_spd(&s)?;
        check_variant(&s, variant)?;
        Ok(Self { q, d, v, s, variant })
    }

    /// p_q^{v,I_d}.
    pub fn identity(q: f64, v: Vec<f64>) -> Result<Self> {
        let d = v.len();
        Self::new(q, v, linalg::identity(d), Variant::Identity)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn s(&self) -> &Matrix {
        &self.s
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        lambda_from_log_det(self.q, self.d, linalg::log_det_spd(&self.s).expect("validated SPD"))
    }

    pub fn member(&self) -> BlockQGaussian {
        BlockQGaussian::new(self.q, vec![Block { v: self.v.clone(), s: self.s.clone() }]).expect("validated parameters")
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(&self.v).map(|(a, b)| a - b).collect();
        exp_q(self.q, -linalg::quad_form(&self.s, &y) - self.lambda())
    }

    pub fn student_t(&self) -> Result<StudentT> {
        self.member().student_t()
    }

    pub fn coordinates(&self) -> CoordinateRep {
        CoordinateRep::new(self)
    }

    pub fn repetition(&self, k: usize) -> Result<RepetitionLaw> {
        RepetitionLaw::new(self.clone(), k)
    }
}

/// Global coordinate representation of a variant slice: statistics T,
/// offset c, natural coordinates θ and normalizer ψ with
/// ln_q p(x) = ⟨θ, T(x)⟩ − c(x) − ψ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateRep {
    pub variant: Variant,
    pub d: usize,
    pub labels: Vec<String>,
    pub theta: Vec<f64>,
    pub psi: f64,
}

impl CoordinateRep {
    fn new(p: &QGaussianParams) -> Self {
        let d = p.d;
        let sv = linalg::mat_vec(&p.s, &p.v);
        let mut labels: Vec<String> = (1..=d).map(|i| format!("F_{i}")).collect();
        let mut theta: Vec<f64> = sv.iter().map(|x| 2.0 * x).collect();
        let quad_terms = match p.variant {
            Variant::Identity => Vec::new(),
            Variant::Full => upper_pairs(d),
            Variant::TraceD => upper_pairs(d).into_iter().filter(|&(i, j)| !(i == d - 1 && j == d - 1)).collect(),
        };
        for (i, j) in quad_terms {
            if p.variant == Variant::TraceD && i == j {
                labels.push(format!("F_{}{} - F_{d}{d}", i + 1, j + 1));
            } else {
                labels.push(format!("F_{}{}", i + 1, j + 1));
            }
            theta.push(if i == j { -p.s[i][i] } else { -2.0 * p.s[i][j] });
        }
        let psi = linalg::quad_form(&p.s, &p.v) + p.lambda();
        Self { variant: p.variant, d, labels, theta, psi }
    }

    pub fn statistics(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut t = x[..d].to_vec();
        match self.variant {
            Variant::Identity => {}
            Variant::Full => t.extend(upper_pairs(d).into_iter().map(|(i, j)| x[i] * x[j])),
            Variant::TraceD => {
                let last = x[d - 1] * x[d - 1];
                for (i, j) in upper_pairs(d) {
                    if i == d - 1 && j == d - 1 {
                        continue;
                    }
                    t.push(if i == j { x[i] * x[i] - last } else { x[i] * x[j] });
                }
            }
        }
        t
    }

    pub fn offset(&self, x: &[f64]) -> f64 {
        match self.variant {
            Variant::Full => 0.0,
            Variant::Identity => x.iter().map(|v| v * v).sum(),
            Variant::TraceD => self.d as f64 * x[self.d - 1] * x[self.d - 1],
        }
    }

    /// ⟨θ, T(x)⟩ − c(x) − ψ.
    pub fn exponent(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.theta, &self.statistics(x)) - self.offset(x) - self.psi
    }
}

/// ρ_{q,k}^{v,S} with its constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionLaw {
    pub base: QGaussianParams,
    pub k: usize,
    pub a_k: f64,
    pub q_k: f64,
    pub beta_k: f64,
    pub nu_k: f64,
}

/// a_k = 1 + (k+3)d(q−1)/2.
pub fn a_const(q: f64, d: usize, k: usize) -> f64 {
    1.0 + (k as f64 + 3.0) * d as f64 * (q - 1.0) / 2.0
}

/// q_k = 1 + (q−1)/a_k.
pub fn q_const(q: f64, d: usize, k: usize) -> f64 {
    1.0 + (q - 1.0) / a_const(q, d, k)
}

/// log β_k(S) given log det S.
fn log_beta(q: f64, d: usize, k: usize, log_det: f64) -> f64 {
    let n = d as f64;
    if q == 1.0 {
        return -log_det / n;
    }
    let qk = q_const(q, d, k);
    -((q - 1.0).ln() - PI.ln() + log_det / n) + (1.0 - qk) * ln_gamma(1.0 / (qk - 1.0))
}

fn nu_const(q: f64, d: usize, k: usize) -> f64 {
    if q == 1.0 {
        return 0.5 * (d * k) as f64 * PI.ln();
    }
    let (qk, q0) = (q_const(q, d, k), q_const(q, d, 0));
    let l = ln_gamma(1.0 / (qk - 1.0)) / a_const(q, d, k) - ln_gamma(1.0 / (q0 - 1.0)) / a_const(q, d, 0);
    -ln_q_of_exp(q, l)
}

impl RepetitionLaw {
    pub fn new(base: QGaussianParams, k: usize) -> Result<Self> {
        if k == 0 {
            bail!(Domain, "repetition length k must be positive");
        }
        let (q, d) = (base.q, base.d);
        check_hypothesis(q, d)?;
        let log_det = linalg::log_det_spd(&base.s)?;
        let log_b = log_beta(q, d, k, log_det);
        // det(β_k(S) S) must not depend on S
        let lhs = d as f64 * log_b + log_det;
        let rhs = d as f64 * log_beta(q, d, k, 0.0);
        if (lhs - rhs).abs() > 1e-12 * (1.0 + rhs.abs()) {
            bail!(Invariant, "det(beta_k(S) S) depends on S: {lhs} vs {rhs}");
        }
        let law = Self {
            a_k: a_const(q, d, k),
            q_k: q_const(q, d, k),
            beta_k: log_b.exp(),
            nu_k: nu_const(q, d, k),
            base,
            k,
        };
        if q > 1.0 && !(law.nu_dof() > 2.0) {
            bail!(Invariant, "degrees of freedom {} must exceed 2", law.nu_dof());
        }
        Ok(law)
    }

    pub fn d(&self) -> usize {
        self.base.d
    }

    pub fn dim(&self) -> usize {
        self.base.d * self.k
    }

    /// 2a_k/(q−1) − dk, or ∞ for q = 1.
    pub fn nu_dof(&self) -> f64 {
        let q = self.base.q;
        if q == 1.0 {
            f64::INFINITY
        } else {
            2.0 * self.a_k / (q - 1.0) - self.dim() as f64
        }
    }

    /// ρ_{q,k}(x) from its defining formula.
    pub fn joint_density(&self, x: &[f64]) -> f64 {
        let d = self.base.d;
        let mut quad = 0.0;
        for xm in x.chunks(d).take(self.k) {
            let y: Vec<f64> = xm.iter().zip(&self.base.v).map(|(a, b)| a - b).collect();
            quad += self.beta_k * linalg::quad_form(&self.base.s, &y);
        }
        let u = exp_q(self.base.q, -quad - self.nu_k);
        u.powf(self.a_k)
    }

    /// ρ_{q,k} as a member of the block family with deformation q_k:
    /// blocks (v, a_k β_k S).
    pub fn member(&self) -> Result<BlockQGaussian> {
        let s = scale_matrix(&self.base.s, self.a_k * self.beta_k);
        let block = Block { v: self.base.v.clone(), s };
        BlockQGaussian::new(self.q_k, vec![block; self.k])
    }

    /// Scale matrix of each block: B/(ν(q−1)β_k)·S⁻¹ with B = 1 + (q−1)ν_k,
    /// or (2β_k S)⁻¹ when q = 1.
    pub fn block_scale(&self) -> Result<Matrix> {
        let q = self.base.q;
        let inv = symmetrize(&linalg::inverse(&self.base.s)?);
        let c = if q == 1.0 {
            0.5 / self.beta_k
        } else {
            (1.0 + (q - 1.0) * self.nu_k) / (self.nu_dof() * (q - 1.0) * self.beta_k)
        };
        Ok(scale_matrix(&inv, c))
    }

    /// Law of one block X_m; the same for every m and every k.
    pub fn block_law(&self) -> Result<StudentT> {
        StudentT::new(self.nu_dof(), vec![TBlock::new(self.base.v.clone(), self.block_scale()?)?])
    }

    pub fn student_t(&self) -> Result<StudentT> {
        let block = TBlock::new(self.base.v.clone(), self.block_scale()?)?;
        StudentT::new(self.nu_dof(), vec![block; self.k])
    }

    /// Streams one joint draw block by block without materializing it.
    ///
    /// The mixing variable is drawn first, so the first k blocks of a draw
    /// of length K > k are a draw of ρ_{q,k} from the same generator state.
    pub fn sample_stream<R: Rng + ?Sized, F: FnMut(usize, &[f64])>(&self, rng: &mut R, mut visit: F) -> Result<()> {
        let block = TBlock::new(self.base.v.clone(), self.block_scale()?)?;
        let mix = draw_mix(self.nu_dof(), rng);
        let mut buf = vec![0.0; self.base.d];
        for m in 0..self.k {
            block.draw(rng, mix, &mut buf);
            visit(m, &buf);
        }
        Ok(())
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_stream(rng, |_, x| out.extend_from_slice(x))?;
        Ok(out)
    }

    /// `n` joint draws; draw i uses stream i of `seed`, so the output does
    /// not depend on how the draws are split across workers.
    pub fn sample_joint(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|i| self.sample_one(&mut rng::stream(seed, i as u64))).collect()
    }

    /// 𝕀_χ(ρ) = ∫ ρ^{q_k}.
    pub fn escort_mass(&self) -> Result<f64> {
        let (log_mass, _) = self.student_t()?.escort(self.q_k)?;
        Ok(log_mass.exp())
    }

    /// ∫ stat·ρ^{q_k} from the t-escort closed form.
    pub fn escort_moment(&self, stat: Statistic) -> Result<EscortMoment> {
        stat.check(self.base.d, self.k)?;
        let (log_mass, escort) = self.student_t()?.escort(self.q_k)?;
        let mass = log_mass.exp();
        let normalized = escort.raw_moment(&stat.indices(self.base.d))?;
        Ok(EscortMoment { raw: mass * normalized, mass, normalized })
    }

    /// ∫ stat·ρ^{q_k} by adaptive quadrature (d = 1, k ≤ 2).
    pub fn escort_moment_quadrature(&self, stat: Statistic, opts: QuadOptions) -> Result<EscortMoment> {
        stat.check(self.base.d, self.k)?;
        if self.base.d != 1 || self.k > 2 {
            bail!(Domain, "quadrature escort moments support d = 1 and k <= 2");
        }
        let idx = stat.indices(1);
        let qk = self.q_k;
        let (c, w) = (self.base.v[0], self.block_scale()?[0][0].sqrt());
        let weight = |x: &[f64]| self.joint_density(x).powf(qk);
        let eval = |with_stat: bool| -> Result<f64> {
            let g = |x: &[f64]| {
                let s = if with_stat { idx.iter().map(|&i| x[i]).product::<f64>() } else { 1.0 };
                s * weight(x)
            };
            Ok(if self.k == 1 {
                quad::integrate_real_line(|x| g(&[x]), c, w, opts)?.value
            } else {
                quad::integrate_plane(|x, y| g(&[x, y]), (c, c), (w, w), opts)?.value
            })
        };
        let mass = eval(false)?;
        let raw = eval(true)?;
        Ok(EscortMoment { raw, mass, normalized: raw / mass })
    }
}

/// A statistic on (ℝ^d)^k, indices zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// F_i(x_m) = x_{m,i}.
    F { m: usize, i: usize },
    /// F_ij(x_m) = x_{m,i} x_{m,j}.
    Fij { m: usize, i: usize, j: usize },
    /// F_i(x_m) F_j(x_n) across two blocks.
    Cross { m: usize, i: usize, n: usize, j: usize },
}

impl Statistic {
    fn indices(&self, d: usize) -> Vec<usize> {
        match *self {
            Statistic::F { m, i } => vec![m * d + i],
            Statistic::Fij { m, i, j } => vec![m * d + i, m * d + j],
            Statistic::Cross { m, i, n, j } => vec![m * d + i, n * d + j],
        }
    }

    fn check(&self, d: usize, k: usize) -> Result<()> {
        let ok = match *self {
            Statistic::F { m, i } => m < k && i < d,
            Statistic::Fij { m, i, j } => m < k && i < d && j < d,
            Statistic::Cross { m, i, n, j } => m < k && n < k && i < d && j < d,
        };
        if !ok {
            bail!(Domain, "statistic {self:?} is out of range for d = {d}, k = {k}");
        }
        Ok(())
    }
}

/// ∫ stat·ρ^{q_k} (`raw`), ∫ ρ^{q_k} (`mass`) and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscortMoment {
    pub raw: f64,
    pub mass: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPoint {
    pub x: Vec<f64>,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub q: f64,
    pub d: usize,
    pub k: usize,
    pub kprime: usize,
    pub points: Vec<MarginalPoint>,
    pub max_defect: f64,
}

/// [`marginal_check`] on `n` grid points spread over `v ± 4` in every block.
///
/// Block `m` of point `j` takes grid value `(j + 3m) mod n`, so multi-block
/// points are not confined to the diagonal.
pub fn marginal_report(p: &QGaussianParams, k: usize, kprime: usize, n: usize, opts: QuadOptions) -> Result<MarginalReport> {
    if n < 2 {
        bail!(Domain, "grid needs at least two points");
    }
    let law_k = p.repetition(k)?;
    let law_kplus = p.repetition(k + kprime)?;
    let c = p.v.first().copied().unwrap_or(0.0);
    let g: Vec<f64> = (0..n).map(|j| c - 4.0 + 8.0 * j as f64 / (n - 1) as f64).collect();
    let mut points = Vec::with_capacity(n);
    let mut max_defect = 0.0f64;
    for j in 0..n {
        let x: Vec<f64> = (0..k * p.d).map(|m| g[(j + 3 * m) % n]).collect();
        let defect = marginal_check(&law_kplus, &law_k, &x, opts)?;
        max_defect = max_defect.max(defect);
        points.push(MarginalPoint { x, defect });
    }
    Ok(MarginalReport { q: p.q, d: p.d, k, kprime, points, max_defect })
}

/// |∫ ρ_{q,k+k'}(x, y) dy − ρ_{q,k}(x)| by adaptive quadrature over y.
///
/// Supports d = 1 and k' ∈ {1, 2}.
pub fn marginal_check(law_kplus: &RepetitionLaw, law_k: &RepetitionLaw, x: &[f64], opts: QuadOptions) -> Result<f64> {
    if law_kplus.base != law_k.base {
        bail!(Domain, "both laws must share (q, d, v, S)");
    }
    if law_kplus.k <= law_k.k {
        bail!(Domain, "the longer law must have k + k' > k blocks");
    }
    let kprime = law_kplus.k - law_k.k;
    if law_k.d() != 1 || kprime > 2 {
        bail!(Domain, "marginal quadrature supports d = 1 and k' <= 2, got d = {}, k' = {kprime}", law_k.d());
    }
    if x.len() != law_k.dim() {
        bail!(Domain, "x must have {} entries", law_k.dim());
    }
    let c = law_k.base.v[0];
    let w = law_kplus.block_scale()?[0][0].sqrt();
    let mut buf = x.to_vec();
    buf.extend(core::iter::repeat_n(0.0, kprime));
    let n = x.len();
    let integral = if kprime == 1 {
        quad::integrate_real_line(
            |y| {
                let mut z = buf.clone();
                z[n] = y;
                law_kplus.joint_density(&z)
            },
            c,
            w,
            opts,
        )?
        .value
    } else {
        quad::integrate_plane(
            |y1, y2| {
                let mut z = buf.clone();
                z[n] = y1;
                z[n + 1] = y2;
                law_kplus.joint_density(&z)
            },
            (c, c),
            (w, w),
            opts,
        )?
        .value
    };
    Ok((integral - law_k.joint_density(x)).abs())
}

/// E[Π (x_a − c_a)] under `t`, expanded into raw moments.
fn centered_moment(t: &StudentT, factors: &[(usize, f64)]) -> Result<f64> {
    let n = factors.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut coef = 1.0;
        let mut idx = Vec::new();
        for (bit, &(a, c)) in factors.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                idx.push(a);
            } else {
                coef *= -c;
            }
        }
        if coef != 0.0 {
            total += coef * t.raw_moment(&idx)?;
        }
    }
    Ok(total)
}

/// Moments of ι_1(p) and ι_2(p) entering the Chebyshev bounds for the pair
/// (F_i, F_ij), with Y = F_i − 𝕀_{F_i}(ι_1 p) and Z = F_ij − 𝕀_{F_ij}(ι_1 p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevMoments {
    pub i: usize,
    pub j: usize,
    /// 𝕀_{F_i}(ι_1 p).
    pub mean_fi: f64,
    /// 𝕀_{F_ii}(ι_1 p).
    pub mean_fii: f64,
    /// E(Y_1⁴).
    pub e_y4: f64,
    /// E(Y_1² Y_2²) under ι_2(p).
    pub e_y1sq_y2sq: f64,
    /// 𝕀_{F_ij}(ι_1 p).
    pub mean_fij: f64,
    /// E(Z_1²).
    pub e_z1sq: f64,
    /// E(Z_1 Z_2) under ι_2(p).
    pub e_z1z2: f64,
}

pub fn chebyshev_moments(p: &QGaussianParams, i: usize, j: usize) -> Result<ChebyshevMoments> {
    let d = p.d;
    if i >= d || j >= d {
        bail!(Domain, "indices ({i}, {j}) out of range for d = {d}");
    }
    let t1 = p.repetition(1)?.student_t()?;
    let t2 = p.repetition(2)?.student_t()?;
    let mean_fi = t1.raw_moment(&[i])?;
    let mean_fii = t1.raw_moment(&[i, i])?;
    let e_y4 = centered_moment(&t1, &[(i, mean_fi); 4])?;
    let e_y1sq_y2sq = centered_moment(&t2, &[(i, mean_fi), (i, mean_fi), (d + i, mean_fi), (d + i, mean_fi)])?;
    let mean_fij = t1.raw_moment(&[i, j])?;
    let e_z1sq = t1.raw_moment(&[i, j, i, j])? - mean_fij * mean_fij;
    let e_z1z2 = t2.raw_moment(&[i, j, d + i, d + j])? - mean_fij * mean_fij;
    Ok(ChebyshevMoments { i, j, mean_fi, mean_fii, e_y4, e_y1sq_y2sq, mean_fij, e_z1sq, e_z1z2 })
}

/// Moments of the common law ι_1(p) of the repeated draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub nu_dof: f64,
    pub scale: Matrix,
    pub mean: Vec<f64>,
    /// E[x_i x_j].
    pub second: Matrix,
    pub covariance: Matrix,
    /// E[(x_i − v_i)⁴].
    pub fourth_central: Vec<f64>,
    /// Pair moments from ι_2(p), one entry per i ≤ j.
    pub pairs: Vec<ChebyshevMoments>,
}

pub fn moments(p: &QGaussianParams) -> Result<MomentReport> {
    let law = p.repetition(1)?;
    let t = law.block_law()?;
    let d = p.d;
    let mean = t.mean();
    let mut second = vec![vec![0.0; d]; d];
    for (i, row) in second.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = t.raw_moment(&[i, j])?;
        }
    }
    let fourth_central = (0..d).map(|i| centered_moment(&t, &[(i, mean[i]); 4])).collect::<Result<Vec<_>>>()?;
    let pairs = upper_pairs(d).into_iter().map(|(i, j)| chebyshev_moments(p, i, j)).collect::<Result<Vec<_>>>()?;
    Ok(MomentReport {
        nu_dof: law.nu_dof(),
        scale: law.block_scale()?,
        covariance: t.block_covariance(0)?,
        mean,
        second,
        fourth_central,
        pairs,
    })
}

/// Kolmogorov–Smirnov statistic sup|F_n − F| given sorted samples and the
/// model CDF at each of them.
pub fn ks_statistic(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value sqrt(−ln(α/2)/2)/√n.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// CDF of a density on ℝ at sorted points, accumulated piece by piece.
pub fn cdf_at_sorted<F: Fn(f64) -> f64>(density: F, sorted: &[f64], center: f64, scale: f64, opts: QuadOptions) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(sorted.len());
    let Some(&first) = sorted.first() else {
        return Ok(out);
    };
    let mut acc = quad::integrate_general(&density, f64::NEG_INFINITY, first, center, scale, opts)?.value;
    out.push(acc);
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            acc += quad::integrate(&density, w[0], w[1], opts)?.value;
        }
        out.push(acc);
    }
    Ok(out)
}

/// One-dimensional KS test of samples against a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub n: usize,
    pub statistic: f64,
    pub critical: f64,
    pub alpha: f64,
    pub pass: bool,
}

pub fn ks_test<F: Fn(f64) -> f64>(density: F, samples: &[f64], center: f64, scale: f64, alpha: f64) -> Result<KsReport> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cdf = cdf_at_sorted(density, &sorted, center, scale, QuadOptions::tol(1e-13, 1e-11))?;
    let statistic = ks_statistic(&cdf);
    let critical = ks_critical(sorted.len(), alpha);
    Ok(KsReport { n: sorted.len(), statistic, critical, alpha, pass: statistic < critical })
}
