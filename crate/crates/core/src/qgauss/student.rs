//! Block-diagonal multivariate Student-t laws and their Gaussian limit.
//!
//! Every q-Gaussian with q > 1 is a Student-t law, and the repetition
//! densities are t laws whose scale matrix is block diagonal. Moments come
//! from the scale-mixture form `x = μ + s·L z` with `s² = ν/W`, `W ~ χ²_ν`,
//! which is also how samples are drawn.

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{bail, Result};
use crate::linalg::{self, Matrix};
use crate::num::ln_gamma;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// One diagonal block: location and scale matrix of a group of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TBlock {
    loc: Vec<f64>,
    scale: Matrix,
    chol: Matrix,
    log_det: f64,
}

impl TBlock {
    pub fn new(loc: Vec<f64>, scale: Matrix) -> Result<Self> {
        if scale.len() != loc.len() || !linalg::is_symmetric(&scale, 1e-12) {
            bail!(Domain, "block scale must be a symmetric {}x{} matrix", loc.len(), loc.len());
        }
        let chol = linalg::cholesky(&scale)?;
        let log_det = 2.0 * (0..chol.len()).map(|i| chol[i][i].ln()).sum::<f64>();
        Ok(Self { loc, scale, chol, log_det })
    }

    pub fn loc(&self) -> &[f64] {
        &self.loc
    }

    pub fn scale(&self) -> &Matrix {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    /// Squared Mahalanobis distance (x − μ)ᵀ Σ⁻¹ (x − μ).
    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        // forward substitution with the lower factor
        let n = self.loc.len();
        let mut y = alloc::vec![0.0; n];
        for i in 0..n {
            let mut acc = x[i] - self.loc[i];
            for j in 0..i {
                acc -= self.chol[i][j] * y[j];
            }
            y[i] = acc / self.chol[i][i];
        }
        y.iter().map(|v| v * v).sum()
    }

    /// Writes `μ + mix · L z` into `out` with fresh standard normals `z`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, mix: f64, out: &mut [f64]) {
        let n = self.loc.len();
        out[..n].copy_from_slice(&self.loc);
        // L is lower triangular, so z_j only feeds rows i ≥ j
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            for i in j..n {
                out[i] += mix * self.chol[i][j] * z;
            }
        }
    }
}

/// Multivariate t law with block-diagonal scale. `nu = ∞` is the Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentT {
    nu: f64,
    blocks: Vec<TBlock>,
}

impl StudentT {
    pub fn new(nu: f64, blocks: Vec<TBlock>) -> Result<Self> {
        if !(nu > 0.0) {
            bail!(Domain, "degrees of freedom must be positive, got {nu}");
        }
        if blocks.is_empty() {
            bail!(Domain, "a t law needs at least one block");
        }
        Ok(Self { nu, blocks })
    }

    pub fn gaussian(blocks: Vec<TBlock>) -> Result<Self> {
        Self::new(f64::INFINITY, blocks)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }

    pub fn blocks(&self) -> &[TBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(TBlock::dim).sum()
    }

    fn log_det(&self) -> f64 {
        self.blocks.iter().map(|b| b.log_det).sum()
    }

    /// Log of the normalizing constant in front of the kernel.
    pub fn log_norm(&self) -> f64 {
        let dim = self.dim() as f64;
        if self.is_gaussian() {
            -0.5 * dim * (2.0 * PI).ln() - 0.5 * self.log_det()
        } else {
            let nu = self.nu;
            ln_gamma(0.5 * (nu + dim)) - ln_gamma(0.5 * nu) - 0.5 * dim * (nu * PI).ln() - 0.5 * self.log_det()
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        let mut at = 0;
        for b in &self.blocks {
            q += b.mahalanobis(&x[at..at + b.dim()]);
            at += b.dim();
        }
        if self.is_gaussian() {
            self.log_norm() - 0.5 * q
        } else {
            self.log_norm() - 0.5 * (self.nu + self.dim() as f64) * libm::log1p(q / self.nu)
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// E[s^{2p}] of the mixing variable, finite iff ν > 2p.
    pub fn mixing_moment(&self, p: u32) -> Result<f64> {
        if self.is_gaussian() {
            return Ok(1.0);
        }
        let nu = self.nu;
        let mut m = 1.0;
        for j in 1..=p {
            let den = nu - 2.0 * j as f64;
            if den <= 0.0 {
                bail!(DivergentMoment, "moment of order {} needs nu > {}, got nu = {nu}", 2 * p, 2 * p);
            }
            m *= nu / den;
        }
        Ok(m)
    }

    fn locate(&self, a: usize) -> (usize, usize) {
        let mut off = 0;
        for (bi, b) in self.blocks.iter().enumerate() {
            if a < off + b.dim() {
                return (bi, a - off);
            }
            off += b.dim();
        }
        panic!("coordinate {a} out of range");
    }

    fn loc_at(&self, a: usize) -> f64 {
        let (b, i) = self.locate(a);
        self.blocks[b].loc[i]
    }

    fn scale_at(&self, a: usize, c: usize) -> f64 {
        let (ba, i) = self.locate(a);
        let (bc, j) = self.locate(c);
        if ba == bc {
            self.blocks[ba].scale[i][j]
        } else {
            0.0
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.loc.iter().copied()).collect()
    }

    /// Covariance ν/(ν−2)·Σ of one block.
    pub fn block_covariance(&self, b: usize) -> Result<Matrix> {
        let m2 = self.mixing_moment(1)?;
        Ok(self.blocks[b].scale.iter().map(|r| r.iter().map(|v| m2 * v).collect()).collect())
    }

    /// Raw moment E[x_{a1}⋯x_{an}] for n ≤ 4 (global coordinate indices).
    pub fn raw_moment(&self, idx: &[usize]) -> Result<f64> {
        let n = idx.len();
        if n > 4 {
            bail!(Domain, "raw moments are implemented up to order 4, got {n}");
        }
        let mut total = 0.0;
        // expand Π (μ_a + y_a) over subsets of centered factors
        for mask in 0u32..(1 << n) {
            let centered: Vec<usize> = (0..n).filter(|&t| mask & (1 << t) != 0).map(|t| idx[t]).collect();
            let mut mu = 1.0;
            for t in 0..n {
                if mask & (1 << t) == 0 {
                    mu *= self.loc_at(idx[t]);
                }
            }
            if mu == 0.0 {
                continue;
            }
            let c = match centered.len() {
                0 => 1.0,
                2 => {
                    let s = self.scale_at(centered[0], centered[1]);
                    if s == 0.0 { 0.0 } else { self.mixing_moment(1)? * s }
                }
                4 => {
                    let (a, b, c, d) = (centered[0], centered[1], centered[2], centered[3]);
                    let wick = self.scale_at(a, b) * self.scale_at(c, d)
                        + self.scale_at(a, c) * self.scale_at(b, d)
                        + self.scale_at(a, d) * self.scale_at(b, c);
                    if wick == 0.0 { 0.0 } else { self.mixing_moment(2)? * wick }
                }
                _ => 0.0,
            };
            total += mu * c;
        }
        Ok(total)
    }

    /// The law proportional to `density^r`, with log ∫ density^r.
    ///
    /// A power of a t density is again a t density with ν' = r(ν+D) − D and
    /// scale Σν/ν'; a power of a Gaussian is a Gaussian with scale Σ/r.
    pub fn escort(&self, r: f64) -> Result<(f64, StudentT)> {
        if !(r > 0.0) {
            bail!(Domain, "escort power must be positive, got {r}");
        }
        let dim = self.dim() as f64;
        let (nu2, factor) = if self.is_gaussian() {
            (f64::INFINITY, 1.0 / r)
        } else {
            let nu2 = r * (self.nu + dim) - dim;
            if !(nu2 > 0.0) {
                bail!(DivergentMoment, "density^{r} is not integrable (nu' = {nu2})");
            }
            (nu2, self.nu / nu2)
        };
        let blocks = self
            .blocks
            .iter()
            .map(|b| TBlock::new(b.loc.clone(), b.scale.iter().map(|row| row.iter().map(|v| v * factor).collect()).collect()))
            .collect::<Result<Vec<_>>>()?;
        let escort = StudentT::new(nu2, blocks)?;
        Ok((r * self.log_norm() - escort.log_norm(), escort))
    }

    /// Draws the shared mixing factor s = √(ν/W).
    pub fn draw_mix<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_mix(self.nu, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mix = self.draw_mix(rng);
        let mut out = alloc::vec![0.0; self.dim()];
        let mut at = 0;
        for b in &self.blocks {
            b.draw(rng, mix, &mut out[at..at + b.dim()]);
            at += b.dim();
        }
        out
    }
}

/// √(ν/W) with W ~ χ²_ν, or 1 in the Gaussian case.
pub fn draw_mix<R: Rng + ?Sized>(nu: f64, rng: &mut R) -> f64 {
    if nu.is_infinite() {
        return 1.0;
    }
    let chi = ChiSquared::new(nu).expect("positive degrees of freedom");
    let w: f64 = chi.sample(rng);
    (nu / w).sqrt()
}
