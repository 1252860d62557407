//! Deformed exponential families on a finite sample space.
//!
//! A family is given by positive weights `μ`, a gauge, a statistic matrix
//! `T` (one row per coordinate) and an offset `c`; its densities are
//!
//! ```text
//! p_θ(x) = exp_{h,τ}(⟨θ, T(x)⟩ − c(x) − ψ(θ)),   Σ_x p_θ(x) μ(x) = 1.
//! ```
//!
//! Integrals `𝕀_f(p) = Σ_x f(p(x)) μ(x)` appear throughout; `∂_i p = χ(p)(T_i − ∂_iψ)`
//! drives every derivative below.

#[allow(unused_imports)]
use num_traits::Float;
use crate::diff;
use crate::error::{bail, Error, Result};
use crate::gauge::{GaugeDescriptor, GaugeTriple};
use crate::linalg::{self, Matrix};
use crate::num::ksum;
use crate::roots::{newton_bisect, RootOptions};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Serializable family description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub weights: Vec<f64>,
    pub gauge: GaugeDescriptor,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    /// Offset per sample point; empty means zero.
    #[serde(default)]
    pub c: Vec<f64>,
    /// Per-coordinate `[lo, hi]`, `null` for an open end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_box: Option<Vec<[Option<f64>; 2]>>,
}

impl FamilyFile {
    pub fn build(&self) -> Result<DiscreteFamilySpec> {
        let gauge = self.gauge.build()?;
        let c = if self.c.is_empty() {
            vec![0.0; self.weights.len()]
        } else {
            self.c.clone()
        };
        let theta_box = self.theta_box.as_ref().map(|b| {
            b.iter()
                .map(|[lo, hi]| (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
                .collect()
        });
        let mut spec = DiscreteFamilySpec::new(self.weights.clone(), gauge, self.t.clone(), c, theta_box)?;
        spec.descriptor = Some(self.gauge);
        Ok(spec)
    }

    /// Gauge invariants and family conditions that fail, empty when the
    /// file describes a valid family.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.gauge.build().and_then(|g| g.validate()) {
            Ok(()) => {
                if let Err(e) = self.build() {
                    out.push(e.to_string());
                }
            }
            Err(e) => out.push(format!("gauge: {e}")),
        }
        out
    }
}

/// A validated family.
#[derive(Debug, Clone)]
pub struct DiscreteFamilySpec {
    weights: Vec<f64>,
    gauge: GaugeTriple,
    t: Matrix,
    c: Vec<f64>,
    theta_box: Vec<(f64, f64)>,
    descriptor: Option<GaugeDescriptor>,
}

/// A member of the family: `θ`, its normalization `ψ(θ)` and density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub theta: Vec<f64>,
    pub psi: f64,
    pub p: Vec<f64>,
}

/// Metric, connection and `ψ` derivatives at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub theta: Vec<f64>,
    pub psi: f64,
    pub p: Vec<f64>,
    pub psi_gradient: Vec<f64>,
    pub psi_hessian: Matrix,
    pub metric: Matrix,
    /// `connection_raw[i][j][k] = g(∇_{∂i}∂j, ∂k)`.
    pub connection_raw: Vec<Matrix>,
    /// `𝕀_τ(p)`.
    pub tau_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub theta: Vec<f64>,
    pub g: Matrix,
    pub christoffel_raw: Vec<Matrix>,
    pub potential: f64,
    pub hess_potential: Matrix,
    /// `max |hess_potential − g|`.
    pub max_defect: f64,
    /// `max |christoffel_raw|`; zero in affine coordinates.
    pub connection_max: f64,
    /// Largest deviation of `𝕀_τ` from its value at `theta` over the probes.
    pub tau_mass_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    /// Left-hand side built from the potential.
    pub potential_side: f64,
    /// The divergence side.
    pub divergence_side: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub theta: Vec<f64>,
    pub psi: f64,
    pub p: Vec<f64>,
    /// `‖𝕀_{Tτ}(p★) − 𝕀_{Tτ}(ρ)‖∞`.
    pub residual: f64,
    /// `|𝕀_τ(p★) − 𝕀_τ(ρ)|`, zero automatically when `τ = id`.
    pub tau_mass_residual: f64,
    pub iterations: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyMaxReport {
    pub entropy_source: f64,
    pub entropy_projected: f64,
    /// `D(ρ, p★)`, which equals the entropy gain when `c ≡ 0`.
    pub divergence: f64,
    /// `max |ρ − p★|`.
    pub distance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamReport {
    /// Largest sup-norm difference between the two densities.
    pub max_density_defect: f64,
    /// Largest `|ψ' − ψ − ⟨θ', v₂⟩|`.
    pub max_psi_defect: f64,
    pub points: usize,
}

const RANK_THRESHOLD: f64 = 1e-10;
const FD_REL_STEP: f64 = 1e-4;
const TAU_CONSTANT_TOL: f64 = 1e-8;
const CONFORMAL_TOL: f64 = 1e-10;

/// Per-point quantities shared by the derivative formulas.
struct Local {
    psi: f64,
    p: Vec<f64>,
    chi: Vec<f64>,
    /// `∂ψ = 𝕀_{Tχ}/𝕀_χ`
    grad: Vec<f64>,
    /// `T_i(x) − ∂_iψ`
    centered: Matrix,
}

impl DiscreteFamilySpec {
    pub fn new(
        weights: Vec<f64>,
        gauge: GaugeTriple,
        t: Matrix,
        c: Vec<f64>,
        theta_box: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let size = weights.len();
        if size == 0 {
            bail!(Domain, "empty sample space");
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            bail!(Domain, "weights must be positive and finite, found {w}");
        }
        if c.len() != size {
            bail!(Domain, "offset has length {}, expected {size}", c.len());
        }
        if c.iter().any(|v| !v.is_finite()) {
            bail!(Domain, "offset entries must be finite");
        }
        let n = t.len();
        if n == 0 {
            bail!(Domain, "statistic matrix has no rows");
        }
        for (i, row) in t.iter().enumerate() {
            if row.len() != size {
                bail!(Domain, "row {i} of T has length {}, expected {size}", row.len());
            }
            if row.iter().any(|v| !v.is_finite()) {
                bail!(Domain, "row {i} of T has a non-finite entry");
            }
        }
        if n > size - 1 {
            bail!(Invariant, "{n} statistics on {size} points: at most {} allowed", size - 1);
        }
        let mut stacked = t.clone();
        stacked.push(vec![1.0; size]);
        let r = linalg::rank(&stacked, RANK_THRESHOLD);
        if r < n + 1 {
            bail!(
                Invariant,
                "rows of T together with the constant row are linearly dependent (rank {r} < {})",
                n + 1
            );
        }
        let theta_box = match theta_box {
            Some(b) => {
                if b.len() != n {
                    bail!(Domain, "theta box has {} coordinates, expected {n}", b.len());
                }
                if let Some((lo, hi)) = b.iter().find(|(lo, hi)| !(lo < hi)) {
                    bail!(Domain, "empty theta box side [{lo}, {hi}]");
                }
                b
            }
            None => vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        };
        Ok(Self {
            weights,
            gauge,
            t,
            c,
            theta_box,
            descriptor: None,
        })
    }

    /// Number of statistics `n`.
    pub fn dim(&self) -> usize {
        self.t.len()
    }

    /// `|X|`.
    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gauge(&self) -> &GaugeTriple {
        &self.gauge
    }

    pub fn statistics(&self) -> &Matrix {
        &self.t
    }

    pub fn offset(&self) -> &[f64] {
        &self.c
    }

    pub fn theta_box(&self) -> &[(f64, f64)] {
        &self.theta_box
    }

    pub fn descriptor(&self) -> Option<GaugeDescriptor> {
        self.descriptor
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            bail!(Domain, "theta has {} coordinates, expected {}", theta.len(), self.dim());
        }
        for (i, (&v, &(lo, hi))) in theta.iter().zip(&self.theta_box).enumerate() {
            if !v.is_finite() || v < lo || v > hi {
                bail!(Domain, "theta[{i}] = {v} outside [{lo}, {hi}]");
            }
        }
        Ok(())
    }

    /// Check that `p` is a density of this base valued in the gauge interval.
    pub fn check_density(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.size() {
            bail!(Domain, "density has {} entries, expected {}", p.len(), self.size());
        }
        let i = self.gauge.interval();
        if let Some(v) = p.iter().find(|v| !i.contains(**v)) {
            bail!(Domain, "density value {v} outside the gauge interval {i}");
        }
        let mass = self.integral(p.iter().copied());
        if (mass - 1.0).abs() > 1e-10 {
            bail!(Domain, "density has total mass {mass}");
        }
        Ok(())
    }

    fn integral(&self, vals: impl Iterator<Item = f64>) -> f64 {
        ksum(vals.zip(&self.weights).map(|(v, w)| v * w))
    }

    /// `⟨θ, T(x)⟩ − c(x)` for every `x`.
    fn exponent(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|x| ksum(self.t.iter().zip(theta).map(|(row, th)| row[x] * th)) - self.c[x])
            .collect()
    }

    /// Solve for `ψ` without checking the θ box.
    fn solve(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let a = self.exponent(theta);
        let g = &self.gauge;
        let total: f64 = ksum(self.weights.iter().copied());
        // A density in I with mass 1 has μ-average 1/Σμ, which must lie in I.
        let t0 = 1.0 / total;
        if !g.interval().contains(t0) {
            bail!(Infeasible, "the uniform level 1/sum(weights) = {t0} is outside {}", g.interval());
        }
        let l0 = g.ell().value(t0);
        let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(amin.is_finite() && amax.is_finite()) {
            bail!(Numeric, "non-finite exponent");
        }
        // every p(x) ≥ t0 at psi_lo and ≤ t0 at psi_hi
        let (psi_lo, psi_hi) = (amin - l0, amax - l0);
        let psi = if psi_lo == psi_hi {
            psi_lo
        } else {
            let f = |psi: f64| {
                let mut mass = crate::num::KahanSum::new();
                let mut slope = crate::num::KahanSum::new();
                for (ax, w) in a.iter().zip(&self.weights) {
                    let p = g.exp(ax - psi);
                    mass.add(p * w);
                    slope.add(-g.chi(p) * w);
                }
                (mass.value() - 1.0, slope.value())
            };
            newton_bisect(
                f,
                psi_lo,
                psi_hi,
                RootOptions {
                    abs_tol: 1e-13,
                    max_iter: 400,
                },
            )?
        };
        let p: Vec<f64> = a.iter().map(|ax| g.exp(ax - psi)).collect();
        let i = g.interval();
        if let Some((x, v)) = p.iter().enumerate().find(|(_, v)| !i.contains(**v)) {
            bail!(
                Infeasible,
                "no normalization keeps the density inside {i}: p[{x}] = {v} at theta = {theta:?}"
            );
        }
        Ok((psi, p))
    }

    /// Normalization `ψ(θ)` and the density `p_θ`.
    pub fn normalize(&self, theta: &[f64]) -> Result<Member> {
        self.check_theta(theta)?;
        let (psi, p) = self.solve(theta)?;
        Ok(Member {
            theta: theta.to_vec(),
            psi,
            p,
        })
    }

    fn local(&self, theta: &[f64]) -> Result<Local> {
        let (psi, p) = self.solve(theta)?;
        let chi: Vec<f64> = p.iter().map(|&v| self.gauge.chi(v)).collect();
        let ichi = self.integral(chi.iter().copied());
        let grad: Vec<f64> = self
            .t
            .iter()
            .map(|row| self.integral(row.iter().zip(&chi).map(|(t, c)| t * c)) / ichi)
            .collect();
        let centered = self
            .t
            .iter()
            .zip(&grad)
            .map(|(row, gi)| row.iter().map(|t| t - gi).collect())
            .collect();
        Ok(Local {
            psi,
            p,
            chi,
            grad,
            centered,
        })
    }

    /// `Σ_x w(x) (T_i − ∂_iψ)(T_j − ∂_jψ) μ(x)`.
    fn weighted_gram(&self, loc: &Local, w: &[f64]) -> Matrix {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.integral((0..self.size()).map(|x| w[x] * loc.centered[i][x] * loc.centered[j][x]));
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    fn hessian_from(&self, loc: &Local) -> Matrix {
        let ichi = self.integral(loc.chi.iter().copied());
        let w: Vec<f64> = loc
            .p
            .iter()
            .zip(&loc.chi)
            .map(|(&p, &c)| self.gauge.chi_d1(p) * c / ichi)
            .collect();
        self.weighted_gram(loc, &w)
    }

    fn metric_from(&self, loc: &Local) -> Matrix {
        let w: Vec<f64> = loc
            .p
            .iter()
            .zip(&loc.chi)
            .map(|(&p, &c)| self.gauge.tau().d1(p) * c)
            .collect();
        self.weighted_gram(loc, &w)
    }

    /// `∂_k 𝕀_τ = Σ τ'(p) χ(p) (T_k − ∂_kψ) μ`.
    fn tau_mass_gradient(&self, loc: &Local) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                self.integral(
                    (0..self.size()).map(|x| self.gauge.tau().d1(loc.p[x]) * loc.chi[x] * loc.centered[k][x]),
                )
            })
            .collect()
    }

    fn connection_from(&self, loc: &Local, hess: &Matrix) -> Vec<Matrix> {
        let dk = self.tau_mass_gradient(loc);
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| dk.iter().map(|d| -hess[i][j] * d).collect()).collect())
            .collect()
    }

    /// `∂_iψ = 𝕀_{T_i χ}/𝕀_χ`.
    pub fn psi_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self.local(theta)?.grad)
    }

    /// `∂_i∂_jψ = Σ χ'(p)χ(p)(T_i − ∂_iψ)(T_j − ∂_jψ)μ / 𝕀_χ`.
    pub fn psi_hessian(&self, theta: &[f64]) -> Result<Matrix> {
        self.check_theta(theta)?;
        Ok(self.hessian_from(&self.local(theta)?))
    }

    /// `g_ij = Σ (T_i − ∂_iψ)(T_j − ∂_jψ) τ'(p) χ(p) μ`.
    pub fn metric(&self, theta: &[f64]) -> Result<Matrix> {
        self.check_theta(theta)?;
        Ok(self.metric_from(&self.local(theta)?))
    }

    /// `g(∇_{∂i}∂j, ∂k) = −∂_i∂_jψ · ∂_k𝕀_τ`.
    pub fn connection_raw(&self, theta: &[f64]) -> Result<Vec<Matrix>> {
        self.check_theta(theta)?;
        let loc = self.local(theta)?;
        let hess = self.hessian_from(&loc);
        Ok(self.connection_from(&loc, &hess))
    }

    pub fn geometry(&self, theta: &[f64]) -> Result<Geometry> {
        self.check_theta(theta)?;
        let loc = self.local(theta)?;
        let hess = self.hessian_from(&loc);
        let connection_raw = self.connection_from(&loc, &hess);
        let metric = self.metric_from(&loc);
        let tau_mass = self.tau_mass(&loc.p);
        Ok(Geometry {
            theta: theta.to_vec(),
            psi: loc.psi,
            p: loc.p,
            psi_gradient: loc.grad,
            psi_hessian: hess,
            metric,
            connection_raw,
            tau_mass,
        })
    }

    /// `D(p, p') = Σ d(p(x), p'(x)) μ(x)`.
    pub fn divergence(&self, p: &[f64], p2: &[f64]) -> Result<f64> {
        if p.len() != self.size() || p2.len() != self.size() {
            bail!(Domain, "density length mismatch");
        }
        let terms: Result<Vec<f64>> = p
            .iter()
            .zip(p2)
            .zip(&self.weights)
            .map(|((&a, &b), w)| Ok(self.gauge.d(a, b)? * w))
            .collect();
        Ok(ksum(terms?))
    }

    /// `𝕀_s(p)` with `s = −h∘τ`.
    pub fn entropy(&self, p: &[f64]) -> Result<f64> {
        let i = self.gauge.interval();
        if p.len() != self.size() {
            bail!(Domain, "density length mismatch");
        }
        if let Some(v) = p.iter().find(|v| !i.contains(**v)) {
            bail!(Domain, "density value {v} outside {i}");
        }
        Ok(self.integral(p.iter().map(|&v| self.gauge.entropy_density(v))))
    }

    /// `𝕀_τ(p)`.
    pub fn tau_mass(&self, p: &[f64]) -> f64 {
        self.integral(p.iter().map(|&v| self.gauge.tau().value(v)))
    }

    /// `𝕀_{T_i τ}(p)` for each statistic.
    pub fn tau_moments(&self, p: &[f64]) -> Vec<f64> {
        self.t
            .iter()
            .map(|row| self.integral(row.iter().zip(p).map(|(t, &v)| t * self.gauge.tau().value(v))))
            .collect()
    }

    /// The potential `Φ = −𝕀_{s★} + ψ 𝕀_τ`.
    pub fn potential(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let (psi, p) = self.solve(theta)?;
        Ok(self.potential_of(psi, &p))
    }

    fn potential_of(&self, psi: f64, p: &[f64]) -> f64 {
        -self.integral(p.iter().map(|&v| self.gauge.s_star(v))) + psi * self.tau_mass(p)
    }

    /// `∇Φ = 𝕀_{Tτ} + ψ ∇𝕀_τ`.
    pub fn potential_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let loc = self.local(theta)?;
        let dk = self.tau_mass_gradient(&loc);
        Ok(self
            .tau_moments(&loc.p)
            .into_iter()
            .zip(dk)
            .map(|(m, d)| m + loc.psi * d)
            .collect())
    }

    fn probe_points(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..self.dim() {
            for sign in [-1.0, 1.0] {
                let mut y = theta.to_vec();
                y[i] += sign * 0.05 * theta[i].abs().max(1.0);
                out.push(y);
            }
        }
        let mut y = theta.to_vec();
        for (k, v) in y.iter_mut().enumerate() {
            *v += if k % 2 == 0 { 0.03 } else { -0.04 };
        }
        out.push(y);
        out
    }

    /// Largest change of `𝕀_τ` between `theta` and nearby probes.
    fn tau_mass_variation(&self, theta: &[f64], at: f64) -> f64 {
        self.probe_points(theta)
            .iter()
            .filter_map(|y| self.solve(y).ok())
            .map(|(_, p)| (self.tau_mass(&p) - at).abs())
            .fold(0.0, f64::max)
    }

    fn require_constant_tau_mass(&self, theta: &[f64]) -> Result<f64> {
        let (_, p) = self.solve(theta)?;
        let at = self.tau_mass(&p);
        let var = self.tau_mass_variation(theta, at);
        if var > TAU_CONSTANT_TOL {
            bail!(
                NotApplicable,
                "the tau-mass varies by {var:e} near theta; the Hessian-structure theorem needs it constant"
            );
        }
        Ok(var)
    }

    /// Compare the finite-difference Hessian of the potential with the
    /// metric. Needs `𝕀_τ` constant along the family.
    pub fn hessian_check(&self, theta: &[f64]) -> Result<GeometryReport> {
        self.check_theta(theta)?;
        let variation = self.require_constant_tau_mass(theta)?;
        let geo = self.geometry(theta)?;
        let phi = |y: &[f64]| {
            self.solve(y)
                .map(|(psi, p)| self.potential_of(psi, &p))
                .unwrap_or(f64::NAN)
        };
        let hess = diff::hessian(&phi, theta, FD_REL_STEP);
        if hess.iter().flatten().any(|v| !v.is_finite()) {
            bail!(Numeric, "finite-difference stencil left the feasible region");
        }
        let max_defect = linalg::max_abs_diff(&hess, &geo.metric);
        let connection_max = geo
            .connection_raw
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(GeometryReport {
            theta: theta.to_vec(),
            potential: self.potential_of(geo.psi, &geo.p),
            g: geo.metric,
            christoffel_raw: geo.connection_raw,
            hess_potential: hess,
            max_defect,
            connection_max,
            tau_mass_variation: variation,
        })
    }

    /// `|Φ(θ') − Φ(θ) + ⟨θ − θ', ∇Φ(θ)⟩ − D(p_θ, p_θ')|`.
    pub fn canonical_divergence_check(&self, theta: &[f64], theta2: &[f64]) -> Result<DivergenceCheck> {
        self.check_theta(theta)?;
        self.check_theta(theta2)?;
        self.require_constant_tau_mass(theta)?;
        let (psi1, p1) = self.solve(theta)?;
        let (psi2, p2) = self.solve(theta2)?;
        let grad = self.potential_gradient(theta)?;
        let lin = ksum(theta.iter().zip(theta2).zip(&grad).map(|((a, b), g)| (a - b) * g));
        let lhs = self.potential_of(psi2, &p2) - self.potential_of(psi1, &p1) + lin;
        let d = self.divergence(&p1, &p2)?;
        Ok(DivergenceCheck {
            potential_side: lhs,
            divergence_side: d,
            defect: (lhs - d).abs(),
        })
    }

    /// The conformal branch: `τ/χ` constant. Compares
    /// `ψ(θ') − ψ(θ) + ⟨θ − θ', ∇ψ(θ)⟩` with `D(p_θ, p_θ')/𝕀_τ(p_θ)`.
    pub fn conformal_check(&self, theta: &[f64], theta2: &[f64]) -> Result<DivergenceCheck> {
        self.check_theta(theta)?;
        self.check_theta(theta2)?;
        self.require_conformal()?;
        let loc = self.local(theta)?;
        let (psi2, p2) = self.solve(theta2)?;
        let lin = ksum(theta.iter().zip(theta2).zip(&loc.grad).map(|((a, b), g)| (a - b) * g));
        let lhs = psi2 - loc.psi + lin;
        let d = self.divergence(&loc.p, &p2)? / self.tau_mass(&loc.p);
        Ok(DivergenceCheck {
            potential_side: lhs,
            divergence_side: d,
            defect: (lhs - d).abs(),
        })
    }

    /// `max_x |τ(p)/χ(p)|`-variation check over a grid of the interval.
    pub fn require_conformal(&self) -> Result<f64> {
        let g = &self.gauge;
        let grid = g.interval().grid(64, None);
        let ratios: Vec<f64> = grid.iter().map(|&t| g.tau().value(t) / g.chi(t)).collect();
        let r0 = ratios[0];
        let var = ratios.iter().map(|r| (r - r0).abs() / r0.abs()).fold(0.0, f64::max);
        if var > CONFORMAL_TOL {
            bail!(NotApplicable, "tau/chi is not constant on the interval (relative variation {var:e})");
        }
        Ok(r0)
    }

    /// `𝕀_{Tτ}(p_θ)/𝕀_τ(p_θ)`.
    pub fn escort_tau_mean(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let (_, p) = self.solve(theta)?;
        let m = self.tau_mass(&p);
        Ok(self.tau_moments(&p).into_iter().map(|v| v / m).collect())
    }

    /// Find `θ★` with `𝕀_{Tτ}(p_{θ★}) = 𝕀_{Tτ}(ρ)` by damped Newton.
    pub fn project(&self, rho: &[f64]) -> Result<Projection> {
        self.check_density(rho)?;
        let target = self.tau_moments(rho);
        let tau_rho = self.tau_mass(rho);
        let n = self.dim();
        let residual = |theta: &[f64]| -> Option<(Vec<f64>, f64)> {
            if self.check_theta(theta).is_err() {
                return None;
            }
            let (_, p) = self.solve(theta).ok()?;
            let r: Vec<f64> = self
                .tau_moments(&p)
                .iter()
                .zip(&target)
                .map(|(a, b)| a - b)
                .collect();
            let norm = linalg::norm_inf(&r);
            norm.is_finite().then_some((r, norm))
        };
        let mut best: (f64, Vec<f64>) = (f64::INFINITY, vec![0.0; n]);
        let mut total_iters = 0;
        for restart in 0..=PROJECT_RESTARTS {
            let start = self.restart_point(restart);
            let Some((mut r, mut norm)) = residual(&start) else {
                continue;
            };
            let mut theta = start;
            for _ in 0..PROJECT_MAX_ITER {
                if norm < best.0 {
                    best = (norm, theta.clone());
                }
                if norm <= PROJECT_TOL {
                    break;
                }
                total_iters += 1;
                let jac = match self.moment_jacobian(&theta) {
                    Ok(j) => j,
                    Err(_) => break,
                };
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                let Ok(step) = linalg::solve(&jac, &neg) else {
                    break;
                };
                let mut alpha = 1.0;
                let mut moved = false;
                while alpha >= PROJECT_MIN_STEP {
                    let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + alpha * s).collect();
                    if let Some((r2, n2)) = residual(&trial) {
                        if n2 <= (1.0 - 1e-4 * alpha) * norm {
                            theta = trial;
                            r = r2;
                            norm = n2;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if norm < best.0 {
                best = (norm, theta.clone());
            }
            if best.0 <= PROJECT_TOL {
                let (psi, p) = self.solve(&best.1)?;
                let tau_mass_residual = (self.tau_mass(&p) - tau_rho).abs();
                return Ok(Projection {
                    theta: best.1,
                    psi,
                    p,
                    residual: best.0,
                    tau_mass_residual,
                    iterations: total_iters,
                    restarts: restart,
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: total_iters,
            residual: best.0,
            best: best.1,
        })
    }

    /// `J_ij = ∂_j 𝕀_{T_i τ} = Σ T_i τ'(p) χ(p) (T_j − ∂_jψ) μ`.
    pub fn moment_jacobian(&self, theta: &[f64]) -> Result<Matrix> {
        let loc = self.local(theta)?;
        let n = self.dim();
        let w: Vec<f64> = (0..self.size())
            .map(|x| self.gauge.tau().d1(loc.p[x]) * loc.chi[x])
            .collect();
        Ok((0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.integral((0..self.size()).map(|x| self.t[i][x] * w[x] * loc.centered[j][x])))
                    .collect()
            })
            .collect())
    }

    /// Deterministic restart points: the origin (clamped into the box), then
    /// a golden-ratio sequence over the box (or `[-2, 2]ⁿ` when unbounded).
    fn restart_point(&self, k: usize) -> Vec<f64> {
        const PHI: f64 = 0.618_033_988_749_894_9;
        self.theta_box
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let (a, b) = (if lo.is_finite() { lo } else { -2.0 }, if hi.is_finite() { hi } else { 2.0 });
                if k == 0 {
                    return 0.0f64.clamp(lo, hi);
                }
                let u = ((k * (i + 1)) as f64 * PHI + 0.5 * i as f64).fract();
                a + u * (b - a)
            })
            .collect()
    }

    /// Project `ρ` and compare entropies. Requires `c ≡ 0`.
    pub fn entropy_max_check(&self, rho: &[f64]) -> Result<EntropyMaxReport> {
        if self.c.iter().any(|&v| v != 0.0) {
            bail!(NotApplicable, "entropy maximization needs a vanishing offset c");
        }
        let proj = self.project(rho)?;
        let es = self.entropy(rho)?;
        let ep = self.entropy(&proj.p)?;
        let divergence = self.divergence(rho, &proj.p)?;
        let distance = rho
            .iter()
            .zip(&proj.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tol = 1e-10 * es.abs().max(1.0);
        let gain = ep - es;
        // equality exactly when ρ is the projection
        let holds = gain >= -tol && ((gain.abs() <= tol) == (distance <= 1e-5));
        Ok(EntropyMaxReport {
            entropy_source: es,
            entropy_projected: ep,
            divergence,
            distance,
            holds,
        })
    }

    /// The representation `T' = AᵀT + v₂`, `c' = c − ⟨v₁, T⟩`, whose
    /// coordinates relate by `θ = Aθ' + v₁` and `ψ' = ψ + ⟨θ', v₂⟩`.
    pub fn reparametrize(&self, a: &Matrix, v1: &[f64], v2: &[f64]) -> Result<Self> {
        let n = self.dim();
        if a.len() != n || a.iter().any(|r| r.len() != n) || v1.len() != n || v2.len() != n {
            bail!(Domain, "reparametrization needs an {n}x{n} matrix and two {n}-vectors");
        }
        if linalg::rank(a, RANK_THRESHOLD) < n {
            bail!(Singular, "reparametrization matrix is singular");
        }
        let size = self.size();
        let t2: Matrix = (0..n)
            .map(|j| {
                (0..size)
                    .map(|x| ksum((0..n).map(|i| a[i][j] * self.t[i][x])) + v2[j])
                    .collect()
            })
            .collect();
        let c2: Vec<f64> = (0..size)
            .map(|x| self.c[x] - ksum((0..n).map(|i| v1[i] * self.t[i][x])))
            .collect();
        let mut out = Self::new(self.weights.clone(), self.gauge.clone(), t2, c2, None)?;
        out.descriptor = self.descriptor;
        Ok(out)
    }

    /// Densities of the original and reparametrized representation over a
    /// grid of original coordinates `thetas`.
    pub fn affine_reparam_check(&self, a: &Matrix, v1: &[f64], v2: &[f64], thetas: &[Vec<f64>]) -> Result<ReparamReport> {
        let other = self.reparametrize(a, v1, v2)?;
        let mut max_density_defect: f64 = 0.0;
        let mut max_psi_defect: f64 = 0.0;
        for theta in thetas {
            let shifted: Vec<f64> = theta.iter().zip(v1).map(|(t, v)| t - v).collect();
            let theta2 = linalg::solve(a, &shifted)?;
            let (psi, p) = self.solve(theta)?;
            let (psi2, p2) = other.solve(&theta2)?;
            let d = p.iter().zip(&p2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            max_density_defect = max_density_defect.max(d);
            let expected = psi + linalg::dot(&theta2, v2);
            max_psi_defect = max_psi_defect.max((psi2 - expected).abs());
        }
        Ok(ReparamReport {
            max_density_defect,
            max_psi_defect,
            points: thetas.len(),
        })
    }

    /// A deterministic grid of `count` interior points in `[-r, r]ⁿ`.
    pub fn theta_grid(&self, count: usize, r: f64) -> Vec<Vec<f64>> {
        const PHI: f64 = 0.618_033_988_749_894_9;
        (0..count)
            .map(|k| {
                (0..self.dim())
                    .map(|i| {
                        let u = ((k + 1) as f64 * PHI * (i as f64 + 1.0).sqrt()).fract();
                        (-r + 2.0 * r * u).clamp(self.theta_box[i].0, self.theta_box[i].1)
                    })
                    .collect()
            })
            .collect()
    }
}

const PROJECT_TOL: f64 = 1e-12;
const PROJECT_MAX_ITER: usize = 100;
const PROJECT_RESTARTS: usize = 10;
const PROJECT_MIN_STEP: f64 = 1e-8;
