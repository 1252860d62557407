//! Law-of-large-numbers experiments for dependent, identically distributed
//! q-Gaussian sequences.
//!
//! A sequence X_1, X_2, … is read off one joint draw of ρ_{q,k_max}^{v,S};
//! by the marginal condition every prefix has the right joint law and each
//! X_m has the law ι_1(p). The almost-sure limit itself cannot be observed,
//! so three finite-sample surrogates are reported: exceedance frequencies
//! against the Chebyshev bounds, summability of the bound series, and the
//! decay of median deviations.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::Matrix;
use crate::num::KahanSum;
use crate::qgauss::{self, upper_pairs, ChebyshevMoments, QGaussianParams, RepetitionLaw, Variant};
use crate::rng;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Two-sided 99% normal quantile used for Wilson intervals.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub q: f64,
    pub d: usize,
    pub v: Vec<f64>,
    pub variant: Variant,
    /// Shape for `trace_d`; defaults to I_d.
    #[serde(default, rename = "S", skip_serializing_if = "Option::is_none")]
    pub s: Option<Matrix>,
    pub k_max: usize,
    pub reps: usize,
    pub seed: u64,
    pub eps_grid: Vec<f64>,
    /// Checkpoints k at which averages are recorded; defaults to
    /// {10, 10², …} ∪ {k_max}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Full {
            bail!(Domain, "simulations use the identity or trace_d slice");
        }
        if self.v.len() != self.d {
            bail!(Domain, "v has {} entries but d = {}", self.v.len(), self.d);
        }
        if self.k_max == 0 || self.reps == 0 {
            bail!(Domain, "k_max and reps must be positive");
        }
        if self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            bail!(Domain, "eps_grid entries must be positive");
        }
        if let Some(c) = &self.checkpoints {
            if c.is_empty() || c.iter().any(|&k| k == 0 || k > self.k_max) || c.windows(2).any(|w| w[0] >= w[1]) {
                bail!(Domain, "checkpoints must be strictly increasing within 1..=k_max");
            }
        }
        self.params().map(|_| ())
    }

    pub fn params(&self) -> Result<QGaussianParams> {
        let s = match (&self.s, self.variant) {
            (Some(s), Variant::TraceD) => s.clone(),
            (Some(_), _) => bail!(Domain, "S is only configurable for trace_d"),
            (None, _) => crate::linalg::identity(self.d),
        };
        QGaussianParams::new(self.q, self.v.clone(), s, self.variant)
    }

    pub fn schedule(&self) -> Vec<usize> {
        if let Some(c) = &self.checkpoints {
            return c.clone();
        }
        let mut out = Vec::new();
        let mut k = 10usize;
        while k < self.k_max {
            out.push(k);
            k = k.saturating_mul(10);
        }
        out.push(self.k_max);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatKind {
    /// F_i(x) = x_i (zero-based i).
    F { i: usize },
    /// F_ij(x) = x_i x_j.
    Fij { i: usize, j: usize },
}

impl StatKind {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            StatKind::F { i } => x[i],
            StatKind::Fij { i, j } => x[i] * x[j],
        }
    }
}

/// A tracked statistic with its limit 𝕀_T(ι_1 p).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedStat {
    pub label: String,
    pub kind: StatKind,
    pub target: f64,
    /// Status of the almost-sure limit for this statistic.
    pub guarantee: String,
}

fn tracked_stats(cfg: &SimConfig, moments: &[ChebyshevMoments]) -> Vec<TrackedStat> {
    let mut out = Vec::new();
    for i in 0..cfg.d {
        let m = moments.iter().find(|m| m.i == i && m.j == i).expect("diagonal moments");
        let guarantee = match cfg.variant {
            Variant::Identity => "proved",
            _ => "extension remarked for F_i",
        };
        out.push(TrackedStat { label: format!("F_{}", i + 1), kind: StatKind::F { i }, target: m.mean_fi, guarantee: guarantee.into() });
    }
    if cfg.variant == Variant::TraceD {
        for m in moments {
            out.push(TrackedStat {
                label: format!("F_{}{}", m.i + 1, m.j + 1),
                kind: StatKind::Fij { i: m.i, j: m.j },
                target: m.mean_fij,
                guarantee: "no theoretical guarantee".into(),
            });
        }
    }
    out
}

/// Chebyshev bounds for F_i and F_ij at (k, ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevBound {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub eps: f64,
    /// Fourth-moment bound on P(|avg F_i − 𝕀_{F_i}| > ε).
    pub bound_f: f64,
    /// Second-moment bound on P(|avg F_ij − 𝕀_{F_ij}| > ε).
    pub bound_ff: f64,
}

pub fn bounds_from_moments(m: &ChebyshevMoments, k: usize, eps: f64) -> ChebyshevBound {
    let kf = k as f64;
    let e2 = eps * eps;
    let bound_f = m.e_y4 / (kf * kf * kf * e2 * e2) + 3.0 * (kf - 1.0) * m.e_y1sq_y2sq / (kf * kf * kf * e2 * e2);
    let bound_ff = m.e_z1sq / (kf * e2) + (kf - 1.0) * m.e_z1z2 / (kf * e2);
    ChebyshevBound { i: m.i, j: m.j, k, eps, bound_f, bound_ff }
}

/// Moments of ι_1(p), ι_2(p) for every pair i ≤ j.
pub fn bound_moments(cfg: &SimConfig) -> Result<Vec<ChebyshevMoments>> {
    let p = cfg.params()?;
    upper_pairs(cfg.d).into_iter().map(|(i, j)| qgauss::chebyshev_moments(&p, i, j)).collect()
}

pub fn chebyshev_bounds(cfg: &SimConfig, k: usize, eps: f64) -> Result<Vec<ChebyshevBound>> {
    if k == 0 || !(eps > 0.0) {
        bail!(Domain, "need k >= 1 and eps > 0");
    }
    Ok(bound_moments(cfg)?.iter().map(|m| bounds_from_moments(m, k, eps)).collect())
}

/// Running averages of one replication at every checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RepTrace {
    pub rep: usize,
    /// `averages[c][s]`: statistic s averaged over the first checkpoint[c] draws.
    pub averages: Vec<Vec<f64>>,
}

/// Everything `run_rep` needs, built once per configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: SimConfig,
    pub law: RepetitionLaw,
    pub schedule: Vec<usize>,
    pub stats: Vec<TrackedStat>,
    pub moments: Vec<ChebyshevMoments>,
}

pub fn prepare(cfg: &SimConfig) -> Result<Prepared> {
    cfg.validate()?;
    let moments = bound_moments(cfg)?;
    Ok(Prepared {
        law: cfg.params()?.repetition(cfg.k_max)?,
        schedule: cfg.schedule(),
        stats: tracked_stats(cfg, &moments),
        moments,
        config: cfg.clone(),
    })
}

/// One replication on RNG stream `rep` of the configured seed.
pub fn run_rep(prep: &Prepared, rep: usize) -> Result<RepTrace> {
    let mut rng = rng::stream(prep.config.seed, rep as u64);
    let mut sums = vec![KahanSum::new(); prep.stats.len()];
    let mut averages = Vec::with_capacity(prep.schedule.len());
    let mut next = 0;
    prep.law.sample_stream(&mut rng, |m, x| {
        for (acc, st) in sums.iter_mut().zip(&prep.stats) {
            acc.add(st.kind.eval(x));
        }
        if next < prep.schedule.len() && m + 1 == prep.schedule[next] {
            let k = (m + 1) as f64;
            averages.push(sums.iter().map(|s| s.value() / k).collect());
            next += 1;
        }
    })?;
    Ok(RepTrace { rep, averages })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageRow {
    pub k: usize,
    pub rep: usize,
    pub stat: String,
    pub average: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceRow {
    pub k: usize,
    pub eps: f64,
    pub stat: String,
    pub exceed: usize,
    pub reps: usize,
    pub frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub checkpoints: Vec<usize>,
    pub stats: Vec<TrackedStat>,
    /// Replication r used RNG stream r of `config.seed`.
    pub streams: Vec<u64>,
    pub averages: Vec<AverageRow>,
    pub exceedance: Vec<ExceedanceRow>,
    pub note: String,
}

/// Wilson score interval for `count` successes out of `n`.
pub fn wilson(count: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = count as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Builds the report from per-replication traces (any order).
pub fn assemble(prep: &Prepared, mut traces: Vec<RepTrace>) -> Result<SimReport> {
    traces.sort_by_key(|t| t.rep);
    let cfg = &prep.config;
    if traces.len() != cfg.reps || traces.iter().enumerate().any(|(i, t)| t.rep != i) {
        bail!(Invariant, "expected one trace per replication 0..{}", cfg.reps);
    }
    let mut averages = Vec::with_capacity(prep.schedule.len() * cfg.reps * prep.stats.len());
    for (c, &k) in prep.schedule.iter().enumerate() {
        for t in &traces {
            for (s, st) in prep.stats.iter().enumerate() {
                let a = t.averages[c][s];
                averages.push(AverageRow { k, rep: t.rep, stat: st.label.clone(), average: a, deviation: a - st.target });
            }
        }
    }
    let mut exceedance = Vec::new();
    for (c, &k) in prep.schedule.iter().enumerate() {
        for &eps in &cfg.eps_grid {
            for (s, st) in prep.stats.iter().enumerate() {
                let exceed = traces.iter().filter(|t| (t.averages[c][s] - st.target).abs() > eps).count();
                let bound = match st.kind {
                    StatKind::F { i } => {
                        let m = prep.moments.iter().find(|m| m.i == i && m.j == i).expect("diagonal moments");
                        bounds_from_moments(m, k, eps).bound_f
                    }
                    StatKind::Fij { i, j } => {
                        let m = prep.moments.iter().find(|m| m.i == i && m.j == j).expect("pair moments");
                        bounds_from_moments(m, k, eps).bound_ff
                    }
                };
                let (lo, hi) = wilson(exceed, cfg.reps, Z_99);
                exceedance.push(ExceedanceRow {
                    k,
                    eps,
                    stat: st.label.clone(),
                    exceed,
                    reps: cfg.reps,
                    frequency: exceed as f64 / cfg.reps as f64,
                    wilson_lo: lo,
                    wilson_hi: hi,
                    bound,
                    pass: lo <= bound,
                });
            }
        }
    }
    Ok(SimReport {
        config: cfg.clone(),
        checkpoints: prep.schedule.clone(),
        stats: prep.stats.clone(),
        streams: (0..cfg.reps as u64).collect(),
        averages,
        exceedance,
        note: "finite-sample surrogates of an almost-sure limit: bound verification, bound-series summability, median decay".into(),
    })
}

/// Sequential driver; parallel callers map `run_rep` over reps and call
/// [`assemble`], which gives bit-identical results.
pub fn run_lln(cfg: &SimConfig) -> Result<SimReport> {
    let prep = prepare(cfg)?;
    let traces = (0..cfg.reps).map(|r| run_rep(&prep, r)).collect::<Result<Vec<_>>>()?;
    assemble(&prep, traces)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyTable {
    pub rows: Vec<ExceedanceRow>,
    pub all_pass: bool,
    /// Fewer than 100 replications make the binomial intervals too wide to
    /// say much.
    pub reps_sufficient: bool,
}

pub fn verify_bounds(report: &SimReport) -> VerifyTable {
    VerifyTable {
        all_pass: report.exceedance.iter().all(|r| r.pass),
        rows: report.exceedance.clone(),
        reps_sufficient: report.config.reps >= 100,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianRow {
    pub k: usize,
    pub median_abs_deviation: f64,
}

/// Median over replications of |avg_k − target| for one statistic.
pub fn median_deviations(report: &SimReport, stat: &str) -> Vec<MedianRow> {
    report
        .checkpoints
        .iter()
        .map(|&k| {
            let mut devs: Vec<f64> =
                report.averages.iter().filter(|r| r.k == k && r.stat == stat).map(|r| r.deviation.abs()).collect();
            devs.sort_by(f64::total_cmp);
            MedianRow { k, median_abs_deviation: median_sorted(&devs) }
        })
        .collect()
}

fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub k: usize,
    pub term: f64,
    /// k² times the term; bounded when terms decay like k⁻².
    pub k2_term: f64,
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummabilityTable {
    pub i: usize,
    pub eps: f64,
    pub k_end: usize,
    pub rows: Vec<SeriesRow>,
    /// Relative change of the partial sum over the last decade.
    pub last_decade_rel_change: f64,
}

/// Partial sums of Σ_k bound_F(k, ε) for statistic F_i, reported at
/// decades up to `k_end`.
pub fn borel_cantelli_summability(cfg: &SimConfig, i: usize, eps: f64, k_end: usize) -> Result<SummabilityTable> {
    if i >= cfg.d || !(eps > 0.0) || k_end < 10 {
        bail!(Domain, "need i < d, eps > 0 and k_end >= 10");
    }
    let moments = bound_moments(cfg)?;
    let m = moments.iter().find(|m| m.i == i && m.j == i).expect("diagonal moments");
    let mut acc = KahanSum::new();
    let mut rows = Vec::new();
    let mut next = 1usize;
    for k in 1..=k_end {
        let term = bounds_from_moments(m, k, eps).bound_f;
        acc.add(term);
        if k == next || k == k_end {
            let kf = k as f64;
            rows.push(SeriesRow { k, term, k2_term: kf * kf * term, partial_sum: acc.value() });
            if k == next {
                next = next.saturating_mul(10);
            }
        }
    }
    let n = rows.len();
    let last_decade_rel_change = if n >= 2 { (rows[n - 1].partial_sum - rows[n - 2].partial_sum) / rows[n - 1].partial_sum } else { f64::NAN };
    Ok(SummabilityTable { i, eps, k_end, rows, last_decade_rel_change })
}
