//! Command-line verbs and their mapping onto library calls.
//!
//! Every action loads its inputs, makes one library call (or one per
//! requested point) and hands the serialized result to the output layer.
//! Checks with a pass/fail outcome report [`Status::Fail`], which the binary
//! turns into exit code 2.

use crate::bundle::{self, Bundle};
use crate::error::{CliError, Result};
use crate::io::{self, load_json, to_value, Table};
use crate::parallel::run_lln_parallel;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dgeo_core::discrete::{DiscreteFamilySpec, FamilyFile};
use dgeo_core::gauge::{EquivalenceTransform, GaugeDescriptor, GaugeFn};
use dgeo_core::lln::{self, SimConfig};
use dgeo_core::qgauss::{self, MleFamily, ParamsRepr, QGaussianParams, Variant};
use dgeo_core::quad::QuadOptions;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "dgeo", version, about = "Divergences, deformed exponential families and q-Gaussian repetitions")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Write a report bundle (outputs plus manifest.json) to this directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides the seed of a simulation config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for simulation replications.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Tolerance for pass/fail checks (each check has its own default).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Standard output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Gauge triples and their scalar functions.
    #[command(subcommand)]
    Gauge(GaugeAction),
    /// Deformed exponential families on a finite sample space.
    #[command(subcommand)]
    Discrete(DiscreteAction),
    /// q-Gaussian families and repetition laws.
    #[command(subcommand)]
    Qgauss(QgaussAction),
    /// Law-of-large-numbers simulations and bounds.
    #[command(subcommand)]
    Lln(LlnAction),
    /// Re-run the command recorded in a manifest and compare file hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .or_else(|_| serde_json::from_value(Value::String(s.replace('-', "_"))))
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GaugeArg {
    /// Gauge descriptor, inline JSON or a file path.
    #[arg(long)]
    pub gauge: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum GaugeAction {
    /// Evaluate one of h, tau, ell, exp, m, gamma, chi, s, s_star, h_star.
    Eval {
        #[command(flatten)]
        #[serde(flatten)]
        g: GaugeArg,
        /// Function to evaluate.
        #[arg(long = "fn", value_parser = serde_enum::<GaugeFn>)]
        func: GaugeFn,
        /// Evaluation points, comma separated.
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// Legendre conjugate h★ at the given points and the involution check.
    Conjugate {
        #[command(flatten)]
        #[serde(flatten)]
        g: GaugeArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Invariance of the kernel and (m, γ) under an equivalence transform.
    EquivCheck {
        #[command(flatten)]
        #[serde(flatten)]
        g: GaugeArg,
        /// `{"a1":..,"a2":..,"a3":..,"lambda":..}`, inline or a file path.
        #[arg(long)]
        transform: String,
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
    /// Check τ' > 0 and h'' > 0 on a sampled grid.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        g: GaugeArg,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpecArg {
    /// Family file (weights, gauge, T, c, theta_box), inline JSON or a path.
    #[arg(long)]
    pub spec: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum DiscreteAction {
    /// Normalization ψ(θ) and the member density p_θ.
    Normalize {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
    },
    /// D_{h,τ}(p_θ, p_θ2).
    Divergence {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        theta2: Vec<f64>,
    },
    /// Metric, connection, derivatives of ψ and 𝕀_τ at θ.
    Geometry {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
    },
    /// Metric against the Hessian of the potential (default tol 1e-6).
    HessianCheck {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
    },
    /// Canonical divergence of the potential against D_{h,τ} (default tol 1e-7).
    CanonicalCheck {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        theta2: Vec<f64>,
    },
    /// Conformal case: canonical divergence against D_{h,τ}/𝕀_τ (default tol 1e-7).
    ConformalCheck {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        theta2: Vec<f64>,
    },
    /// Moment projection of a density onto the family.
    Project {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, required = true, value_delimiter = ',')]
        rho: Vec<f64>,
    },
    /// Entropy of the projection against the source (fails if it drops).
    EntropyMax {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
        #[arg(long, required = true, value_delimiter = ',')]
        rho: Vec<f64>,
    },
    /// Schema, gauge invariants and the rank condition on T.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        s: SpecArg,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QArgs {
    /// Parameter file `{"q","d","v","S","variant"}`; flags override its fields.
    #[arg(long)]
    pub params: Option<String>,
    /// Deformation parameter, q >= 1.
    #[arg(long)]
    pub q: Option<f64>,
    /// Dimension; must match the length of v.
    #[arg(long)]
    pub d: Option<usize>,
    /// Location vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    /// Shape matrix S as a JSON array of rows.
    #[arg(long = "S")]
    pub s: Option<String>,
    /// Parameter slice: full, identity or trace_d.
    #[arg(long, value_parser = serde_enum::<Variant>)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum QgaussAction {
    /// p(x), or the joint density ρ_{q,k}(x) with --k.
    Density {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// Normalizer λ_q(S) of the density.
    Lambda {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
    },
    /// Marginal condition of ρ_{q,k+k'} on a grid (default tol 1e-6).
    MarginalCheck {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        kprime: usize,
        #[arg(long, default_value_t = 9)]
        grid: usize,
    },
    /// Exact draws from ρ_{q,k}.
    Sample {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
    /// Maximum likelihood from k-block observations.
    Mle {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_parser = serde_enum::<MleFamily>, default_value = "full_M_qk")]
        family: MleFamily,
        /// Observations: CSV with a header row, or a JSON array of rows.
        #[arg(long)]
        data: PathBuf,
    },
    /// Moments of the repeated-draw law, including the fourth moments behind the bounds.
    Moments {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
    },
    /// Standing assumptions q >= 1, d(q-1) < 2, S positive definite.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        p: QArgs,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConfigArg {
    /// Simulation config, inline JSON or a path.
    #[arg(long)]
    pub config: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum LlnAction {
    /// Replicated running averages and exceedance counts.
    Run {
        #[command(flatten)]
        #[serde(flatten)]
        c: ConfigArg,
    },
    /// Chebyshev bounds at the given k and ε (defaults from the config).
    Bounds {
        #[command(flatten)]
        #[serde(flatten)]
        c: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Simulate and compare exceedance frequencies with the bounds.
    Verify {
        #[command(flatten)]
        #[serde(flatten)]
        c: ConfigArg,
    },
    /// Partial sums of the fourth-moment bound series.
    Summability {
        #[command(flatten)]
        #[serde(flatten)]
        c: ConfigArg,
        /// Zero-based coordinate of F_i.
        #[arg(long, default_value_t = 0)]
        i: usize,
        /// Defaults to the first entry of eps_grid.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        k_end: usize,
    },
    /// Schema and parameter checks for a simulation config.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        c: ConfigArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

/// Result of one action before it is printed or bundled.
#[derive(Debug, Clone)]
pub struct Output {
    pub command: String,
    /// File stem of the JSON document in a bundle.
    pub stem: String,
    pub json: Value,
    pub tables: Vec<Table>,
    /// Replaces the JSON document on standard output.
    pub text: Option<String>,
    pub status: Status,
    pub config: Value,
    pub seed: Option<u64>,
}

impl Output {
    fn new(command: &str, stem: &str, json: Value, config: Value) -> Self {
        Self {
            command: command.into(),
            stem: stem.into(),
            json,
            tables: Vec::new(),
            text: None,
            status: Status::Pass,
            config,
            seed: None,
        }
    }

    fn table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }

    fn fail_if(mut self, failed: bool) -> Self {
        if failed {
            self.status = Status::Fail;
        }
        self
    }
}

/// Run a parsed command: dispatch, then print or bundle.
///
/// `argv` (without the program name) is recorded in bundle manifests.
pub fn run(cli: &Cli, argv: Vec<String>, stdout: &mut dyn Write) -> Result<Status> {
    if let Verb::Replay { manifest } = &cli.verb {
        return replay(manifest, &cli.common, stdout);
    }
    let out = dispatch(cli)?;
    emit(&out, &cli.common, argv, stdout)?;
    Ok(out.status)
}

pub fn dispatch(cli: &Cli) -> Result<Output> {
    let c = &cli.common;
    match &cli.verb {
        Verb::Gauge(a) => gauge(a, c),
        Verb::Discrete(a) => discrete(a, c),
        Verb::Qgauss(a) => qgauss_action(a, c),
        Verb::Lln(a) => lln_action(a, c),
        Verb::Replay { .. } => Err(CliError::Argument("replay cannot be nested".into())),
    }
}

fn emit(out: &Output, common: &Common, argv: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let w = |e| CliError::io("<stdout>", e);
    if let Some(dir) = &common.out {
        let mut b = Bundle::create(dir)?;
        b.write(&format!("{}.json", out.stem), &io::json_bytes(&out.json))?;
        for t in &out.tables {
            b.write(&format!("{}.csv", t.name), &t.to_csv()?)?;
        }
        b.finish(&out.command, argv, out.seed, out.config.clone())?;
        writeln!(stdout, "{}", dir.join(bundle::MANIFEST).display()).map_err(w)?;
        return Ok(());
    }
    if let Some(text) = &out.text {
        return stdout.write_all(text.as_bytes()).map_err(w);
    }
    match common.format {
        Format::Json => stdout.write_all(&io::json_bytes(&out.json)).map_err(w),
        Format::Csv => {
            let flat;
            let tables: Vec<&Table> = if out.tables.is_empty() {
                flat = Table::flatten(&out.stem, &out.json);
                vec![&flat]
            } else {
                out.tables.iter().collect()
            };
            for (n, t) in tables.iter().enumerate() {
                if n > 0 {
                    stdout.write_all(b"\n").map_err(w)?;
                }
                stdout.write_all(&t.to_csv()?).map_err(w)?;
            }
            Ok(())
        }
    }
}

fn replay(manifest: &std::path::Path, common: &Common, stdout: &mut dyn Write) -> Result<Status> {
    let m = bundle::read_manifest(manifest)?;
    let dir = common
        .out
        .clone()
        .ok_or_else(|| CliError::Argument("replay needs --out for the regenerated bundle".into()))?;
    let mut argv = Vec::with_capacity(m.argv.len() + 2);
    let mut it = m.argv.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            argv.push(a.clone());
        }
    }
    argv.push("--out".into());
    argv.push(dir.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once("dgeo".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Argument(format!("manifest argv does not parse: {e}")))?;
    let out = dispatch(&cli)?;
    emit(&out, &cli.common, argv, &mut std::io::sink())?;
    let mismatched = bundle::verify_bundle(&m, &dir);
    let report = json!({
        "manifest": manifest.display().to_string(),
        "files": m.files.len(),
        "mismatched": mismatched,
        "reproduced": mismatched.is_empty(),
    });
    stdout.write_all(&io::json_bytes(&report)).map_err(|e| CliError::io("<stdout>", e))?;
    Ok(if mismatched.is_empty() { Status::Pass } else { Status::Fail })
}

fn validation(command: &str, config: Value, violations: Vec<String>) -> Output {
    let pass = violations.is_empty();
    let mut text = String::from(if pass { "PASS\n" } else { "FAIL\n" });
    for v in &violations {
        text.push_str(&format!("  - {v}\n"));
    }
    let json = json!({ "pass": pass, "violations": violations });
    let mut out = Output::new(command, "validation", json, config).fail_if(!pass);
    out.text = Some(text);
    out
}

/// Schema errors become violations instead of aborting a validation.
fn load_or_violation<T: DeserializeOwned>(arg: &str) -> std::result::Result<T, String> {
    load_json(arg).map_err(|e| format!("schema: {e}"))
}

fn gauge(a: &GaugeAction, c: &Common) -> Result<Output> {
    let config = to_value(a);
    match a {
        GaugeAction::Eval { g, func, x } => {
            let gt = load_json::<GaugeDescriptor>(&g.gauge)?.build()?;
            let values = x.iter().map(|&x| gt.eval(*func, x)).collect::<dgeo_core::Result<Vec<_>>>()?;
            let json = if values.len() == 1 { Value::from(values[0]) } else { to_value(&values) };
            let rows: Vec<Value> = x.iter().zip(&values).map(|(x, v)| json!({"x": x, "value": v})).collect();
            Ok(Output::new("gauge eval", "eval", json, config).table(Table::from_rows("eval", &rows)))
        }
        GaugeAction::Conjugate { g, x, grid } => {
            let gt = load_json::<GaugeDescriptor>(&g.gauge)?.build()?;
            let values = x.iter().map(|&r| gt.legendre_conjugate(r)).collect::<dgeo_core::Result<Vec<_>>>()?;
            let rows: Vec<Value> = x.iter().zip(&values).map(|(r, v)| json!({"r_star": r, "h_star": v})).collect();
            let inv = gt.involution_check(*grid);
            let inv_rows: Vec<Value> = (0..inv.points.len())
                .map(|i| json!({"r": inv.points[i], "h": inv.h[i], "h_star_star": inv.h_star_star[i]}))
                .collect();
            let failed = !(inv.max_rel_defect <= c.tol.unwrap_or(1e-8));
            let json = json!({ "h_star": rows, "involution": inv });
            Ok(Output::new("gauge conjugate", "conjugate", json, config)
                .table(Table::from_rows("h_star", &rows))
                .table(Table::from_rows("involution", &inv_rows))
                .fail_if(failed))
        }
        GaugeAction::EquivCheck { g, transform, grid } => {
            let gt = load_json::<GaugeDescriptor>(&g.gauge)?.build()?;
            let tr: EquivalenceTransform = load_json(transform)?;
            let report = gt.equivalence_check(&tr, *grid)?;
            let tol = c.tol.unwrap_or(1e-8);
            let failed = !(report.max_kernel_defect <= tol && report.max_fingerprint_defect <= tol);
            Ok(Output::new("gauge equiv-check", "equivalence", to_value(&report), config).fail_if(failed))
        }
        GaugeAction::Validate { g } => {
            let violations = match load_or_violation::<GaugeDescriptor>(&g.gauge) {
                Ok(d) => d.build().and_then(|t| t.validate()).err().map(|e| e.to_string()).into_iter().collect(),
                Err(e) => vec![e],
            };
            Ok(validation("gauge validate", config, violations))
        }
    }
}

fn family(s: &SpecArg) -> Result<(FamilyFile, DiscreteFamilySpec)> {
    let file: FamilyFile = load_json(&s.spec)?;
    let spec = file.build()?;
    Ok((file, spec))
}

fn theta_or_origin(theta: &[f64], spec: &DiscreteFamilySpec) -> Vec<f64> {
    if theta.is_empty() {
        vec![0.0; spec.dim()]
    } else {
        theta.to_vec()
    }
}

fn discrete(a: &DiscreteAction, c: &Common) -> Result<Output> {
    let args = to_value(a);
    let with_spec = |file: &FamilyFile| json!({ "args": args, "spec": file });
    match a {
        DiscreteAction::Normalize { s, theta } => {
            let (file, spec) = family(s)?;
            let m = spec.normalize(&theta_or_origin(theta, &spec))?;
            Ok(Output::new("discrete normalize", "member", to_value(&m), with_spec(&file)))
        }
        DiscreteAction::Divergence { s, theta, theta2 } => {
            let (file, spec) = family(s)?;
            let theta = theta_or_origin(theta, &spec);
            let (p, p2) = (spec.normalize(&theta)?, spec.normalize(theta2)?);
            let d = spec.divergence(&p.p, &p2.p)?;
            let json = json!({ "theta": theta, "theta2": theta2, "divergence": d });
            Ok(Output::new("discrete divergence", "divergence", json, with_spec(&file)))
        }
        DiscreteAction::Geometry { s, theta } => {
            let (file, spec) = family(s)?;
            let g = spec.geometry(&theta_or_origin(theta, &spec))?;
            Ok(Output::new("discrete geometry", "geometry", to_value(&g), with_spec(&file)))
        }
        DiscreteAction::HessianCheck { s, theta } => {
            let (file, spec) = family(s)?;
            let r = spec.hessian_check(&theta_or_origin(theta, &spec))?;
            let failed = !(r.max_defect <= c.tol.unwrap_or(1e-6));
            Ok(Output::new("discrete hessian-check", "hessian_check", to_value(&r), with_spec(&file)).fail_if(failed))
        }
        DiscreteAction::CanonicalCheck { s, theta, theta2 } => {
            let (file, spec) = family(s)?;
            let r = spec.canonical_divergence_check(&theta_or_origin(theta, &spec), theta2)?;
            let failed = !(r.defect <= c.tol.unwrap_or(1e-7));
            Ok(Output::new("discrete canonical-check", "canonical_check", to_value(&r), with_spec(&file)).fail_if(failed))
        }
        DiscreteAction::ConformalCheck { s, theta, theta2 } => {
            let (file, spec) = family(s)?;
            let r = spec.conformal_check(&theta_or_origin(theta, &spec), theta2)?;
            let failed = !(r.defect <= c.tol.unwrap_or(1e-7));
            Ok(Output::new("discrete conformal-check", "conformal_check", to_value(&r), with_spec(&file)).fail_if(failed))
        }
        DiscreteAction::Project { s, rho } => {
            let (file, spec) = family(s)?;
            let p = spec.project(rho)?;
            Ok(Output::new("discrete project", "projection", to_value(&p), with_spec(&file)))
        }
        DiscreteAction::EntropyMax { s, rho } => {
            let (file, spec) = family(s)?;
            let r = spec.entropy_max_check(rho)?;
            let failed = !r.holds;
            Ok(Output::new("discrete entropy-max", "entropy_max", to_value(&r), with_spec(&file)).fail_if(failed))
        }
        DiscreteAction::Validate { s } => {
            let violations = match load_or_violation::<FamilyFile>(&s.spec) {
                Ok(f) => f.diagnostics(),
                Err(e) => vec![e],
            };
            Ok(validation("discrete validate", args, violations))
        }
    }
}

fn params_repr(a: &QArgs) -> Result<ParamsRepr> {
    let mut r: ParamsRepr = match &a.params {
        Some(p) => load_json(p)?,
        None => {
            let q = a.q.ok_or_else(|| CliError::Argument("--q or --params is required".into()))?;
            let d = a.d.or(a.v.as_ref().map(Vec::len)).unwrap_or(1);
            ParamsRepr { q, d: Some(d), v: vec![0.0; d], s: None, variant: Variant::default() }
        }
    };
    if let Some(q) = a.q {
        r.q = q;
    }
    if let Some(v) = &a.v {
        r.v = v.clone();
    }
    if let Some(d) = a.d {
        r.d = Some(d);
    }
    if let Some(s) = &a.s {
        r.s = Some(load_json(s)?);
    }
    if let Some(v) = a.variant {
        r.variant = v;
    }
    Ok(r)
}

fn params(a: &QArgs) -> Result<QGaussianParams> {
    Ok(QGaussianParams::try_from(params_repr(a)?)?)
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(CliError::Argument(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

fn qgauss_action(a: &QgaussAction, c: &Common) -> Result<Output> {
    let args = to_value(a);
    let with_params = |p: &QGaussianParams| json!({ "args": args, "params": p });
    match a {
        QgaussAction::Density { p, k, x } => {
            let p = params(p)?;
            let density = match k {
                None => {
                    expect_len("x", x.len(), p.d())?;
                    p.density(x)
                }
                Some(k) => {
                    let law = p.repetition(*k)?;
                    expect_len("x", x.len(), law.dim())?;
                    law.joint_density(x)
                }
            };
            let json = json!({ "x": x, "k": k, "density": density });
            Ok(Output::new("qgauss density", "density", json, with_params(&p)))
        }
        QgaussAction::Lambda { p } => {
            let p = params(p)?;
            let json = json!({ "q": p.q(), "d": p.d(), "lambda": p.lambda() });
            Ok(Output::new("qgauss lambda", "lambda", json, with_params(&p)))
        }
        QgaussAction::MarginalCheck { p, k, kprime, grid } => {
            let p = params(p)?;
            let r = qgauss::marginal_report(&p, *k, *kprime, *grid, QuadOptions::tol(1e-12, 1e-10))?;
            let failed = !(r.max_defect <= c.tol.unwrap_or(1e-6));
            let rows: Vec<Value> = r.points.iter().map(|pt| json!({"x": pt.x, "defect": pt.defect})).collect();
            Ok(Output::new("qgauss marginal-check", "marginal_check", to_value(&r), with_params(&p))
                .table(Table::from_rows("marginal_check", &rows))
                .fail_if(failed))
        }
        QgaussAction::Sample { p, k, n } => {
            let p = params(p)?;
            let seed = c.seed.unwrap_or(0);
            let samples = p.repetition(*k)?.sample_joint(*n, seed)?;
            let table = io::sample_table("samples", *k, p.d(), &samples);
            let json = json!({ "q": p.q(), "d": p.d(), "k": k, "n": n, "seed": seed, "samples": samples });
            let mut out = Output::new("qgauss sample", "samples", json, with_params(&p)).table(table);
            out.seed = Some(seed);
            Ok(out)
        }
        QgaussAction::Mle { p, k, family, data } => {
            let r = params_repr(p)?;
            let d = r.d.unwrap_or(r.v.len());
            let rows = io::read_observations(data)?;
            for (i, row) in rows.iter().enumerate() {
                expect_len(&format!("observation {}", i + 1), row.len(), k * d)?;
            }
            let result = qgauss::mle(r.q, d, *k, &rows, *family)?;
            Ok(Output::new("qgauss mle", "mle", to_value(&result), json!({ "args": args, "observations": rows.len() })))
        }
        QgaussAction::Moments { p } => {
            let p = params(p)?;
            let m = qgauss::moments(&p)?;
            Ok(Output::new("qgauss moments", "moments", to_value(&m), with_params(&p)))
        }
        QgaussAction::Validate { p } => {
            let violations = match p.params.as_deref().map(load_or_violation::<ParamsRepr>) {
                Some(Err(e)) => vec![e],
                _ => params_repr(p)?.diagnostics(),
            };
            Ok(validation("qgauss validate", args, violations))
        }
    }
}

fn sim_config(c: &ConfigArg, common: &Common) -> Result<SimConfig> {
    let mut cfg: SimConfig = load_json(&c.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn sim_output(command: &str, stem: &str, json: Value, cfg: &SimConfig) -> Output {
    let mut out = Output::new(command, stem, json, to_value(cfg));
    out.seed = Some(cfg.seed);
    out
}

fn lln_action(a: &LlnAction, c: &Common) -> Result<Output> {
    match a {
        LlnAction::Run { c: cfg } => {
            let cfg = sim_config(cfg, c)?;
            let report = run_lln_parallel(&cfg, c.workers)?;
            let medians: Vec<Value> = report
                .stats
                .iter()
                .flat_map(|s| {
                    lln::median_deviations(&report, &s.label).into_iter().map(move |m| {
                        json!({ "stat": s.label, "k": m.k, "median_abs_deviation": m.median_abs_deviation })
                    })
                })
                .collect();
            let json = json!({ "report": report, "medians": medians });
            Ok(sim_output("lln run", "report", json, &cfg)
                .table(Table::from_rows("averages", &report.averages))
                .table(Table::from_rows("exceedance", &report.exceedance))
                .table(Table::from_rows("medians", &medians)))
        }
        LlnAction::Bounds { c: cfg, k, eps } => {
            let cfg = sim_config(cfg, c)?;
            let ks = if k.is_empty() { cfg.schedule() } else { k.clone() };
            let eps = if eps.is_empty() { cfg.eps_grid.clone() } else { eps.clone() };
            let mut rows = Vec::new();
            for &k in &ks {
                for &e in &eps {
                    rows.extend(lln::chebyshev_bounds(&cfg, k, e)?);
                }
            }
            Ok(sim_output("lln bounds", "bounds", to_value(&rows), &cfg).table(Table::from_rows("bounds", &rows)))
        }
        LlnAction::Verify { c: cfg } => {
            let cfg = sim_config(cfg, c)?;
            let report = run_lln_parallel(&cfg, c.workers)?;
            let table = lln::verify_bounds(&report);
            if !table.reps_sufficient {
                log::warn!("fewer than 100 replications; Wilson intervals are wide");
            }
            let failed = !table.all_pass;
            Ok(sim_output("lln verify", "verify", to_value(&table), &cfg)
                .table(Table::from_rows("verify", &table.rows))
                .fail_if(failed))
        }
        LlnAction::Summability { c: cfg, i, eps, k_end } => {
            let cfg = sim_config(cfg, c)?;
            let eps = match eps.or(cfg.eps_grid.first().copied()) {
                Some(e) => e,
                None => return Err(CliError::Argument("--eps is required when eps_grid is empty".into())),
            };
            let t = lln::borel_cantelli_summability(&cfg, *i, eps, *k_end)?;
            Ok(sim_output("lln summability", "summability", to_value(&t), &cfg).table(Table::from_rows("summability", &t.rows)))
        }
        LlnAction::Validate { c: cfg } => {
            let violations = match load_or_violation::<SimConfig>(&cfg.config) {
                Ok(cfg) => cfg.validate().err().map(|e| e.to_string()).into_iter().collect(),
                Err(e) => vec![e],
            };
            Ok(validation("lln validate", to_value(a), violations))
        }
    }
}
