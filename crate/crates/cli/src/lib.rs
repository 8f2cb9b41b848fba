//! Command-line front end for the `qte` binary.
//!
//! Every command writes line-oriented JSON records (see [`manifest`]). Exit
//! codes: 0 on success, 2 for invalid input, 3 for numerical failures.

pub mod error;
pub mod ingest;
pub mod manifest;
pub mod options;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use qte_core::util::stream_seed;
use qte_core::{
    bootstrap, cic, did, estimate, generate, pointwise_ci, run_mc, run_test_mc, uniform_test,
    BootstrapDraws, DgpKind, DgpSpec, EstimationConfig, EstimatorKind, NullKind, QtePath,
    QuadScheme,
};
use serde_json::json;

pub use error::{CliError, Result, EXIT_NUMERICAL, EXIT_VALIDATION};
use ingest::{ingest_csv, Ingested, Schema};
use manifest::{find_record, read_records, InputDigest, Report, RunManifest};
use options::{parse_list, parse_tau_grid};

#[derive(Debug, Parser)]
#[command(name = "qte", version, about = "Panel quantile treatment effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the coefficient path on a quantile grid.
    Estimate(EstimateArgs),
    /// Estimate, then resample units for percentile intervals.
    Bootstrap(BootstrapArgs),
    /// Functional test on a bootstrap bundle or a fresh bootstrap.
    Test(TestArgs),
    /// Monte Carlo study on a simulated design.
    Simulate(SimulateArgs),
    /// Changes-in-changes and difference-in-differences baselines.
    Cic(CicArgs),
    /// Check a panel without estimating.
    Validate(ValidateArgs),
    /// Write a simulated panel as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "QTE_THREADS")]
    pub threads: Option<usize>,
    /// Result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Long-format CSV with columns unit, time, y, x:*, z:*.
    #[arg(long)]
    pub data: PathBuf,
    /// Prepend an intercept to the z columns.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub intercept: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimationArgs {
    /// Quantile grid: `start:stop:step` or a comma list.
    #[arg(long, default_value = "0.25,0.5,0.75")]
    pub tau: String,
    /// Lower search bound for every treatment coefficient.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub a_min: f64,
    /// Upper search bound for every treatment coefficient.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub a_max: f64,
    #[arg(long, default_value_t = EstimationConfig::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    #[arg(long, default_value_t = EstimationConfig::DEFAULT_REFINE_TOL)]
    pub refine_tol: f64,
    /// auto, tensor-gauss or halton.
    #[arg(long, default_value = "auto")]
    pub quad_scheme: String,
    #[arg(long, default_value_t = EstimationConfig::DEFAULT_QUAD_NODES)]
    pub quad_nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EstimationArgs {
    pub fn config(&self, dx: usize) -> Result<EstimationConfig> {
        let mut c = EstimationConfig::new(
            parse_tau_grid(&self.tau)?,
            vec![(self.a_min, self.a_max); dx],
        );
        c.grid_points = self.grid_points;
        c.refine_tol = self.refine_tol;
        c.quad_scheme = self.quad_scheme.parse::<QuadScheme>()?;
        c.quad_nodes = self.quad_nodes;
        c.seed = self.seed;
        c.validate(dx)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = qte_core::inference::DEFAULT_REPLICATES)]
    pub reps: usize,
    /// Interval levels, comma separated.
    #[arg(long, default_value = "0.9,0.95")]
    pub levels: String,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output of `bootstrap`; otherwise `--data` is bootstrapped afresh.
    #[arg(long, conflicts_with = "data")]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub intercept: bool,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long, default_value_t = qte_core::inference::DEFAULT_REPLICATES)]
    pub reps: usize,
    /// constant, zero or known.
    #[arg(long, default_value = "constant")]
    pub null: String,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Known path for `--null known`: one value per grid point, or one value
    /// for all of them.
    #[arg(long)]
    pub r_known: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// sim1, sim2 or noiseless.
    #[arg(long, default_value = "sim1")]
    pub dgp: String,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Squared rank correlation across periods.
    #[arg(long, default_value_t = 0.9, conflicts_with = "rho")]
    pub rho2: f64,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Override the treatment effect `intercept + slope * Phi^{-1}(u)`.
    #[arg(long, allow_negative_numbers = true, requires = "effect_slope")]
    pub effect_intercept: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "effect_intercept")]
    pub effect_slope: Option<f64>,
}

impl DesignArgs {
    pub fn spec(&self, seed: u64) -> Result<DgpSpec> {
        let kind = self.dgp.parse::<DgpKind>()?;
        let mut spec = match self.rho {
            Some(rho) => DgpSpec::new(kind, self.n, rho, seed),
            None => DgpSpec::with_rho_sq(kind, self.n, self.rho2, seed),
        };
        if let (Some(a), Some(b)) = (self.effect_intercept, self.effect_slope) {
            spec = spec.with_effect(a, b);
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Bootstrap replicates per replication for interval coverage.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Comma list of two-step and cic.
    #[arg(long, default_value = "two-step")]
    pub estimators: String,
    /// Run the functional test instead and report its rejection rate.
    #[arg(long)]
    pub null: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct CicArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub tau: String,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub input: DataArgs,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load(input: &DataArgs) -> Result<Ingested> {
    load_path(&input.data, input.intercept)
}

fn load_path(path: &Path, intercept: bool) -> Result<Ingested> {
    let schema = Schema {
        intercept,
        ..Schema::default()
    };
    ingest_csv(path, &schema)
}

fn digest(path: &Path, ing: &Ingested) -> InputDigest {
    InputDigest {
        path: path.display().to_string(),
        sha256: ing.sha256.clone(),
        bytes: ing.bytes,
    }
}

fn set_threads(common: &Common) -> Result<()> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    Ok(())
}

fn push_path(report: &mut Report, path: &QtePath) {
    for (k, &tau) in path.tau_grid.iter().enumerate() {
        let trace = &path.diagnostics[k];
        report.push(
            "estimate",
            &json!({
                "tau": tau,
                "alpha": path.alpha[k],
                "beta": path.beta[k],
                "objective": path.objective_at_min[k],
                "lattice_best": trace.lattice_best,
                "failed_candidates": trace.failures,
            }),
        );
    }
}

/// Bootstrap draws as stored in a bundle. Search traces are dropped since
/// failed candidates carry NaN, which JSON cannot hold.
fn storable(mut draws: BootstrapDraws) -> BootstrapDraws {
    draws.base.diagnostics.clear();
    draws
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    set_threads(&a.common)?;
    let ing = load(&a.input)?;
    let config = a.est.config(ing.data.dx())?;
    let mut m = RunManifest::new(
        "estimate",
        Some(config.seed),
        json!({ "estimation": config }),
    );
    m.inputs.push(digest(&a.input.data, &ing));
    let mut r = Report::new(&m);
    let path = estimate(&ing.data, &config)?;
    push_path(&mut r, &path);
    r.finish(a.common.out.as_deref())
}

fn cmd_bootstrap(a: &BootstrapArgs) -> Result<()> {
    set_threads(&a.common)?;
    let ing = load(&a.input)?;
    let config = a.est.config(ing.data.dx())?;
    let levels = parse_list(&a.levels)?;
    let mut m = RunManifest::new(
        "bootstrap",
        Some(config.seed),
        json!({ "estimation": config, "reps": a.reps, "levels": levels }),
    );
    m.inputs.push(digest(&a.input.data, &ing));
    let mut r = Report::new(&m);
    let draws = bootstrap(&ing.data, &config, a.reps)?;
    push_path(&mut r, &draws.base);
    for &tau in &config.tau_grid {
        for &level in &levels {
            let ci = pointwise_ci(&draws, tau, level)?;
            r.push(
                "interval",
                &json!({
                    "tau": tau,
                    "level": level,
                    "lower": ci.iter().map(|c| c.0).collect::<Vec<_>>(),
                    "upper": ci.iter().map(|c| c.1).collect::<Vec<_>>(),
                }),
            );
        }
    }
    r.push("draws", &storable(draws));
    r.finish(a.common.out.as_deref())
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    set_threads(&a.common)?;
    let null_kind = a.null.parse::<NullKind>()?;
    let (draws, m) = match (&a.bundle, &a.data) {
        (Some(bundle), _) => {
            let bytes =
                std::fs::read(bundle).map_err(|e| CliError::io(bundle.display().to_string(), e))?;
            let records = read_records(bundle)?;
            let draws: BootstrapDraws = find_record(&records, "draws")?;
            let mut m = RunManifest::new(
                "test",
                None,
                json!({ "null": null_kind, "level": a.level, "r_known": a.r_known }),
            );
            m.inputs.push(InputDigest {
                path: bundle.display().to_string(),
                sha256: ingest::sha256_hex(&bytes),
                bytes: bytes.len(),
            });
            (draws, m)
        }
        (None, Some(data)) => {
            let ing = load_path(data, a.intercept)?;
            let config = a.est.config(ing.data.dx())?;
            let mut m = RunManifest::new(
                "test",
                Some(config.seed),
                json!({
                    "estimation": config,
                    "reps": a.reps,
                    "null": null_kind,
                    "level": a.level,
                    "r_known": a.r_known,
                }),
            );
            m.inputs.push(digest(data, &ing));
            (bootstrap(&ing.data, &config, a.reps)?, m)
        }
        (None, None) => return Err(CliError::Usage("give --bundle or --data".into())),
    };
    let grid = &draws.base.tau_grid;
    let known = match &a.r_known {
        Some(s) => {
            let v = parse_list(s)?;
            let per_tau = match v.len() {
                1 => vec![v[0]; grid.len()],
                l if l == grid.len() => v,
                l => {
                    return Err(CliError::Usage(format!(
                        "--r-known has {l} values for {} grid points",
                        grid.len()
                    )))
                }
            };
            let dx = draws.base.alpha[0].len();
            Some(per_tau.into_iter().map(|r| vec![r; dx]).collect::<Vec<_>>())
        }
        None => None,
    };
    let result = uniform_test(&draws, null_kind, a.level, known.as_deref())?;
    let mut r = Report::new(&m);
    r.push("test", &result);
    r.finish(a.common.out.as_deref())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    set_threads(&a.common)?;
    let spec = a.design.spec(a.est.seed)?;
    let mut config = a.est.config(1)?;
    // estimation streams must not coincide with the data streams
    config.seed = stream_seed(a.est.seed, u64::MAX);
    if let Some(null) = &a.null {
        let null_kind = null.parse::<NullKind>()?;
        let b = a
            .bootstrap
            .unwrap_or(qte_core::inference::DEFAULT_REPLICATES);
        let m = RunManifest::new(
            "simulate",
            Some(a.est.seed),
            json!({
                "dgp": spec,
                "estimation": config,
                "reps": a.reps,
                "bootstrap": b,
                "null": null_kind,
                "level": a.level,
            }),
        );
        let mut r = Report::new(&m);
        let size = run_test_mc(&spec, a.reps, &config, b, null_kind, a.level)?;
        r.push("size", &size);
        return r.finish(a.common.out.as_deref());
    }
    let kinds: Vec<EstimatorKind> = a
        .estimators
        .split(',')
        .map(|s| match s.trim() {
            "two-step" | "twostep" => Ok(EstimatorKind::TwoStep),
            "cic" => Ok(EstimatorKind::Cic),
            other => Err(CliError::Usage(format!("unknown estimator `{other}`"))),
        })
        .collect::<Result<_>>()?;
    let m = RunManifest::new(
        "simulate",
        Some(a.est.seed),
        json!({
            "dgp": spec,
            "estimation": config,
            "reps": a.reps,
            "bootstrap": a.bootstrap,
            "estimators": kinds,
        }),
    );
    let mut r = Report::new(&m);
    let report = run_mc(&spec, &kinds, a.reps, &config, a.bootstrap)?;
    for row in &report.rows {
        r.push("mc_row", row);
    }
    r.push(
        "mc_summary",
        &json!({ "replications": report.replications, "failures": report.failures }),
    );
    r.finish(a.common.out.as_deref())
}

fn cmd_cic(a: &CicArgs) -> Result<()> {
    set_threads(&a.common)?;
    let ing = load(&a.input)?;
    let grid = parse_tau_grid(&a.tau)?;
    let mut m = RunManifest::new("cic", None, json!({ "tau_grid": grid }));
    m.inputs.push(digest(&a.input.data, &ing));
    let mut r = Report::new(&m);
    let est = cic(&ing.data, &grid)?;
    let d = did(&ing.data)?;
    for (k, &tau) in est.tau_grid.iter().enumerate() {
        r.push(
            "cic",
            &json!({ "tau": tau, "qte": est.qte[k], "qtt": est.qtt[k] }),
        );
    }
    r.push(
        "did",
        &json!({ "did": d, "control": est.groups.0, "treated": est.groups.1 }),
    );
    r.finish(a.common.out.as_deref())
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let ing = load(&a.input)?;
    let report = qte_core::validate(&ing.data);
    let mut m = RunManifest::new("validate", None, json!({ "intercept": a.input.intercept }));
    m.inputs.push(digest(&a.input.data, &ing));
    let mut r = Report::new(&m);
    r.push(
        "validation",
        &json!({
            "ok": report.is_ok(),
            "problems": report.problems(),
            "details": report,
        }),
    );
    let ok = report.is_ok();
    r.finish(a.common.out.as_deref())?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(report.problems().join("; ")))
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = a.design.spec(a.seed)?;
    let sim = generate(&spec)?;
    let schema = Schema::default();
    match &a.out {
        Some(p) => {
            let f =
                std::fs::File::create(p).map_err(|e| CliError::io(p.display().to_string(), e))?;
            ingest::write_csv(&sim.data, &schema, std::io::BufWriter::new(f))
        }
        None => ingest::write_csv(&sim.data, &schema, std::io::stdout().lock()),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Cic(a) => cmd_cic(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Generate(a) => cmd_generate(a),
    }
}
