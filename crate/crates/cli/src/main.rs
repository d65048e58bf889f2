//! `pcml`: leakage analysis from the command line.

mod data;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pcml::accountant::{calibrate_gamma, LedgerRecord, Policy};
use pcml::channel::{map_adversary_gain, maximal_leakage, pcml as channel_pcml, shattering_adversary, ConditionalChannel};
use pcml::laplace::{total_bound, AnalyticLeakage};
use pcml::majorization::compare;
use pcml::pate::{simulate, SimulationConfig};
use pcml::rnm::{entrywise_leakage, DEFAULT_TOL};
use pcml::verify::{run_suite, Suite, SuiteOptions};
use pcml::{NoiseModel, NoiseSpec, VoteHistogram};

use data::{grid_to_counts, parse_count, parse_grid, parse_list, read_dataset, read_json, read_numeric_csv, resolve, Manifest, Queries};
use output::{to_rounded_value, CliError, CliResult, Sink};

#[derive(Parser)]
#[command(name = "pcml", version, about = "Entrywise leakage of noisy-argmax aggregation and finite channels")]
struct Cli {
    /// Write output here instead of stdout. Relative paths are resolved in
    /// $PCML_OUTPUT_DIR when it is set.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Entrywise leakage of one known-votes histogram.
    Leak(LeakArgs),
    /// Closed-form worst case over histograms for Laplace noise.
    Bound(BoundArgs),
    /// Closed form and quadrature over a grid, as CSV.
    Sweep(SweepArgs),
    /// Majorization verdict for two vectors.
    Majorize(MajorizeArgs),
    /// Leakage of a finite channel read from JSON.
    Channel(ChannelArgs),
    /// Run a named invariant suite.
    Verify(VerifyArgs),
    /// Simulated teacher-ensemble run with per-query accounting.
    Simulate(SimulateArgs),
    /// Laplace noise level that gives a target leakage.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Clone)]
struct NoiseArgs {
    /// Laplace noise with rate gamma (scale 1/gamma).
    #[arg(long, conflicts_with = "sigma", allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Gaussian noise with standard deviation sigma.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
}

impl NoiseArgs {
    fn spec(&self) -> Option<NoiseSpec> {
        match (self.gamma, self.sigma) {
            (Some(gamma), _) => Some(NoiseSpec::Laplace { gamma }),
            (None, Some(sigma)) => Some(NoiseSpec::Gaussian { sigma }),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct LeakArgs {
    /// Known votes, e.g. 4,3,2,1.
    #[arg(long, allow_hyphen_values = true)]
    v: Option<String>,
    /// JSON input: {"v_minus": [...], "noise": {...}, "tol": ...}.
    #[arg(long, conflicts_with = "v")]
    input: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    tol: Option<f64>,
    /// Also report the value in bits.
    #[arg(long)]
    bits: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakInput {
    v_minus: Vec<f64>,
    noise: NoiseSpec,
    #[serde(default)]
    tol: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    m: u64,
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    /// Number of queries for the total bound.
    #[arg(long, default_value_t = 1)]
    k: u64,
    #[arg(long)]
    bits: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepMode {
    Uniform,
    Histogram,
}

#[derive(Args)]
struct SweepArgs {
    /// Class counts: a list (2,4,8), a range (2:20 or 2:20:2) or a geometric
    /// range (2:1024:*2). Uniform mode only.
    #[arg(long, default_value = "2:20")]
    m: String,
    /// Laplace rates, in the same grid syntax.
    #[arg(long, default_value = "0.1")]
    gamma: String,
    #[arg(long, value_enum, default_value = "uniform")]
    mode: SweepMode,
    /// JSON array of known-votes histograms. Histogram mode only.
    #[arg(long, required_if_eq("mode", "histogram"))]
    histograms: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct MajorizeArgs {
    /// First vector as a JSON array.
    p: String,
    /// Second vector as a JSON array.
    q: String,
}

#[derive(Args)]
struct ChannelArgs {
    /// Channel JSON file.
    file: PathBuf,
    #[arg(long)]
    bits: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Args)]
struct VerifyArgs {
    /// schur, lemmas, shattering, mc, h, bound or closed.
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Random instances for the channel suites.
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    n: u64,
    /// Monte Carlo samples per estimate.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    samples: u64,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 6)]
    total: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Run manifest JSON.
    manifest: PathBuf,
    /// Overrides the manifest budget.
    #[arg(long)]
    budget_nats: Option<f64>,
    /// account_only or refuse_over_budget; overrides the manifest.
    #[arg(long)]
    policy: Option<Policy>,
    /// Also write the ledger as JSON lines {id, nats, cum, refused}.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    v: String,
    /// Target leakage in nats.
    #[arg(long, allow_negative_numbers = true)]
    target: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn histogram(s: &str) -> CliResult<VoteHistogram> {
    Ok(VoteHistogram::new(parse_list(s)?)?)
}

fn with_bits(mut v: Value, field: &str, bits: bool) -> Value {
    if bits {
        if let Some(n) = v.get(field).and_then(Value::as_f64) {
            v[format!("{}_bits", field.trim_end_matches("_nats"))] = json!(to_bits(n));
        }
    }
    v
}

fn cmd_leak(a: &LeakArgs, out: &mut Sink) -> CliResult<()> {
    let (v, spec, tol) = match &a.input {
        Some(path) => {
            let input: LeakInput = read_json(path)?;
            if a.noise.spec().is_some() {
                return Err(CliError::Input("give the noise either in the input file or as flags".into()));
            }
            (VoteHistogram::new(input.v_minus)?, input.noise, input.tol)
        }
        None => {
            let v = a.v.as_deref().ok_or_else(|| CliError::Input("--v or --input is required".into()))?;
            let spec = a.noise.spec().ok_or_else(|| CliError::Input("--gamma or --sigma is required".into()))?;
            (histogram(v)?, spec, None)
        }
    };
    let tol = a.tol.or(tol).unwrap_or(DEFAULT_TOL);
    let report = entrywise_leakage(&v, &spec.to_model()?, tol)?;
    out.json(&with_bits(to_rounded_value(&report)?, "value_nats", a.bits))
}

fn cmd_bound(a: &BoundArgs, out: &mut Sink) -> CliResult<()> {
    let r = AnalyticLeakage::compute(a.m, a.gamma)?;
    let v = json!({
        "m": r.m,
        "gamma": r.gamma,
        "H_m": r.h_values[r.m as usize],
        "win_prob_uniform": r.win_prob_uniform,
        "leakage_nats": r.leakage_nats,
        "k_of_m": r.k_of_m,
        "gamma_bound": r.gamma,
        "queries": a.k,
        "total_bound_nats": total_bound(a.k, a.gamma)?,
    });
    out.json(&with_bits(v, "leakage_nats", a.bits))
}

fn cmd_sweep(a: &SweepArgs, out: &mut Sink) -> CliResult<()> {
    let gammas = parse_grid(&a.gamma)?;
    let mut w = csv::Writer::from_writer(out.writer());
    let csv_err = |e: csv::Error| CliError::Input(format!("writing CSV: {e}"));
    match a.mode {
        SweepMode::Uniform => {
            let ms = grid_to_counts(&parse_grid(&a.m)?)?;
            w.write_record([
                "m",
                "gamma",
                "H_m",
                "win_prob_uniform",
                "leakage_nats",
                "gamma_bound",
                "quadrature_nats",
                "closed_minus_quadrature",
            ])
            .map_err(csv_err)?;
            for &g in &gammas {
                let noise = NoiseModel::laplace(g)?;
                for &m in &ms {
                    let r = AnalyticLeakage::compute(m, g)?;
                    let quad = entrywise_leakage(&VoteHistogram::new(vec![0.0; m as usize])?, &noise, a.tol)?.value_nats;
                    w.write_record(&[
                        m.to_string(),
                        num(g),
                        num(r.h_values[m as usize]),
                        num(r.win_prob_uniform),
                        num(r.leakage_nats),
                        num(g),
                        num(quad),
                        num(r.leakage_nats - quad),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        SweepMode::Histogram => {
            let path = a.histograms.as_deref().expect("required by clap");
            let hists: Vec<Vec<f64>> = read_json(path)?;
            if hists.is_empty() {
                return Err(CliError::Input("histogram file is empty".into()));
            }
            w.write_record(["histogram", "m", "gamma", "leakage_nats", "error_estimate", "vmax_leakage_nats", "gamma_bound"])
                .map_err(csv_err)?;
            for &g in &gammas {
                let noise = NoiseModel::laplace(g)?;
                for h in &hists {
                    let v = VoteHistogram::new(h.clone())?;
                    let r = entrywise_leakage(&v, &noise, a.tol)?;
                    let vmax = AnalyticLeakage::compute(v.classes() as u64, g)?.leakage_nats;
                    let label = h.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
                    w.write_record(&[
                        label,
                        v.classes().to_string(),
                        num(g),
                        num(r.value_nats),
                        num(r.error_estimate),
                        num(vmax),
                        num(g),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::Input(format!("writing CSV: {e}")))
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn json_vector(s: &str) -> CliResult<Vec<f64>> {
    serde_json::from_str(s).map_err(|e| CliError::Input(format!("expected a JSON array of numbers: {e}")))
}

fn cmd_majorize(a: &MajorizeArgs, out: &mut Sink) -> CliResult<()> {
    let verdict = compare(&json_vector(&a.p)?, &json_vector(&a.q)?)?;
    out.json(&verdict)
}

fn cmd_channel(a: &ChannelArgs, out: &mut Sink) -> CliResult<()> {
    let c: ConditionalChannel = read_json(&a.file)?;
    let (prior, u) = shattering_adversary(&c)?;
    let v = json!({
        "pcml_nats": channel_pcml(&c),
        "maximal_leakage_nats": maximal_leakage(&c),
        "column_max_sum": c.column_max_sum(),
        "reachable_outputs": c.reachable_outputs(),
        "shattering_gain": map_adversary_gain(&c, &prior, &u)?,
    });
    out.json(&with_bits(v, "pcml_nats", a.bits))
}

fn cmd_verify(a: &VerifyArgs, out: &mut Sink) -> CliResult<()> {
    let suite: Suite = a.suite.parse()?;
    let opts = SuiteOptions {
        seed: a.seed,
        n: usize::try_from(a.n).map_err(|_| CliError::Input("--n too large".into()))?,
        samples: a.samples,
        m: a.m,
        total: a.total,
    };
    let report = run_suite(suite, &opts)?;
    match a.format {
        ReportFormat::Json => out.json(&json!({
            "suite": report.suite,
            "passed": report.passed(),
            "checks": report.checks,
        }))?,
        ReportFormat::Text => {
            for c in &report.checks {
                let mark = if c.passed { "pass" } else { "FAIL" };
                out.line(&format!("{mark}  {}: {}", c.name, c.detail))?;
            }
            let status = if report.passed() { "pass" } else { "FAIL" };
            out.line(&format!("{status}  suite {}", suite.name()))?;
        }
    }
    if report.passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Verification(format!("{failed} check(s) failed in suite {}", suite.name())))
    }
}

/// One line of the simulation trace. Queries and labels are numbered from 1,
/// as rows and labels are in the input files.
#[derive(Serialize)]
struct TraceLine {
    query: usize,
    label: Option<usize>,
    nats: f64,
    cum: f64,
    refused: bool,
    votes: Vec<f64>,
    v_minus: Vec<f64>,
}

fn cmd_simulate(a: &SimulateArgs, out: &mut Sink) -> CliResult<()> {
    let (m, base) = Manifest::load(&a.manifest)?;
    let dataset = read_dataset(&resolve(&base, &m.dataset), m.classes)?;
    let queries = match &m.queries {
        Queries::File(p) => read_numeric_csv(&resolve(&base, p))?,
        Queries::Inline(q) => q.clone(),
    };
    let target = match m.target {
        Some(0) => return Err(CliError::Input("target rows are numbered from 1".into())),
        Some(t) => Some(t - 1),
        None => None,
    };
    let config = SimulationConfig {
        teachers: m.teachers,
        gamma: m.gamma,
        budget_nats: a.budget_nats.or(m.budget_nats),
        policy: a.policy.or(m.policy).unwrap_or(Policy::AccountOnly),
        seed: m.seed,
        target,
    };
    let run = simulate(&dataset, &queries, &config)?;

    let mut ledger = a.ledger.as_deref().map(|p| Sink::open(Some(p))).transpose()?;
    for t in &run.trace {
        out.json_line(&TraceLine {
            query: t.query + 1,
            label: t.label.map(|l| l + 1),
            nats: t.nats,
            cum: t.cum,
            refused: t.refused,
            votes: t.votes.clone(),
            v_minus: t.v_minus.clone(),
        })?;
        if let Some(l) = ledger.as_mut() {
            l.json_line(&LedgerRecord {
                id: format!("q{}", t.query + 1),
                nats: t.nats,
                cum: t.cum,
                refused: t.refused,
            })?;
        }
    }
    ledger.map(Sink::finish).transpose()?;
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut Sink) -> CliResult<()> {
    let c = calibrate_gamma(&histogram(&a.v)?, a.target, a.tol)?;
    out.json(&c)
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut out = Sink::open(cli.output.as_deref())?;
    match &cli.command {
        Command::Leak(a) => cmd_leak(a, &mut out),
        Command::Bound(a) => cmd_bound(a, &mut out),
        Command::Sweep(a) => cmd_sweep(a, &mut out),
        Command::Majorize(a) => cmd_majorize(a, &mut out),
        Command::Channel(a) => cmd_channel(a, &mut out),
        Command::Verify(a) => cmd_verify(a, &mut out),
        Command::Simulate(a) => cmd_simulate(a, &mut out),
        Command::Calibrate(a) => cmd_calibrate(a, &mut out),
    }?;
    out.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

