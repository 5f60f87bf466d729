//! Command-line front end.
//!
//! Exit codes: 0 success, 2 parse error, 3 invalid argument or unmet
//! precondition, 4 numerical failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bootstrap::confidence_band;
use crate::curves::{center, DomainDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::regress::{DimChoice, TransferProblem, DEFAULT_EIGEN_FRACTION};
use crate::select::{select_informative, PenaltyKind, Scorer, SelectionConfig};
use crate::shape::MisalignmentReport;
use crate::simgen::{self, Method, SimConfig};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Parse { .. } => EXIT_PARSE,
        Error::SingularDesign { .. }
        | Error::DegenerateSpectrum
        | Error::DegenerateShape
        | Error::ZeroCoefficient
        | Error::BandUnreliable { .. }
        | Error::InvalidKernel { .. } => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "coefshape", version, about = "Coefficient-shape transfer learning for functional linear regression")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Omit the timestamp comment at the top of CSV outputs.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// JSON file with default parameter values; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the transfer estimator.
    Fit(FitArgs),
    /// Choose the informative source set by grid search.
    Select(SelectArgs),
    /// Bootstrap pointwise confidence band for the target coefficient.
    Bands(BandArgs),
    /// Run a simulation campaign and write a summary table.
    Simulate(SimArgs),
    /// Export one simulated replication as CSV files.
    Generate(GenArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Target curves (first row = grid points).
    #[arg(long)]
    pub target: PathBuf,
    /// Target responses, one per row.
    #[arg(long)]
    pub responses: PathBuf,
    /// Source domain as CURVES.csv:RESPONSES.csv; repeat for several sources.
    #[arg(long = "source")]
    pub sources: Vec<String>,
    /// Basis dimension: `auto` (cumulative eigenvalue share) or an integer.
    #[arg(long)]
    pub d: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    /// Comma-separated penalty levels; default is data-scaled.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Comma-separated misalignment thresholds.
    #[arg(long)]
    pub tilde_grid: Option<String>,
    /// Bootstrap replications per candidate set.
    #[arg(long)]
    pub boot_reps: Option<usize>,
    /// `mcp` or `scad`.
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `auto` or a comma-separated list of source indices (1-based; empty = none).
    #[arg(long)]
    pub informative: Option<String>,
    #[command(flatten)]
    pub selection: SelectionArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
}

#[derive(Debug, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub informative: Option<String>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long)]
    pub level: Option<f64>,
    /// Bootstrap replications for the band.
    #[arg(long)]
    pub reps: Option<usize>,
    /// TS, TE or OLS.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub setting: Option<u8>,
    /// Target sample sizes (comma-separated).
    #[arg(long)]
    pub n: Option<String>,
    /// Basis dimensions (comma-separated).
    #[arg(long)]
    pub d: Option<String>,
    /// Noise standard deviations (comma-separated).
    #[arg(long)]
    pub s: Option<String>,
    /// Source spectral decay rates (comma-separated).
    #[arg(long)]
    pub alpha: Option<String>,
    /// Source amplitude factors (comma-separated).
    #[arg(long)]
    pub f1: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Methods (comma-separated): TS, TS-identified, TE, OLS.
    #[arg(long)]
    pub method: Option<String>,
    /// Use the true scores instead of re-estimating the basis.
    #[arg(long)]
    pub passthrough: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub setting: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub f1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replication index within the seed.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

/// Values a `--config` file may supply. Lists may be given as JSON arrays
/// or as comma-separated strings.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub d: Option<serde_json::Value>,
    pub informative: Option<serde_json::Value>,
    pub lambda_grid: Option<serde_json::Value>,
    pub tilde_grid: Option<serde_json::Value>,
    pub boot_reps: Option<usize>,
    pub penalty: Option<String>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub reps: Option<usize>,
    pub method: Option<serde_json::Value>,
    pub setting: Option<u8>,
    pub n: Option<serde_json::Value>,
    pub s: Option<serde_json::Value>,
    pub alpha: Option<serde_json::Value>,
    pub f1: Option<serde_json::Value>,
}

fn value_to_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(a) => a.iter().map(value_to_string).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: format!("{}: {e}", path.display()),
    })
}

/// Flag, then config file value, then nothing.
fn pick(flag: &Option<String>, file: &Option<serde_json::Value>) -> Option<String> {
    flag.clone().or_else(|| file.as_ref().map(value_to_string))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} value '{s}'")))
        })
        .collect()
}

fn parse_grid(text: &str, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = parse_list(text, what)?;
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} grid is empty")));
    }
    Ok(v)
}

fn parse_dim(text: Option<String>) -> Result<DimChoice> {
    match text.as_deref().map(str::trim) {
        None | Some("auto") => Ok(DimChoice::Fraction(DEFAULT_EIGEN_FRACTION)),
        Some(s) => s
            .parse::<usize>()
            .map(DimChoice::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("--d must be 'auto' or a positive integer, got '{s}'"))),
    }
}

enum SetChoice {
    Auto,
    Given(BTreeSet<usize>),
}

fn parse_set(text: Option<String>, n_sources: usize) -> Result<SetChoice> {
    let Some(text) = text else {
        return Ok(SetChoice::Auto);
    };
    if text.trim() == "auto" {
        return Ok(SetChoice::Auto);
    }
    let ids: BTreeSet<usize> = parse_list::<usize>(&text, "informative")?.into_iter().collect();
    if let Some(bad) = ids.iter().find(|&&j| j == 0 || j > n_sources) {
        return Err(Error::InvalidArgument(format!(
            "informative id {bad} out of range 1..={n_sources}"
        )));
    }
    Ok(SetChoice::Given(ids))
}

struct Loaded {
    target: DomainDataset,
    sources: Vec<DomainDataset>,
    problem: TransferProblem,
}

fn load(data: &DataArgs, file: &FileConfig) -> Result<Loaded> {
    let target = io::load_domain(0, &data.target, &data.responses)?;
    let mut sources = Vec::new();
    for (i, spec) in data.sources.iter().enumerate() {
        let (c, r) = spec.rsplit_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("--source expects CURVES.csv:RESPONSES.csv, got '{spec}'"))
        })?;
        sources.push(io::load_domain(i + 1, Path::new(c), Path::new(r))?);
    }
    let dim = parse_dim(pick(&data.d, &file.d))?;
    let target = center(&target);
    let sources: Vec<DomainDataset> = sources.iter().map(center).collect();
    let problem = TransferProblem::from_datasets(&target, &sources, dim)?;
    Ok(Loaded {
        target,
        sources,
        problem,
    })
}

fn selection(
    args: &SelectionArgs,
    file: &FileConfig,
    problem: &TransferProblem,
) -> Result<(SelectionConfig, Scorer)> {
    let mut config = SelectionConfig::defaults_for(problem)?;
    if let Some(p) = args.penalty.clone().or_else(|| file.penalty.clone()) {
        config.penalty = p.parse::<PenaltyKind>()?;
        config.gamma = config.penalty.default_gamma();
    }
    if let Some(g) = pick(&args.lambda_grid, &file.lambda_grid) {
        config.lambda_grid = parse_grid(&g, "lambda")?;
    }
    if let Some(g) = pick(&args.tilde_grid, &file.tilde_grid) {
        config.threshold_grid = parse_grid(&g, "threshold")?;
    }
    let reps = args.boot_reps.or(file.boot_reps).unwrap_or(100);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    Ok((config, Scorer::Bootstrap { reps, seed }))
}

struct Writer {
    out: PathBuf,
    timestamp: bool,
}

impl Writer {
    fn new(common: &Common) -> Result<Self> {
        fs::create_dir_all(&common.out).map_err(|e| Error::Io(format!("{}: {e}", common.out.display())))?;
        Ok(Writer {
            out: common.out.clone(),
            timestamp: !common.no_timestamp,
        })
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        let path = self.out.join(name);
        let mut text = String::new();
        if self.timestamp && name.ends_with(".csv") {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            text.push_str(&format!("# generated at unix time {secs}\n"));
        }
        text.push_str(body);
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn format_set(set: &BTreeSet<usize>) -> String {
    set.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
}

fn resolve_set(
    choice: SetChoice,
    args: &SelectionArgs,
    file: &FileConfig,
    problem: &TransferProblem,
    writer: &Writer,
) -> Result<BTreeSet<usize>> {
    match choice {
        SetChoice::Given(s) => Ok(s),
        SetChoice::Auto => {
            let (config, scorer) = selection(args, file, problem)?;
            let (set, diag) = select_informative(problem, &config, &scorer)?;
            writer.write("diagnostics.csv", &diag.to_csv())?;
            Ok(set)
        }
    }
}

fn cmd_fit(args: &FitArgs, file: &FileConfig, writer: &Writer) -> Result<()> {
    let loaded = load(&args.data, file)?;
    let problem = &loaded.problem;
    let choice = parse_set(pick(&args.informative, &file.informative), loaded.sources.len())?;
    let set = resolve_set(choice, &args.selection, file, problem, writer)?;
    let fit = problem.fit(&set)?;
    let basis = problem.basis.as_ref().expect("built from datasets");
    writer.write("fit.json", &serde_json::to_string_pretty(&fit).expect("plain struct"))?;
    writer.write("coefficient.csv", &io::coefficient_csv(&basis.synthesize(&fit.final_scores)?))?;

    let target = problem.target_ols().scores.as_slice().to_vec();
    let sources: Vec<(usize, Vec<f64>)> = problem
        .source_ids()
        .into_iter()
        .filter_map(|j| problem.source_fit(j).ok().map(|f| (j, f.scores.as_slice().to_vec())))
        .collect();
    let mut report = MisalignmentReport::build(&target, &sources, 0.0)?;
    report.identified = set.clone();
    writer.write("misalignment.csv", &report.to_csv())?;
    println!(
        "d_used={} amplitude={} informative={}",
        fit.d_used,
        fit.amplitude,
        format_set(&set)
    );
    Ok(())
}

fn cmd_select(args: &SelectArgs, file: &FileConfig, writer: &Writer) -> Result<()> {
    let loaded = load(&args.data, file)?;
    let set = resolve_set(SetChoice::Auto, &args.selection, file, &loaded.problem, writer)?;
    println!("{}", format_set(&set));
    Ok(())
}

fn cmd_bands(args: &BandArgs, file: &FileConfig, writer: &Writer) -> Result<()> {
    let level = args.level.or(file.level).unwrap_or(0.95);
    let reps = args.reps.or(file.reps).unwrap_or(1000);
    let seed = args.selection.seed.or(file.seed).unwrap_or(0);
    let method: Method = pick(&args.method, &file.method).unwrap_or_else(|| "TS".into()).parse()?;
    if method == Method::TsIdentified {
        return Err(Error::InvalidArgument(
            "use --method TS with --informative auto for a selected set".into(),
        ));
    }
    let loaded = load(&args.data, file)?;
    let problem = &loaded.problem;
    let set = match method {
        Method::Ols => BTreeSet::new(),
        _ => {
            let choice = parse_set(pick(&args.informative, &file.informative), loaded.sources.len())?;
            resolve_set(choice, &args.selection, file, problem, writer)?
        }
    };
    let basis = problem.basis.as_ref().expect("built from datasets");
    let band = confidence_band(
        |y| match method {
            Method::Te => Ok(problem.pooled_with_responses(&set, y)?.scores.as_slice().to_vec()),
            _ => Ok(problem.fit_with_responses(&set, y)?.final_scores),
        },
        &problem.target.scores,
        &problem.target.responses,
        basis,
        reps,
        level,
        seed,
    )?;
    writer.write("bands.csv", &band.to_csv())?;
    writer.write("band.json", &band.summary_json())?;
    println!("width={}", band.width);
    let _ = &loaded.target;
    Ok(())
}

fn cmd_simulate(args: &SimArgs, file: &FileConfig, writer: &Writer) -> Result<()> {
    let base = SimConfig::default();
    let setting = args.setting.or(file.setting).unwrap_or(base.setting);
    let list = |flag: &Option<String>, fv: &Option<serde_json::Value>, default: String, what: &str| {
        parse_grid(&pick(flag, fv).unwrap_or(default), what)
    };
    let ns: Vec<usize> = parse_list(&pick(&args.n, &file.n).unwrap_or(base.n.to_string()), "n")?;
    let ds: Vec<usize> = parse_list(&pick(&args.d, &file.d).unwrap_or(base.d.to_string()), "d")?;
    let ss = list(&args.s, &file.s, base.s.to_string(), "s")?;
    let alphas = list(&args.alpha, &file.alpha, base.alpha.to_string(), "alpha")?;
    let f1s = list(&args.f1, &file.f1, base.f1.to_string(), "f1")?;
    let methods: Vec<Method> = parse_list(&pick(&args.method, &file.method).unwrap_or("TS".into()), "method")?;
    if methods.is_empty() || ns.is_empty() || ds.is_empty() {
        return Err(Error::InvalidArgument("empty method, n or d list".into()));
    }
    let mut configs = Vec::new();
    for &n in &ns {
        for &d in &ds {
            for &s in &ss {
                for &alpha in &alphas {
                    for &f1 in &f1s {
                        let cfg = SimConfig {
                            setting,
                            n,
                            d,
                            s,
                            alpha,
                            f1,
                            seed: args.seed.or(file.seed).unwrap_or(base.seed),
                            reps: args.reps.or(file.reps).unwrap_or(base.reps),
                            passthrough: args.passthrough,
                            ..base.clone()
                        };
                        cfg.validate()?;
                        configs.push(cfg);
                    }
                }
            }
        }
    }
    let mut rows = Vec::new();
    for cfg in &configs {
        for &m in &methods {
            let summary = simgen::run_experiment(cfg, m)?;
            for (rep, msg) in &summary.failures {
                log::warn!("{m} rep {rep} failed: {msg}");
            }
            if summary.reps == 0 {
                return Err(summary
                    .failures
                    .first()
                    .map(|(_, msg)| Error::InvalidArgument(format!("every replication failed ({msg})")))
                    .unwrap_or(Error::EmptySample));
            }
            rows.push(summary);
        }
    }
    let csv = simgen::summary_csv(&rows);
    writer.write("summary.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_generate(args: &GenArgs, file: &FileConfig, writer: &Writer) -> Result<()> {
    let base = SimConfig::default();
    let single = |v: &Option<serde_json::Value>| v.as_ref().map(value_to_string);
    let cfg = SimConfig {
        setting: args.setting.or(file.setting).unwrap_or(base.setting),
        n: match args.n {
            Some(n) => n,
            None => single(&file.n).map(|s| parse_list(&s, "n")).transpose()?.and_then(|v| v.first().copied()).unwrap_or(base.n),
        },
        d: match args.d {
            Some(d) => d,
            None => single(&file.d).map(|s| parse_list(&s, "d")).transpose()?.and_then(|v| v.first().copied()).unwrap_or(base.d),
        },
        s: args.s.unwrap_or(base.s),
        alpha: args.alpha.unwrap_or(base.alpha),
        f1: args.f1.unwrap_or(base.f1),
        seed: args.seed.or(file.seed).unwrap_or(base.seed),
        reps: args.rep + 1,
        ..base
    };
    let data = simgen::generate(&cfg, args.rep)?;
    let target = data.target_dataset()?;
    writer.write("target_curves.csv", &io::curves_csv(&target))?;
    writer.write("target_responses.csv", &io::responses_csv(target.responses()))?;
    for s in data.source_datasets()? {
        writer.write(&format!("source{}_curves.csv", s.domain_id), &io::curves_csv(&s))?;
        writer.write(&format!("source{}_responses.csv", s.domain_id), &io::responses_csv(s.responses()))?;
    }
    if let Some(v) = data.validation_dataset()? {
        writer.write("validation_curves.csv", &io::curves_csv(&v))?;
        writer.write("validation_responses.csv", &io::responses_csv(v.responses()))?;
    }
    let mut truth = String::from("domain,template,factor,scores\n");
    for d in &data.truth.domains {
        let scores = d.scores.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        truth.push_str(&format!(
            "{},{},{},{}\n",
            d.domain_id,
            serde_json::to_string(&d.template).expect("enum").trim_matches('"'),
            d.factor,
            scores
        ));
    }
    writer.write("truth.csv", &truth)?;
    println!("oracle={}", format_set(&data.truth.oracle_set));
    Ok(())
}

fn set_threads(n: usize) {
    #[cfg(feature = "parallel")]
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

pub fn execute(cli: &Cli) -> Result<()> {
    set_threads(cli.common.threads);
    let file = load_config(cli.common.config.as_deref())?;
    let writer = Writer::new(&cli.common)?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, &file, &writer),
        Command::Select(a) => cmd_select(a, &file, &writer),
        Command::Bands(a) => cmd_bands(a, &file, &writer),
        Command::Simulate(a) => cmd_simulate(a, &file, &writer),
        Command::Generate(a) => cmd_generate(a, &file, &writer),
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.name());
            exit_code(&e)
        }
    }
}
