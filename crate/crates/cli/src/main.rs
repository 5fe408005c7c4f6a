//! `bayesbench` command line: frequentist and Bayesian language comparisons,
//! the omnibus test, regression fits and scenario prediction.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayesbench::dataio::{load_experiment_csv, load_performance_csv, PerformanceDataset};
use bayesbench::freqstats::Correction;
use bayesbench::inference::{read_draws_csv, summarize, write_draws_csv, SamplerConfig};
use bayesbench::regression::{
    bayes_linear_fit, bayes_poisson_fit, convergence_gate, ols_fit, simulate_from_samples, DesignMatrix,
    Predictor, Priors, Scenario,
};
use bayesbench::report::{
    bayes_table_records, bayesian_pairs, build_graph, count_significant, emit_dot, emit_table,
    frequentist_pairs, omnibus, transitive_reduction, Level, LevelRules, PairVerdict, TableFormat,
    TableRecord,
};
use bayesbench::speedup::{write_grid_csv, GridSpec, PriorKind};
use bayesbench::{Error, Execution, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "bayesbench", version, about = "Statistical comparison of benchmark and experiment data")]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Signed-rank tests and Cliff's delta for every language pair.
    FreqCompare(FreqArgs),
    /// Grid posteriors of inverse speedup for every language pair.
    BayesCompare(BayesArgs),
    /// Kruskal-Wallis over complete tasks plus pairwise post-hoc tests.
    Omnibus(OmnibusArgs),
    /// Least squares or Bayesian regression of the experiment outcome.
    Regress(RegressArgs),
    /// Posterior-predictive simulation of a team scenario.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    None,
    Bonferroni,
    Holm,
    Bh,
}

impl From<CorrectionArg> for Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::None => Correction::None,
            CorrectionArg::Bonferroni => Correction::Bonferroni,
            CorrectionArg::Holm => Correction::Holm,
            CorrectionArg::Bh => Correction::BenjaminiHochberg,
        }
    }
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    correction: CorrectionArg,
    /// Significance level for dashed edges; solid edges need p < 0.01 too.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Table output; `.csv` selects CSV, anything else Markdown.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PriorArg {
    Uniform,
    Centered,
    Shifted,
    All,
}

impl PriorArg {
    fn kinds(self) -> Vec<PriorKind> {
        match self {
            PriorArg::Uniform => vec![PriorKind::Uniform],
            PriorArg::Centered => vec![PriorKind::CenteredNormal],
            PriorArg::Shifted => vec![PriorKind::ShiftedNormal],
            PriorArg::All => PriorKind::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct BayesArgs {
    #[arg(long)]
    data: PathBuf,
    /// Benchmark runtimes the normal priors are built from.
    #[arg(long)]
    bench: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    prior: PriorArg,
    /// Speedup points by sigma points.
    #[arg(long, default_value = "1999x200")]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Graph of the first requested prior.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Directory for one `s,mass` CSV per pair and prior.
    #[arg(long)]
    posteriors: Option<PathBuf>,
}

#[derive(Args)]
struct OmnibusArgs {
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModelArg {
    Gaussian,
    Poisson,
    Ols,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "poisson")]
    model: ModelArg,
    /// Comma-separated predictors; defaults to all five, or treatment,
    /// experience and ability for the Poisson model.
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    #[arg(long, default_value_t = 1000)]
    keep: usize,
    /// Metropolis steps per kept draw; defaults to the parameter count.
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long, env = "BB_SEED", default_value_t = 0)]
    seed: u64,
    /// Fit table; Bayesian fits also write draws to `<out>.draws.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Draw file written next to a Poisson fit.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, env = "BB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    ability: [f64; 3],
    treatment: [f64; 2],
    experience: [f64; 2],
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn load_performance(path: &Path) -> Result<PerformanceDataset> {
    load_performance_csv(open(path)?).map_err(|e| e.context(path.display().to_string()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            Ok(())
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_graph(path: &Path, pairs: &[PairVerdict]) -> Result<()> {
    let g = build_graph(pairs, Level::Weak)?;
    let reduced = transitive_reduction(&g)?;
    if !reduced.was_transitive {
        warn!("faster-than relation is not transitive; graph left unreduced");
    }
    write_text(Some(path), &emit_dot(&reduced.graph))
}

fn table(records: &[TableRecord], out: Option<&Path>) -> Result<()> {
    let format = out.map_or(TableFormat::Markdown, TableFormat::for_path);
    write_text(out, &emit_table(records, format)?)
}

fn freq_compare(args: &FreqArgs, exec: Execution) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::Input(format!("alpha {} outside (0, 1)", args.alpha)));
    }
    let ds = load_performance(&args.data)?;
    let records = frequentist_pairs(&ds, args.correction.into(), exec)?;
    table(&records.iter().map(|r| r.table_record()).collect::<Vec<_>>(), args.out.as_deref())?;
    let rules = LevelRules { weak: args.alpha, strong: args.alpha.min(0.01) };
    let verdicts: Vec<PairVerdict> = records.iter().map(|r| r.verdict(rules)).collect();
    let (weak, strong) = count_significant(&verdicts);
    eprintln!("{} pairs, {weak} significant at p < {}, {strong} at p < {}", records.len(), rules.weak, rules.strong);
    if let Some(dot) = &args.dot {
        write_graph(dot, &verdicts)?;
    }
    Ok(())
}

/// Keeps file names portable while leaving names like `C#` readable.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "#+-_".contains(c) { c } else { '_' })
        .collect()
}

fn bayes_compare(args: &BayesArgs, exec: Execution) -> Result<()> {
    let grid = GridSpec::parse_dims(&args.grid)?.with_execution(exec);
    let ds = load_performance(&args.data)?;
    let bench = args.bench.as_deref().map(load_performance).transpose()?;
    let kinds = args.prior.kinds();
    let reports = bayesian_pairs(&ds, bench.as_ref(), &kinds, &grid)?;
    table(&bayes_table_records(&reports), args.out.as_deref())?;

    for kind in &kinds {
        let verdicts: Vec<PairVerdict> = reports
            .iter()
            .filter_map(|r| r.get(*kind)?.outcome.as_ref().ok())
            .map(|a| PairVerdict::from(&a.comparison))
            .collect();
        let (weak, strong) = count_significant(&verdicts);
        eprintln!("{kind}: {} pairs, {weak} significant at 95%, {strong} at 99%", verdicts.len());
        let failed = reports.len() - verdicts.len();
        if failed > 0 {
            warn!("{kind} prior unavailable for {failed} pairs");
        }
        if *kind == kinds[0] {
            if let Some(dot) = &args.dot {
                write_graph(dot, &verdicts)?;
            }
        }
    }
    for r in &reports {
        if r.data_swamps_prior {
            info!("{} vs {}: same decisions under every prior", r.lang1, r.lang2);
        }
    }

    if let Some(dir) = &args.posteriors {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
        for r in &reports {
            for a in r.successes() {
                let name = format!("{}_vs_{}_{}.csv", file_stem(&r.lang1), file_stem(&r.lang2), a.prior.kind());
                let mut w = create(&dir.join(name))?;
                write_grid_csv(&a.grid, &mut w)?;
                w.flush()?;
            }
        }
    }
    Ok(())
}

fn run_omnibus(args: &OmnibusArgs, exec: Execution) -> Result<()> {
    let ds = load_performance(&args.data)?;
    let r = omnibus(&ds, exec)?;
    let mut out = io::stdout().lock();
    writeln!(out, "languages: {}", r.languages.join(", "))?;
    writeln!(out, "complete tasks: {}", r.tasks)?;
    writeln!(
        out,
        "kruskal-wallis: H = {:.3}, p = {:.4}",
        r.kruskal_wallis.statistic, r.kruskal_wallis.p_value
    )?;
    writeln!(out, "pairwise signed-rank, BH adjusted:")?;
    for ((a, b), p) in &r.posthoc {
        writeln!(out, "  {a} vs {b}: {p:.4}")?;
    }
    Ok(())
}

fn parse_predictors(names: &[String]) -> Result<Vec<Predictor>> {
    names
        .iter()
        .map(|n| {
            Predictor::ALL
                .into_iter()
                .find(|p| p.name().eq_ignore_ascii_case(n.trim()))
                .ok_or_else(|| Error::Input(format!("unknown predictor `{n}`")))
        })
        .collect()
}

fn draws_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".draws.csv");
    PathBuf::from(s)
}

fn regress(args: &RegressArgs, exec: Execution) -> Result<()> {
    let table = load_experiment_csv(open(&args.data)?).map_err(|e| e.context(args.data.display().to_string()))?;
    let predictors = match &args.predictors {
        Some(names) => parse_predictors(names)?,
        None if args.model == ModelArg::Poisson => Predictor::POISSON.to_vec(),
        None => Predictor::ALL.to_vec(),
    };
    let design = DesignMatrix::from_table(&table, &predictors)?;
    let mut fit_csv = Vec::new();
    let samples = match args.model {
        ModelArg::Ols => {
            ols_fit(&design)?.write_csv(&mut fit_csv)?;
            None
        }
        ModelArg::Gaussian | ModelArg::Poisson => {
            let cfg = SamplerConfig {
                chains: args.chains,
                warmup: args.warmup,
                keep: args.keep,
                seed: args.seed,
                thin: args.thin,
                execution: exec,
                ..SamplerConfig::default()
            };
            let fit = if args.model == ModelArg::Gaussian {
                bayes_linear_fit(&design, &Priors::gaussian_default(&design), &cfg)?
            } else {
                bayes_poisson_fit(&design, &Priors::poisson_default(&design), &cfg)?
            };
            fit.write_csv(&mut fit_csv)?;
            Some(fit.samples)
        }
    };
    write_text(args.out.as_deref(), &String::from_utf8_lossy(&fit_csv))?;
    if let (Some(out), Some(samples)) = (&args.out, samples) {
        let path = draws_path(out);
        let mut w = create(&path)?;
        write_draws_csv(&samples, &mut w)?;
        w.flush()?;
        eprintln!("draws written to {}", path.display());
    }
    Ok(())
}

fn predict(args: &PredictArgs, exec: Execution) -> Result<()> {
    let samples = read_draws_csv(open(&args.fit)?).map_err(|e| e.context(args.fit.display().to_string()))?;
    convergence_gate(&summarize(&samples))?;
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| Error::from(e).context(args.scenario.display().to_string()))?;
    let file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", args.scenario.display())))?;
    let scenario = Scenario {
        ability_mix: file.ability,
        treatment_mix: file.treatment,
        experience_mix: file.experience,
    };
    let r = simulate_from_samples(&samples, &scenario, args.draws, args.seed, exec)?;
    println!("mean_fixed,lower90,upper90,draws");
    println!("{:.4},{},{},{}", r.mean_fixed, r.interval90.0, r.interval90.1, r.draws);
    Ok(())
}

/// 2: bad input or format, 3: data too degenerate to analyze, 4: sampler
/// diagnostics failed.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Diagnostics { .. } | Error::Mixing { .. } => 4,
        Error::DegenerateData(_)
        | Error::DegeneratePrior(_)
        | Error::SingularDesign(_)
        | Error::NoPosterior
        | Error::EmptyComparison(..)
        | Error::Inconsistency(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let result = match &cli.command {
        Command::FreqCompare(a) => freq_compare(a, exec),
        Command::BayesCompare(a) => bayes_compare(a, exec),
        Command::Omnibus(a) => run_omnibus(a, exec),
        Command::Regress(a) => regress(a, exec),
        Command::Predict(a) => predict(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
