use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use compresslens::data_model::{
    read_dataset, read_prediction_log, write_prediction_log, CompressionMethod, CompressionSpec,
};
use compresslens::pie_audit::{
    attribute_relative_representation, identify_pies, subset_accuracy, write_attribute_report,
    write_pie_report,
};
use compresslens::pipeline::{render_summary, run_pipeline, DatasetSource, ExperimentConfig};
use compresslens::report::{load_report, render_text, write_report};
use compresslens::robustness::{
    hard_set_report, normalize_accuracy_table, read_accuracy_table, robustness_report,
    write_robustness_report, CorruptionKind, RobustnessConfig,
};
use compresslens::stats_audit::{audit_classes, write_class_audit};
use compresslens::synth::generate;
use compresslens::trainer::{train_population, Mlp};

const THREADS_ENV: &str = "COMPRESSLENS_THREADS";

#[derive(Parser)]
#[command(
    name = "compresslens",
    version,
    about = "Audit the disparate impact of model compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic long-tailed train/test split.
    Generate(GenerateArgs),
    /// Train one population and log its test predictions.
    Train(TrainArgs),
    /// Per-class Welch audit of a compressed log against a baseline log.
    AuditClasses(AuditClassesArgs),
    /// Find PIEs and compare accuracy on them with the rest.
    AuditPie(AuditPieArgs),
    /// Accuracy under corruption, normalized by the baseline population.
    AuditRobustness(AuditRobustnessArgs),
    /// Merge class-audit CSVs into text, JSON and chart files.
    Report(ReportArgs),
    /// Run the full experiment and write the report bundle.
    Run(RunArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Output directory for predictions.csv and models/.
    #[arg(long)]
    out: PathBuf,
    /// Magnitude-prune to this sparsity during training.
    #[arg(long, conflicts_with = "quant")]
    sparsity: Option<f64>,
    /// Quantize after training: float16, dynamic_int8 or fixed_int8.
    #[arg(long, value_parser = parse_quant)]
    quant: Option<CompressionMethod>,
    /// Ranks recorded per prediction.
    #[arg(long)]
    topk: Option<usize>,
}

#[derive(Args)]
struct AuditClassesArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    comp: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct AuditPieArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    comp: PathBuf,
    /// Dataset carrying attribute columns, for the representation report.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    topk: usize,
}

#[derive(Args)]
struct AuditRobustnessArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Normalize a `corruption,sparsity,top1,topk` table instead of evaluating models.
    #[arg(long, conflicts_with_all = ["dataset", "base_models", "comp_models"])]
    table: Option<PathBuf>,
    /// Clean evaluation split to corrupt.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    base_models: Option<PathBuf>,
    #[arg(long)]
    comp_models: Option<PathBuf>,
    /// Comma-separated corruption kinds; defaults to all.
    #[arg(long, value_delimiter = ',', value_parser = parse_corruption)]
    corruptions: Vec<CorruptionKind>,
    /// Uncorrupted held-out set reported as an extra row.
    #[arg(long)]
    hard_set: Option<PathBuf>,
    /// Sparsity recorded on the compressed rows.
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    #[arg(long)]
    topk: Option<usize>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Class-audit CSVs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write chart_<name>.csv per input.
    #[arg(long)]
    chart: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Pruning levels to sweep, replacing the configured ones.
    #[arg(long, value_delimiter = ',')]
    sparsity: Option<Vec<f64>>,
    /// Quantization schemes to sweep, replacing the configured ones; `none` drops them.
    #[arg(long, value_delimiter = ',')]
    quant: Option<Vec<String>>,
    #[arg(long)]
    topk: Option<usize>,
}

enum CliError {
    Usage(String),
    Core(compresslens::Error),
}

impl From<compresslens::Error> for CliError {
    fn from(e: compresslens::Error) -> Self {
        CliError::Core(e)
    }
}

fn parse_quant(s: &str) -> Result<CompressionMethod, String> {
    let full = if s.starts_with("quant_") {
        s.to_string()
    } else {
        format!("quant_{s}")
    };
    CompressionMethod::from_str(&full)
        .ok()
        .filter(|m| m.is_quantization())
        .ok_or_else(|| format!("unknown quantization scheme `{s}`"))
}

fn parse_corruption(s: &str) -> Result<CorruptionKind, String> {
    CorruptionKind::from_str(s).map_err(|e| e.to_string())
}

fn load_models(dir: &Path) -> Result<Vec<Mlp>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| {
        CliError::Core(compresslens::Error::Invalid(format!(
            "{}: {e}",
            dir.display()
        )))
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Core(compresslens::Error::Invalid(format!(
            "{}: no model snapshots",
            dir.display()
        ))));
    }
    Ok(paths
        .iter()
        .map(|p| Mlp::load(p))
        .collect::<Result<_, _>>()?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(compresslens::Error::from)?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| compresslens::Error::Invalid(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| compresslens::Error::Invalid(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let config = args.config.load()?.resolved();
    let DatasetSource::Synthetic(spec) = &config.dataset else {
        return Err(CliError::Usage(
            "generate needs a synthetic dataset in the config".into(),
        ));
    };
    let (train, test) = generate(spec, &args.out)?;
    println!(
        "wrote {} train and {} test examples to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = args.config.load()?.resolved();
    let mut tc = config.train.clone();
    if args.topk.is_some() {
        tc.topk = args.topk;
    }
    let train = read_dataset(&args.train)?;
    let test = read_dataset(&args.test)?;
    let (spec, schedule) = match (args.sparsity, args.quant) {
        (Some(t), _) => (
            CompressionSpec::prune(t)?,
            Some(config.prune.schedule(t, tc.steps)),
        ),
        (None, Some(m)) => (CompressionSpec::quant(m)?, None),
        (None, None) => (CompressionSpec::NONE, None),
    };
    let pop = train_population(&train, &test, &tc, spec, schedule.as_ref())?;
    write_prediction_log(&pop.log, &args.out.join("predictions.csv"))?;
    for (k, m) in pop.models.iter().enumerate() {
        m.save(&args.out.join("models").join(format!("model_{k:03}.json")))?;
    }
    println!(
        "trained {} models ({spec}) into {}",
        pop.models.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_audit_classes(args: AuditClassesArgs) -> Result<(), CliError> {
    let mut audit = args.config.load()?.audit;
    if let Some(alpha) = args.alpha {
        audit.alpha = alpha;
    }
    audit.validate()?;
    let base = read_prediction_log(&args.base)?;
    let comp = read_prediction_log(&args.comp)?;
    let rows = audit_classes(&base, &comp, &audit)?;
    write_class_audit(&rows, &args.out)?;
    let significant = rows.iter().filter(|r| r.significant).count();
    println!("{} classes audited, {significant} significant", rows.len());
    Ok(())
}

fn cmd_audit_pie(args: AuditPieArgs) -> Result<(), CliError> {
    let base = read_prediction_log(&args.base)?;
    let comp = read_prediction_log(&args.comp)?;
    let pies = identify_pies(&base, &comp)?;
    write_pie_report(&pies, &base, &args.out.join("pies.csv"))?;
    let subsets = serde_json::json!({
        "topk": args.topk,
        "baseline": subset_accuracy(&base, &pies, args.topk)?,
        "compressed": subset_accuracy(&comp, &pies, args.topk)?,
    });
    write_json(&args.out.join("subset_accuracy.json"), &subsets)?;
    if let Some(path) = &args.dataset {
        let dataset = read_dataset(path)?;
        if pies.is_empty() {
            log::warn!("no PIEs; attribute report skipped");
        } else {
            let shares = attribute_relative_representation(&pies, &dataset)?;
            write_attribute_report(&shares, &args.out.join("attributes.csv"))?;
        }
    }
    println!(
        "{} PIEs out of {} examples",
        pies.len(),
        base.num_examples()
    );
    Ok(())
}

fn cmd_audit_robustness(args: AuditRobustnessArgs) -> Result<(), CliError> {
    let rows = if let Some(table) = &args.table {
        normalize_accuracy_table(&read_accuracy_table(table)?)?
    } else {
        let (Some(dataset), Some(base_dir), Some(comp_dir)) =
            (&args.dataset, &args.base_models, &args.comp_models)
        else {
            return Err(CliError::Usage(
                "either --table or all of --dataset, --base-models, --comp-models are required"
                    .into(),
            ));
        };
        let config = args.config.load()?;
        let dataset = read_dataset(dataset)?;
        let base = load_models(base_dir)?;
        let comp = load_models(comp_dir)?;
        let kinds = if args.corruptions.is_empty() {
            CorruptionKind::ALL.to_vec()
        } else {
            args.corruptions.clone()
        };
        let rc = RobustnessConfig {
            topk: args
                .topk
                .or(config.audit.topk_eval)
                .unwrap_or(5)
                .min(dataset.num_classes()),
            seed: config.seed,
            sparsity: args.sparsity,
        };
        let mut rows = robustness_report(&dataset, &kinds, &base, &comp, &rc)?;
        if let Some(path) = &args.hard_set {
            rows.push(hard_set_report(
                &read_dataset(path)?,
                "hard_set",
                &base,
                &comp,
                &rc,
            )?);
        }
        rows
    };
    write_robustness_report(&rows, &args.out)?;
    for r in &rows {
        println!(
            "{:<16} {:>5} top1 {:>7.2} norm {:>+8.2}",
            r.corruption, r.sparsity, r.top1_abs, r.top1_norm
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let paths: Vec<&Path> = args.inputs.iter().map(PathBuf::as_path).collect();
    let report = load_report(&paths)?;
    write_report(&report, &args.out, args.chart)?;
    print!("{}", render_text(&report));
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut config = args.config.load()?;
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    if let Some(alpha) = args.alpha {
        config.audit.alpha = alpha;
    }
    if let Some(k) = args.topk {
        config.audit.topk_eval = Some(k);
        config.train.topk = Some(k);
    }
    if let Some(levels) = args.sparsity {
        config
            .sweep
            .retain(|s| s.method != CompressionMethod::MagnitudePrune);
        for t in levels {
            config.sweep.push(CompressionSpec::prune(t)?);
        }
    }
    if let Some(schemes) = args.quant {
        config.sweep.retain(|s| !s.method.is_quantization());
        for s in schemes.iter().filter(|s| s.as_str() != "none") {
            let method = parse_quant(s).map_err(CliError::Usage)?;
            config.sweep.push(CompressionSpec::quant(method)?);
        }
    }
    let summary = run_pipeline(&config)?;
    print!("{}", render_summary(&summary));
    println!("report bundle written to {}", config.out_dir.display());
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?;
    if !compresslens::par::set_max_threads(threads) {
        log::debug!("{THREADS_ENV} ignored: sequential build or pool already running");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::AuditClasses(a) => cmd_audit_classes(a),
        Command::AuditPie(a) => cmd_audit_pie(a),
        Command::AuditRobustness(a) => cmd_audit_robustness(a),
        Command::Report(a) => cmd_report(a),
        Command::Run(a) => cmd_run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
