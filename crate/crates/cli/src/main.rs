use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use voxanon::anonymize::{AnonError, AnonymizerSpec, McAdamsConfig, PitchShiftConfig};
use voxanon::embedding::{load_embeddings, write_embeddings, SpeakerEmbedding};
use voxanon::experiment::pipeline::{anonymize_with_provenance, embed_all, features_all, write_feature_table};
use voxanon::experiment::protocols::{
    run_fairness_eval, run_inversion_attack, run_pooled_eval, run_privacy_eval, run_sweep, run_task_utility,
    FairnessReport, InversionReport, PooledReport, PrivacyReport, SweepReport,
};
use voxanon::experiment::{
    emit_report, load_manifest, render_report, synth_corpus, Corpus, CsvTable, EmbeddingBackend, EvalOptions,
    ExperimentError, Report, ReportFormat, SynthConfig, Task, UtilityReport,
};
use voxanon::metrics::{identification_odds, IdentificationOdds, MetricsError};

mod alphas;

#[derive(Parser)]
#[command(name = "voxanon", version, about = "Speaker anonymization and privacy/utility evaluation")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "VOXANON_SEED", default_value_t = 42)]
    seed: u64,
    /// Worker threads for per-utterance stages; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize every utterance of a manifest.
    Anonymize {
        #[command(subcommand)]
        method: AnonymizeCommand,
    },
    /// Run an evaluation protocol.
    Eval {
        #[command(subcommand)]
        protocol: EvalCommand,
    },
    /// Pooled classifier features per utterance, as CSV.
    Features(TableArgs),
    /// Reference speaker embeddings per utterance, as CSV.
    Embed(TableArgs),
    /// Write the seeded synthetic corpus.
    SynthCorpus(SynthArgs),
    /// Re-render a JSON report in another format.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum AnonymizeCommand {
    /// LPC pole-angle (McAdams coefficient) anonymization.
    Mcadams {
        #[command(flatten)]
        io: AnonymizeIo,
        #[command(flatten)]
        params: McAdamsArgs,
    },
    /// Pitch shift followed by vocoder resynthesis.
    Pitch {
        #[command(flatten)]
        io: AnonymizeIo,
        #[command(flatten)]
        params: PitchArgs,
    },
}

#[derive(Args)]
struct AnonymizeIo {
    /// Manifest directory or CSV file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for audio, sidecars and the new manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct McAdamsArgs {
    /// Fixed coefficient for every speaker.
    #[arg(long, conflicts_with_all = ["alpha_min", "alpha_max"])]
    alpha: Option<f64>,
    /// Lower bound of the per-speaker coefficient draw.
    #[arg(long)]
    alpha_min: Option<f64>,
    /// Upper bound of the per-speaker coefficient draw.
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    lpc_order: Option<usize>,
}

impl McAdamsArgs {
    fn config(&self) -> Result<McAdamsConfig, CliError> {
        let mut cfg = McAdamsConfig::default();
        cfg.alpha = self.alpha;
        cfg.alpha_min = self.alpha_min.unwrap_or(cfg.alpha_min);
        cfg.alpha_max = self.alpha_max.unwrap_or(cfg.alpha_max);
        cfg.lpc_order = self.lpc_order.unwrap_or(cfg.lpc_order);
        if cfg.alpha_min > cfg.alpha_max {
            return Err(CliError::Usage(format!(
                "invalid range: alpha-min {} > alpha-max {}",
                cfg.alpha_min, cfg.alpha_max
            )));
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct PitchArgs {
    /// Smallest shift magnitude in semitones.
    #[arg(long)]
    semitone_min: Option<f64>,
    /// Largest shift magnitude in semitones.
    #[arg(long)]
    semitone_max: Option<f64>,
}

impl PitchArgs {
    fn config(&self) -> Result<PitchShiftConfig, CliError> {
        let mut cfg = PitchShiftConfig::default();
        cfg.semitone_min = self.semitone_min.unwrap_or(cfg.semitone_min);
        cfg.semitone_max = self.semitone_max.unwrap_or(cfg.semitone_max);
        if cfg.semitone_min > cfg.semitone_max {
            return Err(CliError::Usage(format!(
                "invalid range: semitone-min {} > semitone-max {}",
                cfg.semitone_min, cfg.semitone_max
            )));
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Identity,
    Mcadams,
    Pitch,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "mcadams")]
    method: Method,
    #[command(flatten)]
    mcadams: McAdamsArgs,
    #[command(flatten)]
    pitch: PitchArgs,
}

impl MethodArgs {
    fn spec(&self) -> Result<AnonymizerSpec, CliError> {
        Ok(match self.method {
            Method::Identity => AnonymizerSpec::Identity,
            Method::Mcadams => AnonymizerSpec::McAdams(self.mcadams.config()?),
            Method::Pitch => AnonymizerSpec::Pitch(self.pitch.config()?),
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    /// Report file; format follows --format or the file extension.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Output {
    fn format(&self) -> ReportFormat {
        match self.format {
            Some(Format::Csv) => ReportFormat::Csv,
            Some(Format::Json) => ReportFormat::Json,
            None => match self.report.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("csv") => ReportFormat::Csv,
                _ => ReportFormat::Json,
            },
        }
    }
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Speaker-verification EER before and after anonymization.
    Privacy {
        /// Manifest directory or CSV file.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        /// Precomputed embeddings of the original audio.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Precomputed embeddings of the anonymized audio.
        #[arg(long, requires = "embeddings")]
        anon_embeddings: Option<PathBuf>,
        /// Report patients and controls separately, with all disorders merged.
        #[arg(long, conflicts_with = "embeddings")]
        pooled: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Reference classifier on anonymized audio.
    Utility {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        /// A disorder label or `pooled`.
        #[arg(long, default_value = "pooled")]
        task: String,
        #[command(flatten)]
        out: Output,
    },
    /// Per-subgroup privacy and utility.
    Fairness {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, default_value = "pooled")]
        task: String,
        #[command(flatten)]
        out: Output,
    },
    /// Identification odds for a population size and EER.
    Odds {
        /// Population size.
        #[arg(long)]
        n: u64,
        /// EER in percent.
        #[arg(long)]
        eer: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Fixed-coefficient McAdams sweep.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        /// `min:max:step` or a comma-separated list.
        #[arg(long, default_value = "0.5:1.0:0.1")]
        alphas: String,
        #[arg(long)]
        lpc_order: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Enrollment on anonymized speech.
    Invert {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct TableArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    #[arg(long, default_value_t = 8)]
    utterances_per_speaker: usize,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `eval`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(ExperimentError),
}

impl<E: Into<ExperimentError>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(ExperimentError::InvalidArgument(_)) => 1,
            CliError::Run(ExperimentError::Anon(AnonError::InvalidConfig(_) | AnonError::InvalidAlpha(_))) => 1,
            CliError::Run(ExperimentError::Metrics(MetricsError::InvalidArgument(_))) => 1,
            CliError::Run(e) if e.is_data_error() => 2,
            CliError::Run(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

struct Ctx {
    seed: u64,
    opts: EvalOptions,
}

impl Ctx {
    /// Logs the seed and config hash and returns the hash.
    fn announce(&self, config: &Value) -> String {
        let hash = voxanon::experiment::config_hash(config);
        log::info!("seed {} config_hash {}", self.seed, hash);
        hash
    }

    fn finish<T: serde::Serialize + CsvTable>(
        &self,
        kind: &str,
        config: Value,
        body: T,
        out: &Output,
    ) -> Result<(), CliError> {
        let report = Report::new(kind, self.seed, config, body);
        if let Some(path) = &out.report {
            emit_report(&report, out.format(), path)?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::load(load_manifest(path)?)?)
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    s.parse().map_err(|e: ExperimentError| CliError::Usage(e.to_string()))
}

fn embedding_table(path: &Path) -> Result<HashMap<String, SpeakerEmbedding>, CliError> {
    let mut table = HashMap::new();
    for e in load_embeddings(path)? {
        let id = e.utterance_id.clone().ok_or_else(|| {
            ExperimentError::Manifest(format!("{}: embedding without utterance id", path.display()))
        })?;
        table.insert(id, e);
    }
    Ok(table)
}

fn anonymize(ctx: &Ctx, io: &AnonymizeIo, spec: AnonymizerSpec) -> Result<(), CliError> {
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.announce(&json!({"command": "anonymize", "input": io.input, "spec": spec}));
    let corpus = load_corpus(&io.input)?;
    let outputs = ctx.opts.run(|| anonymize_with_provenance(&corpus, &spec, ctx.seed, "test"))??;
    let (audio, provenance): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let anonymized = Corpus::new(corpus.manifest.clone(), audio)?;
    let written = anonymized.write(&io.out)?;
    let stdout = io::stdout();
    let mut lines = stdout.lock();
    for (path, prov) in written.iter().zip(&provenance) {
        let sidecar = path.with_extension("json");
        fs::write(&sidecar, serde_json::to_vec_pretty(prov).map_err(ExperimentError::from)?)
            .map_err(ExperimentError::from)?;
        writeln!(
            lines,
            "{}\t{}\t{}",
            prov.source_id.as_deref().unwrap_or(""),
            path.display(),
            prov.params
        )
        .map_err(ExperimentError::from)?;
    }
    Ok(())
}

fn eval(ctx: &Ctx, protocol: EvalCommand) -> Result<(), CliError> {
    match protocol {
        EvalCommand::Privacy {
            manifest,
            method,
            embeddings,
            anon_embeddings,
            pooled,
            out,
        } => {
            let spec = method.spec()?;
            let config = json!({
                "command": if pooled { "eval privacy --pooled" } else { "eval privacy" },
                "manifest": manifest,
                "spec": spec,
                "embeddings": embeddings,
                "anon_embeddings": anon_embeddings,
                "options": ctx.opts,
            });
            ctx.announce(&config);
            let corpus = load_corpus(&manifest)?;
            if pooled {
                let r: PooledReport = run_pooled_eval(&corpus, &spec, ctx.seed, &ctx.opts)?;
                println!(
                    "patients EER {:.2}% -> {:.2}%; controls EER {:.2}% -> {:.2}%; combined {:.2}% -> {:.2}%",
                    r.patients.original,
                    r.patients.anonymized,
                    r.controls.original,
                    r.controls.anonymized,
                    r.combined.original,
                    r.combined.anonymized
                );
                return ctx.finish("pooled", config, r, &out);
            }
            let backend = match &embeddings {
                None => EmbeddingBackend::Reference,
                Some(path) => EmbeddingBackend::Precomputed {
                    original: embedding_table(path)?,
                    anonymized: anon_embeddings.as_deref().map(embedding_table).transpose()?,
                },
            };
            let r: PrivacyReport = run_privacy_eval(&corpus, &spec, &backend, ctx.seed, &ctx.opts)?;
            println!(
                "EER original {:.2}% anonymized {:.2}% ({} trials, {} speakers)",
                r.original.eer_percent, r.anonymized.eer_percent, r.n_trials, r.n_speakers
            );
            ctx.finish("privacy", config, r, &out)
        }
        EvalCommand::Utility {
            manifest,
            method,
            task,
            out,
        } => {
            let spec = method.spec()?;
            let task = parse_task(&task)?;
            let config = json!({
                "command": "eval utility",
                "manifest": manifest,
                "spec": spec,
                "task": task.name(),
                "options": ctx.opts,
            });
            ctx.announce(&config);
            let corpus = load_corpus(&manifest)?;
            let r: UtilityReport = run_task_utility(&corpus, &spec, task, ctx.seed, &ctx.opts)?;
            let o = &r.overall;
            println!(
                "AUROC {:.2}% accuracy {:.2}% sensitivity {:.2}% specificity {:.2}%",
                o.auroc, o.accuracy, o.sensitivity, o.specificity
            );
            ctx.finish("utility", config, r, &out)
        }
        EvalCommand::Fairness {
            manifest,
            method,
            task,
            out,
        } => {
            let spec = method.spec()?;
            let task = parse_task(&task)?;
            let config = json!({
                "command": "eval fairness",
                "manifest": manifest,
                "spec": spec,
                "task": task.name(),
                "options": ctx.opts,
            });
            ctx.announce(&config);
            let corpus = load_corpus(&manifest)?;
            let r: FairnessReport = run_fairness_eval(&corpus, &spec, task, ctx.seed, &ctx.opts)?;
            for s in &r.utility.subgroups {
                println!("{}={} accuracy {:.2}% ptd {:+.4}", s.dimension, s.group, s.accuracy, s.ptd);
            }
            ctx.finish("fairness", config, r, &out)
        }
        EvalCommand::Odds { n, eer, out } => {
            let config = json!({"command": "eval odds", "n": n, "eer": eer});
            ctx.announce(&config);
            let r: IdentificationOdds = identification_odds(n, eer)?;
            println!("1:{}", r.odds_denominator);
            ctx.finish("odds", config, r, &out)
        }
        EvalCommand::Sweep {
            manifest,
            alphas,
            lpc_order,
            out,
        } => {
            let alphas = alphas::parse_alphas(&alphas).map_err(CliError::Usage)?;
            let mut base = McAdamsConfig::default();
            base.lpc_order = lpc_order.unwrap_or(base.lpc_order);
            base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let config = json!({
                "command": "eval sweep",
                "manifest": manifest,
                "alphas": alphas,
                "mcadams": base,
                "options": ctx.opts,
            });
            ctx.announce(&config);
            let corpus = load_corpus(&manifest)?;
            let r: SweepReport = run_sweep(&corpus, &alphas, &base, ctx.seed, &ctx.opts)?;
            println!("baseline EER {:.2}%", r.baseline_eer);
            for row in &r.rows {
                println!("alpha {:.2} EER {:.2}% AUROC {:.2}%", row.alpha, row.eer_percent, row.auroc);
            }
            if let Some(c) = &r.eer_auroc_correlation {
                println!("EER/AUROC pearson r {:.4} p {:.4}", c.r, c.p);
            }
            ctx.finish("sweep", config, r, &out)
        }
        EvalCommand::Invert { manifest, method, out } => {
            let spec = method.spec()?;
            let config = json!({
                "command": "eval invert",
                "manifest": manifest,
                "spec": spec,
                "options": ctx.opts,
            });
            ctx.announce(&config);
            let corpus = load_corpus(&manifest)?;
            let r: InversionReport = run_inversion_attack(&corpus, &spec, ctx.seed, &ctx.opts)?;
            println!(
                "EER original {:.2}% naive {:.2}% inverse {:.2}%",
                r.eer_original, r.eer_naive, r.eer_inverse
            );
            ctx.finish("inversion", config, r, &out)
        }
    }
}

fn csv_out(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(ExperimentError::from)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(ExperimentError::from)?))
}

fn rerender(args: &ReportArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input).map_err(ExperimentError::from)?;
    let value: Value = serde_json::from_str(&text).map_err(ExperimentError::from)?;
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    fn render<T: serde::de::DeserializeOwned + serde::Serialize + CsvTable>(
        value: Value,
        format: ReportFormat,
    ) -> Result<Vec<u8>, CliError> {
        let report: Report<T> = serde_json::from_value(value).map_err(ExperimentError::from)?;
        Ok(render_report(&report, format)?)
    }
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    let bytes = match kind.as_str() {
        "privacy" => render::<PrivacyReport>(value, format)?,
        "pooled" => render::<PooledReport>(value, format)?,
        "utility" => render::<UtilityReport>(value, format)?,
        "fairness" => render::<FairnessReport>(value, format)?,
        "odds" => render::<IdentificationOdds>(value, format)?,
        "sweep" => render::<SweepReport>(value, format)?,
        "inversion" => render::<InversionReport>(value, format)?,
        other => {
            return Err(ExperimentError::Manifest(format!(
                "{}: unknown report kind {other:?}",
                args.input.display()
            ))
            .into())
        }
    };
    match &args.out {
        Some(path) => fs::write(path, bytes).map_err(ExperimentError::from)?,
        None => io::stdout().write_all(&bytes).map_err(ExperimentError::from)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        seed: cli.seed,
        opts: EvalOptions {
            jobs: cli.jobs,
            ..Default::default()
        },
    };
    match cli.command {
        Command::Anonymize { method } => match method {
            AnonymizeCommand::Mcadams { io, params } => anonymize(&ctx, &io, AnonymizerSpec::McAdams(params.config()?)),
            AnonymizeCommand::Pitch { io, params } => anonymize(&ctx, &io, AnonymizerSpec::Pitch(params.config()?)),
        },
        Command::Eval { protocol } => eval(&ctx, protocol),
        Command::Features(args) => {
            ctx.announce(&json!({"command": "features", "input": args.input, "options": ctx.opts}));
            let corpus = load_corpus(&args.input)?;
            let features = ctx.opts.run(|| features_all(&corpus.audio, &ctx.opts.vad))??;
            write_feature_table(&corpus.manifest, &features, csv_out(&args.out)?)?;
            println!("{} utterances, {} features each", features.len(), features.first().map_or(0, Vec::len));
            Ok(())
        }
        Command::Embed(args) => {
            ctx.announce(&json!({"command": "embed", "input": args.input, "options": ctx.opts}));
            let corpus = load_corpus(&args.input)?;
            let embeddings = ctx.opts.run(|| embed_all(&corpus.manifest, &corpus.audio, &ctx.opts.vad))??;
            write_embeddings(&embeddings, csv_out(&args.out)?)?;
            println!("{} embeddings of dimension {}", embeddings.len(), embeddings.first().map_or(0, |e| e.dim()));
            Ok(())
        }
        Command::SynthCorpus(args) => {
            if args.speakers < 2 || args.utterances_per_speaker < 2 {
                return Err(CliError::Usage(
                    "synth-corpus needs --speakers >= 2 and --utterances-per-speaker >= 2".into(),
                ));
            }
            let cfg = SynthConfig {
                n_speakers: args.speakers,
                utterances_per_speaker: args.utterances_per_speaker,
                sample_rate: args.sample_rate,
                seed: ctx.seed,
            };
            ctx.announce(&json!({"command": "synth-corpus", "config": cfg}));
            let corpus = ctx.opts.run(|| synth_corpus(&cfg))??;
            corpus.write(&args.out)?;
            println!(
                "{} speakers, {} utterances in {}",
                corpus.manifest.speakers.len(),
                corpus.audio.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Report(args) => rerender(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let CliError::Usage(_) = e {
                eprintln!("see `voxanon --help`");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
