use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use radcap_core::caption::{CaptionBackend, CaptionPipeline, HttpBackend, StubBackend};
use radcap_core::classifier::{train, Checkpoint, ModalityClassifier};
use radcap_core::config::{AppConfig, BackendKind};
use radcap_core::data_io::{extract_weak_modality, load_dataset, load_image, ImageSample};
use radcap_core::evaluation::{parse_eval_jsonl, EvalItem, Evaluator, Lexicon};
use radcap_core::question::{analyze, ConceptDictionary, BUILTIN_LEXICON};
use radcap_core::synthetic::SyntheticSpec;
use radcap_core::text::HashingEmbedder;
use radcap_core::{Error, Modality};

const BACKEND_URL_ENV: &str = "MEDCAP_BACKEND_URL";

#[derive(Parser)]
#[command(name = "radcap", version, about = "Modality-aware, question-guided medical image captioning")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for initialisation, data order and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the modality classifier and write a checkpoint.
    TrainModality {
        /// Dataset JSON (overrides data.dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Train on N procedurally generated images per class instead of a dataset.
        #[arg(long, conflicts_with = "dataset")]
        synthetic: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path (overrides `checkpoint`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the modality of one image.
    PredictModality {
        image: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Caption an image guided by a question.
    Caption {
        image: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Print the fused prompt before the caption.
        #[arg(long)]
        emit_prompt: bool,
        /// Write the full caption record as JSON here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Score captions listed in a JSON-lines file.
    Evaluate {
        input: PathBuf,
        /// Directory for report.json and report.csv (overrides output_dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Weight overrides, e.g. `alpha1=0.5,gamma2=0`.
        #[arg(long)]
        weights: Option<String>,
        /// Dataset label for the CSV row.
        #[arg(long, default_value = "dataset")]
        dataset_name: String,
    },
    /// Print the clinical-focus analysis of a question.
    AnalyzeQuestion { question: String },
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Stub,
    Http,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Schema { .. }
        | Error::Decode { .. }
        | Error::Data(_)
        | Error::ZeroVector
        | Error::Dimension { .. } => 3,
        Error::Backend(_) => 4,
        _ => 5,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let message = match err.stage() {
            Some(stage) => format!("stage={stage}: {}", err.root()),
            None => err.to_string(),
        };
        Self {
            code: exit_code(&err),
            message,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<AppConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.ssl.seed = cfg.seed;
    cfg.generation.seed = cfg.seed;
    if let Ok(url) = std::env::var(BACKEND_URL_ENV) {
        cfg.backend.http.endpoint = url;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::TrainModality {
            dataset,
            synthetic,
            epochs,
            out,
        } => {
            if let Some(e) = epochs {
                cfg.ssl.epochs = e;
            }
            if dataset.is_some() {
                cfg.data.dataset = dataset;
            }
            cfg.checkpoint = out.or(cfg.checkpoint);
            cfg.validate()?;
            cmd_train(&cfg, synthetic)
        }
        Command::PredictModality {
            image,
            checkpoint,
            format,
        } => {
            let classifier = load_classifier(checkpoint.or(cfg.checkpoint.clone()))?;
            let sample = read_image(&image, classifier.model().config().input_size)?;
            let pred = classifier.predict(&sample)?;
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::json!({ "modality": pred.modality, "confidence": pred.confidence })
                ),
                Format::Text => println!("{} ({:.4})", pred.modality, pred.confidence),
            }
            Ok(())
        }
        Command::Caption {
            image,
            question,
            checkpoint,
            backend,
            emit_prompt,
            record,
        } => {
            match backend {
                Some(BackendArg::Stub) => cfg.backend.kind = BackendKind::Stub,
                Some(BackendArg::Http) => cfg.backend.kind = BackendKind::Http,
                None => {}
            }
            let classifier = load_classifier(checkpoint.or(cfg.checkpoint.clone()))?;
            let sample = read_image(&image, classifier.model().config().input_size)?;
            let pipeline = build_pipeline(&cfg, classifier)?;
            let started = Instant::now();
            let rec = pipeline.caption(&sample, &question, &cfg.generation)?;
            if emit_prompt {
                println!("{}", rec.prompt.fused_text);
                println!("---");
            }
            println!("{}", rec.caption);
            if let Some(path) = record {
                write_file(&path, &(serde_json::to_string_pretty(&rec).expect("record serialises") + "\n"))?;
                write_metadata(&path, started, &[("backend", rec.backend_id.clone())])?;
            }
            Ok(())
        }
        Command::Evaluate {
            input,
            out_dir,
            weights,
            dataset_name,
        } => {
            if let Some(spec) = weights {
                apply_weights(&mut cfg, &spec)?;
            }
            cfg.validate()?;
            let out_dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
            cmd_evaluate(&cfg, &input, &out_dir, &dataset_name)
        }
        Command::AnalyzeQuestion { question } => {
            let provider = HashingEmbedder::default();
            let dict = load_dictionary(&cfg, &provider)?;
            let analysis = analyze(&question, &dict, &provider, &cfg.analyzer)?;
            println!("{}", serde_json::to_string_pretty(&analysis).expect("analysis serialises"));
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", AppConfig::default().to_toml());
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Wall-clock details go beside the primary output so that output stays
/// byte-identical across runs.
fn write_metadata(primary: &Path, started: Instant, extra: &[(&str, String)]) -> CliResult<()> {
    let mut meta = serde_json::Map::new();
    meta.insert("elapsed_ms".into(), (started.elapsed().as_millis() as u64).into());
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    meta.insert("finished_unix".into(), now.into());
    for (k, v) in extra {
        meta.insert((*k).into(), v.clone().into());
    }
    let mut path = primary.as_os_str().to_owned();
    path.push(".meta.json");
    write_file(Path::new(&path), &(serde_json::Value::Object(meta).to_string() + "\n"))
}

fn read_image(path: &Path, size: usize) -> CliResult<ImageSample> {
    Ok(load_image(path, Some((size, size)))?.with_id(path.display().to_string()))
}

fn load_classifier(path: Option<PathBuf>) -> CliResult<ModalityClassifier> {
    let path = path.ok_or_else(|| Failure::config("no checkpoint given (set `checkpoint` or pass --checkpoint)"))?;
    if !path.is_file() {
        return Err(Failure::config(format!("checkpoint {} does not exist", path.display())));
    }
    ModalityClassifier::load(&path).map_err(|e| Failure::config(format!("checkpoint {}: {e}", path.display())))
}

fn load_dictionary(cfg: &AppConfig, provider: &HashingEmbedder) -> CliResult<ConceptDictionary> {
    let text = match &cfg.data.lexicon {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Failure::config(format!("data.lexicon {}: {e}", path.display())))?,
        None => BUILTIN_LEXICON.to_string(),
    };
    let dict = ConceptDictionary::from_tsv(&text, provider)?;
    for w in dict.warnings() {
        log::warn!("{w}");
    }
    Ok(dict)
}

fn load_lexicon(cfg: &AppConfig) -> CliResult<Lexicon> {
    let mut lexicon = match &cfg.data.lexicon {
        Some(path) => Lexicon::load(path).map_err(|e| Failure::config(format!("data.lexicon: {e}")))?,
        None => Lexicon::builtin(),
    };
    if let Some(path) = &cfg.data.flat_terms {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("data.flat_terms {}: {e}", path.display())))?;
        lexicon.add_flat_terms(&text);
    }
    Ok(lexicon)
}

fn build_pipeline(cfg: &AppConfig, classifier: ModalityClassifier) -> CliResult<CaptionPipeline> {
    let provider = HashingEmbedder::default();
    let dictionary = load_dictionary(cfg, &provider)?;
    let backend: Box<dyn CaptionBackend> = match cfg.backend.kind {
        BackendKind::Stub => Box::new(StubBackend),
        BackendKind::Http => Box::new(HttpBackend::new(cfg.backend.http.clone())?),
    };
    Ok(CaptionPipeline {
        classifier,
        dictionary,
        provider: Box::new(provider),
        analyzer: cfg.analyzer.clone(),
        templates: cfg.prompt.clone(),
        backend,
        max_inflight: cfg.backend.max_inflight,
    })
}

fn apply_weights(cfg: &mut AppConfig, spec: &str) -> CliResult<()> {
    let w = &mut cfg.evaluation.weights;
    for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--weights: expected key=value, got `{pair}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::config(format!("--weights: `{value}` is not a number")))?;
        let slot = match key.trim() {
            "alpha1" => &mut w.alpha1,
            "alpha2" => &mut w.alpha2,
            "beta1" => &mut w.beta1,
            "beta2" => &mut w.beta2,
            "beta3" => &mut w.beta3,
            "gamma1" => &mut w.gamma1,
            "gamma2" => &mut w.gamma2,
            other => return Err(Failure::config(format!("--weights: unknown weight `{other}`"))),
        };
        *slot = value;
    }
    Ok(())
}

fn cmd_evaluate(cfg: &AppConfig, input: &Path, out_dir: &Path, dataset_name: &str) -> CliResult<()> {
    let started = Instant::now();
    let text = std::fs::read_to_string(input).map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
    let rows = parse_eval_jsonl(&text).map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
    let base = input.parent().unwrap_or(Path::new("."));
    let mut items = Vec::with_capacity(rows.len());
    for row in rows {
        let path = if row.image_path.is_absolute() { row.image_path.clone() } else { base.join(&row.image_path) };
        items.push(EvalItem {
            record_id: row.record_id,
            image: load_image(&path, None)?,
            question: row.question,
            caption: row.caption,
        });
    }
    let mut evaluator = Evaluator::stub(cfg.evaluation.weights.clone())?;
    evaluator.lexicon = load_lexicon(cfg)?;
    evaluator.dictionary = load_dictionary(cfg, &HashingEmbedder::default())?;
    evaluator.analyzer = cfg.analyzer.clone();
    evaluator.rubric = cfg.evaluation.rubric.clone();
    let report = evaluator.evaluate_batch(&items)?;
    let json_path = out_dir.join("report.json");
    write_file(&json_path, &report.to_json())?;
    write_file(&out_dir.join("report.csv"), &report.to_csv(dataset_name))?;
    write_metadata(&json_path, started, &[("records", report.records.len().to_string())])?;
    println!("{}", report.aggregate.csv_row(dataset_name));
    Ok(())
}

fn cmd_train(cfg: &AppConfig, synthetic: Option<usize>) -> CliResult<()> {
    let started = Instant::now();
    let checkpoint_path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| Failure::config("no output checkpoint (set `checkpoint` or pass --out)"))?;
    let size = cfg.model.input_size;
    let (labeled, unlabeled) = match synthetic {
        Some(per_class) => {
            let spec = SyntheticSpec {
                size,
                ..SyntheticSpec::default()
            };
            let all = spec.generate(per_class, cfg.seed);
            // A tenth keeps its label; the rest is treated as unlabeled.
            let cut = (all.len() / 10).max(Modality::COUNT);
            let (l, u) = all.split_at(cut.min(all.len()));
            (l.to_vec(), u.iter().map(|s| s.clone().with_label(None)).collect())
        }
        None => load_training_images(cfg)?,
    };
    log::info!("training on {} labeled and {} unlabeled images", labeled.len(), unlabeled.len());
    let outcome = train(&cfg.model, &labeled, &unlabeled, &cfg.ssl)?;
    outcome.checkpoint.save(&checkpoint_path)?;
    Checkpoint::load(&checkpoint_path)?;

    let log_lines: String = outcome
        .history
        .iter()
        .map(|l| serde_json::to_string(l).expect("log serialises") + "\n")
        .collect();
    let mut log_path = checkpoint_path.as_os_str().to_owned();
    log_path.push(".log.jsonl");
    write_file(Path::new(&log_path), &log_lines)?;
    write_metadata(&checkpoint_path, started, &[])?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": checkpoint_path,
            "epoch": outcome.checkpoint.epoch,
            "metrics": outcome.checkpoint.metrics,
        })
    );
    Ok(())
}

/// One image per distinct path. An image is labeled when its records agree
/// on a modality (explicit field, else keywords); conflicting images are
/// dropped.
fn load_training_images(cfg: &AppConfig) -> CliResult<(Vec<ImageSample>, Vec<ImageSample>)> {
    let dataset = cfg
        .data
        .dataset
        .as_ref()
        .ok_or_else(|| Failure::config("data.dataset is not set (pass --dataset or --synthetic)"))?;
    if !dataset.is_file() {
        return Err(Failure::config(format!("data.dataset: {} does not exist", dataset.display())));
    }
    let records = load_dataset(dataset, cfg.data.format)?;
    let root = cfg
        .data
        .image_root
        .clone()
        .unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).to_path_buf());

    let mut labels: BTreeMap<String, Vec<Option<Modality>>> = BTreeMap::new();
    for r in &records {
        let label = r.modality_label.or_else(|| extract_weak_modality(&r.question, &r.answer));
        labels.entry(r.image_path.clone()).or_default().push(label);
    }
    let size = cfg.model.input_size;
    let (mut labeled, mut unlabeled) = (Vec::new(), Vec::new());
    let mut dropped = 0;
    for (path, found) in labels {
        let mut distinct: Vec<Modality> = found.into_iter().flatten().collect();
        distinct.sort();
        distinct.dedup();
        if distinct.len() > 1 {
            dropped += 1;
            continue;
        }
        let image = load_image(root.join(&path), Some((size, size)))?.with_id(path);
        match distinct.first() {
            Some(m) => labeled.push(image.with_label(Some(*m))),
            None => unlabeled.push(image.with_label(None)),
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} images with conflicting modality labels");
    }
    if labeled.is_empty() {
        return Err(Failure::data("no labeled images found in the dataset"));
    }
    Ok((labeled, unlabeled))
}
