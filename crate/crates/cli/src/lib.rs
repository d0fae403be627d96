//! Command-line driver for the recomed pipeline and its HTTP service.

pub mod api;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use recomed_core::atc::{load_atc_table, AtcIndex};
use recomed_core::graph::StopList;
use recomed_core::ingest::{build_transaction_db, parse_prescriptions, sample_transactions, write_jsonl};
use recomed_core::metrics::{atc_purity, evaluate_tags, truth_report, TaggedSample};
use recomed_core::recommend::{build_model_with_approval, EngineConfig, Flag, ModelArtifact};
use recomed_core::synth::{generate_records, synthetic_atc_table, GroundTruth, SynthConfig};
use recomed_core::TransactionDB;
use serde_json::json;

use crate::api::{recommend_response, Loaded, ServiceState, DEFAULT_K};

#[derive(Debug, Parser)]
#[command(name = "recomed", version, about = "Co-prescription recommender engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse prescription JSON lines into a transaction database.
    Ingest(IngestArgs),
    /// Draw a uniform random sample of transactions.
    Sample(SampleArgs),
    /// Run the full pipeline and write a model artifact.
    Build(BuildArgs),
    /// Rank co-prescription candidates for the given medicines.
    Recommend(RecommendArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
    /// Generate a synthetic corpus with planted ground truth.
    Synth(SynthArgs),
    /// Score a model against ground truth and/or an expert-tagged sample.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Prescription records, one JSON object per line.
    #[arg(long)]
    input: PathBuf,
    /// Output transaction database (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional ingest report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Prescription records (JSON lines).
    #[arg(long, conflicts_with = "db", required_unless_present = "db")]
    input: Option<PathBuf>,
    /// Transaction database written by `ingest`.
    #[arg(long)]
    db: Option<PathBuf>,
    /// ATC table (TSV or CSV: medicine, code[, description]).
    #[arg(long)]
    atc: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Engine configuration (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
    /// Show the proposed stop list and ask before pruning.
    #[arg(long)]
    confirm_stop: bool,
    /// Also write the rule table as CSV.
    #[arg(long)]
    rules_csv: Option<PathBuf>,
    /// Also write the partition as CSV.
    #[arg(long)]
    partition_csv: Option<PathBuf>,
    /// Build timestamp recorded in the artifact (omitted by default so
    /// rebuilds are byte-identical).
    #[arg(long)]
    built_at: Option<String>,
}

#[derive(Debug, Args, Default)]
struct EngineFlags {
    /// [default: 0.001]
    #[arg(long)]
    min_support: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    min_confidence: Option<f64>,
    /// [default: 5]
    #[arg(long)]
    max_len: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    jenks_k: Option<usize>,
    /// [default: 2]
    #[arg(long)]
    stop_class_count: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    min_jaccard: Option<f64>,
    /// [default: 0.7]
    #[arg(long)]
    eps: Option<f64>,
    /// [default: 3]
    #[arg(long)]
    min_pts: Option<usize>,
    /// [default: 1.0]
    #[arg(long)]
    resolution: Option<f64>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 0.5]
    #[arg(long)]
    w_rule: Option<f64>,
    /// [default: 0.3]
    #[arg(long)]
    w_jaccard: Option<f64>,
    /// [default: 0.2]
    #[arg(long)]
    w_cluster: Option<f64>,
    /// Medicine forced into the stop list (repeatable).
    #[arg(long)]
    forced_stop: Vec<String>,
    /// Medicine kept out of the stop list (repeatable).
    #[arg(long)]
    forced_keep: Vec<String>,
    /// Weak rules flag a candidate only below this lift [default: 1.0].
    #[arg(long, conflicts_with = "discourage_all_weak")]
    discourage_max_lift: Option<f64>,
    /// Flag every candidate reached by a weak rule.
    #[arg(long)]
    discourage_all_weak: bool,
}

impl EngineFlags {
    fn apply(&self, cfg: &mut EngineConfig) -> Result<()> {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(min_support, min_confidence, max_len, jenks_k, stop_class_count, min_jaccard, eps, min_pts, resolution, seed);
        let w = &mut cfg.weights;
        if let Some(v) = self.w_rule {
            w.w_rule = v;
        }
        if let Some(v) = self.w_jaccard {
            w.w_jaccard = v;
        }
        if let Some(v) = self.w_cluster {
            w.w_cluster = v;
        }
        if self.w_rule.is_some() || self.w_jaccard.is_some() || self.w_cluster.is_some() {
            cfg.weights = cfg.weights.normalized()?;
        }
        cfg.forced_stop.extend(self.forced_stop.iter().cloned());
        cfg.forced_keep.extend(self.forced_keep.iter().cloned());
        if self.discourage_all_weak {
            cfg.discourage_max_lift = None;
        } else if let Some(l) = self.discourage_max_lift {
            cfg.discourage_max_lift = Some(l);
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long, env = "RECOMED_MODEL")]
    model: PathBuf,
    /// Medicines already on the prescription; repeat the flag or separate
    /// names with ';'.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ';')]
    meds: Vec<String>,
    #[arg(short, long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Print the API response body instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "RECOMED_MODEL")]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving rx.jsonl, truth.json and atc.tsv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    n_groups: Option<usize>,
    #[arg(long)]
    meds_per_group: Option<usize>,
    #[arg(long)]
    n_stop: Option<usize>,
    #[arg(long)]
    n_noise_meds: Option<usize>,
    #[arg(long)]
    n_prescriptions: Option<usize>,
    #[arg(long)]
    p_stop: Option<f64>,
    #[arg(long)]
    p_noise: Option<f64>,
    #[arg(long)]
    items_min: Option<usize>,
    #[arg(long)]
    items_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, env = "RECOMED_MODEL")]
    model: Option<PathBuf>,
    /// Ground truth written by `synth`.
    #[arg(long, requires = "model")]
    truth: Option<PathBuf>,
    /// Expert-tagged sample CSV (#, Id, Medicine, Tag, ATC Code).
    #[arg(long, conflicts_with = "builtin_sample")]
    tags: Option<PathBuf>,
    /// Use the embedded 30-row expert-tagged sample.
    #[arg(long)]
    builtin_sample: bool,
    /// ATC level for purity.
    #[arg(long, default_value_t = 1)]
    level: usize,
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Sample(a) => sample(a),
        Command::Build(a) => build(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
    }
}

fn read_records_db(path: &Path) -> Result<TransactionDB> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (records, report) = parse_prescriptions(BufReader::new(file))?;
    if report.records_rejected > 0 {
        warn!("{} of {} lines rejected", report.records_rejected, report.lines_read);
    }
    Ok(build_transaction_db(&records)?)
}

fn read_db(path: &Path) -> Result<TransactionDB> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TransactionDB::from_json(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (records, report) = parse_prescriptions(BufReader::new(file))?;
    let db = build_transaction_db(&records)?;
    fs::write(&a.out, db.to_json()?)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    eprintln!(
        "{} records, {} rejected, {} medicines",
        report.records_ok,
        report.records_rejected,
        db.catalog().len()
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let db = read_db(&a.db)?;
    let s = sample_transactions(&db, a.n, a.seed)?;
    fs::write(&a.out, s.to_json()?)?;
    eprintln!("sampled {} of {} transactions", s.n(), db.n());
    Ok(())
}

fn load_atc(path: &Path) -> Result<AtcIndex> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (index, report) = load_atc_table(&text)?;
    for (line, reason) in &report.rejected {
        warn!("atc table line {line}: {reason}");
    }
    Ok(index)
}

fn ask_stop_list(db: &TransactionDB, stop: &StopList) -> bool {
    let mut err = io::stderr();
    let _ = writeln!(err, "proposed stop medicines (classes {:?}):", stop.source_classes);
    for m in &stop.med_ids {
        if let Ok(e) = db.entry(*m) {
            let _ = writeln!(err, "  {} (frequency {})", e.name, e.frequency);
        }
    }
    if !io::stdin().is_terminal() {
        warn!("stdin is not a terminal; accepting the stop list");
        return true;
    }
    let _ = write!(err, "prune these medicines? [y/N] ");
    let _ = err.flush();
    let mut line = String::new();
    io::stdin().lock().read_line(&mut line).is_ok() && matches!(line.trim(), "y" | "Y" | "yes")
}

fn build(a: BuildArgs) -> Result<()> {
    let db = match (&a.input, &a.db) {
        (Some(p), _) => read_records_db(p)?,
        (None, Some(p)) => read_db(p)?,
        (None, None) => bail!("one of --input or --db is required"),
    };
    let atc = load_atc(&a.atc)?;
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).context("parsing engine config")?,
        None => EngineConfig::default(),
    };
    a.engine.apply(&mut cfg)?;
    let confirm = a.confirm_stop;
    let (mut model, rules) = build_model_with_approval(&db, &atc, &cfg, |s| !confirm || ask_stop_list(&db, s))?;
    model.built_at = a.built_at.clone();
    if let Some(p) = &a.rules_csv {
        rules.write_csv(&|m| db.entry(m).map(|e| e.name.clone()).unwrap_or_default(), File::create(p)?)?;
    }
    if let Some(p) = &a.partition_csv {
        model.write_partition_csv(File::create(p)?)?;
    }
    let summary = format!(
        "{} transactions, {} rules, {} stop medicines, {} outliers, {} communities (modularity {:.4})",
        model.n_transactions,
        rules.rules.len(),
        model.stoplist.med_ids.len(),
        model.outliers.med_ids.len(),
        model.partition.len(),
        model.modularity
    );
    ModelArtifact::new(model, rules).save(&a.out)?;
    eprintln!("{summary}");
    info!("wrote {}", a.out.display());
    Ok(())
}

fn recommend_cmd(a: RecommendArgs) -> Result<()> {
    let loaded = Loaded::from_path(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let resp = recommend_response(&loaded, &a.meds, a.k)?;
    let mut out = io::stdout().lock();
    if a.json {
        serde_json::to_writer(&mut out, &resp)?;
        writeln!(out)?;
    } else {
        for (i, r) in resp.recommendations.iter().enumerate() {
            let flag = if r.flag == Flag::Discouraged { "  DISCOURAGED" } else { "" };
            writeln!(out, "{:>3}  {:.4}  {}  [{}]{}", i + 1, r.score, r.name, r.badge, flag)?;
        }
    }
    if !resp.unknown.is_empty() {
        eprintln!("unknown medicines: {}", resp.unknown.join("; "));
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let loaded = Loaded::from_path(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    eprintln!("serving model {} on http://{}", loaded.fingerprint, a.bind);
    let state = ServiceState::new(Some(loaded));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind).await?;
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field {
                cfg.$field = v;
            }
        )*};
    }
    set!(n_groups, meds_per_group, n_stop, n_noise_meds, n_prescriptions, p_stop, p_noise, items_min, items_max, seed);
    let (records, truth) = generate_records(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    write_jsonl(BufWriter::new(File::create(a.out_dir.join("rx.jsonl"))?), &records)?;
    write_json(&a.out_dir.join("truth.json"), &truth)?;
    fs::write(a.out_dir.join("atc.tsv"), synthetic_atc_table(&cfg))?;
    write_json(&a.out_dir.join("synth_config.json"), &cfg)?;
    eprintln!("wrote {} prescriptions to {}", records.len(), a.out_dir.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut report = serde_json::Map::new();
    if let Some(path) = &a.model {
        let loaded = Loaded::from_path(path).with_context(|| format!("loading {}", path.display()))?;
        let model = &loaded.artifact.model;
        report.insert("model_fingerprint".into(), json!(loaded.fingerprint));
        report.insert("atc_purity".into(), serde_json::to_value(atc_purity(model, a.level)?)?);
        if let Some(t) = &a.truth {
            let truth: GroundTruth = serde_json::from_str(&fs::read_to_string(t)?).context("parsing ground truth")?;
            report.insert("truth".into(), serde_json::to_value(truth_report(model, &truth)?)?);
        }
    }
    let sample = match (&a.tags, a.builtin_sample) {
        (Some(p), _) => Some(TaggedSample::from_csv(&fs::read_to_string(p)?)?),
        (None, true) => Some(TaggedSample::expert_sample()),
        (None, false) => None,
    };
    if let Some(s) = sample {
        report.insert("tag_accuracy".into(), json!(evaluate_tags(&s)?));
        report.insert("tagged_rows".into(), json!(s.rows.len()));
    }
    if report.is_empty() {
        bail!("nothing to evaluate: give --model and/or --tags/--builtin-sample");
    }
    serde_json::to_writer_pretty(io::stdout().lock(), &report)?;
    println!();
    Ok(())
}
