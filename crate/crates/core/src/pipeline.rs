//! Command orchestration: run configuration, artifact layout, manifests, and
//! the functions behind each CLI subcommand.
//!
//! Every command reads artifacts produced by earlier stages from one output
//! directory and writes its own artifacts plus a `manifest_<command>.json`
//! describing the run. A single run seed drives every stage; per-stage RNG
//! streams are decorrelated by hashing the seed with a stage tag, so re-running
//! any command with the same config and seed rewrites identical bytes
//! (manifests carry wall time and are exempt).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{sha256_hex, CheckpointError};
use crate::corpus::{
    generate_desk_corpus, generate_references, load_corpus, read_jsonl, train_tokenizer,
    write_jsonl, CorpusError, RatingScale, ReviewRecord, Vocabulary,
};
use crate::eval::{
    ablation_run, alpha_csv, alpha_study, evaluate_entities, AblationInputs, AblationRow,
    AblationVariant, AlphaRow, EvalError, EvalReport, ReferenceSet, SCORING_CONVENTIONS,
};
use crate::induction::{
    train_induction, ContentPlan, InductionConfig, InductionError, InductionModel,
};
use crate::summarizer::{
    aggregate_plans, summarize, train_summarizer, PriorProvider, SummarizerConfig,
    SummarizerError, SummarizerModel,
};
use crate::synthesis::{
    build_dataset, infer_plans, MatchStrategy, ReviewPlan, SynthesisConfig, SynthesisError,
    SyntheticInstance,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing artifact {path}; run `opsum {producer}` first")]
    MissingArtifact { path: String, producer: &'static str },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not encode {what}: {source}")]
    Encode {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl PipelineError {
    /// Process exit code: bad input is distinguishable from a failed run.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::MissingArtifact { .. } => 1,
            _ => 2,
        }
    }
}

/// Decorrelates per-stage RNG streams drawn from the single run seed.
fn stage_seed(seed: u64, stage: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

// --- Run configuration ------------------------------------------------------------

/// Desk corpus generation knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Entities whose reviews form the training corpus.
    pub n_entities: usize,
    pub reviews_per_entity: usize,
    /// Extra entities held out for summarization and scoring.
    pub eval_entities: usize,
    pub references_per_entity: usize,
    pub vocab_size: usize,
    pub rating_scale: RatingScale,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            n_entities: 50,
            reviews_per_entity: 12,
            eval_entities: 10,
            references_per_entity: 3,
            vocab_size: 4000,
            rating_scale: RatingScale::OneToFive,
        }
    }
}

/// Concentration study knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub alphas: Vec<f64>,
    /// Synthetic instances per alpha.
    pub samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { alphas: vec![1.0, 10.0, 100.0], samples: 120 }
    }
}

/// Ablation study knobs; training cost scales with seeds x variants, so the
/// dataset and epoch budget are reduced relative to the main run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub seeds: Vec<u64>,
    pub variants: Vec<AblationVariant>,
    pub dataset_size: usize,
    pub max_epochs: usize,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            seeds: vec![0, 1, 2],
            variants: AblationVariant::ALL.to_vec(),
            dataset_size: 120,
            max_epochs: 6,
        }
    }
}

/// Everything a run needs, as parsed from the JSON config file. Each command
/// reads its own section; the global seed overrides any per-section seed so
/// one value pins the whole run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub corpus: CorpusSection,
    pub induction: InductionConfig,
    pub synthesis: SynthesisConfig,
    pub summarizer: SummarizerConfig,
    pub eval: EvalSection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            seed: 0,
            corpus: CorpusSection::default(),
            // The default run is the desk run, so the desk-tuned settings
            // are the default here; InductionConfig::default() keeps the
            // large-corpus values.
            induction: InductionConfig::desk(),
            // Desk entities hold ~10 candidate reviews each. Retrieval needs
            // slack between pool and selection or plan matching degenerates
            // into taking the whole pool.
            synthesis: SynthesisConfig { n_reviews: 4, ..SynthesisConfig::default() },
            summarizer: SummarizerConfig::desk(),
            eval: EvalSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, PipelineError> {
        serde_json::from_str(text)
            .map_err(|e| PipelineError::Validation(format!("config does not parse: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        RunConfig::from_json(&text)
    }

    /// Checked before any command does work.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Validation(msg));
        if self.out_dir.as_os_str().is_empty() {
            return bad("out_dir must not be empty".into());
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return bad(format!("out_dir {} exists and is not a directory", self.out_dir.display()));
        }
        let c = &self.corpus;
        if c.n_entities == 0 || c.reviews_per_entity == 0 || c.eval_entities == 0 {
            return bad("corpus: entity and review counts must be positive".into());
        }
        if c.references_per_entity == 0 {
            return bad("corpus: references_per_entity must be positive".into());
        }
        if c.vocab_size < 256 {
            return bad(format!("corpus: vocab_size {} is below the minimum 256", c.vocab_size));
        }
        self.induction.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.synthesis.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.summarizer.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        if self.eval.alphas.is_empty() || self.eval.alphas.iter().any(|&a| a <= 0.0) {
            return bad("eval: alphas must be non-empty and positive".into());
        }
        if self.eval.samples == 0 {
            return bad("eval: samples must be positive".into());
        }
        let a = &self.ablation;
        if a.seeds.is_empty() {
            return bad("ablation: at least one seed is required".into());
        }
        if !a.variants.contains(&AblationVariant::Full) {
            return bad("ablation: the full baseline variant is required".into());
        }
        if a.dataset_size == 0 || a.max_epochs == 0 {
            return bad("ablation: dataset_size and max_epochs must be positive".into());
        }
        Ok(())
    }

    fn hash(&self) -> Result<String, PipelineError> {
        let bytes = serde_json::to_vec(self)
            .map_err(|source| PipelineError::Encode { what: "run config", source })?;
        Ok(sha256_hex(&bytes))
    }
}

// --- Artifact layout --------------------------------------------------------------

/// Canonical file layout under one output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Artifacts {
        Artifacts { root: root.to_path_buf() }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }
    pub fn sidecar(&self) -> PathBuf {
        self.root.join("sidecar.jsonl")
    }
    pub fn eval_reviews(&self) -> PathBuf {
        self.root.join("eval_reviews.jsonl")
    }
    pub fn references(&self) -> PathBuf {
        self.root.join("references.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.json")
    }
    pub fn induction_dir(&self) -> PathBuf {
        self.root.join("induction")
    }
    pub fn plans(&self) -> PathBuf {
        self.root.join("plans.jsonl")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }
    pub fn summarizer_dir(&self) -> PathBuf {
        self.root.join("summarizer")
    }
    pub fn summaries(&self) -> PathBuf {
        self.root.join("summaries.jsonl")
    }
    pub fn eval_report(&self) -> PathBuf {
        self.root.join("eval_report.json")
    }
    pub fn baseline_report(&self) -> PathBuf {
        self.root.join("baseline_report.json")
    }
    pub fn alpha_csv(&self) -> PathBuf {
        self.root.join("alpha_study.csv")
    }
    pub fn alpha_json(&self) -> PathBuf {
        self.root.join("alpha_study.json")
    }
    pub fn ablation(&self) -> PathBuf {
        self.root.join("ablation.json")
    }
    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join(format!("manifest_{command}.json"))
    }
}

fn require(path: &Path, producer: &'static str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact { path: path.display().to_string(), producer })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

/// Writes via a temp file and rename so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    let tmp = path.with_file_name(format!("{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T, what: &'static str) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|source| PipelineError::Encode { what, source })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

// --- Manifest ---------------------------------------------------------------------

/// Written at the end of every command; the one artifact exempt from
/// byte-for-byte determinism because it carries wall time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub artifacts: Vec<String>,
    /// The effective configuration after CLI overrides.
    pub config: RunConfig,
}

fn finish(
    cfg: &RunConfig,
    command: &str,
    started: Instant,
    artifacts: Vec<PathBuf>,
) -> Result<RunManifest, PipelineError> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: cfg.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        wall_time_secs: started.elapsed().as_secs_f64(),
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        config: cfg.clone(),
    };
    write_json(&Artifacts::new(&cfg.out_dir).manifest(command), &manifest, "manifest")?;
    log::info!("{command} finished in {:.1}s", manifest.wall_time_secs);
    Ok(manifest)
}

// --- Shared loading helpers -------------------------------------------------------

fn load_train_corpus(paths: &Artifacts, scale: RatingScale) -> Result<Vec<ReviewRecord>, PipelineError> {
    require(&paths.corpus(), "gen-corpus")?;
    Ok(load_corpus(&paths.corpus(), scale)?)
}

fn load_vocab(paths: &Artifacts) -> Result<Vocabulary, PipelineError> {
    require(&paths.vocab(), "gen-corpus")?;
    Ok(Vocabulary::load(&paths.vocab())?)
}

fn vocab_file_sha(paths: &Artifacts) -> Result<String, PipelineError> {
    let bytes = fs::read(paths.vocab()).map_err(|e| io_err(&paths.vocab(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Checkpoints remember the vocabulary they were trained with; refuse to pair
/// them with a different one.
fn check_vocab_sha(meta: &serde_json::Value, expected: &str, what: &str) -> Result<(), PipelineError> {
    match meta.get("vocab_sha256").and_then(|v| v.as_str()) {
        Some(found) if found == expected => Ok(()),
        _ => Err(PipelineError::Validation(format!(
            "{what} checkpoint was trained with a different vocabulary; re-run its training command"
        ))),
    }
}

fn load_induction_checked(paths: &Artifacts) -> Result<InductionModel, PipelineError> {
    require(&paths.induction_dir().join("metadata.json"), "train-induce")?;
    let (model, meta) = InductionModel::load(&paths.induction_dir())?;
    check_vocab_sha(&meta, &vocab_file_sha(paths)?, "induction")?;
    Ok(model)
}

fn load_summarizer_checked(paths: &Artifacts) -> Result<SummarizerModel, PipelineError> {
    require(&paths.summarizer_dir().join("metadata.json"), "train-sum")?;
    let (model, meta) = SummarizerModel::load(&paths.summarizer_dir())?;
    check_vocab_sha(&meta, &vocab_file_sha(paths)?, "summarizer")?;
    Ok(model)
}

fn group_by_entity(records: &[ReviewRecord]) -> BTreeMap<String, Vec<&ReviewRecord>> {
    let mut grouped: BTreeMap<String, Vec<&ReviewRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.entity_id.clone()).or_default().push(r);
    }
    grouped
}

// --- Commands ---------------------------------------------------------------------

/// One generated summary as stored in `summaries.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub entity_id: String,
    pub summary: String,
    #[serde(flatten)]
    pub plan: ContentPlan,
}

/// Generates the desk corpus, held-out reviews with references, and the
/// vocabulary trained on the training split.
pub fn cmd_gen_corpus(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let paths = Artifacts::new(&cfg.out_dir);
    let c = &cfg.corpus;

    // One generator call covers train and eval entities so ids never collide.
    let total = c.n_entities + c.eval_entities;
    let desk = generate_desk_corpus(total, c.reviews_per_entity, stage_seed(cfg.seed, "corpus"));
    let train_cut = c.n_entities * c.reviews_per_entity;
    let (train, eval) = desk.records.split_at(train_cut);
    let sidecar = &desk.sidecar[..train_cut];

    let mut rng = StdRng::seed_from_u64(stage_seed(cfg.seed, "references"));
    let references: Vec<ReferenceSet> = desk.profiles[c.n_entities..]
        .iter()
        .map(|p| ReferenceSet {
            entity_id: p.entity_id.clone(),
            references: generate_references(p, c.references_per_entity, &mut rng),
        })
        .collect();

    let texts: Vec<&str> = train.iter().map(|r| r.text.as_str()).collect();
    let vocab = train_tokenizer(&texts, c.vocab_size);
    log::info!(
        "generated {} training reviews, {} eval reviews, vocabulary of {}",
        train.len(),
        eval.len(),
        vocab.size()
    );

    write_jsonl(&paths.corpus(), train)?;
    write_jsonl(&paths.sidecar(), sidecar)?;
    write_jsonl(&paths.eval_reviews(), eval)?;
    write_jsonl(&paths.references(), &references)?;
    vocab.save(&paths.vocab())?;

    let artifacts = vec![
        paths.corpus(),
        paths.sidecar(),
        paths.eval_reviews(),
        paths.references(),
        paths.vocab(),
    ];
    finish(cfg, "gen-corpus", started, artifacts)
}

/// Trains the plan induction model and writes per-review plans.
pub fn cmd_train_induce(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    let records = load_train_corpus(&paths, cfg.corpus.rating_scale)?;
    let vocab = load_vocab(&paths)?;

    let (model, report) = train_induction(
        &records,
        &vocab,
        cfg.corpus.rating_scale,
        &cfg.induction,
        stage_seed(cfg.seed, "induce"),
    )?;
    let dev_loss = report.dev_losses.get(report.best_epoch.saturating_sub(1)).copied().unwrap_or(0.0);
    model.save(&paths.induction_dir(), &vocab_file_sha(&paths)?, dev_loss, report.best_epoch)?;

    let plans = infer_plans(&records, &vocab, &model);
    write_jsonl(&paths.plans(), &plans)?;
    log::info!("induction kept epoch {} (dev loss {dev_loss:.4})", report.best_epoch);

    finish(cfg, "train-induce", started, vec![paths.induction_dir(), paths.plans()])
}

/// Builds the synthetic training dataset by plan-guided matching.
pub fn cmd_synthesize(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    let records = load_train_corpus(&paths, cfg.corpus.rating_scale)?;
    let vocab = load_vocab(&paths)?;
    require(&paths.plans(), "train-induce")?;
    let plans: Vec<ReviewPlan> = read_jsonl(&paths.plans())?;

    let syn_cfg = SynthesisConfig { seed: stage_seed(cfg.seed, "synthesize"), ..cfg.synthesis.clone() };
    let dataset = build_dataset(&records, &plans, &vocab, &syn_cfg, MatchStrategy::PlanGuided)?;
    write_jsonl(&paths.dataset(), &dataset)?;
    log::info!("synthesized {} instances", dataset.len());

    finish(cfg, "synthesize", started, vec![paths.dataset()])
}

/// Trains the plan-conditioned generator on the synthetic dataset.
pub fn cmd_train_sum(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    let records = load_train_corpus(&paths, cfg.corpus.rating_scale)?;
    let vocab = load_vocab(&paths)?;
    require(&paths.dataset(), "synthesize")?;
    let dataset: Vec<SyntheticInstance> = read_jsonl(&paths.dataset())?;
    let induction = load_induction_checked(&paths)?;

    let sum_cfg = SummarizerConfig { seed: stage_seed(cfg.seed, "train-sum"), ..cfg.summarizer.clone() };
    let prior = PriorProvider::from_config(&sum_cfg, &records, &vocab)?;
    let (model, report) = train_summarizer(&dataset, &induction, &vocab, &prior, &sum_cfg)?;
    let dev_acc =
        report.dev_accuracies.get(report.best_epoch.saturating_sub(1)).copied().unwrap_or(0.0);
    model.save(&paths.summarizer_dir(), &vocab_file_sha(&paths)?, dev_acc, report.best_epoch)?;
    log::info!("summarizer kept epoch {} (dev accuracy {dev_acc:.3})", report.best_epoch);

    finish(cfg, "train-sum", started, vec![paths.summarizer_dir()])
}

/// Summarizes each held-out entity's reviews.
pub fn cmd_summarize(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    require(&paths.eval_reviews(), "gen-corpus")?;
    let eval_reviews: Vec<ReviewRecord> = read_jsonl(&paths.eval_reviews())?;
    let vocab = load_vocab(&paths)?;
    let induction = load_induction_checked(&paths)?;
    let model = load_summarizer_checked(&paths)?;

    let sum_cfg = SummarizerConfig { seed: stage_seed(cfg.seed, "train-sum"), ..cfg.summarizer.clone() };
    let mut rows = Vec::new();
    for (entity_id, reviews) in group_by_entity(&eval_reviews) {
        let tokenized: Vec<Vec<u32>> = reviews.iter().map(|r| vocab.tokenize(&r.text)).collect();
        let ids = summarize(&tokenized, &induction, &model, &sum_cfg)?;
        let plans: Vec<ContentPlan> =
            tokenized.iter().filter(|t| !t.is_empty()).map(|t| induction.infer_plan(t)).collect();
        rows.push(SummaryRow {
            entity_id,
            summary: vocab.detokenize(&ids),
            plan: aggregate_plans(&plans)?,
        });
    }
    write_jsonl(&paths.summaries(), &rows)?;
    log::info!("wrote {} summaries", rows.len());

    finish(cfg, "summarize", started, vec![paths.summaries()])
}

/// Scores generated summaries against references, plus a baseline that
/// passes off one randomly chosen input review as the summary.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    require(&paths.summaries(), "summarize")?;
    require(&paths.references(), "gen-corpus")?;
    require(&paths.eval_reviews(), "gen-corpus")?;
    let rows: Vec<SummaryRow> = read_jsonl(&paths.summaries())?;
    let references: Vec<ReferenceSet> = read_jsonl(&paths.references())?;
    let eval_reviews: Vec<ReviewRecord> = read_jsonl(&paths.eval_reviews())?;
    let config_hash = cfg.hash()?;

    let summaries: Vec<(String, String)> =
        rows.iter().map(|r| (r.entity_id.clone(), r.summary.clone())).collect();
    let (per_instance, means) = evaluate_entities(&summaries, &references)?;
    let report = EvalReport {
        conventions: SCORING_CONVENTIONS.to_string(),
        config_hash: config_hash.clone(),
        seed: cfg.seed,
        per_instance,
        means,
    };
    write_json(&paths.eval_report(), &report, "eval report")?;

    let mut rng = StdRng::seed_from_u64(stage_seed(cfg.seed, "baseline"));
    let picks: Vec<(String, String)> = group_by_entity(&eval_reviews)
        .into_iter()
        .map(|(entity_id, reviews)| {
            let choice = reviews[rng.gen_range(0..reviews.len())];
            (entity_id, choice.text.clone())
        })
        .collect();
    let (base_instances, base_means) = evaluate_entities(&picks, &references)?;
    let baseline = EvalReport {
        conventions: SCORING_CONVENTIONS.to_string(),
        config_hash,
        seed: cfg.seed,
        per_instance: base_instances,
        means: base_means,
    };
    write_json(&paths.baseline_report(), &baseline, "baseline report")?;
    log::info!(
        "rouge-1 f1 {:.4} (random-review baseline {:.4})",
        report.means.r1,
        baseline.means.r1
    );

    finish(cfg, "evaluate", started, vec![paths.eval_report(), paths.baseline_report()])
}

/// Measures input/summary overlap as the Dirichlet concentration grows.
pub fn cmd_alpha_study(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    let records = load_train_corpus(&paths, cfg.corpus.rating_scale)?;
    let vocab = load_vocab(&paths)?;
    require(&paths.plans(), "train-induce")?;
    let plans: Vec<ReviewPlan> = read_jsonl(&paths.plans())?;

    let base = SynthesisConfig { seed: stage_seed(cfg.seed, "alpha"), ..cfg.synthesis.clone() };
    let rows: Vec<AlphaRow> =
        alpha_study(&records, &plans, &vocab, &base, &cfg.eval.alphas, cfg.eval.samples)?;
    write_atomic(&paths.alpha_csv(), alpha_csv(&rows).as_bytes())?;
    write_json(&paths.alpha_json(), &rows, "alpha study")?;
    for r in &rows {
        log::info!("alpha {:>6.1}: input/summary rouge-1 f1 {:.4}", r.alpha, r.r1);
    }

    finish(cfg, "alpha-study", started, vec![paths.alpha_csv(), paths.alpha_json()])
}

/// Trains and scores every requested variant over the shared seed list.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let paths = Artifacts::new(&cfg.out_dir);
    let records = load_train_corpus(&paths, cfg.corpus.rating_scale)?;
    let vocab = load_vocab(&paths)?;
    require(&paths.plans(), "train-induce")?;
    let plans: Vec<ReviewPlan> = read_jsonl(&paths.plans())?;
    require(&paths.eval_reviews(), "gen-corpus")?;
    let eval_reviews: Vec<ReviewRecord> = read_jsonl(&paths.eval_reviews())?;
    require(&paths.references(), "gen-corpus")?;
    let references: Vec<ReferenceSet> = read_jsonl(&paths.references())?;
    let induction = load_induction_checked(&paths)?;

    // Seeds come from the ablation section itself: they are experiment
    // identity, shared across variants, not derived from the run seed.
    let synthesis = SynthesisConfig { dataset_size: cfg.ablation.dataset_size, ..cfg.synthesis.clone() };
    let summarizer = SummarizerConfig { max_epochs: cfg.ablation.max_epochs, ..cfg.summarizer.clone() };
    let inputs = AblationInputs {
        records: &records,
        plans: &plans,
        vocab: &vocab,
        induction: &induction,
        eval_reviews: &eval_reviews,
        references: &references,
        synthesis: &synthesis,
        summarizer: &summarizer,
        seeds: &cfg.ablation.seeds,
    };
    let rows: Vec<AblationRow> = ablation_run(&inputs, &cfg.ablation.variants)?;
    write_json(&paths.ablation(), &rows, "ablation")?;
    for r in &rows {
        log::info!("{:<16} rouge-l f1 {:.4} (delta {:+.4})", r.variant, r.rl, r.delta_rl);
    }

    finish(cfg, "ablate", started, vec![paths.ablation()])
}

/// Runs the whole chain: corpus, induction, synthesis, generator, summaries,
/// scores. Studies are separate commands.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    let mut artifacts = Vec::new();
    for stage in [
        cmd_gen_corpus,
        cmd_train_induce,
        cmd_synthesize,
        cmd_train_sum,
        cmd_summarize,
        cmd_evaluate,
    ] {
        let manifest = stage(cfg)?;
        artifacts.extend(manifest.artifacts.into_iter().map(PathBuf::from));
    }
    finish(cfg, "pipeline", started, artifacts)
}
