use std::collections::BTreeMap;
use std::env;
use std::path::Path;

use opsum_core::corpus::{load_corpus, RatingScale, ReviewRecord, Vocabulary};
use opsum_core::eval::{evaluate_entities, ReferenceSet};
use opsum_core::induction::InductionModel;
use opsum_core::summarizer::{
    summarize, train_summarizer, unigram_prior, PriorProvider, SummarizerConfig,
};
use opsum_core::synthesis::{build_dataset, MatchStrategy, ReviewPlan, SynthesisConfig};

fn envf(name: &str, default: f64) -> f64 {
    env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn main() {
    let dir = env::var("DIR").unwrap_or_else(|_| "/tmp/e2e2".into());
    let root = Path::new(&dir);
    let records: Vec<ReviewRecord> = load_corpus(&root.join("corpus.jsonl"), RatingScale::OneToFive).unwrap();
    let vocab = Vocabulary::load(&root.join("vocab.json")).unwrap();
    let plans: Vec<ReviewPlan> = read_jsonl(&root.join("plans.jsonl"));
    let eval_reviews: Vec<ReviewRecord> = read_jsonl(&root.join("eval_reviews.jsonl"));
    let references: Vec<ReferenceSet> = read_jsonl(&root.join("references.jsonl"));
    let (induction, _) = InductionModel::load(&root.join("induction")).unwrap();

    let seed = envf("SEED", 2.0) as u64;
    let dataset_size = envf("DS", 120.0) as usize;
    let variant = env::var("VARIANT").unwrap_or_else(|_| "full".into());

    let strategy = if variant == "random_sampling" { MatchStrategy::Random } else { MatchStrategy::PlanGuided };
    let syn_cfg = SynthesisConfig {
        seed,
        dataset_size,
        n_reviews: 4,
        ..SynthesisConfig::default()
    };
    let dataset = build_dataset(&records, &plans, &vocab, &syn_cfg, strategy).unwrap();
    println!("dataset: {} instances", dataset.len());

    let sum_cfg = SummarizerConfig {
        seed,
        use_plan: variant != "no_content_plan",
        mean_fusion: variant == "mean_fusion",
        max_epochs: envf("EP", 60.0) as usize,
        ..SummarizerConfig::desk()
    };
    let prior = match variant.as_str() {
        "uniform_prior" => PriorProvider::Uniform(vocab.size()),
        _ => PriorProvider::Unigram(unigram_prior(&records, &vocab)),
    };
    let (model, report) = train_summarizer(&dataset, &induction, &vocab, &prior, &sum_cfg).unwrap();
    println!("best_epoch {} dev_acc {:?}", report.best_epoch,
        report.dev_accuracies.get(report.best_epoch.saturating_sub(1)));

    let mut grouped: BTreeMap<&str, Vec<Vec<u32>>> = BTreeMap::new();
    for r in &eval_reviews {
        grouped.entry(&r.entity_id).or_default().push(vocab.tokenize(&r.text));
    }
    let summaries: Vec<(String, String)> = grouped
        .iter()
        .map(|(entity, reviews)| {
            let ids = summarize(reviews, &induction, &model, &sum_cfg).unwrap();
            (entity.to_string(), vocab.detokenize(&ids))
        })
        .collect();
    for (e, s) in &summaries {
        println!("[{e}] {s}");
    }
    let (_, means) = evaluate_entities(&summaries, &references).unwrap();
    println!("variant {variant} seed {seed} ds {dataset_size}: R1 {:.4} R2 {:.4} RL {:.4}", means.r1, means.r2, means.rl);
}
