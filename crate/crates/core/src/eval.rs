//! ROUGE scoring and the evaluation studies built on it.
//!
//! Scoring conventions are deliberately plain and are embedded in every
//! report so numbers stay self-describing: lowercase, split on
//! non-alphanumeric runs, no stemming or stopword removal; multi-reference
//! scores take the per-metric maximum F1; ROUGE-L runs one LCS over the
//! whole summary.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{ReviewRecord, Vocabulary};
use crate::induction::InductionModel;
use crate::summarizer::{
    summarize, train_summarizer, unigram_prior, PriorProvider, SummarizerConfig, SummarizerError,
};
use crate::synthesis::{
    build_dataset, MatchStrategy, ReviewPlan, SynthesisConfig, SynthesisError,
};

/// Scoring conventions, embedded verbatim in report metadata.
pub const CONVENTIONS: &str = "rouge: lowercase, split on non-alphanumeric runs, no stemming, \
     no stopword removal; multi-reference: per-metric max F1; rouge-l: whole-summary LCS";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no summaries to evaluate")]
    Empty,
    #[error("entity ids without a counterpart: {0:?}")]
    Unmatched(Vec<String>),
    #[error("entity {0} has no references")]
    NoReferences(String),
    #[error("invalid ablation setup: {0}")]
    Ablation(&'static str),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
}

/// Precision, recall, F1 for one metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// The three ROUGE variants for one candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub r1: Prf,
    pub r2: Prf,
    pub rl: Prf,
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn rouge_tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Clipped n-gram overlap. Empty candidate or reference scores zero.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Prf {
    assert!(n >= 1);
    if candidate.len() < n || reference.len() < n {
        return Prf::default();
    }
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in reference.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for gram in candidate.windows(n) {
        if let Some(c) = ref_counts.get_mut(gram) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let cand_total = candidate.len() - n + 1;
    let ref_total = reference.len() - n + 1;
    Prf::new(overlap as f64 / cand_total as f64, overlap as f64 / ref_total as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence overlap over the whole summary.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let l = lcs_len(candidate, reference) as f64;
    Prf::new(l / candidate.len() as f64, l / reference.len() as f64)
}

fn score_tokens(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore {
        r1: rouge_n(candidate, reference, 1),
        r2: rouge_n(candidate, reference, 2),
        rl: rouge_l(candidate, reference),
    }
}

/// Scores one candidate against its full text pair.
pub fn score_pair(candidate: &str, reference: &str) -> RougeScore {
    score_tokens(&rouge_tokenize(candidate), &rouge_tokenize(reference))
}

/// Multi-reference score: each metric independently keeps the reference
/// with the highest F1 (first reference wins ties).
pub fn score_instance(candidate: &str, references: &[String]) -> RougeScore {
    assert!(!references.is_empty(), "score_instance needs at least one reference");
    let cand = rouge_tokenize(candidate);
    let mut best = RougeScore::default();
    for (i, r) in references.iter().enumerate() {
        let s = score_tokens(&cand, &rouge_tokenize(r));
        if i == 0 || s.r1.f1 > best.r1.f1 {
            best.r1 = s.r1;
        }
        if i == 0 || s.r2.f1 > best.r2.f1 {
            best.r2 = s.r2;
        }
        if i == 0 || s.rl.f1 > best.rl.f1 {
            best.rl = s.rl;
        }
    }
    best
}

// --- Dataset-level evaluation ---------------------------------------------------

/// One entity's reference summaries, as stored in `references.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub entity_id: String,
    pub references: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceScore {
    pub entity_id: String,
    #[serde(flatten)]
    pub score: RougeScore,
}

/// Mean F1 per metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

pub fn mean_scores(scores: &[InstanceScore]) -> MeanScores {
    if scores.is_empty() {
        return MeanScores::default();
    }
    let n = scores.len() as f64;
    MeanScores {
        r1: scores.iter().map(|s| s.score.r1.f1).sum::<f64>() / n,
        r2: scores.iter().map(|s| s.score.r2.f1).sum::<f64>() / n,
        rl: scores.iter().map(|s| s.score.rl.f1).sum::<f64>() / n,
    }
}

/// Scores generated summaries against references, aligned by entity id.
/// Instances come back sorted by entity id. Ids on either side without a
/// counterpart are an error, as is an empty summary set.
pub fn evaluate_entities(
    summaries: &[(String, String)],
    references: &[ReferenceSet],
) -> Result<(Vec<InstanceScore>, MeanScores), EvalError> {
    if summaries.is_empty() {
        return Err(EvalError::Empty);
    }
    let refs: BTreeMap<&str, &ReferenceSet> =
        references.iter().map(|r| (r.entity_id.as_str(), r)).collect();
    let sums: BTreeMap<&str, &str> =
        summaries.iter().map(|(e, s)| (e.as_str(), s.as_str())).collect();
    let mut missing: Vec<String> = sums
        .keys()
        .filter(|e| !refs.contains_key(*e))
        .map(|e| format!("{e} (no references)"))
        .collect();
    missing.extend(
        refs.keys().filter(|e| !sums.contains_key(*e)).map(|e| format!("{e} (no summary)")),
    );
    if !missing.is_empty() {
        return Err(EvalError::Unmatched(missing));
    }

    let mut per_instance = Vec::with_capacity(sums.len());
    for (entity, text) in &sums {
        let rs = refs[entity];
        if rs.references.is_empty() {
            return Err(EvalError::NoReferences(entity.to_string()));
        }
        per_instance.push(InstanceScore {
            entity_id: entity.to_string(),
            score: score_instance(text, &rs.references),
        });
    }
    let means = mean_scores(&per_instance);
    Ok((per_instance, means))
}

/// Scorer conventions echoed into every report so numbers are self-describing.
pub const SCORING_CONVENTIONS: &str =
    "rouge-1/2/l f1; tokens lowercased, split on non-alphanumeric; multi-reference max per metric";

/// The full evaluation artifact written as `eval_report.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub conventions: String,
    pub config_hash: String,
    pub seed: u64,
    pub per_instance: Vec<InstanceScore>,
    pub means: MeanScores,
}

// --- Dirichlet concentration study ----------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

/// Measures how much retrieved input reviews overlap their pseudo-summary
/// as the Dirichlet concentration grows: for each alpha, builds `samples`
/// synthetic instances (shared base seed, so rows are paired) and averages
/// input-vs-summary ROUGE F1 over all inputs of all instances.
pub fn alpha_study(
    records: &[ReviewRecord],
    plans: &[ReviewPlan],
    vocab: &Vocabulary,
    base: &SynthesisConfig,
    alphas: &[f64],
    samples: usize,
) -> Result<Vec<AlphaRow>, EvalError> {
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = SynthesisConfig {
            alpha_a: alpha,
            alpha_s: alpha,
            dataset_size: samples,
            ..base.clone()
        };
        let data = build_dataset(records, plans, vocab, &cfg, MatchStrategy::PlanGuided)?;
        let (mut r1, mut r2, mut rl, mut n) = (0.0, 0.0, 0.0, 0usize);
        for inst in &data {
            for input in &inst.inputs {
                let s = score_pair(input, &inst.summary);
                r1 += s.r1.f1;
                r2 += s.r2.f1;
                rl += s.rl.f1;
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        rows.push(AlphaRow { alpha, r1: r1 / n, r2: r2 / n, rl: rl / n });
    }
    Ok(rows)
}

/// Plot-ready CSV for the alpha study.
pub fn alpha_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,r1,r2,rl\n");
    for r in rows {
        out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.alpha, r.r1, r.r2, r.rl));
    }
    out
}

// --- Ablation study --------------------------------------------------------------

/// Reduced-capability configurations compared against the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// The reference configuration every delta is measured against.
    Full,
    /// Input reviews sampled uniformly instead of by plan similarity.
    RandomSampling,
    /// Decoder runs with zeroed plan encodings.
    NoContentPlan,
    /// Occurrence encodings averaged instead of summed.
    MeanFusion,
    /// Smoothing toward the uniform distribution instead of the LM prior.
    UniformPrior,
}

impl AblationVariant {
    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::RandomSampling => "random_sampling",
            AblationVariant::NoContentPlan => "no_content_plan",
            AblationVariant::MeanFusion => "mean_fusion",
            AblationVariant::UniformPrior => "uniform_prior",
        }
    }

    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::RandomSampling,
        AblationVariant::NoContentPlan,
        AblationVariant::MeanFusion,
        AblationVariant::UniformPrior,
    ];
}

/// Everything the ablation runner shares across variants.
pub struct AblationInputs<'a> {
    pub records: &'a [ReviewRecord],
    pub plans: &'a [ReviewPlan],
    pub vocab: &'a Vocabulary,
    pub induction: &'a InductionModel,
    /// Held-out reviews to summarize, grouped by entity at run time.
    pub eval_reviews: &'a [ReviewRecord],
    pub references: &'a [ReferenceSet],
    pub synthesis: &'a SynthesisConfig,
    pub summarizer: &'a SummarizerConfig,
    /// One full train/evaluate cycle per seed; rows average over them.
    pub seeds: &'a [u64],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
    pub delta_r1: f64,
    pub delta_r2: f64,
    pub delta_rl: f64,
    pub per_seed_rl: Vec<f64>,
}

/// One train/summarize/score cycle for a single variant and seed.
fn variant_means(
    inputs: &AblationInputs,
    variant: AblationVariant,
    seed: u64,
) -> Result<MeanScores, EvalError> {
    let strategy = match variant {
        AblationVariant::RandomSampling => MatchStrategy::Random,
        _ => MatchStrategy::PlanGuided,
    };
    let syn_cfg = SynthesisConfig { seed, ..inputs.synthesis.clone() };
    let dataset = build_dataset(inputs.records, inputs.plans, inputs.vocab, &syn_cfg, strategy)?;

    let sum_cfg = SummarizerConfig {
        seed,
        use_plan: variant != AblationVariant::NoContentPlan,
        mean_fusion: variant == AblationVariant::MeanFusion,
        ..inputs.summarizer.clone()
    };
    let prior = match variant {
        AblationVariant::UniformPrior => PriorProvider::Uniform(inputs.vocab.size()),
        _ => PriorProvider::Unigram(unigram_prior(inputs.records, inputs.vocab)),
    };
    let (model, _) = train_summarizer(&dataset, inputs.induction, inputs.vocab, &prior, &sum_cfg)?;

    let mut grouped: BTreeMap<&str, Vec<Vec<u32>>> = BTreeMap::new();
    for r in inputs.eval_reviews {
        grouped.entry(&r.entity_id).or_default().push(inputs.vocab.tokenize(&r.text));
    }
    let summaries: Vec<(String, String)> = grouped
        .iter()
        .map(|(entity, reviews)| {
            let ids = summarize(reviews, inputs.induction, &model, &sum_cfg)?;
            Ok((entity.to_string(), inputs.vocab.detokenize(&ids)))
        })
        .collect::<Result<_, SummarizerError>>()?;
    let (_, means) = evaluate_entities(&summaries, inputs.references)?;
    Ok(means)
}

/// Trains and scores each variant over the shared seed list, reporting
/// per-variant mean ROUGE and deltas against the full configuration, which
/// must be among the requested variants.
pub fn ablation_run(
    inputs: &AblationInputs,
    variants: &[AblationVariant],
) -> Result<Vec<AblationRow>, EvalError> {
    if !variants.contains(&AblationVariant::Full) {
        return Err(EvalError::Ablation("the full baseline variant is required"));
    }
    if inputs.seeds.is_empty() {
        return Err(EvalError::Ablation("at least one seed is required"));
    }
    let mut outcomes: Vec<(AblationVariant, Vec<MeanScores>)> = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut per_seed = Vec::with_capacity(inputs.seeds.len());
        for &seed in inputs.seeds {
            log::info!("ablation: variant {}, seed {seed}", variant.name());
            per_seed.push(variant_means(inputs, variant, seed)?);
        }
        outcomes.push((variant, per_seed));
    }
    let avg = |scores: &[MeanScores]| {
        let n = scores.len() as f64;
        (
            scores.iter().map(|s| s.r1).sum::<f64>() / n,
            scores.iter().map(|s| s.r2).sum::<f64>() / n,
            scores.iter().map(|s| s.rl).sum::<f64>() / n,
        )
    };
    let full = outcomes
        .iter()
        .find(|(v, _)| *v == AblationVariant::Full)
        .map(|(_, scores)| avg(scores))
        .expect("full variant checked above");
    let rows = outcomes
        .iter()
        .map(|(variant, scores)| {
            let (r1, r2, rl) = avg(scores);
            AblationRow {
                variant: variant.name().to_string(),
                r1,
                r2,
                rl,
                delta_r1: r1 - full.0,
                delta_r2: r2 - full.1,
                delta_rl: rl - full.2,
                per_seed_rl: scores.iter().map(|s| s.rl).collect(),
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        rouge_tokenize(s)
    }

    #[test]
    fn tokenization_lowercases_and_splits_on_non_alphanumeric() {
        assert_eq!(toks("Don't, stop!"), vec!["don", "t", "stop"]);
        assert_eq!(toks("room 4 was FINE"), vec!["room", "4", "was", "fine"]);
        assert!(toks("...!?").is_empty());
    }

    #[test]
    fn rouge_1_matches_the_hand_count() {
        let p = rouge_n(&toks("the cat sat"), &toks("the cat ran on the mat"), 1);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_n_trivial_cases() {
        let same = rouge_n(&toks("a b c"), &toks("a b c"), 2);
        assert_eq!(same.f1, 1.0);
        let disjoint = rouge_n(&toks("a b c"), &toks("x y z"), 1);
        assert_eq!(disjoint.f1, 0.0);
        // Too-short inputs shortcut to zero rather than dividing by zero.
        assert_eq!(rouge_n(&toks("a"), &toks("a b"), 2), Prf::default());
        assert_eq!(rouge_n(&[], &toks("a"), 1), Prf::default());
    }

    #[test]
    fn clipping_limits_repeated_grams() {
        // "the the the" vs "the": only one "the" may count.
        let p = rouge_n(&toks("the the the"), &toks("the"), 1);
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.recall, 1.0);
    }

    #[test]
    fn rouge_l_matches_the_dp_hand_oracle() {
        let p = rouge_l(&toks("a c b"), &toks("a b c"));
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")).f1, 1.0);
        // A reversed distinct sequence shares only single-token subsequences.
        assert_eq!(lcs_len(&toks("a b c"), &toks("c b a")), 1);
    }

    fn brute_force_lcs(a: &[String], b: &[String]) -> usize {
        // Enumerate all subsequences of a, test each against b.
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<&String> =
                a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t).collect();
            let mut it = b.iter();
            if sub.iter().all(|s| it.any(|t| t == *s)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn lcs_agrees_with_brute_force(
            a in proptest::collection::vec(0u8..4, 0..8),
            b in proptest::collection::vec(0u8..4, 0..7),
        ) {
            prop_assume!(a.len() + b.len() <= 14);
            let at: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let bt: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            prop_assert_eq!(lcs_len(&at, &bt), brute_force_lcs(&at, &bt));
        }

        #[test]
        fn precision_and_recall_swap_under_argument_swap(
            a in proptest::collection::vec(0u8..5, 0..10),
            b in proptest::collection::vec(0u8..5, 0..10),
            n in 1usize..3,
        ) {
            let at: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let bt: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            let fwd = rouge_n(&at, &bt, n);
            let rev = rouge_n(&bt, &at, n);
            prop_assert_eq!(fwd.precision, rev.recall);
            prop_assert_eq!(fwd.recall, rev.precision);
        }

        #[test]
        fn appending_a_reference_token_never_lowers_recall(
            a in proptest::collection::vec(0u8..5, 1..8),
            b in proptest::collection::vec(0u8..5, 1..8),
            pick in 0usize..8,
        ) {
            let at: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let bt: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            let before = rouge_n(&at, &bt, 1).recall;
            let mut extended = at.clone();
            extended.push(bt[pick % bt.len()].clone());
            let after = rouge_n(&extended, &bt, 1).recall;
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn scores_stay_bounded(
            a in proptest::collection::vec(0u8..5, 0..10),
            b in proptest::collection::vec(0u8..5, 0..10),
        ) {
            let at: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let bt: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            for p in [rouge_n(&at, &bt, 1), rouge_n(&at, &bt, 2), rouge_l(&at, &bt)] {
                prop_assert!((0.0..=1.0).contains(&p.precision));
                prop_assert!((0.0..=1.0).contains(&p.recall));
                prop_assert!((0.0..=1.0).contains(&p.f1));
                prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-12);
            }
        }
    }

    #[test]
    fn multi_reference_takes_the_per_metric_max() {
        let refs = vec![
            "the pasta was terrible".to_string(),
            "service was quick and friendly".to_string(),
            "a lovely quiet patio".to_string(),
        ];
        let cand = "service was quick and friendly";
        let s = score_instance(cand, &refs);
        assert_eq!(s.r1.f1, 1.0);
        assert_eq!(s.r2.f1, 1.0);
        assert_eq!(s.rl.f1, 1.0);

        // Per-metric max equals enumerating the references by hand.
        let cand2 = "the patio service was quiet";
        let by_hand: Vec<RougeScore> = refs.iter().map(|r| score_pair(cand2, r)).collect();
        let s2 = score_instance(cand2, &refs);
        let max1 = by_hand.iter().map(|x| x.r1.f1).fold(0.0, f64::max);
        let maxl = by_hand.iter().map(|x| x.rl.f1).fold(0.0, f64::max);
        assert_eq!(s2.r1.f1, max1);
        assert_eq!(s2.rl.f1, maxl);
    }

    #[test]
    fn duplicate_references_change_nothing() {
        let r = "the food was great".to_string();
        let single = score_instance("great food overall", &[r.clone()]);
        let doubled = score_instance("great food overall", &[r.clone(), r]);
        assert_eq!(single, doubled);
    }

    #[test]
    fn evaluate_entities_aligns_by_id() {
        let summaries = vec![
            ("e1".to_string(), "good food".to_string()),
            ("e2".to_string(), "bad music".to_string()),
        ];
        let references = vec![
            ReferenceSet { entity_id: "e2".into(), references: vec!["bad music".into()] },
            ReferenceSet { entity_id: "e1".into(), references: vec!["good food".into()] },
        ];
        let (scores, means) = evaluate_entities(&summaries, &references).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].entity_id, "e1");
        assert_eq!(means.r1, 1.0);
        assert_eq!(means.rl, 1.0);

        // Mean equals the hand average of the per-instance column.
        let hand: f64 =
            scores.iter().map(|s| s.score.r1.f1).sum::<f64>() / scores.len() as f64;
        assert!((means.r1 - hand).abs() < 1e-9);
    }

    #[test]
    fn evaluate_entities_reports_mismatches() {
        let summaries = vec![("e1".to_string(), "x".to_string())];
        let references =
            vec![ReferenceSet { entity_id: "e2".into(), references: vec!["y".into()] }];
        match evaluate_entities(&summaries, &references) {
            Err(EvalError::Unmatched(ids)) => {
                assert_eq!(ids.len(), 2);
                assert!(ids[0].contains("e1"));
                assert!(ids[1].contains("e2"));
            }
            other => panic!("expected Unmatched, got {other:?}"),
        }
        assert!(matches!(evaluate_entities(&[], &references), Err(EvalError::Empty)));
    }

    #[test]
    fn alpha_csv_has_one_row_per_alpha() {
        let rows = vec![
            AlphaRow { alpha: 1.0, r1: 0.25, r2: 0.1, rl: 0.2 },
            AlphaRow { alpha: 10.0, r1: 0.3, r2: 0.12, rl: 0.22 },
        ];
        let csv = alpha_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "alpha,r1,r2,rl");
        assert!(lines[1].starts_with("1,0.25"));
        assert!(lines[2].starts_with("10,0.3"));
    }

    struct AblationFixture {
        records: Vec<ReviewRecord>,
        plans: Vec<ReviewPlan>,
        vocab: Vocabulary,
        induction: InductionModel,
        references: Vec<ReferenceSet>,
        synthesis: SynthesisConfig,
        summarizer: SummarizerConfig,
    }

    /// Micro fixture: an untrained induction model over a 3-entity desk
    /// corpus, sized so an ablation cycle takes well under a second.
    fn ablation_fixture() -> AblationFixture {
        use crate::corpus::{generate_desk_corpus, generate_references, train_tokenizer};
        use crate::synthesis::infer_plans;
        use rand::rngs::StdRng;
        use rand::SeedableRng;

        let corpus = generate_desk_corpus(3, 6, 41);
        let texts: Vec<&str> = corpus.records.iter().map(|r| r.text.as_str()).collect();
        let vocab = train_tokenizer(&texts, 160);
        let mut rng = StdRng::seed_from_u64(13);
        let induction = InductionModel::new(vocab.size(), 3, 2, 8, &mut rng);
        let plans = infer_plans(&corpus.records, &vocab, &induction);
        let references = corpus
            .profiles
            .iter()
            .map(|p| ReferenceSet {
                entity_id: p.entity_id.clone(),
                references: generate_references(p, 2, &mut rng),
            })
            .collect();
        let synthesis = SynthesisConfig {
            n_reviews: 2,
            min_len: 1,
            max_len: 64,
            forbid_first_person: false,
            dataset_size: 2,
            ..SynthesisConfig::default()
        };
        let summarizer = SummarizerConfig {
            batch_size: 4,
            max_epochs: 1,
            dev_fraction: 0.0,
            beam_size: 1,
            max_decode_len: 8,
            warmup_steps: 5,
            ..SummarizerConfig::default()
        };
        AblationFixture {
            records: corpus.records,
            plans,
            vocab,
            induction,
            references,
            synthesis,
            summarizer,
        }
    }

    #[test]
    fn ablation_requires_the_full_baseline() {
        let f = ablation_fixture();
        let inputs = AblationInputs {
            records: &f.records,
            plans: &f.plans,
            vocab: &f.vocab,
            induction: &f.induction,
            eval_reviews: &f.records,
            references: &f.references,
            synthesis: &f.synthesis,
            summarizer: &f.summarizer,
            seeds: &[0],
        };
        let err = ablation_run(&inputs, &[AblationVariant::UniformPrior]).unwrap_err();
        assert!(matches!(err, EvalError::Ablation(_)));
        let inputs = AblationInputs { seeds: &[], ..inputs };
        assert!(matches!(
            ablation_run(&inputs, &[AblationVariant::Full]),
            Err(EvalError::Ablation(_))
        ));
    }

    #[test]
    fn ablation_reports_one_row_per_variant_and_a_zero_full_delta() {
        let f = ablation_fixture();
        let inputs = AblationInputs {
            records: &f.records,
            plans: &f.plans,
            vocab: &f.vocab,
            induction: &f.induction,
            eval_reviews: &f.records,
            references: &f.references,
            synthesis: &f.synthesis,
            summarizer: &f.summarizer,
            seeds: &[3],
        };
        let rows =
            ablation_run(&inputs, &[AblationVariant::Full, AblationVariant::UniformPrior]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, "full");
        assert_eq!(rows[0].delta_r1, 0.0);
        assert_eq!(rows[0].delta_r2, 0.0);
        assert_eq!(rows[0].delta_rl, 0.0);
        assert_eq!(rows[0].per_seed_rl.len(), 1);
        assert_eq!(rows[1].variant, "uniform_prior");
        for row in &rows {
            for v in [row.r1, row.r2, row.rl] {
                assert!((0.0..=1.0).contains(&v), "mean rouge out of range: {v}");
            }
        }
    }
}
