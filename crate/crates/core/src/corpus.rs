//! Review corpora: records, rating scales, subword vocabulary, entity
//! masking, and the generated desk corpus used for fast end-to-end runs.
//!
//! The desk corpus plants one dominant aspect and a sentiment per review and
//! records them in a sidecar file, so downstream representation checks
//! (cluster purity, sentiment probes) have ground truth to compare against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const ENTITY: u32 = 4;

/// Surface forms for the five reserved ids, in id order.
pub const SPECIAL_SURFACES: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<entity>"];

/// End-of-word marker appended to each word before merging; atomic during
/// matching, rendered as a space when detokenizing.
const EOW: &str = "</w>";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON on line {line} of {path}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line} of {path}: rating {rating} outside scale {scale:?}")]
    RatingOutOfScale { path: String, line: usize, rating: i64, scale: RatingScale },
    #[error("line {line} of {path}: {message}")]
    InvalidRecord { path: String, line: usize, message: String },
    #[error("corpus {path} is empty")]
    Empty { path: String },
    #[error("{0}")]
    InvalidVocabulary(String),
}

/// One review as stored on disk.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReviewRecord {
    pub entity_id: String,
    pub review_id: String,
    pub text: String,
    pub rating: i64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    Binary,
    OneToFive,
}

impl RatingScale {
    /// Number of sentiment classes K_s.
    pub fn num_classes(self) -> usize {
        match self {
            RatingScale::Binary => 2,
            RatingScale::OneToFive => 5,
        }
    }

    pub fn contains(self, rating: i64) -> bool {
        match self {
            RatingScale::Binary => (0..=1).contains(&rating),
            RatingScale::OneToFive => (1..=5).contains(&rating),
        }
    }
}

/// Maps a raw rating to a class index in 0..K_s. Binary ratings already are
/// class indices (0 negative, 1 positive); 1..5 ratings shift down by one.
pub fn rating_to_label(rating: i64, scale: RatingScale) -> Result<usize, CorpusError> {
    if !scale.contains(rating) {
        return Err(CorpusError::RatingOutOfScale { path: String::new(), line: 0, rating, scale });
    }
    Ok(match scale {
        RatingScale::Binary => rating as usize,
        RatingScale::OneToFive => (rating - 1) as usize,
    })
}

/// Reads a JSONL file of any record type, reporting the failing line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            path: display.clone(),
            line: idx + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Writes records as one JSON object per line. Overwrites the target.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|source| CorpusError::Json { path: display.clone(), line: 0, source })?;
        writeln!(w, "{line}").map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    }
    w.flush().map_err(|source| CorpusError::Io { path: display, source })?;
    Ok(())
}

/// Loads and validates a review corpus.
pub fn load_corpus(path: &Path, scale: RatingScale) -> Result<Vec<ReviewRecord>, CorpusError> {
    let display = path.display().to_string();
    let records: Vec<ReviewRecord> = read_jsonl(path)?;
    if records.is_empty() {
        return Err(CorpusError::Empty { path: display });
    }
    let mut seen = BTreeSet::new();
    for (idx, rec) in records.iter().enumerate() {
        let line = idx + 1;
        if rec.review_id.is_empty() || rec.entity_id.is_empty() {
            return Err(CorpusError::InvalidRecord {
                path: display.clone(),
                line,
                message: "empty entity_id or review_id".into(),
            });
        }
        if rec.text.trim().is_empty() {
            return Err(CorpusError::InvalidRecord {
                path: display.clone(),
                line,
                message: format!("review {} has empty text", rec.review_id),
            });
        }
        if !scale.contains(rec.rating) {
            return Err(CorpusError::RatingOutOfScale { path: display.clone(), line, rating: rec.rating, scale });
        }
        if !seen.insert(rec.review_id.clone()) {
            return Err(CorpusError::InvalidRecord {
                path: display.clone(),
                line,
                message: format!("duplicate review_id {}", rec.review_id),
            });
        }
    }
    Ok(records)
}

/// Replaces exact occurrences of the entity name with the reserved
/// `<entity>` placeholder.
pub fn mask_entity(text: &str, entity_name: &str) -> String {
    if entity_name.is_empty() {
        return text.to_string();
    }
    text.replace(entity_name, SPECIAL_SURFACES[ENTITY as usize])
}

/// Restores the entity name into generated text.
pub fn unmask_entity(text: &str, entity_name: &str) -> String {
    text.replace(SPECIAL_SURFACES[ENTITY as usize], entity_name)
}

/// Subword vocabulary: byte-pair merges applied by greedy longest match.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    ids: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    alphabet: Vec<String>,
    /// Longest surface measured in pre-merge symbols, for bounding matches.
    max_span: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    version: u32,
    specials: BTreeMap<String, String>,
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
}

/// Symbols of one word: each char, then the end-of-word marker.
fn word_symbols(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    syms.push(EOW.to_string());
    syms
}

/// Number of pre-merge symbols a surface spans. The marker only ever
/// appears at the end of a surface and counts as one symbol.
fn surface_span(surface: &str) -> usize {
    match surface.strip_suffix(EOW) {
        Some(head) => head.chars().count() + 1,
        None => surface.chars().count(),
    }
}

impl Vocabulary {
    fn build(alphabet: Vec<String>, merges: Vec<(String, String)>) -> Vocabulary {
        let mut surfaces: Vec<String> = SPECIAL_SURFACES.iter().map(|s| s.to_string()).collect();
        let mut ids: HashMap<String, u32> = HashMap::new();
        for (i, s) in surfaces.iter().enumerate() {
            ids.insert(s.clone(), i as u32);
        }
        for sym in &alphabet {
            if !ids.contains_key(sym) {
                ids.insert(sym.clone(), surfaces.len() as u32);
                surfaces.push(sym.clone());
            }
        }
        for (a, b) in &merges {
            let merged = format!("{a}{b}");
            if !ids.contains_key(&merged) {
                ids.insert(merged.clone(), surfaces.len() as u32);
                surfaces.push(merged);
            }
        }
        let max_span = surfaces.iter().map(|s| surface_span(s)).max().unwrap_or(1);
        Vocabulary { surfaces, ids, merges, alphabet, max_span }
    }

    pub fn size(&self) -> usize {
        self.surfaces.len()
    }

    pub fn surface(&self, id: u32) -> &str {
        &self.surfaces[id as usize]
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.ids.get(surface).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Splits text on whitespace and segments each word by greedy longest
    /// match against the vocabulary. Unknown characters map to UNK. The
    /// `<entity>` placeholder is kept atomic.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if word == SPECIAL_SURFACES[ENTITY as usize] {
                out.push(ENTITY);
                continue;
            }
            let syms = word_symbols(word);
            let mut i = 0;
            while i < syms.len() {
                let mut matched = None;
                let top = (i + self.max_span).min(syms.len());
                for j in (i + 1..=top).rev() {
                    let candidate = syms[i..j].concat();
                    if let Some(&id) = self.ids.get(&candidate) {
                        matched = Some((id, j));
                        break;
                    }
                }
                match matched {
                    Some((id, j)) => {
                        out.push(id);
                        i = j;
                    }
                    None => {
                        out.push(UNK);
                        i += 1;
                    }
                }
            }
        }
        out
    }

    /// Inverse of `tokenize` up to whitespace normalization. PAD/BOS/EOS are
    /// dropped; UNK and ENTITY render as their placeholder surfaces. ENTITY
    /// is always a standalone word, so it carries its own word break.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for &id in ids {
            if id == PAD || id == BOS || id == EOS {
                continue;
            }
            s.push_str(self.surface(id));
            if id == ENTITY {
                s.push(' ');
            }
        }
        let joined = s.replace(EOW, " ");
        joined.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let display = path.display().to_string();
        let specials: BTreeMap<String, String> = [
            ("pad", PAD),
            ("bos", BOS),
            ("eos", EOS),
            ("unk", UNK),
            ("entity", ENTITY),
        ]
        .iter()
        .map(|&(name, id)| (name.to_string(), SPECIAL_SURFACES[id as usize].to_string()))
        .collect();
        let file = VocabularyFile {
            version: 1,
            specials,
            alphabet: self.alphabet.clone(),
            merges: self.merges.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|source| CorpusError::Json { path: display.clone(), line: 0, source })?;
        std::fs::write(path, json + "\n").map_err(|source| CorpusError::Io { path: display, source })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let display = path.display().to_string();
        let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
        let file: VocabularyFile = serde_json::from_str(&raw)
            .map_err(|source| CorpusError::Json { path: display.clone(), line: 0, source })?;
        if file.version != 1 {
            return Err(CorpusError::InvalidVocabulary(format!(
                "unsupported vocabulary version {} in {display}",
                file.version
            )));
        }
        Ok(Vocabulary::build(file.alphabet, file.merges))
    }
}

/// Trains byte-pair merges on the corpus until `vocab_size` entries exist
/// (specials and alphabet included) or no pair occurs anymore. Merge
/// selection is deterministic: highest count, ties broken by the
/// lexicographically smallest pair.
pub fn train_tokenizer(texts: &[&str], vocab_size: usize) -> Vocabulary {
    let mut word_counts: BTreeMap<String, i64> = BTreeMap::new();
    for text in texts {
        for word in text.split_whitespace() {
            if word == SPECIAL_SURFACES[ENTITY as usize] {
                continue;
            }
            *word_counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<String>, i64)> =
        word_counts.into_iter().map(|(w, c)| (word_symbols(&w), c)).collect();

    let alphabet: BTreeSet<String> = words.iter().flat_map(|(syms, _)| syms.iter().cloned()).collect();
    let alphabet: Vec<String> = alphabet.into_iter().collect();

    let base = SPECIAL_SURFACES.len() + alphabet.len();
    if vocab_size < base {
        log::warn!(
            "vocab_size {vocab_size} is below specials + alphabet ({base}); vocabulary will exceed the request"
        );
    }
    let budget = vocab_size.saturating_sub(base);

    let mut pair_counts: BTreeMap<(String, String), i64> = BTreeMap::new();
    let mut pair_words: BTreeMap<(String, String), BTreeSet<usize>> = BTreeMap::new();
    let count_word = |syms: &[String],
                      count: i64,
                      idx: usize,
                      sign: i64,
                      pair_counts: &mut BTreeMap<(String, String), i64>,
                      pair_words: &mut BTreeMap<(String, String), BTreeSet<usize>>| {
        for pair in syms.windows(2) {
            let key = (pair[0].clone(), pair[1].clone());
            let entry = pair_counts.entry(key.clone()).or_insert(0);
            *entry += sign * count;
            if *entry <= 0 {
                pair_counts.remove(&key);
                pair_words.remove(&key);
            } else if sign > 0 {
                pair_words.entry(key).or_default().insert(idx);
            }
        }
    };
    for (idx, (syms, count)) in words.iter().enumerate() {
        count_word(syms, *count, idx, 1, &mut pair_counts, &mut pair_words);
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut known: BTreeSet<String> = alphabet.iter().cloned().collect();
    let mut added = 0usize;
    while added < budget {
        let best = pair_counts
            .iter()
            .fold(None::<(&(String, String), i64)>, |acc, (pair, &count)| match acc {
                Some((_, best_count)) if best_count >= count => acc,
                _ => Some((pair, count)),
            })
            .map(|(pair, _)| pair.clone());
        let Some(pair) = best else {
            log::warn!(
                "byte-pair merges exhausted after {} merges; vocabulary reduced below requested size {vocab_size}",
                merges.len()
            );
            break;
        };
        let merged = format!("{}{}", pair.0, pair.1);
        let touched: Vec<usize> = pair_words.get(&pair).map(|s| s.iter().copied().collect()).unwrap_or_default();
        for idx in touched {
            let count = words[idx].1;
            let old = words[idx].0.clone();
            count_word(&old, count, idx, -1, &mut pair_counts, &mut pair_words);
            let mut new_syms = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && old[i] == pair.0 && old[i + 1] == pair.1 {
                    new_syms.push(merged.clone());
                    i += 2;
                } else {
                    new_syms.push(old[i].clone());
                    i += 1;
                }
            }
            count_word(&new_syms, count, idx, 1, &mut pair_counts, &mut pair_words);
            words[idx].0 = new_syms;
        }
        merges.push(pair);
        if known.insert(merged) {
            added += 1;
        }
    }

    Vocabulary::build(alphabet, merges)
}

// --- Desk corpus -----------------------------------------------------------

/// Aspect lexicons planted in the desk corpus. Nouns are disjoint across
/// aspects so that induced clusters have unambiguous ground truth. Lexicons
/// are kept small on purpose: reviews about the same aspect must overlap in
/// actual tokens for unsupervised clustering to have a signal to find.
pub const DESK_ASPECTS: [(&str, [&str; 3]); 8] = [
    ("drinks", ["beer", "wine", "espresso"]),
    ("food", ["burgers", "tacos", "pizza"]),
    ("staff", ["bartender", "waitress", "server"]),
    ("ambience", ["decor", "lighting", "seating"]),
    ("price", ["prices", "bill", "specials"]),
    ("location", ["location", "neighborhood", "corner"]),
    ("music", ["band", "playlist", "jukebox"]),
    ("cleanliness", ["bathrooms", "tables", "floors"]),
];

const POSITIVE_ADJ: [&str; 6] =
    ["great", "excellent", "fantastic", "wonderful", "superb", "delightful"];
const NEGATIVE_ADJ: [&str; 6] =
    ["terrible", "awful", "disappointing", "mediocre", "dreadful", "shabby"];

/// Fraction of reviews that ignore the entity profile entirely.
const DISTRACTOR_RATE: f64 = 0.15;
/// Chance the opinion sentence gets first-person phrasing. Deliberately not a
/// per-review trait: a review-level style flag would be a strong binary
/// signal competing with aspect for the encoder's capacity.
const FIRST_PERSON_RATE: f64 = 0.15;
/// Chance that a review adds one sentence about a second aspect.
const SECONDARY_RATE: f64 = 0.2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub review_id: String,
    /// Dominant aspect first, then any secondary aspect mentioned.
    pub planted_aspects: Vec<String>,
    /// 0 negative, 1 positive.
    pub planted_sentiment: u8,
}

/// What an entity is consistently like; references are written from this.
#[derive(Clone, Debug)]
pub struct EntityProfile {
    pub entity_id: String,
    pub aspects: [usize; 2],
    pub sentiment: usize,
}

#[derive(Clone, Debug)]
pub struct DeskCorpus {
    pub records: Vec<ReviewRecord>,
    pub sidecar: Vec<SidecarEntry>,
    pub profiles: Vec<EntityProfile>,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

// Sentence frames share almost all their function words on purpose. Aspect
// nouns and sentiment adjectives must carry the variance between reviews, or
// a mean-pooled encoder latches onto frame identity instead of content.
//
// Each review gets exactly one opinion sentence; the rest only mention nouns.
// Rationing the polarity words keeps the sentiment axis from dominating the
// review representation, which would otherwise pull the aspect clustering
// apart into a positive half and a negative half.
fn opinion_sentence<R: Rng>(rng: &mut R, aspect: usize, positive: bool, first_person: bool) -> String {
    let noun = pick(rng, &DESK_ASPECTS[aspect].1);
    let adj = if positive { pick(rng, &POSITIVE_ADJ) } else { pick(rng, &NEGATIVE_ADJ) };
    if first_person {
        format!("i thought the {noun} was {adj}.")
    } else {
        format!("the {noun} was {adj}.")
    }
}

fn mention_sentence<R: Rng>(rng: &mut R, aspect: usize) -> String {
    let noun = pick(rng, &DESK_ASPECTS[aspect].1);
    format!("the {noun} stood out.")
}

/// Generates a fully synthetic corpus of entity reviews with planted aspect
/// and sentiment labels. Pure function of its arguments.
pub fn generate_desk_corpus(n_entities: usize, reviews_per_entity: usize, seed: u64) -> DeskCorpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_aspects = DESK_ASPECTS.len();
    let mut records = Vec::with_capacity(n_entities * reviews_per_entity);
    let mut sidecar = Vec::with_capacity(records.capacity());
    let mut profiles = Vec::with_capacity(n_entities);

    for e in 0..n_entities {
        let entity_id = format!("e{e:03}");
        let first = rng.gen_range(0..n_aspects);
        let mut second = rng.gen_range(0..n_aspects - 1);
        if second >= first {
            second += 1;
        }
        let sentiment = rng.gen_range(0..2);
        let profile = EntityProfile { entity_id: entity_id.clone(), aspects: [first, second], sentiment };

        for r in 0..reviews_per_entity {
            let review_id = format!("{entity_id}-r{r:03}");
            let distractor = rng.gen::<f64>() < DISTRACTOR_RATE;
            let (aspect, positive) = if distractor {
                (rng.gen_range(0..n_aspects), rng.gen_range(0..2) == 1)
            } else {
                (profile.aspects[rng.gen_range(0..2)], profile.sentiment == 1)
            };
            let n_sentences = 4;
            let opinion_at = rng.gen_range(0..n_sentences);
            let mut sentences = Vec::with_capacity(n_sentences + 1);
            for s in 0..n_sentences {
                if s == opinion_at {
                    let fp = rng.gen::<f64>() < FIRST_PERSON_RATE;
                    sentences.push(opinion_sentence(&mut rng, aspect, positive, fp));
                } else {
                    sentences.push(mention_sentence(&mut rng, aspect));
                }
            }
            let mut planted = vec![DESK_ASPECTS[aspect].0.to_string()];
            if rng.gen::<f64>() < SECONDARY_RATE {
                let mut other = rng.gen_range(0..n_aspects - 1);
                if other >= aspect {
                    other += 1;
                }
                sentences.push(mention_sentence(&mut rng, other));
                planted.push(DESK_ASPECTS[other].0.to_string());
            }

            let rating = if positive { rng.gen_range(4..=5) } else { rng.gen_range(1..=2) };
            records.push(ReviewRecord {
                entity_id: entity_id.clone(),
                review_id: review_id.clone(),
                text: sentences.join(" "),
                rating,
            });
            sidecar.push(SidecarEntry {
                review_id,
                planted_aspects: planted,
                planted_sentiment: if positive { 1 } else { 0 },
            });
        }
        profiles.push(profile);
    }

    DeskCorpus { records, sidecar, profiles }
}

/// Reference summaries for one entity: impersonal sentences covering both
/// profile aspects with the profile sentiment. References mix the same
/// opinion and mention frames the reviews use, so reference style matches
/// review style and scores measure content selection rather than register.
pub fn generate_references<R: Rng>(profile: &EntityProfile, count: usize, rng: &mut R) -> Vec<String> {
    let positive = profile.sentiment == 1;
    (0..count)
        .map(|_| {
            let mut sentences = Vec::with_capacity(5);
            for &aspect in &profile.aspects {
                sentences.push(opinion_sentence(rng, aspect, positive, false));
                if rng.gen::<f64>() < 0.5 {
                    sentences.push(mention_sentence(rng, aspect));
                }
            }
            if rng.gen::<f64>() < 0.5 {
                let adj = if positive { pick(rng, &POSITIVE_ADJ) } else { pick(rng, &NEGATIVE_ADJ) };
                sentences.push(format!("overall a {adj} spot."));
            }
            sentences.join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk_texts(corpus: &DeskCorpus) -> Vec<&str> {
        corpus.records.iter().map(|r| r.text.as_str()).collect()
    }

    #[test]
    fn desk_corpus_has_expected_count_and_coverage() {
        let c = generate_desk_corpus(50, 12, 7);
        assert_eq!(c.records.len(), 600);
        assert_eq!(c.sidecar.len(), 600);
        let ids: BTreeSet<_> = c.records.iter().map(|r| r.review_id.clone()).collect();
        assert_eq!(ids.len(), 600);
        for entry in &c.sidecar {
            assert!(ids.contains(&entry.review_id));
            assert!(!entry.planted_aspects.is_empty());
        }
    }

    #[test]
    fn desk_corpus_is_deterministic_in_seed() {
        let a = generate_desk_corpus(5, 4, 11);
        let b = generate_desk_corpus(5, 4, 11);
        assert_eq!(a.records, b.records);
        let c = generate_desk_corpus(5, 4, 12);
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn bpe_learns_the_frequent_pair_first() {
        let vocab = train_tokenizer(&["ab ab ab"], 10);
        assert!(vocab.id_of("ab").is_some());
        assert_eq!(vocab.size(), 10);
        let ids = vocab.tokenize("ab");
        assert_eq!(ids.len(), 1);
        assert_eq!(vocab.surface(ids[0]), "ab</w>");
    }

    #[test]
    fn unknown_characters_become_unk() {
        let vocab = train_tokenizer(&["ab ab ab"], 10);
        let ids = vocab.tokenize("aq");
        assert!(ids.contains(&UNK));
    }

    #[test]
    fn entity_placeholder_is_atomic() {
        let vocab = train_tokenizer(&["ab ab ab"], 10);
        let masked = mask_entity("ab riverside ab", "riverside");
        let ids = vocab.tokenize(&masked);
        assert_eq!(ids.iter().filter(|&&i| i == ENTITY).count(), 1);
        let text = vocab.detokenize(&ids);
        assert_eq!(unmask_entity(&text, "riverside"), "ab riverside ab");
    }

    #[test]
    fn round_trip_on_desk_corpus() {
        let c = generate_desk_corpus(6, 5, 3);
        let vocab = train_tokenizer(&desk_texts(&c), 600);
        for rec in &c.records {
            let ids = vocab.tokenize(&rec.text);
            assert!(ids.iter().all(|&i| (i as usize) < vocab.size()));
            let back = vocab.detokenize(&ids);
            let norm = rec.text.split_whitespace().collect::<Vec<_>>().join(" ");
            assert_eq!(back, norm, "round trip failed for {}", rec.review_id);
        }
    }

    #[test]
    fn merge_results_are_prefix_closed() {
        let c = generate_desk_corpus(4, 6, 9);
        let vocab = train_tokenizer(&desk_texts(&c), 400);
        for (a, b) in vocab.merges() {
            assert!(vocab.id_of(&format!("{a}{b}")).is_some());
            // Both sides of every merge are themselves tokens.
            assert!(vocab.id_of(a).is_some(), "left side {a:?} missing");
            assert!(vocab.id_of(b).is_some(), "right side {b:?} missing");
        }
    }

    #[test]
    fn vocabulary_file_round_trips_identically() {
        let c = generate_desk_corpus(4, 6, 9);
        let vocab = train_tokenizer(&desk_texts(&c), 300);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.size(), vocab.size());
        let sample = &c.records[0].text;
        assert_eq!(loaded.tokenize(sample), vocab.tokenize(sample));
        let again = dir.path().join("vocab2.json");
        loaded.save(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn rating_label_mapping_is_bijective() {
        assert_eq!(rating_to_label(0, RatingScale::Binary).unwrap(), 0);
        assert_eq!(rating_to_label(1, RatingScale::Binary).unwrap(), 1);
        for r in 1..=5 {
            assert_eq!(rating_to_label(r, RatingScale::OneToFive).unwrap(), (r - 1) as usize);
        }
        assert!(rating_to_label(0, RatingScale::OneToFive).is_err());
        assert!(rating_to_label(2, RatingScale::Binary).is_err());
    }

    #[test]
    fn corpus_loader_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"entity_id\":\"e\",\"review_id\":\"r1\",\"text\":\"ok place\",\"rating\":4}\nnot-json\n",
        )
        .unwrap();
        let err = load_corpus(&path, RatingScale::OneToFive).unwrap_err();
        match err {
            CorpusError::Json { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn corpus_loader_rejects_bad_ratings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"entity_id\":\"e\",\"review_id\":\"r1\",\"text\":\"ok place\",\"rating\":9}\n",
        )
        .unwrap();
        match load_corpus(&path, RatingScale::OneToFive).unwrap_err() {
            CorpusError::RatingOutOfScale { rating, .. } => assert_eq!(rating, 9),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn references_mention_both_profile_aspects() {
        let profile = EntityProfile { entity_id: "e000".into(), aspects: [0, 3], sentiment: 1 };
        let mut rng = StdRng::seed_from_u64(2);
        let refs = generate_references(&profile, 3, &mut rng);
        assert_eq!(refs.len(), 3);
        for r in &refs {
            let mentions_first = DESK_ASPECTS[0].1.iter().any(|n| r.contains(n));
            let mentions_second = DESK_ASPECTS[3].1.iter().any(|n| r.contains(n));
            assert!(mentions_first && mentions_second, "reference misses a profile aspect: {r}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tokenize_ids_stay_in_range(words in proptest::collection::vec("[a-z]{1,8}", 1..12)) {
            let c = generate_desk_corpus(3, 4, 1);
            let vocab = train_tokenizer(&desk_texts(&c), 200);
            let text = words.join(" ");
            for id in vocab.tokenize(&text) {
                prop_assert!((id as usize) < vocab.size());
            }
        }

        #[test]
        fn round_trip_for_alphabet_covered_text(words in proptest::collection::vec("[a-z]{1,8}", 1..12)) {
            let c = generate_desk_corpus(3, 4, 1);
            let mut texts = desk_texts(&c);
            // Guarantee full a-z coverage so no character falls to UNK.
            texts.push("abcdefghijklmnopqrstuvwxyz");
            let vocab = train_tokenizer(&texts, 200);
            let text = words.join(" ");
            let back = vocab.detokenize(&vocab.tokenize(&text));
            prop_assert_eq!(back, text);
        }
    }
}
