//! Evaluation metrics: hallucination ratios over captions, yes/no probe
//! accuracy per split, response-length statistics, and a pairwise judge
//! harness.
//!
//! The caption metrics follow the standard definitions: the instance-level
//! score is hallucinated objects over all mentioned objects, pooled across
//! records; the sentence-level score is the fraction of captions containing
//! at least one hallucinated object.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, RemoteClient};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vocabulary entry {0:?} is not lowercase/trimmed")]
    BadVocabEntry(String),
    #[error("synonym target {target:?} (for {surface:?}) is not in the canonical set")]
    UnknownSynonymTarget { surface: String, target: String },
    #[error("vocabulary line {line} is malformed: {content:?}")]
    BadVocabLine { line: usize, content: String },
    #[error("record list must be non-empty")]
    NoRecords,
    #[error("ground-truth object {object:?} (record {image_id}) is not in the vocabulary")]
    UnknownGroundTruth { image_id: String, object: String },
    #[error("no parseable verdicts")]
    NoParseableVerdicts,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Canonical object names plus surface-form synonyms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectVocabulary {
    canonical: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
}

impl ObjectVocabulary {
    pub fn new<I, J>(canonical: I, synonyms: J) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = (String, String)>,
    {
        let canonical: BTreeSet<String> = canonical.into_iter().collect();
        for name in &canonical {
            check_entry(name)?;
        }
        let mut map = BTreeMap::new();
        for (surface, target) in synonyms {
            check_entry(&surface)?;
            check_entry(&target)?;
            if !canonical.contains(&target) {
                return Err(EvalError::UnknownSynonymTarget { surface, target });
            }
            map.insert(surface, target);
        }
        Ok(ObjectVocabulary {
            canonical,
            synonyms: map,
        })
    }

    /// Parses the line format: one canonical name per line, synonym lines
    /// `surface=>canonical`. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut canonical = Vec::new();
        let mut synonyms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some((surface, target)) = line.split_once("=>") {
                let surface = surface.trim().to_lowercase();
                let target = target.trim().to_lowercase();
                if surface.is_empty() || target.is_empty() {
                    return Err(EvalError::BadVocabLine {
                        line: i + 1,
                        content: raw.to_string(),
                    });
                }
                synonyms.push((surface, target));
            } else {
                canonical.push(line.to_lowercase());
            }
        }
        Self::new(canonical, synonyms)
    }

    pub fn canonical(&self) -> &BTreeSet<String> {
        &self.canonical
    }

    /// Canonical name for a surface form, if the vocabulary knows it.
    pub fn resolve(&self, surface: &str) -> Option<&str> {
        if self.canonical.contains(surface) {
            return Some(self.canonical.get(surface).unwrap());
        }
        self.synonyms.get(surface).map(String::as_str)
    }
}

fn check_entry(entry: &str) -> Result<(), EvalError> {
    let ok = !entry.is_empty()
        && entry == entry.trim()
        && entry.chars().all(|c| !c.is_uppercase());
    if ok {
        Ok(())
    } else {
        Err(EvalError::BadVocabEntry(entry.to_string()))
    }
}

/// A caption plus the objects actually present in its image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
    pub ground_truth: BTreeSet<String>,
}

/// Extracts the set of canonical objects a caption mentions.
///
/// Lowercases, strips punctuation to spaces, then matches longest-first:
/// bigrams before unigrams, with a trailing-`s` strip as unigram fallback.
pub fn extract_objects(caption: &str, vocab: &ObjectVocabulary) -> BTreeSet<String> {
    let cleaned: String = caption
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < words.len() {
        if i + 1 < words.len() {
            let bigram = format!("{} {}", words[i], words[i + 1]);
            if let Some(canonical) = vocab.resolve(&bigram) {
                found.insert(canonical.to_string());
                i += 2;
                continue;
            }
        }
        if let Some(canonical) = vocab.resolve(words[i]) {
            found.insert(canonical.to_string());
        } else if words[i].len() > 1 && words[i].ends_with('s') {
            if let Some(canonical) = vocab.resolve(&words[i][..words[i].len() - 1]) {
                found.insert(canonical.to_string());
            }
        }
        i += 1;
    }
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairCounts {
    pub hallucinated_objects: usize,
    pub mentioned_objects: usize,
    pub captions_with_hallucination: usize,
    pub total_captions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChairScores {
    pub chair_i: f64,
    pub chair_s: f64,
    pub counts: ChairCounts,
    /// Set when the instance denominator was zero (no objects mentioned
    /// anywhere); the score is reported as 0 rather than failing the batch.
    pub degenerate: bool,
}

/// Instance- and sentence-level hallucination scores over `records`.
pub fn chair_scores(
    records: &[CaptionRecord],
    vocab: &ObjectVocabulary,
) -> Result<ChairScores, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    for record in records {
        for object in &record.ground_truth {
            if !vocab.canonical().contains(object) {
                return Err(EvalError::UnknownGroundTruth {
                    image_id: record.image_id.clone(),
                    object: object.clone(),
                });
            }
        }
    }
    let mut counts = ChairCounts {
        hallucinated_objects: 0,
        mentioned_objects: 0,
        captions_with_hallucination: 0,
        total_captions: records.len(),
    };
    for record in records {
        let mentioned = extract_objects(&record.caption, vocab);
        let hallucinated = mentioned.difference(&record.ground_truth).count();
        counts.mentioned_objects += mentioned.len();
        counts.hallucinated_objects += hallucinated;
        if hallucinated > 0 {
            counts.captions_with_hallucination += 1;
        }
    }
    let degenerate = counts.mentioned_objects == 0;
    let chair_i = if degenerate {
        0.0
    } else {
        counts.hallucinated_objects as f64 / counts.mentioned_objects as f64
    };
    let chair_s = counts.captions_with_hallucination as f64 / counts.total_captions as f64;
    Ok(ChairScores {
        chair_i,
        chair_s,
        counts,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopeSplit {
    Rand,
    Pop,
    Adv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNoLabel {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YesNoRecord {
    pub image_id: String,
    pub question: String,
    pub label: YesNoLabel,
    pub split: PopeSplit,
    pub prediction: String,
}

/// Normalizes a free-form prediction: the first alphabetic word decides,
/// case-insensitively, by yes/no prefix. Anything else is unparseable.
pub fn normalize_yesno(prediction: &str) -> Option<YesNoLabel> {
    let word: String = prediction
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .flat_map(|c| c.to_lowercase())
        .collect();
    if word.starts_with("yes") {
        Some(YesNoLabel::Yes)
    } else if word.starts_with("no") {
        Some(YesNoLabel::No)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitTally {
    pub correct: usize,
    pub total: usize,
    pub unparseable: usize,
}

impl SplitTally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct YesNoMetrics {
    pub overall: SplitTally,
    pub rand: SplitTally,
    pub pop: SplitTally,
    pub adv: SplitTally,
}

/// Accuracy overall and per split; unparseable predictions count as
/// incorrect and are tallied.
pub fn yesno_metrics(records: &[YesNoRecord]) -> Result<YesNoMetrics, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut metrics = YesNoMetrics::default();
    for record in records {
        let parsed = normalize_yesno(&record.prediction);
        let correct = parsed == Some(record.label);
        let unparseable = parsed.is_none();
        for tally in [
            &mut metrics.overall,
            match record.split {
                PopeSplit::Rand => &mut metrics.rand,
                PopeSplit::Pop => &mut metrics.pop,
                PopeSplit::Adv => &mut metrics.adv,
            },
        ] {
            tally.total += 1;
            if correct {
                tally.correct += 1;
            }
            if unparseable {
                tally.unparseable += 1;
            }
        }
    }
    Ok(metrics)
}

/// Bucketed length distribution (bucket width 8) plus the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_tokens: f64,
    /// Bucket lower bound -> count; bucket `k` covers `[8k, 8k + 8)`.
    pub histogram: BTreeMap<usize, usize>,
    pub count: usize,
}

pub const LENGTH_BUCKET_WIDTH: usize = 8;

pub fn length_stats<S: AsRef<str>>(texts: &[S]) -> Result<LengthStats, EvalError> {
    if texts.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut histogram = BTreeMap::new();
    let mut total = 0usize;
    for text in texts {
        let tokens = crate::types::whitespace_token_count(text.as_ref());
        total += tokens;
        let bucket = tokens / LENGTH_BUCKET_WIDTH * LENGTH_BUCKET_WIDTH;
        *histogram.entry(bucket).or_insert(0) += 1;
    }
    Ok(LengthStats {
        mean_tokens: total as f64 / texts.len() as f64,
        histogram,
        count: texts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    Tie,
}

/// Judge result for one pair: a verdict, or the raw reply when no verdict
/// could be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JudgeOutcome {
    Verdict(Verdict),
    Unparseable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JudgeOptions {
    /// Ask in both answer orders and reconcile; disagreement becomes a tie.
    pub debias: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions { debias: true }
    }
}

/// Fixed judging template presenting both answers under [A]/[B] labels.
pub fn judge_prompt(question: &str, answer_a: &str, answer_b: &str) -> String {
    format!(
        "You are judging two answers to the same question.\n\
         Question: {question}\n\n\
         [A] {answer_a}\n\n\
         [B] {answer_b}\n\n\
         Which answer is better? Reply with exactly one of: A, B, TIE."
    )
}

/// First standalone token among A, B, TIE in the reply.
pub fn parse_verdict(reply: &str) -> Option<Verdict> {
    for token in reply.split(|c: char| !c.is_alphanumeric()) {
        match token {
            "A" | "a" => return Some(Verdict::A),
            "B" | "b" => return Some(Verdict::B),
            "TIE" | "tie" | "Tie" => return Some(Verdict::Tie),
            _ => {}
        }
    }
    None
}

fn flip(verdict: Verdict) -> Verdict {
    match verdict {
        Verdict::A => Verdict::B,
        Verdict::B => Verdict::A,
        Verdict::Tie => Verdict::Tie,
    }
}

/// Asks the remote judge which answer is better.
///
/// With debiasing on, the pair is judged in both orders; agreeing verdicts
/// stand, disagreement reconciles to a tie, and an unparseable reply in
/// either order makes the whole outcome unparseable.
pub fn judge_pair(
    client: &RemoteClient,
    question: &str,
    answer_a: &str,
    answer_b: &str,
    opts: JudgeOptions,
) -> Result<JudgeOutcome, EvalError> {
    let first = client.chat_text(&judge_prompt(question, answer_a, answer_b))?;
    let Some(v1) = parse_verdict(&first.text) else {
        return Ok(JudgeOutcome::Unparseable(first.text));
    };
    if !opts.debias {
        return Ok(JudgeOutcome::Verdict(v1));
    }
    let second = client.chat_text(&judge_prompt(question, answer_b, answer_a))?;
    let Some(v2) = parse_verdict(&second.text) else {
        return Ok(JudgeOutcome::Unparseable(second.text));
    };
    let v2 = flip(v2);
    if v1 == v2 {
        Ok(JudgeOutcome::Verdict(v1))
    } else {
        Ok(JudgeOutcome::Verdict(Verdict::Tie))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub win: f64,
    pub tie: f64,
    pub loss: f64,
    pub counted: usize,
    pub unparseable: usize,
}

/// Win/tie/loss fractions for side A over the parseable verdicts.
pub fn win_rate(outcomes: &[JudgeOutcome]) -> Result<WinRate, EvalError> {
    let mut wins = 0usize;
    let mut ties = 0usize;
    let mut losses = 0usize;
    let mut unparseable = 0usize;
    for outcome in outcomes {
        match outcome {
            JudgeOutcome::Verdict(Verdict::A) => wins += 1,
            JudgeOutcome::Verdict(Verdict::Tie) => ties += 1,
            JudgeOutcome::Verdict(Verdict::B) => losses += 1,
            JudgeOutcome::Unparseable(_) => unparseable += 1,
        }
    }
    let counted = wins + ties + losses;
    if counted == 0 {
        return Err(EvalError::NoParseableVerdicts);
    }
    Ok(WinRate {
        win: wins as f64 / counted as f64,
        tie: ties as f64 / counted as f64,
        loss: losses as f64 / counted as f64,
        counted,
        unparseable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(canonical: &[&str], synonyms: &[(&str, &str)]) -> ObjectVocabulary {
        ObjectVocabulary::new(
            canonical.iter().map(|s| s.to_string()),
            synonyms
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap()
    }

    fn record(id: &str, caption: &str, truth: &[&str]) -> CaptionRecord {
        CaptionRecord {
            image_id: id.to_string(),
            caption: caption.to_string(),
            ground_truth: truth.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn vocabulary_validation() {
        assert!(ObjectVocabulary::new(
            vec!["Dog".to_string()],
            std::iter::empty::<(String, String)>()
        )
        .is_err());
        assert!(matches!(
            ObjectVocabulary::new(
                vec!["dog".to_string()],
                vec![("puppy".to_string(), "cat".to_string())]
            ),
            Err(EvalError::UnknownSynonymTarget { .. })
        ));
    }

    #[test]
    fn vocabulary_parse_format() {
        let v = ObjectVocabulary::parse("dog\ncat\n\npuppy=>dog\n").unwrap();
        assert_eq!(v.resolve("puppy"), Some("dog"));
        assert_eq!(v.resolve("cat"), Some("cat"));
        assert!(ObjectVocabulary::parse("dog\n=>dog\n").is_err());
    }

    #[test]
    fn extraction_dedups_and_handles_plurals() {
        let v = vocab(&["dog"], &[]);
        let got = extract_objects("A dog and two dogs.", &v);
        assert_eq!(got, ["dog".to_string()].into_iter().collect());
    }

    #[test]
    fn extraction_prefers_longest_match() {
        let v = vocab(&["hot dog", "dog"], &[]);
        let got = extract_objects("a hot dog on a plate", &v);
        assert_eq!(got, ["hot dog".to_string()].into_iter().collect());
    }

    #[test]
    fn extraction_misses_nothing_in_vocab() {
        let v = vocab(&["dog"], &[]);
        assert!(extract_objects("just clouds and rain", &v).is_empty());
    }

    #[test]
    fn extraction_is_punctuation_insensitive() {
        let v = vocab(&["dog", "cat"], &[("kitten", "cat")]);
        let a = extract_objects("dog, cat!  kitten...", &v);
        let b = extract_objects("dog cat kitten", &v);
        assert_eq!(a, b);
    }

    #[test]
    fn chair_hand_case() {
        // One caption mentioning 4 objects, 1 hallucinated.
        let v = vocab(&["dog", "cat", "tree", "car"], &[]);
        let records = vec![record("i1", "a dog a cat a tree and a car", &["dog", "cat", "tree"])];
        let scores = chair_scores(&records, &v).unwrap();
        assert_eq!(scores.chair_i, 0.25);
        assert_eq!(scores.chair_s, 1.0);
        assert!(!scores.degenerate);
    }

    #[test]
    fn chair_sentence_fraction() {
        let v = vocab(&["dog", "cat"], &[]);
        let records = vec![
            record("1", "a dog", &["dog"]),
            record("2", "a cat", &["dog"]), // hallucinated cat
            record("3", "a dog", &["dog"]),
            record("4", "dog and cat", &["cat"]), // hallucinated dog
            record("5", "nothing here", &["dog"]),
        ];
        let scores = chair_scores(&records, &v).unwrap();
        assert_eq!(scores.chair_s, 0.4);
    }

    #[test]
    fn chair_degenerate_zero_denominator() {
        let v = vocab(&["dog"], &[]);
        let records = vec![record("1", "nothing to see", &["dog"])];
        let scores = chair_scores(&records, &v).unwrap();
        assert!(scores.degenerate);
        assert_eq!(scores.chair_i, 0.0);
        assert_eq!(scores.chair_s, 0.0);
    }

    #[test]
    fn chair_rejects_unknown_ground_truth_and_empty_input() {
        let v = vocab(&["dog"], &[]);
        assert!(matches!(
            chair_scores(&[], &v),
            Err(EvalError::NoRecords)
        ));
        let bad = vec![record("1", "a dog", &["zebra"])];
        assert!(matches!(
            chair_scores(&bad, &v),
            Err(EvalError::UnknownGroundTruth { .. })
        ));
    }

    #[test]
    fn yesno_normalization_rules() {
        assert_eq!(normalize_yesno("Yes, it is"), Some(YesNoLabel::Yes));
        assert_eq!(normalize_yesno("no"), Some(YesNoLabel::No));
        assert_eq!(normalize_yesno("  \"No.\""), Some(YesNoLabel::No));
        assert_eq!(normalize_yesno("maybe"), None);
        assert_eq!(normalize_yesno("123"), None);
        assert_eq!(normalize_yesno(""), None);
    }

    fn yn(label: YesNoLabel, split: PopeSplit, prediction: &str) -> YesNoRecord {
        YesNoRecord {
            image_id: "i".into(),
            question: "q".into(),
            label,
            split,
            prediction: prediction.into(),
        }
    }

    #[test]
    fn yesno_accuracy_per_split() {
        let records = vec![
            yn(YesNoLabel::Yes, PopeSplit::Rand, "Yes, it is"),
            yn(YesNoLabel::No, PopeSplit::Rand, "no"),
            yn(YesNoLabel::Yes, PopeSplit::Rand, "no"),
            yn(YesNoLabel::Yes, PopeSplit::Rand, "yes"),
            yn(YesNoLabel::No, PopeSplit::Adv, "maybe"),
        ];
        let m = yesno_metrics(&records).unwrap();
        assert_eq!(m.rand.accuracy(), 0.75);
        assert_eq!(m.rand.total, 4);
        assert_eq!(m.adv.unparseable, 1);
        assert_eq!(m.adv.accuracy(), 0.0);
        assert_eq!(m.overall.correct, 3);
        assert!(yesno_metrics(&[]).is_err());
    }

    #[test]
    fn length_stats_rules() {
        let s = length_stats(&["a b c"]).unwrap();
        assert_eq!(s.mean_tokens, 3.0);
        let s = length_stats(&["", "a"]).unwrap();
        assert_eq!(s.mean_tokens, 0.5);
        assert_eq!(s.histogram.get(&0), Some(&2));
        let s = length_stats(&["a b c d e f g h i"]).unwrap();
        assert_eq!(s.histogram.get(&8), Some(&1));
        assert!(length_stats::<&str>(&[]).is_err());
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("A"), Some(Verdict::A));
        assert_eq!(parse_verdict("Verdict: B."), Some(Verdict::B));
        assert_eq!(parse_verdict("TIE"), Some(Verdict::Tie));
        assert_eq!(parse_verdict("I cannot decide"), None);
        // "A" inside a longer token does not count.
        assert_eq!(parse_verdict("ABLE bodied"), None);
    }

    #[test]
    fn win_rate_fractions() {
        use JudgeOutcome::Verdict as V;
        let outcomes = vec![
            V(Verdict::A),
            V(Verdict::A),
            V(Verdict::A),
            V(Verdict::B),
        ];
        let wr = win_rate(&outcomes).unwrap();
        assert_eq!(wr.win, 0.75);
        assert_eq!(wr.loss, 0.25);
        assert!((wr.win + wr.tie + wr.loss - 1.0).abs() < 1e-12);

        let tie_only = vec![V(Verdict::Tie)];
        assert_eq!(win_rate(&tie_only).unwrap().tie, 1.0);

        let unparseable = vec![JudgeOutcome::Unparseable("??".into())];
        assert!(matches!(
            win_rate(&unparseable),
            Err(EvalError::NoParseableVerdicts)
        ));
        assert!(matches!(win_rate(&[]), Err(EvalError::NoParseableVerdicts)));
    }
}
