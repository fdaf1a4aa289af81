//! Small generated corpora in the dataset shape, for desk-scale training runs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::dataset::RcExample;
use crate::error::{Error, Result};

pub const YES_CUES: [&str; 3] = ["right", "correct", "true"];
pub const NO_CUES: [&str; 3] = ["wrong", "incorrect", "false"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerStyle {
    /// The answer is copied verbatim from the selected passage.
    ExactSpan,
    /// The answer is "it was" followed by the planted span.
    SpanPlusPrefix,
    /// The answer is "yes" or "no", signalled by a cue word in the passage.
    YesNo,
    /// Each example draws one of the three styles above.
    Mixed,
}

impl std::str::FromStr for AnswerStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-span" => Ok(Self::ExactSpan),
            "span-plus-prefix" => Ok(Self::SpanPlusPrefix),
            "yes-no" => Ok(Self::YesNo),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!("unknown answer style `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusSpec {
    pub n_examples: usize,
    pub vocab_size: usize,
    pub passage_len: usize,
    pub k_passages: usize,
    pub answer_style: AnswerStyle,
    pub max_answer_len: usize,
}

impl CorpusSpec {
    pub fn new(n_examples: usize, vocab_size: usize, passage_len: usize, k_passages: usize, answer_style: AnswerStyle) -> Self {
        Self {
            n_examples,
            vocab_size,
            passage_len,
            k_passages,
            answer_style,
            max_answer_len: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_examples == 0 || self.k_passages == 0 || self.max_answer_len == 0 {
            return Err(Error::Config("corpus sizes must be positive".into()));
        }
        // topic, "is", answer, "."
        if self.passage_len < self.max_answer_len + 3 {
            return Err(Error::Config(format!(
                "passage_len {} cannot hold a {}-token answer",
                self.passage_len, self.max_answer_len
            )));
        }
        let reserved = self.k_passages * (1 + self.max_answer_len);
        if self.vocab_size < reserved + 2 {
            return Err(Error::Config(format!(
                "vocab_size {} too small for {} passages",
                self.vocab_size, self.k_passages
            )));
        }
        Ok(())
    }
}

fn plant(rng: &mut impl Rng, len: usize, snippet: &[String], filler: &[String]) -> Vec<String> {
    let offset = rng.random_range(0..=len - snippet.len());
    let mut out: Vec<String> = (0..len).map(|_| filler.choose(rng).unwrap().clone()).collect();
    out[offset..offset + snippet.len()].clone_from_slice(snippet);
    out
}

/// Generates `spec.n_examples` questions. Each has one selected passage holding
/// "topic is answer ." and distractors holding the same pattern for other
/// topics; the question names the selected topic.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<RcExample>> {
    spec.validate()?;
    let mut rng = snet_autodiff::rng::stream(seed, "corpus");
    let pool: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();
    let styles = [AnswerStyle::ExactSpan, AnswerStyle::SpanPlusPrefix, AnswerStyle::YesNo];
    let mut out = Vec::with_capacity(spec.n_examples);
    for qid in 0..spec.n_examples {
        let style = match spec.answer_style {
            AnswerStyle::Mixed => *styles.choose(&mut rng).unwrap(),
            s => s,
        };
        let mut words = pool.clone();
        words.shuffle(&mut rng);
        let (reserved, filler) = words.split_at(spec.k_passages * (1 + spec.max_answer_len));
        let selected = rng.random_range(0..spec.k_passages);
        let mut passages = Vec::with_capacity(spec.k_passages);
        let mut answer = String::new();
        let mut topic = String::new();
        for p in 0..spec.k_passages {
            let block = &reserved[p * (1 + spec.max_answer_len)..(p + 1) * (1 + spec.max_answer_len)];
            let len = rng.random_range(1..=spec.max_answer_len);
            let mut snippet = vec![block[0].clone(), "is".to_string()];
            let yes = rng.random_bool(0.5);
            let content: Vec<String> = if style == AnswerStyle::YesNo {
                let cues = if yes { &YES_CUES } else { &NO_CUES };
                vec![cues.choose(&mut rng).unwrap().to_string()]
            } else {
                block[1..=len].to_vec()
            };
            snippet.extend(content.iter().cloned());
            snippet.push(".".to_string());
            if p == selected {
                topic = block[0].clone();
                answer = match style {
                    AnswerStyle::YesNo => (if yes { "yes" } else { "no" }).to_string(),
                    AnswerStyle::SpanPlusPrefix => format!("it was {}", content.join(" ")),
                    _ => content.join(" "),
                };
            }
            let tokens = plant(&mut rng, spec.passage_len, &snippet, filler);
            passages.push((tokens.join(" "), p == selected));
        }
        let query = format!("what about {topic}");
        out.push(RcExample::from_text(qid as u64, &query, &passages, vec![answer])?);
    }
    Ok(out)
}
