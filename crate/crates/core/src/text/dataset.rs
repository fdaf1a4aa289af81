use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::tokenize::tokenize_with_offsets;
use crate::error::{Error, Result};

/// One question with its candidate passages and reference answers.
#[derive(Clone, Debug, PartialEq)]
pub struct RcExample {
    pub query_id: u64,
    pub query: String,
    pub question: Vec<String>,
    pub passage_texts: Vec<String>,
    pub passages: Vec<Vec<String>>,
    /// Byte range of every passage token inside its passage text.
    pub passage_offsets: Vec<Vec<(usize, usize)>>,
    pub answers: Vec<String>,
    pub answer_tokens: Vec<Vec<String>>,
    pub selected_passage: Option<usize>,
}

impl RcExample {
    /// Builds an example from raw text. Passages that tokenize to nothing are
    /// dropped; the selected index follows the surviving passages.
    pub fn from_text(
        query_id: u64,
        query: &str,
        passages: &[(String, bool)],
        answers: Vec<String>,
    ) -> Result<Self> {
        let mut passage_texts = Vec::new();
        let mut tokens = Vec::new();
        let mut offsets = Vec::new();
        let mut selected = None;
        for (text, is_selected) in passages {
            let toks = tokenize_with_offsets(text);
            if toks.is_empty() {
                continue;
            }
            if *is_selected && selected.is_none() {
                selected = Some(tokens.len());
            }
            passage_texts.push(text.clone());
            offsets.push(toks.iter().map(|(_, s, e)| (*s, *e)).collect());
            tokens.push(toks.into_iter().map(|(t, _, _)| t).collect());
        }
        if tokens.is_empty() {
            return Err(Error::Data(format!("query {query_id} has no nonempty passage")));
        }
        let answer_tokens = answers.iter().map(|a| super::tokenize(a)).collect();
        Ok(Self {
            query_id,
            query: query.to_string(),
            question: super::tokenize(query),
            passage_texts,
            passages: tokens,
            passage_offsets: offsets,
            answers,
            answer_tokens,
            selected_passage: selected,
        })
    }

    pub fn total_len(&self) -> usize {
        self.passages.iter().map(Vec::len).sum()
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::Schema {
        line,
        message: format!("missing required field `{name}`"),
    })
}

fn bad(line: usize, name: &str, what: &str) -> Error {
    Error::Schema {
        line,
        message: format!("field `{name}` must be {what}"),
    }
}

fn parse_record(text: &str, line: usize) -> Result<RcExample> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        line,
        message: format!("malformed record: {e}"),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        line,
        message: "record is not an object".into(),
    })?;
    let query_id = field(obj, "query_id", line)?
        .as_u64()
        .ok_or_else(|| bad(line, "query_id", "a nonnegative integer"))?;
    let query = field(obj, "query", line)?
        .as_str()
        .ok_or_else(|| bad(line, "query", "a string"))?;
    let raw_passages = field(obj, "passages", line)?
        .as_array()
        .ok_or_else(|| bad(line, "passages", "an array"))?;
    let mut passages = Vec::with_capacity(raw_passages.len());
    for p in raw_passages {
        let p = p.as_object().ok_or_else(|| bad(line, "passages", "an array of objects"))?;
        let text = field(p, "passage_text", line)?
            .as_str()
            .ok_or_else(|| bad(line, "passage_text", "a string"))?;
        let flag = match field(p, "is_selected", line)? {
            Value::Number(n) if n.as_u64() == Some(0) => false,
            Value::Number(n) if n.as_u64() == Some(1) => true,
            Value::Bool(b) => *b,
            _ => return Err(bad(line, "is_selected", "0 or 1")),
        };
        passages.push((text.to_string(), flag));
    }
    let answers = field(obj, "answers", line)?
        .as_array()
        .ok_or_else(|| bad(line, "answers", "an array"))?
        .iter()
        .map(|a| a.as_str().map(str::to_string).ok_or_else(|| bad(line, "answers", "an array of strings")))
        .collect::<Result<Vec<_>>>()?;
    RcExample::from_text(query_id, query, &passages, answers).map_err(|e| Error::Schema {
        line,
        message: e.to_string(),
    })
}

/// Parses one-record-per-line text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<RcExample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, line_no)?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RcExample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

#[derive(Serialize)]
struct PassageRecord<'a> {
    passage_text: &'a str,
    is_selected: u8,
}

#[derive(Serialize)]
struct Record<'a> {
    query_id: u64,
    query: &'a str,
    passages: Vec<PassageRecord<'a>>,
    answers: &'a [String],
}

pub fn write_dataset(examples: &[RcExample], mut out: impl Write) -> std::io::Result<()> {
    for ex in examples {
        let rec = Record {
            query_id: ex.query_id,
            query: &ex.query,
            passages: ex
                .passage_texts
                .iter()
                .enumerate()
                .map(|(i, t)| PassageRecord {
                    passage_text: t,
                    is_selected: u8::from(ex.selected_passage == Some(i)),
                })
                .collect(),
            answers: &ex.answers,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
