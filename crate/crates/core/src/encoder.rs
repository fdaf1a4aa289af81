//! GRU cells, bidirectional encoders, and word/character embeddings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use snet_autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::text::{Vocabulary, PAD, UNK};

pub const INIT_SCALE: f64 = 0.08;

/// One GRU layer. Biases are rank-1 `[hidden]`, weights are `[hidden, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w_hz: ParamId,
    pub w_xz: ParamId,
    pub b_z: ParamId,
    pub w_hr: ParamId,
    pub w_xr: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub w_x: ParamId,
    pub b: ParamId,
}

/// Input projections for a whole sequence, bias included.
struct Projected {
    z: Var,
    r: Var,
    h: Var,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut w = |name: &str, shape: &[usize]| store.uniform(format!("{prefix}.{name}"), shape, INIT_SCALE, rng);
        Self {
            input,
            hidden,
            w_hz: w("w_hz", &[hidden, hidden]),
            w_xz: w("w_xz", &[hidden, input]),
            b_z: w("b_z", &[hidden]),
            w_hr: w("w_hr", &[hidden, hidden]),
            w_xr: w("w_xr", &[hidden, input]),
            b_r: w("b_r", &[hidden]),
            w_h: w("w_h", &[hidden, hidden]),
            w_x: w("w_x", &[hidden, input]),
            b: w("b", &[hidden]),
        }
    }

    pub fn zero_state<T: Real>(&self, tape: &mut Tape<T>, rows: usize) -> Var {
        tape.constant(Tensor::zeros(&[rows, self.hidden]))
    }

    fn project<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Projected> {
        let mut proj = |w: ParamId, b: ParamId| -> Result<Var> {
            let (w, b) = (tape.param(w), tape.param(b));
            let y = tape.linear(x, w)?;
            Ok(tape.add_row(y, b)?)
        };
        Ok(Projected {
            z: proj(self.w_xz, self.b_z)?,
            r: proj(self.w_xr, self.b_r)?,
            h: proj(self.w_x, self.b)?,
        })
    }

    fn recur<T: Real>(&self, tape: &mut Tape<T>, h_prev: Var, x: &Projected) -> Result<Var> {
        let (w_hz, w_hr, w_h) = (tape.param(self.w_hz), tape.param(self.w_hr), tape.param(self.w_h));
        let hz = tape.linear(h_prev, w_hz)?;
        let z = tape.add(hz, x.z)?;
        let z = tape.sigmoid(z);
        let hr = tape.linear(h_prev, w_hr)?;
        let r = tape.add(hr, x.r)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h_prev)?;
        let cand = tape.linear(rh, w_h)?;
        let cand = tape.add(cand, x.h)?;
        let cand = tape.tanh(cand);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h_prev)?;
        let new = tape.mul(z, cand)?;
        Ok(tape.add(old, new)?)
    }

    /// One recurrence step. `h_prev` is `[rows, hidden]`, `x` is `[rows, input]`.
    pub fn step<T: Real>(&self, tape: &mut Tape<T>, h_prev: Var, x: Var) -> Result<Var> {
        let xs = tape.shape(x).to_vec();
        if xs.last() != Some(&self.input) || tape.shape(h_prev).last() != Some(&self.hidden) {
            return Err(Error::Tensor(snet_autodiff::Error::Dimension {
                op: "gru step",
                lhs: tape.shape(h_prev).to_vec(),
                rhs: xs,
            }));
        }
        let p = self.project(tape, x)?;
        self.recur(tape, h_prev, &p)
    }

    /// Runs over the rows of `xs: [n, input]`, returning states in position
    /// order. With `reverse` the recurrence starts at the last row.
    pub fn run<T: Real>(&self, tape: &mut Tape<T>, xs: Var, reverse: bool) -> Result<Vec<Var>> {
        let n = tape.shape(xs)[0];
        if tape.shape(xs).get(1) != Some(&self.input) {
            return Err(Error::Tensor(snet_autodiff::Error::Dimension {
                op: "gru input",
                lhs: tape.shape(xs).to_vec(),
                rhs: vec![n, self.input],
            }));
        }
        let all = self.project(tape, xs)?;
        let mut h = self.zero_state(tape, 1);
        let mut states = vec![h; n];
        for k in 0..n {
            let t = if reverse { n - 1 - k } else { k };
            let p = Projected {
                z: tape.row(all.z, t)?,
                r: tape.row(all.r, t)?,
                h: tape.row(all.h, t)?,
            };
            h = self.recur(tape, h, &p)?;
            states[t] = h;
        }
        Ok(states)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

/// Bidirectional encoding of one sequence.
#[derive(Clone, Copy, Debug)]
pub struct BiStates {
    /// `[n, 2·hidden]`, forward half first.
    pub states: Var,
    /// Forward state at the last position.
    pub fwd_final: Var,
    /// Backward state at the first position.
    pub bwd_final: Var,
    pub len: usize,
}

impl BiGru {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: GruCell::new(store, &format!("{prefix}.fwd"), input, hidden, rng),
            bwd: GruCell::new(store, &format!("{prefix}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, xs: Var) -> Result<BiStates> {
        let n = tape.shape(xs)[0];
        let f = self.fwd.run(tape, xs, false)?;
        let b = self.bwd.run(tape, xs, true)?;
        let fm = tape.concat(&f, 0)?;
        let bm = tape.concat(&b, 0)?;
        Ok(BiStates {
            states: tape.concat(&[fm, bm], 1)?,
            fwd_final: f[n - 1],
            bwd_final: b[0],
            len: n,
        })
    }
}

/// Character ids: printable ASCII maps to `4 + (c - 32)`, anything else to UNK.
pub const NUM_CHARS: usize = 4 + 95;

pub fn char_id(c: char) -> usize {
    match c as u32 {
        code @ 32..=126 => 4 + (code as usize - 32),
        _ => UNK,
    }
}

/// Word vectors from the final states of a character BiGRU.
#[derive(Clone, Debug, PartialEq)]
pub struct CharEncoder {
    pub table: ParamId,
    pub dim: usize,
    pub gru: BiGru,
}

impl CharEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let table = store.uniform(format!("{prefix}.table"), &[NUM_CHARS, dim], INIT_SCALE, rng);
        store.get_mut(table).data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
        Self {
            table,
            dim,
            gru: BiGru::new(store, &format!("{prefix}.gru"), dim, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.gru.output_dim()
    }

    fn run_masked<T: Real>(&self, tape: &mut Tape<T>, cell: &GruCell, words: &[Vec<usize>], reverse: bool) -> Result<Var> {
        let rows = words.len();
        let steps = words.iter().map(Vec::len).max().unwrap_or(0);
        let table = tape.param(self.table);
        let mut h = cell.zero_state(tape, rows);
        for s in 0..steps {
            let ids: Vec<usize> = words
                .iter()
                .map(|w| {
                    if s >= w.len() {
                        PAD
                    } else if reverse {
                        w[w.len() - 1 - s]
                    } else {
                        w[s]
                    }
                })
                .collect();
            let x = tape.gather_rows(table, &ids, Some(PAD))?;
            let next = cell.step(tape, h, x)?;
            if words.iter().all(|w| s < w.len()) {
                h = next;
                continue;
            }
            // finished words keep their state
            let mut mask = Vec::with_capacity(rows * cell.hidden);
            for w in words {
                let m = if s < w.len() { T::one() } else { T::zero() };
                mask.extend(std::iter::repeat_n(m, cell.hidden));
            }
            let m = tape.constant(Tensor::new(&[rows, cell.hidden], mask)?);
            let moved = tape.mul(next, m)?;
            let inv = tape.one_minus(m);
            let stay = tape.mul(h, inv)?;
            h = tape.add(moved, stay)?;
        }
        Ok(h)
    }

    /// `[words, 2·hidden]`: final forward state then final backward state of
    /// every word, all words advanced together.
    pub fn embed_words<T: Real, S: AsRef<str>>(&self, tape: &mut Tape<T>, words: &[S]) -> Result<Var> {
        let ids: Vec<Vec<usize>> = words
            .iter()
            .map(|w| {
                let v: Vec<usize> = w.as_ref().chars().map(char_id).collect();
                if v.is_empty() {
                    vec![UNK]
                } else {
                    v
                }
            })
            .collect();
        if ids.is_empty() {
            return Err(Error::Usage("char embedding of an empty word list".into()));
        }
        let f = self.run_masked(tape, &self.gru.fwd, &ids, false)?;
        let b = self.run_masked(tape, &self.gru.bwd, &ids, true)?;
        Ok(tape.concat(&[f, b], 1)?)
    }
}

/// A `[vocab, dim]` lookup table. The PAD row never receives gradient; a
/// frozen table receives none at all.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub id: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Trainable table with a zero PAD row.
    pub fn trainable(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let id = store.uniform(name, &[vocab, dim], INIT_SCALE, rng);
        store.get_mut(id).data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
        Self { id, vocab, dim }
    }

    /// Frozen table from explicit values; PAD and UNK rows are zeroed.
    pub fn frozen(store: &mut ParamStore, name: &str, mut values: Tensor) -> Result<Self> {
        let &[vocab, dim] = values.shape() else {
            return Err(Error::Data(format!("embedding table must be rank 2, got {:?}", values.shape())));
        };
        for row in [PAD, UNK] {
            if row < vocab {
                values.data_mut()[row * dim..(row + 1) * dim].fill(0.0);
            }
        }
        let id = store.insert(name, values, false);
        Ok(Self { id, vocab, dim })
    }

    /// Frozen random table, standing in for pretrained vectors.
    pub fn frozen_random(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let data = (0..vocab * dim).map(|_| rng.random_range(-scale..=scale) as f32).collect();
        Self::frozen(store, name, Tensor::new(&[vocab, dim], data)?)
    }

    pub fn is_trainable(&self, store: &ParamStore<impl Real>) -> bool {
        store.is_trainable(self.id)
    }

    pub fn lookup<T: Real>(&self, tape: &mut Tape<T>, ids: &[usize]) -> Result<Var> {
        let t = tape.param(self.id);
        Ok(tape.gather_rows(t, ids, Some(PAD))?)
    }
}

/// Reads whitespace-separated word vectors ("token v1 … vd" per line) for the
/// tokens of `vocab`. Rows for tokens absent from the file stay zero.
pub fn load_pretrained(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = vec![0.0f32; vocab.len() * dim];
    let wanted: HashMap<&str, usize> = vocab.tokens().iter().map(|t| (t.as_str(), vocab.id(t))).collect();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let Some(&id) = wanted.get(token) else { continue };
        let values: Vec<f32> = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schema {
                line: i + 1,
                message: format!("bad vector value: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Schema {
                line: i + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        data[id * dim..(id + 1) * dim].copy_from_slice(&values);
    }
    Ok(Tensor::new(&[vocab.len(), dim], data)?)
}
