//! Versioned binary checkpoints.
//!
//! Layout (all integers u32 little-endian, strings length-prefixed UTF-8):
//! magic `SNETCKPT`, version, metadata pairs sorted by key, non-reserved vocabulary
//! tokens in id order, then tensors in schema order as (name, rank, dims, f32 data).

use std::collections::BTreeMap;
use std::path::Path;

use snet_autodiff::{ParamStore, Tensor};

use crate::error::{Error, Result};
use crate::extraction::{ExtractionConfig, ExtractionModel, Extractor};
use crate::synthesis::{SynthesisConfig, SynthesisModel};
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"SNETCKPT";
pub const VERSION: u32 = 1;

type Meta = BTreeMap<String, String>;

/// Parsed container before it is bound to a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: Meta,
    pub vocab: Vec<String>,
    pub tensors: Vec<(String, Tensor)>,
}

fn put_u32(out: &mut Vec<u8>, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| Error::Compatibility(format!("value {x} does not fit the checkpoint format")))?;
    out.extend_from_slice(&x.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize)?;
        put_u32(&mut out, self.meta.len())?;
        for (k, v) in &self.meta {
            put_str(&mut out, k)?;
            put_str(&mut out, v)?;
        }
        put_u32(&mut out, self.vocab.len())?;
        for t in &self.vocab {
            put_str(&mut out, t)?;
        }
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_str(&mut out, name)?;
            put_u32(&mut out, t.shape().len())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Compatibility("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint format version {version}, expected {VERSION}"
            )));
        }
        let mut meta = Meta::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let vocab = (0..r.u32()?).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let mut tensors = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(truncated)?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Compatibility("trailing bytes after checkpoint".into()));
        }
        Ok(Self { meta, vocab, tensors })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Compatibility(format!("checkpoint metadata lacks `{key}`")))
    }

    pub fn kind(&self) -> Result<&str> {
        self.get("kind")
    }
}

fn truncated() -> Error {
    Error::Compatibility("checkpoint is truncated".into())
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Compatibility("checkpoint string is not UTF-8".into()))
    }
}

fn parse<T: std::str::FromStr>(meta: &Container, key: &str) -> Result<T> {
    let v = meta.get(key)?;
    v.parse()
        .map_err(|_| Error::Compatibility(format!("checkpoint metadata `{key}` has bad value `{v}`")))
}

fn extraction_meta(cfg: &ExtractionConfig, prefix: &str, meta: &mut Meta) {
    let mut put = |k: &str, v: String| {
        meta.insert(format!("{prefix}{k}"), v);
    };
    put("word_dim", cfg.word_dim.to_string());
    put("char_dim", cfg.char_dim.to_string());
    put("char_hidden", cfg.char_hidden.to_string());
    put("hidden", cfg.hidden.to_string());
    put("att_dim", cfg.att_dim.to_string());
    put("use_chars", cfg.use_chars.to_string());
    put("bidirectional_match", cfg.bidirectional_match.to_string());
    put("embed_scale", cfg.embed_scale.to_string());
    put("max_span_len", cfg.max_span_len.map_or("none".into(), |n| n.to_string()));
    put("ranking", cfg.ranking.to_string());
}

fn extraction_config(c: &Container, prefix: &str) -> Result<ExtractionConfig> {
    let key = |k: &str| format!("{prefix}{k}");
    let max_span_len = match c.get(&key("max_span_len"))? {
        "none" => None,
        _ => Some(parse(c, &key("max_span_len"))?),
    };
    Ok(ExtractionConfig {
        word_dim: parse(c, &key("word_dim"))?,
        char_dim: parse(c, &key("char_dim"))?,
        char_hidden: parse(c, &key("char_hidden"))?,
        hidden: parse(c, &key("hidden"))?,
        att_dim: parse(c, &key("att_dim"))?,
        use_chars: parse(c, &key("use_chars"))?,
        bidirectional_match: parse(c, &key("bidirectional_match"))?,
        embed_scale: parse(c, &key("embed_scale"))?,
        max_span_len,
        ranking: parse(c, &key("ranking"))?,
    })
}

fn synthesis_meta(cfg: &SynthesisConfig, meta: &mut Meta) {
    meta.insert("word_dim".into(), cfg.word_dim.to_string());
    meta.insert("feature_dim".into(), cfg.feature_dim.to_string());
    meta.insert("hidden".into(), cfg.hidden.to_string());
    meta.insert("att_dim".into(), cfg.att_dim.to_string());
    meta.insert("position_features".into(), cfg.position_features.to_string());
}

fn synthesis_config(c: &Container) -> Result<SynthesisConfig> {
    Ok(SynthesisConfig {
        word_dim: parse(c, "word_dim")?,
        feature_dim: parse(c, "feature_dim")?,
        hidden: parse(c, "hidden")?,
        att_dim: parse(c, "att_dim")?,
        position_features: parse(c, "position_features")?,
    })
}

fn store_tensors(store: &ParamStore, prefix: &str, out: &mut Vec<(String, Tensor)>) {
    out.extend(store.iter().map(|(_, n, t)| (format!("{prefix}{n}"), t.clone())));
}

/// Copies `tensors` into `store`, which must have exactly that schema.
fn fill_store(store: &mut ParamStore, prefix: &str, tensors: &[(String, Tensor)]) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    if ids.len() != tensors.len() {
        return Err(Error::Compatibility(format!(
            "checkpoint holds {} tensors under `{prefix}`, model expects {}",
            tensors.len(),
            ids.len()
        )));
    }
    for (id, (name, t)) in ids.into_iter().zip(tensors) {
        let expected = format!("{prefix}{}", store.name(id));
        if *name != expected {
            return Err(Error::Compatibility(format!("checkpoint tensor `{name}` where `{expected}` was expected")));
        }
        if t.shape() != store.get(id).shape() {
            return Err(Error::Compatibility(format!(
                "tensor `{name}` has shape {:?}, model expects {:?}",
                t.shape(),
                store.get(id).shape()
            )));
        }
        store.get_mut(id).data_mut().copy_from_slice(t.data());
    }
    Ok(())
}

fn rebuild_vocab(c: &Container) -> Result<Vocabulary> {
    Vocabulary::from_tokens(c.vocab.iter().cloned()).map_err(|e| Error::Compatibility(e.to_string()))
}

fn fresh_extraction(cfg: ExtractionConfig, vocab: Vocabulary) -> Result<ExtractionModel> {
    ExtractionModel::new(cfg, vocab, None, &mut snet_autodiff::rng::stream(0, "checkpoint"))
        .map_err(|e| Error::Compatibility(e.to_string()))
}

pub fn extractor_container(system: &Extractor) -> Result<Container> {
    let mut meta = Meta::new();
    let mut tensors = Vec::new();
    match system {
        Extractor::Single(m) => {
            meta.insert("kind".into(), "extraction".into());
            extraction_meta(&m.config, "", &mut meta);
            store_tensors(&m.store, "", &mut tensors);
        }
        Extractor::RankThenExtract { ranker, extractor } => {
            if ranker.vocab != extractor.vocab {
                return Err(Error::Compatibility("ranker and extractor vocabularies differ".into()));
            }
            meta.insert("kind".into(), "rank-then-extract".into());
            extraction_meta(&ranker.config, "ranker.", &mut meta);
            extraction_meta(&extractor.config, "extractor.", &mut meta);
            store_tensors(&ranker.store, "ranker.", &mut tensors);
            store_tensors(&extractor.store, "extractor.", &mut tensors);
        }
    }
    Ok(Container {
        meta,
        vocab: system.vocab().tokens().to_vec(),
        tensors,
    })
}

pub fn extractor_from_container(c: &Container) -> Result<Extractor> {
    let vocab = rebuild_vocab(c)?;
    match c.kind()? {
        "extraction" => {
            let mut m = fresh_extraction(extraction_config(c, "")?, vocab)?;
            fill_store(&mut m.store, "", &c.tensors)?;
            Ok(Extractor::Single(m))
        }
        "rank-then-extract" => {
            let mut ranker = fresh_extraction(extraction_config(c, "ranker.")?, vocab.clone())?;
            let mut extractor = fresh_extraction(extraction_config(c, "extractor.")?, vocab)?;
            let split = c.tensors.iter().take_while(|(n, _)| n.starts_with("ranker.")).count();
            fill_store(&mut ranker.store, "ranker.", &c.tensors[..split])?;
            fill_store(&mut extractor.store, "extractor.", &c.tensors[split..])?;
            Ok(Extractor::RankThenExtract { ranker, extractor })
        }
        other => Err(Error::Compatibility(format!("expected an extraction checkpoint, found `{other}`"))),
    }
}

pub fn synthesis_container(model: &SynthesisModel) -> Result<Container> {
    let mut meta = Meta::new();
    meta.insert("kind".into(), "synthesis".into());
    synthesis_meta(&model.config, &mut meta);
    let mut tensors = Vec::new();
    store_tensors(&model.store, "", &mut tensors);
    Ok(Container {
        meta,
        vocab: model.vocab.tokens().to_vec(),
        tensors,
    })
}

pub fn synthesis_from_container(c: &Container) -> Result<SynthesisModel> {
    match c.kind()? {
        "synthesis" => {}
        other => return Err(Error::Compatibility(format!("expected a synthesis checkpoint, found `{other}`"))),
    }
    let vocab = rebuild_vocab(c)?;
    let mut m = SynthesisModel::new(synthesis_config(c)?, vocab, &mut snet_autodiff::rng::stream(0, "checkpoint"))
        .map_err(|e| Error::Compatibility(e.to_string()))?;
    fill_store(&mut m.store, "", &c.tensors)?;
    Ok(m)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Container::from_bytes(&bytes)
}

fn write_container(path: &Path, c: &Container) -> Result<()> {
    std::fs::write(path, c.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn save_extractor(system: &Extractor, path: impl AsRef<Path>) -> Result<()> {
    write_container(path.as_ref(), &extractor_container(system)?)
}

pub fn load_extractor(path: impl AsRef<Path>) -> Result<Extractor> {
    extractor_from_container(&read_container(path)?)
}

pub fn save_synthesis(model: &SynthesisModel, path: impl AsRef<Path>) -> Result<()> {
    write_container(path.as_ref(), &synthesis_container(model)?)
}

pub fn load_synthesis(path: impl AsRef<Path>) -> Result<SynthesisModel> {
    synthesis_from_container(&read_container(path)?)
}
