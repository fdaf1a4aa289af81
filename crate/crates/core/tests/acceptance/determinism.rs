use std::path::Path;

use snet_core::checkpoint::{load_extractor, load_synthesis, save_extractor, save_synthesis};
use snet_core::config::RunConfig;
use snet_core::pipeline::{cmd_gen_corpus, cmd_run, cmd_train_extract, cmd_train_synth, write_records};
use snet_core::Result;

use crate::Verdict;

fn config() -> RunConfig {
    RunConfig::parse(
        "seed = 17\nword_dim = 8\nchar_dim = 3\nchar_hidden = 3\nhidden = 8\natt_dim = 8\n\
         synth_word_dim = 8\nfeature_dim = 3\nsynth_hidden = 8\nsynth_att_dim = 8\n\
         epochs = 3\nsynth_epochs = 3\nbeam = 4\nmax_len = 8\ncorpus_examples = 24\ncorpus_vocab = 30\n",
    )
    .unwrap()
}

struct Outputs {
    records: Vec<u8>,
    extractor: Vec<u8>,
    synth: Vec<u8>,
}

/// Corpus generation, both training stages and a run, in a fresh directory.
fn pipeline(dir: &Path, threads: &str) -> Result<Outputs> {
    std::env::set_var("SNET_THREADS", threads);
    let cfg = config();
    let data = dir.join("corpus.jsonl");
    cmd_gen_corpus(&cfg, &data)?;
    let ex_path = dir.join("ex.ckpt");
    save_extractor(&cmd_train_extract(&cfg, &data, &mut |_| {})?, &ex_path)?;
    let synth_path = dir.join("synth.ckpt");
    let synth = cmd_train_synth(&cfg, &data, std::slice::from_ref(&ex_path), true, &mut |_| {})?;
    save_synthesis(&synth, &synth_path)?;
    let out = dir.join("run.jsonl");
    write_records(&cmd_run(&cfg, &data, &[ex_path.clone()], Some(&synth_path))?, &out)?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| snet_core::Error::io(p, e));
    Ok(Outputs {
        records: read(&out)?,
        extractor: read(&ex_path)?,
        synth: read(&synth_path)?,
    })
}

fn resaved(dir: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let (ex, synth) = (dir.join("ex.ckpt"), dir.join("synth.ckpt"));
    let (ex2, synth2) = (dir.join("ex2.ckpt"), dir.join("synth2.ckpt"));
    save_extractor(&load_extractor(&ex)?, &ex2)?;
    save_synthesis(&load_synthesis(&synth)?, &synth2)?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| snet_core::Error::io(p, e));
    Ok((read(&ex2)?, read(&synth2)?))
}

pub fn byte_identical() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let outcome = (|| -> Result<String> {
        let one = pipeline(a.path(), "1")?;
        let two = pipeline(b.path(), "3")?;
        std::env::remove_var("SNET_THREADS");
        let (ex, synth) = resaved(a.path())?;
        let checks = [
            ("run records", one.records == two.records),
            ("extractor checkpoint", one.extractor == two.extractor),
            ("synthesis checkpoint", one.synth == two.synth),
            ("extractor save-load-save", ex == one.extractor),
            ("synthesis save-load-save", synth == one.synth),
        ];
        let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
        if bad.is_empty() {
            Ok(format!(
                "two seeded runs (1 and 3 threads) agree byte for byte on {} record bytes and both checkpoints; save-load-save reproduces {} + {} checkpoint bytes",
                one.records.len(),
                one.extractor.len(),
                one.synth.len()
            ))
        } else {
            Err(snet_core::Error::Data(format!("differs: {}", bad.join(", "))))
        }
    })();
    match outcome {
        Ok(d) => Verdict::new(true, d),
        Err(e) => Verdict::new(false, e.to_string()),
    }
}
