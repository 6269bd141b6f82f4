use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "dialearn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model plus what is needed to serve it: the vocabulary and candidate
/// answers it was trained with. Stored as a magic/version line followed by
/// JSON; tables are row-major and floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub v: u32,
    pub params: ModelParams,
    pub num_candidates: usize,
    #[serde(default)]
    pub vocab: Option<Vec<String>>,
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, num_candidates: usize) -> Self {
        Checkpoint { v: CHECKPOINT_VERSION, params, num_candidates, vocab: None, candidates: None }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Checkpoint("missing magic header".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let ck: Checkpoint = serde_json::from_reader(r)?;
        ck.params.config.validate()?;
        let p = &ck.params;
        let d = p.config.dim;
        let shapes_ok = p.input.data.len() == p.config.vocab_size * d
            && p.beta.len() == d
            && p.baseline_weights.len() == d
            && p.baseline_bias.len() == 1
            && p.answer.is_some() != p.config.tie_answer
            && p.feedback.is_some() == p.config.untie_feedback
            && p.temporal.is_some() == p.config.temporal;
        if !shapes_ok {
            return Err(Error::Checkpoint("parameter shapes disagree with config".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let f = std::fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
            let mut w = std::io::BufWriter::new(f);
            self.write_to(&mut w)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(f)
    }
}
