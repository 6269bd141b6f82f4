use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::Episode;
use crate::{Error, Result};

/// Append-only newline-delimited JSON log of episodes (or any other
/// serializable record).
#[derive(Debug)]
pub struct EpisodeLog {
    path: PathBuf,
    file: File,
    /// fsync after every append.
    sync: bool,
}

impl EpisodeLog {
    /// Open for appending. A torn final line left by a crash is cut off
    /// first so the next record starts on a fresh line.
    pub fn open(path: impl Into<PathBuf>, sync: bool) -> Result<Self> {
        let path = path.into();
        if let Ok(bytes) = std::fs::read(&path) {
            if bytes.last().is_some_and(|&b| b != b'\n') {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(&path).map_err(|e| Error::file(&path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::file(&path, e))?;
                f.sync_all().map_err(|e| Error::file(&path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::file(&path, e))?;
        Ok(EpisodeLog { path, file, sync })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| Error::file(&self.path, e))?;
        if self.sync {
            self.file.sync_data().map_err(|e| Error::file(&self.path, e))?;
        }
        Ok(())
    }
}

/// Read every episode of a log.
pub fn read_episode_log(path: &Path) -> Result<Vec<Episode>> {
    read_json_log(path)
}

/// Read every record of a log. A torn final line (no trailing newline) is
/// ignored; any other malformed line is an error.
pub fn read_json_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        let ep = serde_json::from_str(&buf).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        out.push(ep);
    }
    Ok(out)
}
