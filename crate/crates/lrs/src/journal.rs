//! Append-only journal: one canonical statement JSON per line.
//!
//! A crash can leave a partial last line. Replay drops it and truncates the
//! file back to the last complete line; an unparsable complete line is
//! reported as corruption instead.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use vita_core::xapi::{parse_statement, serialize_statement, Statement};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line} is not a valid statement: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Default)]
pub struct Replay {
    /// Statements with their canonical bodies, in file order.
    pub entries: Vec<(Statement, String)>,
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> Result<(Journal, Replay), JournalError> {
        let io_err = |source| JournalError::Io { path: path.to_path_buf(), source };
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;

        let replay = parse(path, &bytes)?;
        if replay.truncated_bytes > 0 {
            tracing::warn!(path = %path.display(), bytes = replay.truncated_bytes, "dropping torn journal tail");
            file.set_len((bytes.len() as u64) - replay.truncated_bytes).map_err(io_err)?;
        }
        Ok((Journal { path: path.to_path_buf(), file }, replay))
    }

    /// Replays without modifying the file, so it is safe while a server has
    /// the journal open. A missing file reads as empty.
    pub fn read_only(path: &Path) -> Result<Replay, JournalError> {
        match std::fs::read(path) {
            Ok(bytes) => parse(path, &bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Replay::default()),
            Err(source) => Err(JournalError::Io { path: path.to_path_buf(), source }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes the line in a single call so a crash tears at most this line.
    pub fn append(&mut self, canonical: &str) -> Result<(), JournalError> {
        let mut line = Vec::with_capacity(canonical.len() + 1);
        line.extend_from_slice(canonical.as_bytes());
        line.push(b'\n');
        self.file.write_all(&line).map_err(|source| JournalError::Io { path: self.path.clone(), source })
    }

    pub fn sync(&self) -> Result<(), JournalError> {
        self.file.sync_data().map_err(|source| JournalError::Io { path: self.path.clone(), source })
    }
}

/// Complete lines become entries; a partial last line is only counted.
fn parse(path: &Path, bytes: &[u8]) -> Result<Replay, JournalError> {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut replay = Replay { truncated_bytes: (bytes.len() - complete) as u64, ..Replay::default() };
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let corrupt = |reason: String| JournalError::Corrupt { path: path.to_path_buf(), line: i + 1, reason };
        let s = parse_statement(line).map_err(|e| corrupt(e.to_string()))?;
        let canonical = serialize_statement(&s).map_err(|e| corrupt(e.to_string()))?;
        replay.entries.push((s, canonical));
    }
    Ok(replay)
}
