//! Append-only JSON-lines event journal.
//!
//! Each event is written and flushed before the request that produced it
//! is acknowledged. A torn final line (crash mid-write) is discarded on
//! open; corruption anywhere else is an error.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::store::Event;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl Journal {
    /// Opens (creating if needed) and returns the journal together with
    /// the events already in it. With `sync`, every append is fsynced.
    pub fn open(path: &Path, sync: bool) -> Result<(Self, Vec<Event>), JournalError> {
        let io_err = |source| JournalError::Io {
            path: path.to_owned(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err)?;
        let (events, good_len) = read_events(path, &mut file)?;
        let len = file.metadata().map_err(io_err)?.len();
        if good_len < len {
            tracing::warn!(
                path = %path.display(),
                dropped = len - good_len,
                "discarding torn journal tail"
            );
            file.set_len(good_len).map_err(io_err)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err)?;
        Ok((
            Journal {
                path: path.to_owned(),
                file,
                sync,
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, events: &[Event]) -> Result<(), JournalError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let io_err = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&buf).map_err(io_err)?;
        self.file.flush().map_err(io_err)?;
        if self.sync {
            self.file.sync_data().map_err(io_err)?;
        }
        Ok(())
    }
}

fn read_events(path: &Path, file: &mut File) -> Result<(Vec<Event>, u64), JournalError> {
    file.seek(SeekFrom::Start(0))
        .map_err(|source| JournalError::Io {
            path: path.to_owned(),
            source,
        })?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|source| JournalError::Io {
                path: path.to_owned(),
                source,
            })?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            good_len += n as u64;
            continue;
        }
        match serde_json::from_str::<Event>(line.trim_end()) {
            Ok(e) if complete => {
                events.push(e);
                good_len += n as u64;
            }
            // unterminated last line: torn write
            Ok(_) => break,
            Err(_) if !complete => break,
            Err(source) => {
                return Err(JournalError::Corrupt {
                    path: path.to_owned(),
                    line: lineno,
                    source,
                })
            }
        }
    }
    Ok((events, good_len))
}
