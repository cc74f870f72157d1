//! Append-only per-session journal (`<dir>/<id>.jsonl`). Replaying a journal
//! re-runs the recorded operations, which is exact because every step of a
//! session is deterministic given its config and answers.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use dmaware_core::active_learning::{Answer, Query};
use dmaware_core::ExecMode;
use serde::{Deserialize, Serialize};

use crate::session::{Session, SessionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { config: Box<SessionConfig> },
    Queried { query: Query },
    Answered { answer: Answer, timestamp_ms: u64 },
    Closed,
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

impl Journal {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn append(&self, id: &str, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(id))?;
        f.write_all(&line)?;
        f.sync_data()
    }

    /// Rebuild every journalled session. Sessions whose journal cannot be
    /// replayed are skipped with a warning.
    pub fn replay_all(&self, exec: ExecMode) -> std::io::Result<Vec<Session>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            match replay(&p, id.clone(), exec) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!(session = %id, "journal not replayed: {e}"),
            }
        }
        Ok(out)
    }
}

fn replay(path: &Path, id: String, exec: ExecMode) -> Result<Session, String> {
    let reader = BufReader::new(File::open(path).map_err(|e| e.to_string())?);
    let mut lines = reader.lines().enumerate().peekable();
    let mut session: Option<Session> = None;
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(|e| e.to_string())?;
        let event: Event = match serde_json::from_str(&line) {
            Ok(ev) => ev,
            // A torn final line is what a crash mid-append leaves behind.
            Err(_) if lines.peek().is_none() => {
                tracing::warn!(line = i + 1, "ignoring truncated final journal line");
                break;
            }
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        };
        match (event, session.as_mut()) {
            (Event::Created { config }, None) => {
                session = Some(Session::create(id.clone(), *config).map_err(|e| e.to_string())?);
            }
            (Event::Queried { query }, Some(s)) => {
                let (card, _) = s.next_query(exec).map_err(|e| e.to_string())?;
                if card.query != query {
                    return Err(format!("line {}: replay selected {:?}, journal has {query:?}", i + 1, card.query));
                }
            }
            (Event::Answered { answer, timestamp_ms }, Some(s)) => {
                s.submit_answer(answer, timestamp_ms).map_err(|e| e.to_string())?;
            }
            (Event::Closed, Some(s)) => s.close().map_err(|e| e.to_string())?,
            (_, _) => return Err(format!("line {}: event out of order", i + 1)),
        }
    }
    session.ok_or_else(|| "journal has no creation record".to_string())
}
