//! Durable destinations for session log records.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::session::LogRecord;

/// Receives records before any of their effects are broadcast.
pub trait LogSink: Send {
    fn append(&mut self, records: &[LogRecord]) -> io::Result<()>;
}

/// Keeps nothing; the host's in-memory copy is the only record.
#[derive(Debug, Default)]
pub struct NullSink;

impl LogSink for NullSink {
    fn append(&mut self, _: &[LogRecord]) -> io::Result<()> {
        Ok(())
    }
}

/// Appends newline-delimited JSON to a file, flushing and syncing on every
/// batch.
#[derive(Debug)]
pub struct JsonlSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(JsonlSink {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogSink for JsonlSink {
    fn append(&mut self, records: &[LogRecord]) -> io::Result<()> {
        for r in records {
            self.out.write_all(r.to_line().as_bytes())?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}
