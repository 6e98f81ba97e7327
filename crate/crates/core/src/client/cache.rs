use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::CompletionRecord;

/// Persistent content-addressed store: one `<digest>.json` file per record.
///
/// Reads are lock-free; writes are serialized and land via rename so a
/// reader never sees a partial file.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> io::Result<Option<CompletionRecord>> {
        let path = self.path_for(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let record: CompletionRecord = serde_json::from_slice(&bytes)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        if record.digest != digest {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} holds digest {}", path.display(), record.digest),
            ));
        }
        Ok(Some(record))
    }

    pub fn put(&self, record: &CompletionRecord) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(record)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = self
            .dir
            .join(format!(".{}.{}.tmp", record.digest, std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.path_for(&record.digest))
    }

    pub fn len(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        self.len().map(|n| n == 0)
    }
}
