//! Directory-backed motion store.
//!
//! Each motion lives in `<dir>/<name>.json` in canonical form. Writes go to
//! a temporary file in the same directory, are synced, and then renamed over
//! the target, so a crash at any point leaves either the old or the new
//! document. The in-memory index caches the bytes served to readers together
//! with a modification timestamp used for optimistic concurrency.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use hop_core::motion::valid_motion_name;
use hop_core::{assets, Motion};

/// Stages of a write at which a fault hook may simulate a crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    TempCreated,
    /// Half of the document has been written to the temporary file.
    PartialWrite,
    Synced,
    Renamed,
}

pub const FAULT_POINTS: [FaultPoint; 4] = [
    FaultPoint::TempCreated,
    FaultPoint::PartialWrite,
    FaultPoint::Synced,
    FaultPoint::Renamed,
];

/// Called at every [`FaultPoint`]. An error aborts the write on the spot,
/// without cleanup, as if the process had died there.
pub type FaultHook = Arc<dyn Fn(FaultPoint, &str) -> io::Result<()> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no motion named `{0}`")]
    NotFound(String),
    #[error("invalid motion document at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("stale write: store holds version {current:?}")]
    Conflict { current: Option<u64> },
    #[error("{0}")]
    Io(String),
}

/// Write precondition, from the `If-Match` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precondition {
    None,
    /// `If-Match: *`: the motion must exist.
    Exists,
    Version(u64),
}

#[derive(Debug, Clone)]
struct Entry {
    modified: u64,
    doc: Arc<String>,
    motion: Arc<Motion>,
}

pub struct MotionStore {
    dir: PathBuf,
    index: RwLock<BTreeMap<String, Entry>>,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    last_stamp: AtomicU64,
    temp_counter: AtomicU64,
    fault: Option<FaultHook>,
}

fn now_micros() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

fn is_temp_file(name: &str) -> bool {
    name.starts_with('.') && name.contains(".tmp-")
}

fn invalid(path: impl Into<String>, e: hop_core::Error) -> StoreError {
    match e {
        hop_core::Error::Schema { path: p, message } => StoreError::Invalid {
            path: format!("{}{}", path.into(), if p == "$" { String::new() } else { format!(":{p}") }),
            message,
        },
        other => StoreError::Invalid {
            path: path.into(),
            message: other.to_string(),
        },
    }
}

fn document_error(e: hop_core::Error) -> StoreError {
    match e {
        hop_core::Error::Schema { path, message } => StoreError::Invalid { path, message },
        other => StoreError::Invalid {
            path: "$".into(),
            message: other.to_string(),
        },
    }
}

impl MotionStore {
    /// Opens `dir`, removing temporary files left by interrupted writes.
    /// A missing directory is created empty.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let io_err = |e: io::Error| StoreError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(&dir).map_err(io_err)?;
        let mut index = BTreeMap::new();
        let mut last = 0;
        let mut entries: Vec<_> = fs::read_dir(&dir)
            .map_err(io_err)?
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let file_name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            if is_temp_file(&file_name) {
                fs::remove_file(&path).map_err(io_err)?;
                continue;
            }
            let Some(name) = file_name.strip_suffix(".json") else { continue };
            if !valid_motion_name(name) {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err)?;
            let motion = Motion::from_json(&text).map_err(|e| invalid(file_name.clone(), e))?;
            if motion.name != name {
                return Err(StoreError::Invalid {
                    path: format!("{file_name}:name"),
                    message: format!("document is named `{}`", motion.name),
                });
            }
            let modified = entry
                .metadata()
                .and_then(|m| m.modified())
                .ok()
                .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                .map(|d| d.as_micros() as u64)
                .unwrap_or(0);
            last = last.max(modified);
            index.insert(
                name.to_string(),
                Entry {
                    modified,
                    doc: Arc::new(text),
                    motion: Arc::new(motion),
                },
            );
        }
        Ok(MotionStore {
            dir,
            index: RwLock::new(index),
            write_locks: Mutex::new(HashMap::new()),
            last_stamp: AtomicU64::new(last),
            temp_counter: AtomicU64::new(0),
            fault: None,
        })
    }

    /// Like [`MotionStore::open`], but a directory that does not exist yet
    /// is populated with the shipped motions.
    pub fn open_or_seed(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        if !dir.exists() {
            let store = MotionStore::open(&dir)?;
            for name in assets::MOTION_NAMES {
                let text = assets::motion_json(name).expect("shipped");
                store.put(name, text, Precondition::None)?;
            }
            return Ok(store);
        }
        MotionStore::open(dir)
    }

    pub fn with_fault_hook(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn names(&self) -> Vec<String> {
        self.index.read().unwrap().keys().cloned().collect()
    }

    /// Names with modification timestamps (microseconds since the epoch).
    pub fn list(&self) -> Vec<(String, u64)> {
        self.index
            .read()
            .unwrap()
            .iter()
            .map(|(k, e)| (k.clone(), e.modified))
            .collect()
    }

    /// Canonical document bytes and timestamp.
    pub fn get(&self, name: &str) -> Option<(Arc<String>, u64)> {
        self.index
            .read()
            .unwrap()
            .get(name)
            .map(|e| (e.doc.clone(), e.modified))
    }

    pub fn motion(&self, name: &str) -> Option<Motion> {
        self.index.read().unwrap().get(name).map(|e| (*e.motion).clone())
    }

    fn next_stamp(&self) -> u64 {
        let now = now_micros();
        let mut prev = self.last_stamp.load(Ordering::SeqCst);
        loop {
            let next = now.max(prev + 1);
            match self
                .last_stamp
                .compare_exchange(prev, next, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => return next,
                Err(p) => prev = p,
            }
        }
    }

    fn write_lock(&self, name: &str) -> Arc<Mutex<()>> {
        self.write_locks
            .lock()
            .unwrap()
            .entry(name.to_string())
            .or_default()
            .clone()
    }

    /// Validates `body`, stores it in canonical form and returns the new
    /// timestamp. Writes to the same name are serialised; writes to
    /// different names proceed in parallel.
    pub fn put(&self, name: &str, body: &str, pre: Precondition) -> Result<u64, StoreError> {
        if !valid_motion_name(name) {
            return Err(StoreError::Invalid {
                path: "name".into(),
                message: format!("`{name}` is not a valid motion name"),
            });
        }
        let motion = Motion::from_json(body).map_err(document_error)?;
        if motion.name != name {
            return Err(StoreError::Invalid {
                path: "name".into(),
                message: format!("document name `{}` does not match `{name}`", motion.name),
            });
        }
        let canonical = motion.to_canonical_json();
        // Re-read the rounded form so the index holds exactly what is served.
        let motion = Motion::from_json(&canonical).map_err(document_error)?;

        let lock = self.write_lock(name);
        let _guard = lock.lock().unwrap();
        let current = self.index.read().unwrap().get(name).map(|e| e.modified);
        match (pre, current) {
            (Precondition::None, _) => {}
            (Precondition::Exists, Some(_)) => {}
            (Precondition::Version(v), Some(c)) if v == c => {}
            _ => return Err(StoreError::Conflict { current }),
        }

        self.write_atomic(name, &canonical)?;
        let modified = self.next_stamp();
        self.index.write().unwrap().insert(
            name.to_string(),
            Entry {
                modified,
                doc: Arc::new(canonical),
                motion: Arc::new(motion),
            },
        );
        Ok(modified)
    }

    fn write_atomic(&self, name: &str, text: &str) -> Result<(), StoreError> {
        let target = self.dir.join(format!("{name}.json"));
        let n = self.temp_counter.fetch_add(1, Ordering::Relaxed);
        let temp = self
            .dir
            .join(format!(".{name}.json.tmp-{}-{n}", std::process::id()));

        enum Failure {
            Fault(io::Error),
            Io(io::Error),
        }
        let fault = |p: FaultPoint| match &self.fault {
            Some(hook) => hook(p, name).map_err(Failure::Fault),
            None => Ok(()),
        };
        let steps = || -> Result<(), Failure> {
            let bytes = text.as_bytes();
            let half = bytes.len() / 2;
            let mut f = File::create(&temp).map_err(Failure::Io)?;
            fault(FaultPoint::TempCreated)?;
            f.write_all(&bytes[..half]).map_err(Failure::Io)?;
            f.flush().map_err(Failure::Io)?;
            fault(FaultPoint::PartialWrite)?;
            f.write_all(&bytes[half..]).map_err(Failure::Io)?;
            f.sync_all().map_err(Failure::Io)?;
            drop(f);
            fault(FaultPoint::Synced)?;
            fs::rename(&temp, &target).map_err(Failure::Io)?;
            if let Ok(d) = File::open(&self.dir) {
                // Persist the rename; not supported everywhere.
                let _ = d.sync_all();
            }
            fault(FaultPoint::Renamed)
        };
        match steps() {
            Ok(()) => Ok(()),
            Err(Failure::Fault(e)) => Err(StoreError::Io(format!("write of `{name}` interrupted: {e}"))),
            Err(Failure::Io(e)) => {
                let _ = fs::remove_file(&temp);
                Err(StoreError::Io(format!("{}: {e}", target.display())))
            }
        }
    }
}
