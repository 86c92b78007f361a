//! Player profiles persisted in a single JSON document.
//!
//! Store layout:
//!
//! ```json
//! {
//!   "version": 1,
//!   "profiles": [
//!     {
//!       "id": "…", "name": "Sara", "age": 8,
//!       "exercise": "elbow", "arm": "left", "repetitions": 5,
//!       "progress": { "level": 1, "stage": 4 },
//!       "created_at": "2026-01-01T10:00:00Z", "updated_at": "…"
//!     }
//!   ]
//! }
//! ```
//!
//! Fields this version does not know about are kept and written back.
//! Writes go to a temporary file that is renamed over the store; a sidecar
//! `<store>.lock` file carries the advisory lock.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::game::SubLevelId;
use crate::rules::{Arm, ExerciseKind};

pub const STORE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub name: String,
    /// Advisory only; the game targets 6 to 12 year olds.
    pub age: Option<u32>,
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub repetitions: u32,
    pub progress: Option<SubLevelId>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, Default)]
pub struct NewProfile {
    pub id: Option<String>,
    pub name: String,
    pub age: Option<u32>,
    pub exercise: Option<ExerciseKind>,
    pub arm: Option<Arm>,
    pub repetitions: u32,
}

#[derive(Clone, Debug, Default)]
pub struct ProfileUpdate {
    pub name: Option<String>,
    pub age: Option<Option<u32>>,
    pub exercise: Option<ExerciseKind>,
    pub arm: Option<Arm>,
    pub repetitions: Option<u32>,
    pub progress: Option<Option<SubLevelId>>,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no profile with id `{0}`")]
    UnknownId(String),
    #[error("a profile with id `{0}` already exists")]
    DuplicateId(String),
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("{path}:{line}: malformed profile store: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: unsupported store version {version}")]
    Version { path: PathBuf, version: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreDocument {
    pub version: u32,
    pub profiles: Vec<Profile>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Default for StoreDocument {
    fn default() -> Self {
        Self { version: STORE_VERSION, profiles: Vec::new(), extra: Map::new() }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileStore {
    path: PathBuf,
}

impl ProfileStore {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> ProfileError {
        ProfileError::Io { path: self.path.clone(), source }
    }

    fn lock_file(&self) -> Result<File, ProfileError> {
        let mut name = self.path.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        let lock_path = self.path.with_file_name(name);
        OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|source| ProfileError::Io { path: lock_path, source })
    }

    /// Reads the whole store; a missing file is an empty store.
    pub fn load(&self) -> Result<StoreDocument, ProfileError> {
        let lock = self.lock_file()?;
        lock.lock_shared().map_err(|e| self.io(e))?;
        self.read_unlocked()
    }

    fn read_unlocked(&self) -> Result<StoreDocument, ProfileError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(StoreDocument::default()),
            Err(e) => return Err(self.io(e)),
        };
        let doc: StoreDocument = serde_json::from_str(&text).map_err(|e| ProfileError::Malformed {
            path: self.path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.version != STORE_VERSION {
            return Err(ProfileError::Version { path: self.path.clone(), version: doc.version as u64 });
        }
        Ok(doc)
    }

    fn write_unlocked(&self, doc: &StoreDocument) -> Result<(), ProfileError> {
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| self.io(e))?;
        let mut body = serde_json::to_vec_pretty(doc).expect("store document serializes");
        body.push(b'\n');
        tmp.write_all(&body).map_err(|e| self.io(e))?;
        tmp.as_file().sync_all().map_err(|e| self.io(e))?;
        tmp.persist(&self.path).map_err(|e| self.io(e.error))?;
        Ok(())
    }

    /// Replaces the store contents.
    pub fn save(&self, doc: &StoreDocument) -> Result<(), ProfileError> {
        let lock = self.lock_file()?;
        lock.lock().map_err(|e| self.io(e))?;
        self.write_unlocked(doc)
    }

    /// Read-modify-write under the exclusive lock.
    fn modify<T>(&self, f: impl FnOnce(&mut StoreDocument) -> Result<T, ProfileError>) -> Result<T, ProfileError> {
        let lock = self.lock_file()?;
        lock.lock().map_err(|e| self.io(e))?;
        let mut doc = self.read_unlocked()?;
        let out = f(&mut doc)?;
        self.write_unlocked(&doc)?;
        Ok(out)
    }

    pub fn create(&self, new: NewProfile) -> Result<Profile, ProfileError> {
        if new.name.trim().is_empty() {
            return Err(ProfileError::Invalid("name must not be empty".into()));
        }
        if new.repetitions < 1 {
            return Err(ProfileError::Invalid("repetitions must be at least 1".into()));
        }
        let now = Utc::now();
        let profile = Profile {
            id: new.id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string()),
            name: new.name,
            age: new.age,
            exercise: new.exercise.unwrap_or(ExerciseKind::ElbowFlexExt),
            arm: new.arm.unwrap_or(Arm::Right),
            repetitions: new.repetitions,
            progress: None,
            created_at: now,
            updated_at: now,
            extra: Map::new(),
        };
        self.modify(|doc| {
            if doc.profiles.iter().any(|p| p.id == profile.id) {
                return Err(ProfileError::DuplicateId(profile.id.clone()));
            }
            doc.profiles.push(profile.clone());
            Ok(profile)
        })
    }

    pub fn get(&self, id: &str) -> Result<Profile, ProfileError> {
        self.load()?.profiles.into_iter().find(|p| p.id == id).ok_or_else(|| ProfileError::UnknownId(id.to_string()))
    }

    /// All profiles sorted by name, then id.
    pub fn list(&self) -> Result<Vec<Profile>, ProfileError> {
        let mut profiles = self.load()?.profiles;
        profiles.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.id.cmp(&b.id)));
        Ok(profiles)
    }

    pub fn update(&self, id: &str, update: ProfileUpdate) -> Result<Profile, ProfileError> {
        if update.repetitions == Some(0) {
            return Err(ProfileError::Invalid("repetitions must be at least 1".into()));
        }
        if matches!(&update.name, Some(n) if n.trim().is_empty()) {
            return Err(ProfileError::Invalid("name must not be empty".into()));
        }
        self.modify(|doc| {
            let p =
                doc.profiles.iter_mut().find(|p| p.id == id).ok_or_else(|| ProfileError::UnknownId(id.to_string()))?;
            if let Some(name) = update.name {
                p.name = name;
            }
            if let Some(age) = update.age {
                p.age = age;
            }
            if let Some(exercise) = update.exercise {
                p.exercise = exercise;
            }
            if let Some(arm) = update.arm {
                p.arm = arm;
            }
            if let Some(n) = update.repetitions {
                p.repetitions = n;
            }
            if let Some(progress) = update.progress {
                p.progress = progress;
            }
            p.updated_at = Utc::now().max(p.updated_at);
            Ok(p.clone())
        })
    }

    /// Raises the stored progress to `reached` if it is further along.
    pub fn record_progress(&self, id: &str, reached: SubLevelId) -> Result<Profile, ProfileError> {
        self.modify(|doc| {
            let p =
                doc.profiles.iter_mut().find(|p| p.id == id).ok_or_else(|| ProfileError::UnknownId(id.to_string()))?;
            if p.progress.is_none_or(|c| reached > c) {
                p.progress = Some(reached);
                p.updated_at = Utc::now().max(p.updated_at);
            }
            Ok(p.clone())
        })
    }

    pub fn delete(&self, id: &str) -> Result<(), ProfileError> {
        self.modify(|doc| {
            let before = doc.profiles.len();
            doc.profiles.retain(|p| p.id != id);
            if doc.profiles.len() == before {
                Err(ProfileError::UnknownId(id.to_string()))
            } else {
                Ok(())
            }
        })
    }
}
