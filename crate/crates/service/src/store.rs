//! One directory per example under the storage root:
//!
//! ```text
//! <root>/<id>/example.weat.json   portable document
//! <root>/<id>/meta.json           {"revision": n}
//! <root>/<id>/job.json            latest generation job
//! <root>/<id>/transcript.json     latest generation transcript
//! <root>/<id>/recordings/         live completions, replayable
//! ```
//!
//! Every file is replaced by writing a sibling temp file and renaming it
//! over the target, so readers see either the old or the new bytes.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use weat_core::example::is_valid_id;
use weat_core::{export_portable, import_portable, GenerationTranscript, WorkedExample};

use crate::error::ServiceError;
use crate::jobs::{GenerationJob, JobStatus};

const EXAMPLE_FILE: &str = "example.weat.json";
const META_FILE: &str = "meta.json";
const JOB_FILE: &str = "job.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
const RECORDINGS_DIR: &str = "recordings";

#[derive(Debug, Clone, PartialEq)]
pub struct StoredExample {
    pub revision: u64,
    pub example: WorkedExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSummary {
    pub id: String,
    pub title: String,
    pub language_tag: String,
    pub line_count: u32,
    pub explained_lines: usize,
    pub revision: u64,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Meta {
    revision: u64,
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ServiceError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if !is_valid_id(id) {
            return Err(ServiceError::NotFound(format!("example {id:?}")));
        }
        Ok(self.root.join(id))
    }

    fn existing_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        let dir = self.dir(id)?;
        if !dir.is_dir() {
            return Err(ServiceError::NotFound(format!("example {id:?}")));
        }
        Ok(dir)
    }

    pub fn recordings_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        Ok(self.dir(id)?.join(RECORDINGS_DIR))
    }

    pub fn create(&self, example: &WorkedExample) -> Result<StoredExample, ServiceError> {
        if !is_valid_id(&example.id) {
            return Err(ServiceError::Validation(format!("invalid example id {:?}", example.id)));
        }
        let document = export_portable(example)?;
        let dir = self.root.join(&example.id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                return Err(ServiceError::AlreadyExists(example.id.clone()))
            }
            Err(e) => return Err(ServiceError::io(&dir, e)),
        }
        write_json(&dir.join(META_FILE), &Meta { revision: 1 })?;
        atomic_write(&dir.join(EXAMPLE_FILE), document.as_bytes())?;
        Ok(StoredExample {
            revision: 1,
            example: example.clone(),
        })
    }

    pub fn load(&self, id: &str) -> Result<StoredExample, ServiceError> {
        let dir = self.existing_dir(id)?;
        let meta: Meta = read_json(&dir.join(META_FILE))?
            .ok_or_else(|| corrupt(&dir.join(META_FILE), "file is missing"))?;
        let path = dir.join(EXAMPLE_FILE);
        let document = read_text(&path)?.ok_or_else(|| corrupt(&path, "file is missing"))?;
        let example = import_portable(&document).map_err(|e| corrupt(&path, e))?;
        if example.id != id {
            return Err(corrupt(&path, format!("document id {:?} does not match its directory", example.id)));
        }
        Ok(StoredExample {
            revision: meta.revision,
            example,
        })
    }

    /// Replaces the stored example if it is still at `expected_revision`.
    /// Callers serialize writers per example; the check catches stale clients.
    pub fn save(&self, example: &WorkedExample, expected_revision: u64) -> Result<u64, ServiceError> {
        let dir = self.existing_dir(&example.id)?;
        let meta_path = dir.join(META_FILE);
        let meta: Meta = read_json(&meta_path)?.ok_or_else(|| corrupt(&meta_path, "file is missing"))?;
        if meta.revision != expected_revision {
            return Err(ServiceError::VersionConflict {
                given: expected_revision,
                current: meta.revision,
            });
        }
        let document = export_portable(example)?;
        atomic_write(&dir.join(EXAMPLE_FILE), document.as_bytes())?;
        let revision = meta.revision + 1;
        write_json(&meta_path, &Meta { revision })?;
        Ok(revision)
    }

    pub fn delete(&self, id: &str) -> Result<(), ServiceError> {
        let dir = self.existing_dir(id)?;
        fs::remove_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))
    }

    /// Summaries of every stored example, oldest update first.
    pub fn list(&self) -> Result<Vec<ExampleSummary>, ServiceError> {
        let entries = fs::read_dir(&self.root).map_err(|e| ServiceError::io(&self.root, e))?;
        let mut summaries = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| ServiceError::io(&self.root, e))?;
            let name = entry.file_name();
            let Some(id) = name.to_str() else { continue };
            if !entry.path().is_dir() || !is_valid_id(id) {
                continue;
            }
            let StoredExample { revision, example } = self.load(id)?;
            summaries.push(ExampleSummary {
                id: example.id.clone(),
                title: example.title.clone(),
                language_tag: example.language_tag.clone(),
                line_count: example.line_count(),
                explained_lines: example.lines.iter().filter(|l| l.is_explained()).count(),
                revision,
                updated_at: example.updated_at,
            });
        }
        summaries.sort_by(|a, b| a.updated_at.cmp(&b.updated_at).then_with(|| a.id.cmp(&b.id)));
        Ok(summaries)
    }

    pub fn load_job(&self, id: &str) -> Result<Option<GenerationJob>, ServiceError> {
        read_json(&self.existing_dir(id)?.join(JOB_FILE))
    }

    pub fn save_job(&self, job: &GenerationJob) -> Result<(), ServiceError> {
        write_json(&self.existing_dir(&job.example_id)?.join(JOB_FILE), job)
    }

    pub fn load_transcript(&self, id: &str) -> Result<Option<GenerationTranscript>, ServiceError> {
        read_json(&self.existing_dir(id)?.join(TRANSCRIPT_FILE))
    }

    pub fn save_transcript(&self, transcript: &GenerationTranscript) -> Result<(), ServiceError> {
        write_json(&self.existing_dir(&transcript.example_id)?.join(TRANSCRIPT_FILE), transcript)
    }

    /// Marks jobs left running by a previous process as failed, so they do
    /// not block new generations forever. Returns the affected example ids.
    pub fn recover_interrupted_jobs(&self, now: DateTime<Utc>) -> Result<Vec<String>, ServiceError> {
        let mut recovered = Vec::new();
        for summary in self.list()? {
            if let Some(mut job) = self.load_job(&summary.id)? {
                if job.status.is_running() {
                    job.fail("interrupted by a service restart", now);
                    self.save_job(&job)?;
                    recovered.push(summary.id);
                }
            }
        }
        Ok(recovered)
    }

    pub fn job_status(&self, id: &str) -> Result<Option<JobStatus>, ServiceError> {
        Ok(self.load_job(id)?.map(|job| job.status))
    }
}

fn corrupt(path: &Path, message: impl ToString) -> ServiceError {
    ServiceError::CorruptRecord {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_text(path: &Path) -> Result<Option<String>, ServiceError> {
    match fs::read(path) {
        Ok(bytes) => String::from_utf8(bytes).map(Some).map_err(|e| corrupt(path, e)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ServiceError::io(path, e)),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, ServiceError> {
    match read_text(path)? {
        Some(text) => serde_json::from_str(&text).map(Some).map_err(|e| corrupt(path, e)),
        None => Ok(None),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ServiceError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store records serialize");
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Temp file in the target directory, fsync, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut file = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|e| ServiceError::io(dir, e))?;
    file.write_all(bytes).map_err(|e| ServiceError::io(file.path(), e))?;
    file.as_file().sync_all().map_err(|e| ServiceError::io(file.path(), e))?;
    file.persist(path).map_err(|e| ServiceError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn sample(id: &str) -> WorkedExample {
        let now = Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap();
        WorkedExample::create("Sample", "", "int a = 1;\nint b = a;\n", "java", now)
            .unwrap()
            .with_id(id)
    }

    #[test]
    fn store_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let example = sample("sample");
        store.create(&example).unwrap();
        let loaded = store.load("sample").unwrap();
        assert_eq!(loaded.revision, 1);
        assert_eq!(loaded.example, example);
        assert!(matches!(store.create(&example), Err(ServiceError::AlreadyExists(_))));
    }

    #[test]
    fn unknown_and_unsafe_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        assert!(matches!(store.load("missing"), Err(ServiceError::NotFound(_))));
        assert!(matches!(store.load("../etc"), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn stale_revision_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let example = sample("sample");
        store.create(&example).unwrap();
        assert_eq!(store.save(&example, 1).unwrap(), 2);
        assert!(matches!(
            store.save(&example, 1),
            Err(ServiceError::VersionConflict { given: 1, current: 2 })
        ));
    }

    #[test]
    fn partial_temp_file_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let example = sample("sample");
        store.create(&example).unwrap();
        fs::write(dir.path().join("sample").join(".tmp-abc123"), b"{\"id\": \"sam").unwrap();
        fs::write(dir.path().join(".tmp-root"), b"junk").unwrap();
        assert_eq!(store.load("sample").unwrap().example, example);
        assert_eq!(store.list().unwrap().len(), 1);
    }

    #[test]
    fn corrupt_record_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        store.create(&sample("sample")).unwrap();
        let path = dir.path().join("sample").join(EXAMPLE_FILE);
        fs::write(&path, b"{ not json").unwrap();
        match store.load("sample") {
            Err(ServiceError::CorruptRecord { path: reported, .. }) => assert_eq!(reported, path),
            other => panic!("expected CorruptRecord, got {other:?}"),
        }
    }
}
