//! Provenance-stamped artifact files and stage fingerprints. Every
//! file a pipeline stage writes carries the engine version and the
//! hash of the config that produced it, and each stage records an
//! input fingerprint so unchanged re-runs can be skipped.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ENGINE_VERSION;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("could not serialize value: {0}")]
    Serialize(#[source] serde_json::Error),
    #[error("{path}: first line is not a provenance header")]
    MissingProvenance { path: PathBuf },
}

/// Identity of the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: &str) -> Self {
        Provenance {
            engine_version: ENGINE_VERSION.to_string(),
            config_hash: config_hash.to_string(),
        }
    }

    /// Comment line used at the top of CSV artifacts.
    pub fn csv_comment(&self) -> String {
        format!(
            "# engine={} config={}",
            self.engine_version, self.config_hash
        )
    }
}

/// SHA-256 of a value's canonical JSON serialization, in hex. Map keys
/// serialize in sorted order, so the hash is stable across runs.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String, ArtifactError> {
    let canonical = serde_json::to_string(config).map_err(ArtifactError::Serialize)?;
    Ok(sha256_hex(canonical.as_bytes()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn io_error(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_error(path: &Path, source: serde_json::Error) -> ArtifactError {
    ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    meta: Provenance,
}

/// Writes a JSONL artifact: a provenance line first, then one record
/// per line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    provenance: &Provenance,
    records: &[T],
) -> Result<(), ArtifactError> {
    let mut out = serde_json::to_string(&MetaLine {
        meta: provenance.clone(),
    })
    .map_err(ArtifactError::Serialize)?;
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record).map_err(ArtifactError::Serialize)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Reads a JSONL artifact written by [`write_jsonl`].
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Provenance, Vec<T>), ArtifactError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(line) => line.map_err(|e| io_error(path, e))?,
        None => return Err(ArtifactError::MissingProvenance { path: path.into() }),
    };
    let meta: MetaLine = serde_json::from_str(&first)
        .map_err(|_| ArtifactError::MissingProvenance { path: path.into() })?;
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| json_error(path, e))?);
    }
    Ok((meta.meta, records))
}

/// Writes a single-document JSON artifact with an embedded meta block.
pub fn write_json<T: Serialize>(
    path: &Path,
    provenance: &Provenance,
    value: &T,
) -> Result<(), ArtifactError> {
    #[derive(Serialize)]
    struct Document<'a, T> {
        meta: &'a Provenance,
        data: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Document {
        meta: provenance,
        data: value,
    })
    .map_err(ArtifactError::Serialize)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Reads a JSON artifact written by [`write_json`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(Provenance, T), ArtifactError> {
    #[derive(Deserialize)]
    struct Document<T> {
        meta: Provenance,
        data: T,
    }
    let mut text = String::new();
    fs::File::open(path)
        .map_err(|e| io_error(path, e))?
        .read_to_string(&mut text)
        .map_err(|e| io_error(path, e))?;
    let document: Document<T> = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    Ok((document.meta, document.data))
}

/// Writes a CSV artifact with the provenance comment as its first
/// line.
pub fn write_csv(path: &Path, provenance: &Provenance, csv_text: &str) -> Result<(), ArtifactError> {
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    writeln!(file, "{}", provenance.csv_comment()).map_err(|e| io_error(path, e))?;
    file.write_all(csv_text.as_bytes())
        .map_err(|e| io_error(path, e))
}

/// Reads a CSV artifact, returning its provenance and the body with
/// the comment line stripped.
pub fn read_csv(path: &Path) -> Result<(Provenance, String), ArtifactError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let (first, body) = text
        .split_once('\n')
        .ok_or_else(|| ArtifactError::MissingProvenance { path: path.into() })?;
    let rest = first
        .strip_prefix("# engine=")
        .ok_or_else(|| ArtifactError::MissingProvenance { path: path.into() })?;
    let (engine_version, config_hash) = rest
        .split_once(" config=")
        .ok_or_else(|| ArtifactError::MissingProvenance { path: path.into() })?;
    Ok((
        Provenance {
            engine_version: engine_version.to_string(),
            config_hash: config_hash.to_string(),
        },
        body.to_string(),
    ))
}

/// Digest of everything a stage's output depends on: engine version,
/// config hash, and the bytes of each input artifact.
pub fn stage_fingerprint(
    stage: &str,
    provenance: &Provenance,
    input_paths: &[PathBuf],
) -> Result<String, ArtifactError> {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update([0]);
    hasher.update(provenance.engine_version.as_bytes());
    hasher.update([0]);
    hasher.update(provenance.config_hash.as_bytes());
    for path in input_paths {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        hasher.update([0]);
        hasher.update(path.file_name().unwrap_or_default().as_encoded_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn fingerprint_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(format!("{stage}.fingerprint"))
}

/// True when the stage's recorded fingerprint matches, meaning its
/// outputs are already current for these inputs.
pub fn stage_is_current(out_dir: &Path, stage: &str, fingerprint: &str) -> bool {
    fs::read_to_string(fingerprint_path(out_dir, stage))
        .map(|recorded| recorded.trim() == fingerprint)
        .unwrap_or(false)
}

/// Records a stage's fingerprint after a successful run.
pub fn record_stage(out_dir: &Path, stage: &str, fingerprint: &str) -> Result<(), ArtifactError> {
    let path = fingerprint_path(out_dir, stage);
    fs::write(&path, format!("{fingerprint}\n")).map_err(|e| io_error(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        id: String,
        value: u32,
    }

    fn rows() -> Vec<Row> {
        vec![
            Row {
                id: "a".to_string(),
                value: 1,
            },
            Row {
                id: "b".to_string(),
                value: 2,
            },
        ]
    }

    #[test]
    fn config_hash_is_stable_and_order_insensitive() {
        let mut first = BTreeMap::new();
        first.insert("beta", 2);
        first.insert("alpha", 1);
        let mut second = BTreeMap::new();
        second.insert("alpha", 1);
        second.insert("beta", 2);
        let left = config_hash(&first).unwrap();
        assert_eq!(left, config_hash(&second).unwrap());
        assert_eq!(left.len(), 64);
        assert!(left.chars().all(|c| c.is_ascii_hexdigit()));
        second.insert("gamma", 3);
        assert_ne!(left, config_hash(&second).unwrap());
    }

    #[test]
    fn jsonl_round_trips_with_provenance_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let provenance = Provenance::new("abc123");
        write_jsonl(&path, &provenance, &rows()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"meta\""));
        assert!(first.contains("abc123"));
        assert_eq!(text.lines().count(), 3);
        let (read_provenance, read_rows): (Provenance, Vec<Row>) = read_jsonl(&path).unwrap();
        assert_eq!(read_provenance, provenance);
        assert_eq!(read_rows, rows());
    }

    #[test]
    fn jsonl_without_a_meta_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"value\":1}\n").unwrap();
        assert!(matches!(
            read_jsonl::<Row>(&path),
            Err(ArtifactError::MissingProvenance { .. })
        ));
        let empty = dir.path().join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        assert!(matches!(
            read_jsonl::<Row>(&empty),
            Err(ArtifactError::MissingProvenance { .. })
        ));
    }

    #[test]
    fn json_document_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        let provenance = Provenance::new("cafe");
        write_json(&path, &provenance, &rows()).unwrap();
        let (read_provenance, data): (Provenance, Vec<Row>) = read_json(&path).unwrap();
        assert_eq!(read_provenance.config_hash, "cafe");
        assert_eq!(read_provenance.engine_version, ENGINE_VERSION);
        assert_eq!(data, rows());
    }

    #[test]
    fn csv_comment_carries_engine_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let provenance = Provenance::new("beef");
        write_csv(&path, &provenance, "x,y\n1,2\n").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("# engine={ENGINE_VERSION} config=beef\n")));
        let (read_provenance, body) = read_csv(&path).unwrap();
        assert_eq!(read_provenance, provenance);
        assert_eq!(body, "x,y\n1,2\n");
    }

    #[test]
    fn fingerprints_react_to_input_changes_only() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.jsonl");
        fs::write(&input, "payload-v1").unwrap();
        let provenance = Provenance::new("h1");
        let inputs = vec![input.clone()];
        let first = stage_fingerprint("curate", &provenance, &inputs).unwrap();
        let again = stage_fingerprint("curate", &provenance, &inputs).unwrap();
        assert_eq!(first, again);

        assert!(!stage_is_current(dir.path(), "curate", &first));
        record_stage(dir.path(), "curate", &first).unwrap();
        assert!(stage_is_current(dir.path(), "curate", &first));

        fs::write(&input, "payload-v2").unwrap();
        let changed = stage_fingerprint("curate", &provenance, &inputs).unwrap();
        assert_ne!(first, changed);
        assert!(!stage_is_current(dir.path(), "curate", &changed));

        let other_stage = stage_fingerprint("summarize", &provenance, &inputs).unwrap();
        assert_ne!(changed, other_stage);
        let other_config =
            stage_fingerprint("curate", &Provenance::new("h2"), &inputs).unwrap();
        assert_ne!(changed, other_config);
    }

    #[test]
    fn fingerprint_surfaces_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("never-written.jsonl");
        let result = stage_fingerprint("curate", &Provenance::new("h"), &[missing]);
        assert!(matches!(result, Err(ArtifactError::Io { .. })));
    }
}
