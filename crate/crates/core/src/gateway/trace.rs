// SPDX-License-Identifier: Apache-2.0

//! Append-only record of (request key, response) pairs.
//!
//! One JSON object per line:
//! `{"key_digest", "model_id", "temperature", "sample", "conversation_snapshot", "response"}`.
//! When a key appears more than once the last line wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{GatewayError, Message};
use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Live,
    Record,
    #[default]
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub key_digest: String,
    pub model_id: String,
    pub temperature: f64,
    #[serde(default)]
    pub sample: u32,
    pub conversation_snapshot: Vec<Message>,
    pub response: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    temperature: f64,
    sample: u32,
    messages: &'a [Message],
}

/// Content digest of a request: the message window actually sent, the
/// model, the temperature and the candidate index.
pub fn request_key(model_id: &str, temperature: f64, sample: u32, messages: &[Message]) -> String {
    let material = KeyMaterial {
        model_id,
        temperature,
        sample,
        messages,
    };
    sha256_hex(serde_json::to_vec(&material).expect("key material serializes"))
}

#[derive(Debug)]
pub struct TraceStore {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl TraceStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Load an existing trace for replay. The file must exist.
    pub fn open_replay(path: &Path) -> Result<Self, GatewayError> {
        let store = Self::in_memory();
        let entries = read_records(path)?;
        *store.entries.write().unwrap_or_else(|e| e.into_inner()) = entries;
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..store
        })
    }

    /// Open (creating if needed) a trace for appending new records.
    pub fn open_record(path: &Path) -> Result<Self, GatewayError> {
        let entries = if path.exists() {
            read_records(path)?
        } else {
            HashMap::new()
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| GatewayError::trace(path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::trace(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn lookup(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persist `rec` (flushed) and make it visible to lookups.
    pub fn record(&self, rec: &TraceRecord) -> Result<(), GatewayError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(rec).map_err(|e| GatewayError::TraceFormat(e.to_string()))?;
            line.push('\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<trace>"));
            file.write_all(line.as_bytes())
                .map_err(|e| GatewayError::trace(path, e))?;
            file.flush().map_err(|e| GatewayError::trace(path, e))?;
        }
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(rec.key_digest.clone(), rec.response.clone());
        Ok(())
    }

    /// Order-independent digest of the stored (key, response) pairs.
    pub fn digest(&self) -> String {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        let mut pairs: Vec<(&String, &String)> = entries.iter().collect();
        pairs.sort();
        sha256_hex(serde_json::to_vec(&pairs).expect("pairs serialize"))
    }
}

fn read_records(path: &Path) -> Result<HashMap<String, String>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::trace(path, e))?;
    let mut map = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::trace(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| GatewayError::TraceFormat(format!("{}:{}: {e}", path.display(), n + 1)))?;
        map.insert(rec.key_digest, rec.response);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;

    fn rec(key: &str, resp: &str) -> TraceRecord {
        TraceRecord {
            key_digest: key.into(),
            model_id: "m".into(),
            temperature: 0.7,
            sample: 1,
            conversation_snapshot: vec![Message::new(Role::User, "q")],
            response: resp.into(),
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t/trace.jsonl");
        let store = TraceStore::open_record(&path).unwrap();
        store.record(&rec("k1", "first")).unwrap();
        store.record(&rec("k2", "second\nline")).unwrap();
        store.record(&rec("k1", "newer")).unwrap();
        let replay = TraceStore::open_replay(&path).unwrap();
        assert_eq!(replay.lookup("k1").as_deref(), Some("newer"));
        assert_eq!(replay.lookup("k2").as_deref(), Some("second\nline"));
        assert_eq!(replay.lookup("k3"), None);
        assert_eq!(replay.digest(), store.digest());
    }

    #[test]
    fn replay_requires_file() {
        assert!(TraceStore::open_replay(Path::new("/nonexistent/trace.jsonl")).is_err());
    }

    #[test]
    fn corrupt_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        std::fs::write(&path, "{\"key_digest\": \"k\"").unwrap();
        assert!(matches!(
            TraceStore::open_replay(&path),
            Err(GatewayError::TraceFormat(_))
        ));
    }

    #[test]
    fn key_depends_on_every_input() {
        let msgs = vec![Message::new(Role::User, "q")];
        let base = request_key("m", 0.7, 1, &msgs);
        assert_eq!(base, request_key("m", 0.7, 1, &msgs));
        assert_ne!(base, request_key("m2", 0.7, 1, &msgs));
        assert_ne!(base, request_key("m", 0.2, 1, &msgs));
        assert_ne!(base, request_key("m", 0.7, 2, &msgs));
        assert_ne!(base, request_key("m", 0.7, 1, &[Message::new(Role::User, "q ")]));
    }

    #[test]
    fn key_stable_under_reserialization() {
        let msgs = vec![
            Message::new(Role::System, "s"),
            Message::new(Role::User, "line1\n  line2\t"),
        ];
        let key = request_key("m", 0.7, 3, &msgs);
        let pretty = serde_json::to_string_pretty(&msgs).unwrap();
        let back: Vec<Message> = serde_json::from_str(&pretty).unwrap();
        assert_eq!(request_key("m", 0.7, 3, &back), key);
    }
}
