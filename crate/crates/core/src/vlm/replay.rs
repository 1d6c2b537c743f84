use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Role, VlmBackend, VlmError, VlmRequest};

/// Hex SHA-256 over episode id, step, role and prompt text. Images are left
/// out: they are derived from the same state as the text.
pub fn prompt_hash(request: &VlmRequest<'_>) -> String {
    let mut h = Sha256::new();
    h.update(request.tag.episode.as_bytes());
    h.update([0]);
    h.update(request.tag.step.to_le_bytes());
    h.update(format!("{:?}", request.prompt.role).as_bytes());
    h.update([0]);
    h.update(request.prompt.text.as_bytes());
    hex::encode(h.finalize())
}

/// One line of a recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub role: Role,
    pub prompt_hash: String,
    pub response: String,
    #[serde(default)]
    pub episode: String,
    #[serde(default)]
    pub step: usize,
}

/// Passes calls through to `inner` and appends every response to a log.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<RecordEntry>>,
    sink: Option<Mutex<File>>,
}

impl<B: VlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
            sink: None,
        }
    }

    /// Also appends each entry as a JSON line to `path`, truncating it first.
    pub fn to_file(inner: B, path: &Path) -> Result<Self, VlmError> {
        let f = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            entries: Mutex::new(Vec::new()),
            sink: Some(Mutex::new(f)),
        })
    }

    pub fn entries(&self) -> Vec<RecordEntry> {
        self.entries.lock().expect("recorder poisoned").clone()
    }
}

impl<B: VlmBackend> VlmBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        let response = self.inner.complete(request)?;
        let entry = RecordEntry {
            role: request.prompt.role,
            prompt_hash: prompt_hash(request),
            response: response.clone(),
            episode: request.tag.episode.clone(),
            step: request.tag.step,
        };
        if let Some(sink) = &self.sink {
            let line = serde_json::to_string(&entry).expect("record entry serializes");
            let mut f = sink.lock().expect("recorder poisoned");
            writeln!(f, "{line}").map_err(|e| VlmError::Io(e.to_string()))?;
        }
        self.entries.lock().expect("recorder poisoned").push(entry);
        Ok(response)
    }
}

/// Serves recorded responses by prompt hash. Repeated prompts (retries) are
/// answered in recorded order; the last answer repeats once exhausted.
pub struct ReplayBackend {
    responses: HashMap<(Role, String), Vec<String>>,
    cursors: Mutex<HashMap<(Role, String), usize>>,
}

impl ReplayBackend {
    pub fn new(entries: impl IntoIterator<Item = RecordEntry>) -> Self {
        let mut responses: HashMap<(Role, String), Vec<String>> = HashMap::new();
        for e in entries {
            responses.entry((e.role, e.prompt_hash)).or_default().push(e.response);
        }
        Self {
            responses,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, VlmError> {
        let f = File::open(path).map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordEntry = serde_json::from_str(&line)
                .map_err(|e| VlmError::Io(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl VlmBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        let key = (request.prompt.role, prompt_hash(request));
        let Some(list) = self.responses.get(&key) else {
            return Err(VlmError::ReplayMiss {
                role: key.0,
                hash: key.1,
            });
        };
        let mut cursors = self.cursors.lock().expect("replay cursor poisoned");
        let c = cursors.entry(key).or_insert(0);
        let out = list[(*c).min(list.len() - 1)].clone();
        *c += 1;
        Ok(out)
    }
}
