use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, LlmError};

/// One line of a JSONL transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    pub response: String,
}

/// Records every successful exchange of the wrapped client.
pub struct TranscriptClient<C> {
    inner: C,
    sink: Mutex<File>,
}

impl<C: ChatClient> TranscriptClient<C> {
    pub fn create(inner: C, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(sink),
        })
    }
}

impl<C: ChatClient> ChatClient for TranscriptClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&TranscriptEntry {
            request: request.clone(),
            response: response.clone(),
        })
        .expect("transcript entries serialize");
        let mut sink = self.sink.lock().expect("transcript lock");
        if let Err(e) = writeln!(sink, "{line}") {
            log::warn!("failed to append transcript: {e}");
        }
        Ok(response)
    }
}

/// Answers from a recorded transcript, matching on system and user text.
pub struct ReplayClient {
    answers: HashMap<(String, String), String>,
}

impl ReplayClient {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut answers = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            answers.insert((entry.request.system, entry.request.user), entry.response);
        }
        Ok(Self { answers })
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.answers
            .get(&(request.system.clone(), request.user.clone()))
            .cloned()
            .ok_or_else(|| LlmError::Mock("request not present in transcript".into()))
    }
}
