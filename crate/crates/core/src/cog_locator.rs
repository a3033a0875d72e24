//! Picks one CoG point out of the transferred candidates.
//!
//! The built-in chooser takes the geometric medoid of the candidate set. An
//! external chooser (HTTP endpoint or subprocess speaking JSON) can replace
//! it; any transport or protocol failure falls back to the medoid.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::CandidatePoint;
use crate::geometry::Pixel;

#[derive(Debug, Error, PartialEq)]
pub enum LocatorError {
    #[error("no candidate points to choose from")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChooserKind {
    DefaultHeuristic,
    ExternalService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CogEstimate {
    pub point: Pixel,
    pub chosen_index: usize,
    pub chosen_from: Vec<CandidatePoint>,
    pub chooser: ChooserKind,
    /// Set when an external chooser was configured but failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberedCandidate {
    pub index: usize,
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Wire request sent to an external chooser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChooserRequest {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub candidates: Vec<NumberedCandidate>,
    /// Only present for target-object selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChooserResponse {
    pub index: usize,
}

#[derive(Debug, Error)]
pub enum ChooserError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Protocol(String),
}

/// Something that can answer a [`ChooserRequest`].
pub trait Chooser: Send + Sync {
    fn choose(&self, request: &ChooserRequest) -> Result<ChooserResponse, ChooserError>;
}

/// Where an external chooser lives. Serialized as part of the plan config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChooserConfig {
    #[default]
    Default,
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Subprocess {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    5_000
}

impl ChooserConfig {
    pub fn build(&self) -> Option<Box<dyn Chooser>> {
        match self {
            ChooserConfig::Default => None,
            ChooserConfig::Http { url, timeout_ms } => Some(Box::new(HttpChooser {
                url: url.clone(),
                timeout: Duration::from_millis(*timeout_ms),
            })),
            ChooserConfig::Subprocess {
                command,
                args,
                timeout_ms,
            } => Some(Box::new(SubprocessChooser {
                command: command.clone(),
                args: args.clone(),
                timeout: Duration::from_millis(*timeout_ms),
            })),
        }
    }
}

/// POSTs the request as JSON and expects `{"index": n}` back.
#[derive(Debug, Clone)]
pub struct HttpChooser {
    pub url: String,
    pub timeout: Duration,
}

impl Chooser for HttpChooser {
    fn choose(&self, request: &ChooserRequest) -> Result<ChooserResponse, ChooserError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ChooserError::Transport(e.to_string()))?;
        let resp = client
            .post(&self.url)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ChooserError::Timeout(self.timeout)
                } else {
                    ChooserError::Transport(e.to_string())
                }
            })?;
        if !resp.status().is_success() {
            return Err(ChooserError::Transport(format!("HTTP {}", resp.status())));
        }
        let body = resp.text().map_err(|e| ChooserError::Transport(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| ChooserError::Protocol(e.to_string()))
    }
}

/// Runs a command, writes the request JSON to its stdin and parses the
/// response JSON from its stdout.
#[derive(Debug, Clone)]
pub struct SubprocessChooser {
    pub command: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Chooser for SubprocessChooser {
    fn choose(&self, request: &ChooserRequest) -> Result<ChooserResponse, ChooserError> {
        let payload =
            serde_json::to_vec(request).map_err(|e| ChooserError::Protocol(e.to_string()))?;
        let mut child = Command::new(&self.command)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| ChooserError::Transport(format!("spawn {}: {e}", self.command)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let written = stdin.write_all(&payload);
            drop(stdin);
            let mut out = String::new();
            let read = stdout.read_to_string(&mut out);
            let _ = tx.send(written.and(read).map(|_| out));
        });
        let out = match rx.recv_timeout(self.timeout) {
            Ok(r) => r.map_err(|e| ChooserError::Transport(e.to_string())),
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ChooserError::Timeout(self.timeout));
            }
        };
        let status = child
            .wait()
            .map_err(|e| ChooserError::Transport(e.to_string()))?;
        let out = out?;
        if !status.success() {
            return Err(ChooserError::Transport(format!("chooser exited with {status}")));
        }
        serde_json::from_str(out.trim()).map_err(|e| ChooserError::Protocol(e.to_string()))
    }
}

/// Index of the candidate minimizing the summed distance to all others.
/// Ties go to higher confidence, then lower rank.
pub fn medoid_index(candidates: &[CandidatePoint]) -> Option<usize> {
    // Sorted summation keeps the sums independent of candidate order.
    let sums: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let mut d: Vec<f64> = candidates.iter().map(|o| c.point.distance(&o.point)).collect();
            d.sort_by(f64::total_cmp);
            d.iter().sum()
        })
        .collect();
    (0..candidates.len()).min_by(|&a, &b| {
        sums[a]
            .total_cmp(&sums[b])
            .then(candidates[b].confidence.total_cmp(&candidates[a].confidence))
            .then(a.cmp(&b))
    })
}

/// Context passed to an external chooser.
#[derive(Debug, Clone, Default)]
pub struct ChooserContext {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

pub fn select_cog(
    candidates: &[CandidatePoint],
    context: &ChooserContext,
    chooser: Option<&dyn Chooser>,
) -> Result<CogEstimate, LocatorError> {
    let fallback = medoid_index(candidates).ok_or(LocatorError::NoCandidates)?;
    let estimate = |index: usize, chooser, fallback_reason| CogEstimate {
        point: candidates[index].point,
        chosen_index: index,
        chosen_from: candidates.to_vec(),
        chooser,
        fallback_reason,
    };
    let Some(external) = chooser else {
        return Ok(estimate(fallback, ChooserKind::DefaultHeuristic, None));
    };
    let request = ChooserRequest {
        image_path: context.image_path.clone(),
        mask_path: context.mask_path.clone(),
        candidates: numbered(candidates),
        instruction: None,
    };
    match external.choose(&request) {
        Ok(ChooserResponse { index }) if index < candidates.len() => {
            Ok(estimate(index, ChooserKind::ExternalService, None))
        }
        Ok(ChooserResponse { index }) => {
            let reason = format!("chooser returned index {index} for {} candidates", candidates.len());
            tracing::warn!(%reason, "falling back to medoid");
            Ok(estimate(fallback, ChooserKind::DefaultHeuristic, Some(reason)))
        }
        Err(e) => {
            tracing::warn!(error = %e, "external chooser failed; falling back to medoid");
            Ok(estimate(fallback, ChooserKind::DefaultHeuristic, Some(e.to_string())))
        }
    }
}

pub fn numbered(candidates: &[CandidatePoint]) -> Vec<NumberedCandidate> {
    candidates
        .iter()
        .enumerate()
        .map(|(index, c)| NumberedCandidate {
            index,
            u: c.point.u,
            v: c.point.v,
            confidence: c.confidence,
        })
        .collect()
}
