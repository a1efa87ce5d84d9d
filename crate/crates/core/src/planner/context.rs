use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::plan::PhysicalPlan;
use super::stages::{StageDag, StagePlan};
use super::PlannerError;
use crate::payload::{frame, unframe, Codec, InvocationMode};
use crate::query::WindowSpec;
use crate::sim::ObjectStorage;

/// Service quota on a function's environment, in bytes.
pub const ENV_LIMIT: usize = 4096;
pub const CONTEXT_VERSION: u32 = 1;

/// First 8 hex digits of SHA-256 over the plan's canonical JSON. Logically
/// identical plans share a code, and with it their functions.
pub fn query_code(plan: &PhysicalPlan) -> String {
    let canonical = serde_json::to_vec(plan).expect("plans always serialize");
    let digest = Sha256::digest(&canonical);
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

/// `<Query Code>-<Query Stage ID>-<Group Member ID>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionName {
    pub query_code: String,
    pub stage_id: u8,
    pub member_id: u8,
}

impl fmt::Display for FunctionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}-{:02}", self.query_code, self.stage_id, self.member_id)
    }
}

impl FromStr for FunctionName {
    type Err = PlannerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlannerError::InvalidName(s.to_string());
        let mut it = s.rsplitn(3, '-');
        let (Some(member), Some(stage), Some(code)) = (it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let two = |p: &str| p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit());
        let hex = !code.is_empty() && code.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if !hex || !two(stage) || !two(member) {
            return Err(bad());
        }
        Ok(FunctionName {
            query_code: code.to_string(),
            stage_id: stage.parse().map_err(|_| bad())?,
            member_id: member.parse().map_err(|_| bad())?,
        })
    }
}

/// The functions serving one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionGroup {
    pub query_code: String,
    pub stage_id: u8,
    pub size: usize,
}

impl FunctionGroup {
    pub fn member(&self, i: usize) -> FunctionName {
        FunctionName {
            query_code: self.query_code.clone(),
            stage_id: self.stage_id,
            member_id: i as u8,
        }
    }

    pub fn members(&self) -> Vec<FunctionName> {
        (0..self.size).map(|i| self.member(i)).collect()
    }

    /// Name used to label the group, `<code>-<stage>`.
    pub fn label(&self) -> String {
        format!("{}-{:02}", self.query_code, self.stage_id)
    }
}

impl fmt::Display for FunctionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group({}, {})", self.label(), self.size)
    }
}

/// Everything a function needs to run its stage, carried in its environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudContext {
    pub version: u32,
    pub query_code: String,
    pub stage: StagePlan,
    pub window: Option<WindowSpec>,
    /// Codec for the payloads this stage emits.
    pub encoding: Codec,
    pub invoke: InvocationMode,
    pub max_backoff_ms: u64,
    pub max_retries: u32,
    /// Epochs a processed arena entry is remembered for.
    pub tombstone_epochs: u64,
}

impl CloudContext {
    pub fn new(query_code: &str, stage: StagePlan, window: Option<WindowSpec>, invoke: InvocationMode) -> Self {
        CloudContext {
            version: CONTEXT_VERSION,
            query_code: query_code.to_string(),
            stage,
            window,
            encoding: Codec::default(),
            invoke,
            max_backoff_ms: 1000,
            max_retries: 1000,
            tombstone_epochs: 2,
        }
    }

    pub fn object_key(&self) -> String {
        format!("context/{}/{:02}", self.query_code, self.stage.stage_id)
    }
}

/// A context as stored in a function's environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvEncoding {
    /// Compressed context bytes, at most the environment limit.
    Inline { codec: Codec, bytes: Vec<u8> },
    /// The context was too large and lives in the object store.
    Indirect { codec: Codec, key: String },
}

impl EnvEncoding {
    /// Bytes this encoding occupies in the environment.
    pub fn env_size(&self) -> usize {
        match self {
            EnvEncoding::Inline { bytes, .. } => bytes.len(),
            EnvEncoding::Indirect { key, .. } => key.len(),
        }
    }
}

/// Compress `ctx` with the default codec; inline it when the compressed form
/// fits `env_limit`, otherwise store it and point at the object.
pub fn encode_context(
    ctx: &CloudContext,
    env_limit: usize,
    store: &mut dyn ObjectStorage,
) -> Result<EnvEncoding, PlannerError> {
    let codec = Codec::default();
    let json = serde_json::to_vec(ctx).map_err(|e| PlannerError::Context(e.to_string()))?;
    let bytes = frame(codec, &json)?;
    if bytes.len() <= env_limit {
        return Ok(EnvEncoding::Inline { codec, bytes });
    }
    let key = ctx.object_key();
    store.put(&key, bytes)?;
    Ok(EnvEncoding::Indirect { codec, key })
}

pub fn decode_context(
    env: &EnvEncoding,
    store: &mut dyn ObjectStorage,
) -> Result<CloudContext, PlannerError> {
    let (codec, bytes) = match env {
        EnvEncoding::Inline { codec, bytes } => (*codec, bytes.clone()),
        EnvEncoding::Indirect { codec, key } => (*codec, store.get(key)?),
    };
    decode_context_bytes(codec, &bytes)
}

pub fn decode_context_bytes(codec: Codec, bytes: &[u8]) -> Result<CloudContext, PlannerError> {
    let json = unframe(codec, bytes)?;
    let ctx: CloudContext =
        serde_json::from_slice(&json).map_err(|e| PlannerError::Context(e.to_string()))?;
    if ctx.version != CONTEXT_VERSION {
        return Err(PlannerError::Context(format!("unsupported context version {}", ctx.version)));
    }
    for o in &ctx.stage.outputs {
        o.schema()?;
    }
    Ok(ctx)
}

/// One context per stage of `dag`.
pub fn stage_contexts(
    dag: &StageDag,
    query_code: &str,
    window: Option<WindowSpec>,
    invoke: InvocationMode,
) -> Vec<CloudContext> {
    dag.stages
        .iter()
        .map(|s| CloudContext::new(query_code, s.clone(), window.clone(), invoke))
        .collect()
}
