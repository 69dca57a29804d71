//! Machine-readable run reports. Field order is the declaration order.

use serde::Serialize;
use sha2::{Digest, Sha256};

use hjsvd::driver::{HsvdResult, SweepStats};

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub input: String,
    pub rows: usize,
    pub cols: usize,
    pub n_plus: usize,
    pub variant: &'static str,
    pub strategy: &'static str,
    pub width: usize,
    pub shortening: &'static str,
    pub accumulate_v: bool,
    pub solve_v: bool,
    pub max_sweeps: usize,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SweepEcho {
    pub rotations: u64,
    pub proper_rotations: u64,
}

impl From<&SweepStats> for SweepEcho {
    fn from(s: &SweepStats) -> Self {
        Self {
            rotations: s.rotations,
            proper_rotations: s.proper_rotations,
        }
    }
}

/// Smallest and largest value, and SHA-256 over the little-endian bytes.
#[derive(Debug, Serialize)]
pub struct SigmaDigest {
    pub min: f64,
    pub max: f64,
    pub sha256: String,
}

impl SigmaDigest {
    pub fn of(sigma: &[f64]) -> Self {
        let mut h = Sha256::new();
        for x in sigma {
            h.update(x.to_le_bytes());
        }
        let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            min: sigma.iter().copied().fold(f64::INFINITY, f64::min),
            max: sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sha256,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DistEcho {
    pub fast_exchange_count: usize,
    pub fast_sends: usize,
    pub g_messages: u64,
    pub v_messages: u64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub config: ConfigEcho,
    pub converged: bool,
    pub block_sweeps: usize,
    pub total_rotations: u64,
    pub sweeps: Vec<SweepEcho>,
    pub sigma_digest: SigmaDigest,
    pub sigma: Vec<f64>,
    /// Largest relative eigenvalue error, when the spectrum was supplied.
    pub error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distributed: Option<DistEcho>,
    /// Excluded when comparing reports.
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn new(command: &'static str, config: ConfigEcho, res: &HsvdResult, error: Option<f64>, wall_seconds: f64) -> Self {
        Self {
            command,
            config,
            converged: res.converged,
            block_sweeps: res.block_sweeps,
            total_rotations: res.total_rotations(),
            sweeps: res.stats.iter().map(SweepEcho::from).collect(),
            sigma_digest: SigmaDigest::of(&res.sigma),
            sigma: res.sigma.clone(),
            error,
            distributed: None,
            wall_seconds,
        }
    }
}
