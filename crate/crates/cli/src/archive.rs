//! Versioned JSON archive of a glued profile.

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use wavemap::matching::{ConeExpansion, ExteriorChoice, FarfieldFit, GlobalProfile};
use wavemap::segment_solver::{ConvergenceReport, Interval, PicardConfig, SegmentKind, ShootingParams};

use crate::Failure;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveInputs {
    pub d0: f64,
    pub exterior: ExteriorChoice,
    pub picard: PicardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub kind: SegmentKind,
    pub interval: Interval,
    pub nodes: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "Qprime")]
    pub qprime: Vec<f64>,
    pub convergence: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileArchive {
    pub schema: u32,
    pub tool_version: String,
    pub inputs: SolveInputs,
    pub params: ShootingParams,
    pub continuity_residual: f64,
    pub cone_expansion: ConeExpansion,
    pub farfield: FarfieldFit,
    pub segments: Vec<SegmentRecord>,
    /// Complete solver state, used by the downstream commands.
    pub profile: GlobalProfile,
}

impl ProfileArchive {
    pub fn new(inputs: SolveInputs, profile: GlobalProfile) -> Self {
        let segments = profile
            .segments
            .iter()
            .map(|s| SegmentRecord {
                kind: s.kind,
                interval: s.interval,
                nodes: s.nodes(),
                q: s.q_values(),
                qprime: s.qprime_values(),
                convergence: s.convergence.clone(),
            })
            .collect();
        Self {
            schema: SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            params: profile.params,
            continuity_residual: profile.cone_trace.residual(),
            cone_expansion: profile.cone_expansion,
            farfield: profile.farfield,
            segments,
            profile,
        }
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("archive: reading {}", path.display()))
            .map_err(Failure::usage)?;
        let a: Self = serde_json::from_str(&text)
            .with_context(|| format!("archive: malformed {}", path.display()))
            .map_err(Failure::usage)?;
        if a.schema != SCHEMA {
            return Err(Failure::usage(anyhow!(
                "archive: unsupported schema {} (expected {SCHEMA})",
                a.schema
            )));
        }
        if a.profile.segments.is_empty() {
            return Err(Failure::usage(anyhow!("archive: no segments")));
        }
        Ok(a)
    }
}
