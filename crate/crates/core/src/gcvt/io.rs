use serde::{Deserialize, Serialize};

use super::{GcvtParams, GcvtVariant, Tessellation};
use crate::error::{Error, Result};
use crate::gaussian_ot::Gaussian2;
use crate::workspace::{RegionMask, Workspace};

pub const TESSELLATION_SCHEMA: &str = "swarmcvt.tessellation/1";

/// One generator with its cell as `(first grid index, length)` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub mean: [f64; 2],
    /// `[Σxx, Σxy, Σyy]`.
    pub cov: [f64; 3],
    pub runs: Vec<(usize, usize)>,
}

/// Serializable tessellation together with the grid and parameters it was built on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TessellationFile {
    pub schema: String,
    pub width: f64,
    pub height: f64,
    pub grid_h: f64,
    pub variant: GcvtVariant,
    pub params: GcvtParams,
    pub objective_trace: Vec<f64>,
    pub dropped: Vec<usize>,
    pub generators: Vec<GeneratorRecord>,
}

impl TessellationFile {
    pub fn new(t: &Tessellation, w: &Workspace, params: &GcvtParams, variant: GcvtVariant) -> Self {
        Self {
            schema: TESSELLATION_SCHEMA.to_string(),
            width: w.width(),
            height: w.height(),
            grid_h: w.grid_h(),
            variant,
            params: params.clone(),
            objective_trace: t.objective_trace().to_vec(),
            dropped: t.dropped().to_vec(),
            generators: t
                .generators()
                .iter()
                .map(|(g, cell)| GeneratorRecord {
                    mean: [g.mean().x, g.mean().y],
                    cov: g.cov_entries(),
                    runs: cell.to_runs(),
                })
                .collect(),
        }
    }

    /// Rebuilds the tessellation on `w`, which must have the recorded grid.
    pub fn to_tessellation(&self, w: &Workspace) -> Result<Tessellation> {
        if self.schema != TESSELLATION_SCHEMA {
            return Err(Error::Validation(format!(
                "tessellation schema '{}' is not '{TESSELLATION_SCHEMA}'",
                self.schema
            )));
        }
        if self.width != w.width() || self.height != w.height() || self.grid_h != w.grid_h() {
            return Err(Error::Validation(format!(
                "tessellation grid {}×{} at {} km does not match workspace {}×{} at {} km",
                self.width,
                self.height,
                self.grid_h,
                w.width(),
                w.height(),
                w.grid_h()
            )));
        }
        let generators = self
            .generators
            .iter()
            .map(|r| Ok((Gaussian2::from_parts(r.mean, r.cov)?, RegionMask::from_runs(&r.runs, w)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tessellation::from_parts(generators, self.objective_trace.clone(), self.dropped.clone()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Validation(format!("tessellation file: {e}")))
    }
}
