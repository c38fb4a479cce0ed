//! Run configuration: TOML by default, JSON when the file ends in `.json`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, Experiment, Tolerances};
use crate::chart::Point;
use crate::error::{Error, Result};
use crate::grid::{FieldKind, Grid, GridSpec, ScalarField};
use crate::sets::ClosedSetSpec;

/// Catalog id or a full inline experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentRef {
    Catalog(String),
    Inline(Box<Experiment>),
}

/// Explicit closed set for cut-locus runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetConfig {
    Points { points: Vec<[f64; 2]> },
    Polyline { points: Vec<[f64; 2]> },
    /// `{|x - c| ≥ r}`.
    DiskComplement { center: [f64; 2], radius: f64 },
    /// `{n·x ≥ c}`.
    HalfPlane { normal: [f64; 2], offset: f64 },
}

impl SetConfig {
    pub fn build(&self, grid: &Grid) -> Result<ClosedSetSpec> {
        let pts = |v: &[[f64; 2]]| v.iter().map(|p| Point::new(p[0], p[1])).collect::<Vec<_>>();
        Ok(match self {
            SetConfig::Points { points } if !points.is_empty() => ClosedSetSpec::Points(pts(points)),
            SetConfig::Polyline { points } if points.len() >= 2 => ClosedSetSpec::Polyline(pts(points)),
            SetConfig::Points { .. } | SetConfig::Polyline { .. } => {
                return Err(Error::Config("set needs at least one point (two for a polyline)".into()))
            }
            SetConfig::DiskComplement { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("disk radius {radius} must be positive")));
                }
                let c = Point::new(center[0], center[1]);
                let g = grid.clone();
                let f = ScalarField::from_fn(grid.clone(), FieldKind::DistanceToSet, "disk", |p| g.delta(&c, p).norm());
                ClosedSetSpec::Superlevel { field: Arc::new(f), threshold: *radius }
            }
            SetConfig::HalfPlane { normal, offset } => {
                let n = Point::new(normal[0], normal[1]);
                if !(n.norm() > 0.0) {
                    return Err(Error::Config("half-plane normal must be non-zero".into()));
                }
                let f = ScalarField::from_fn(grid.clone(), FieldKind::DistanceToSet, "half-plane", |p| n.dot(p));
                ClosedSetSpec::Superlevel { field: Arc::new(f), threshold: *offset }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exports {
    pub csv: bool,
    pub svg: bool,
    pub json: bool,
}

impl Default for Exports {
    fn default() -> Self {
        Exports { csv: true, svg: true, json: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentRef,
    /// Replaces the experiment's grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Replaces the experiment's tolerances.
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub set: Option<SetConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub export: Exports,
}

impl RunConfig {
    pub fn for_experiment(id: &str) -> Self {
        RunConfig {
            experiment: ExperimentRef::Catalog(id.into()),
            grid: None,
            tolerances: None,
            set: None,
            out: None,
            cache: None,
            jobs: None,
            export: Exports::default(),
        }
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            if !(g.h > 0.0) {
                return Err(Error::Config(format!("grid spacing {} must be positive", g.h)));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let t = self.tolerances.clone().unwrap_or_default();
        if !(t.busemann_tol > 0.0 && t.certify_h > 0.0 && t.coray_length > 0.0 && t.level_step_h > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// The experiment with overrides applied.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut e = match &self.experiment {
            ExperimentRef::Catalog(id) => catalog::find(id)?,
            ExperimentRef::Inline(e) => (**e).clone(),
        };
        if let Some(g) = &self.grid {
            e.grid = g.clone();
        }
        if let Some(t) = &self.tolerances {
            e.tolerances = t.clone();
        }
        Ok(e)
    }
}

/// TOML encoding of a config, as accepted by [`RunConfig::parse`].
pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Format(e.to_string()))
}
