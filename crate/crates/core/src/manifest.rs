//! Dataset manifests and a task-agnostic view of their trials.
//!
//! Manifests are written as pretty JSON with a trailing newline. All maps
//! are ordered, so equal datasets serialize to equal bytes and the SHA-256
//! of the file identifies a dataset.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{NumerosityConfig, RasterConfig};
use crate::dsl::{ConstraintPair, Family};
use crate::geometry::{GeometryConfig, Vec2};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Oddball,
    Numerosity,
    Rotation,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Oddball, Task::Numerosity, Task::Rotation];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Oddball => "oddball",
            Task::Numerosity => "numerosity",
            Task::Rotation => "rotation",
        }
    }

    pub fn manifest_file(self) -> String {
        format!("{}_manifest.json", self.as_str())
    }

    /// Inclusive range of answers a responder may give.
    pub fn answer_range(self) -> (i64, i64) {
        match self {
            Task::Oddball => (1, 6),
            Task::Numerosity => (1, 99),
            Task::Rotation => (0, 1),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oddball" => Ok(Task::Oddball),
            "numerosity" => Ok(Task::Numerosity),
            "rotation" => Ok(Task::Rotation),
            _ => Err(format!("unknown task `{s}` (expected oddball, numerosity or rotation)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

// ---------------------------------------------------------------- oddball

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptInfo {
    pub name: String,
    pub family: Family,
    pub mdl: usize,
    pub constraint_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddballImages {
    /// Six cells in position order.
    pub cells: Vec<String>,
    pub array: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddballTrial {
    pub trial_id: String,
    pub concept: String,
    pub mdl: usize,
    pub family: Family,
    /// 1-based.
    pub oddball_position: u8,
    pub seed: u64,
    /// Seed of the accepted realization of each cell, in position order.
    pub cell_seeds: Vec<u64>,
    pub removed_constraints: Vec<ConstraintPair>,
    /// Smallest measured distance of the oddball to a removed locus.
    pub min_violation: f64,
    pub restarts: u32,
    pub images: OddballImages,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddballManifest {
    pub version: u32,
    pub task: Task,
    pub rng: String,
    pub seed: u64,
    pub per_concept: usize,
    pub geometry: GeometryConfig,
    pub raster: RasterConfig,
    /// The MDL of each shipped concept is a library authoring choice.
    pub library: Vec<ConceptInfo>,
    pub trials: Vec<OddballTrial>,
}

// ------------------------------------------------------------- numerosity

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    UniformDistinct,
    UniformOverlapping,
    ColoredDistinct,
    ColoredOverlapping,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::UniformDistinct,
        Condition::UniformOverlapping,
        Condition::ColoredDistinct,
        Condition::ColoredOverlapping,
    ];

    pub fn overlapping(self) -> bool {
        matches!(self, Condition::UniformOverlapping | Condition::ColoredOverlapping)
    }

    pub fn colored(self) -> bool {
        matches!(self, Condition::ColoredDistinct | Condition::ColoredOverlapping)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::UniformDistinct => "uniform_distinct",
            Condition::UniformOverlapping => "uniform_overlapping",
            Condition::ColoredDistinct => "colored_distinct",
            Condition::ColoredOverlapping => "colored_overlapping",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub n_points: usize,
    /// Anchor vertices relative to `center`, unit-canvas coordinates.
    pub anchors: Vec<Vec2>,
    pub center: Vec2,
    pub color: [u8; 3],
    pub hue_deg: f64,
    /// Solo mask area at the scene resolution.
    pub area_px: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumerosityTrial {
    pub trial_id: String,
    pub condition: Condition,
    pub numerosity: usize,
    pub seed: u64,
    /// In draw order; later shapes occlude earlier ones.
    pub shapes: Vec<ShapeRecord>,
    /// Intersection-over-min of each consecutive pair in the chain; empty
    /// for distinct conditions.
    pub adjacent_overlaps: Vec<f64>,
    pub placement_attempts: usize,
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumerosityManifest {
    pub version: u32,
    pub task: Task,
    pub rng: String,
    pub seed: u64,
    pub per_cell: usize,
    pub overlap_measure: String,
    pub adjacency: String,
    pub params: NumerosityConfig,
    pub raster: RasterConfig,
    pub trials: Vec<NumerosityTrial>,
}

// --------------------------------------------------------------- rotation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationImages {
    pub left: String,
    pub right: String,
    pub pair: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationTrial {
    pub trial_id: String,
    #[serde(rename = "char")]
    pub ch: char,
    pub theta_deg: u32,
    pub pair_same: bool,
    pub first_mirrored: bool,
    pub disparity_deg: u32,
    pub images: RotationImages,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphInfo {
    #[serde(rename = "char")]
    pub ch: char,
    pub chirality_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationManifest {
    pub version: u32,
    pub task: Task,
    pub rng: String,
    pub seed: u64,
    pub fraction: f64,
    pub full_design_size: usize,
    pub glyphs: Vec<GlyphInfo>,
    pub raster: RasterConfig,
    /// Trials in canonical (char, angle, type) order.
    pub trials: Vec<RotationTrial>,
    /// Seeded shuffle of the trial ids: the presentation order.
    pub presentation_order: Vec<String>,
}

// ------------------------------------------------------------ common view

/// Task-specific labels of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Facets {
    Oddball {
        concept: String,
        mdl: usize,
        family: Family,
    },
    Numerosity {
        condition: Condition,
        numerosity: usize,
    },
    Rotation {
        #[serde(rename = "char")]
        ch: char,
        theta_deg: u32,
        disparity_deg: u32,
        pair_same: bool,
        first_mirrored: bool,
    },
}

/// What the harness, the service and the analysis need to know about a
/// trial, independent of task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub trial_id: String,
    pub task: Task,
    pub answer: i64,
    /// Condition cell used for stratified sampling and balancing: the
    /// concept, `condition/numerosity`, or `angle/same|mirror`.
    pub stratum: String,
    /// Single image sent to models.
    pub model_image: String,
    /// Images shown to participants, in display order.
    pub human_images: Vec<String>,
    pub facets: Facets,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Oddball(OddballManifest),
    Numerosity(NumerosityManifest),
    Rotation(RotationManifest),
}

impl Dataset {
    pub fn task(&self) -> Task {
        match self {
            Dataset::Oddball(_) => Task::Oddball,
            Dataset::Numerosity(_) => Task::Numerosity,
            Dataset::Rotation(_) => Task::Rotation,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Oddball(m) => m.trials.len(),
            Dataset::Numerosity(m) => m.trials.len(),
            Dataset::Rotation(m) => m.trials.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trials(&self) -> Vec<TrialInfo> {
        match self {
            Dataset::Oddball(m) => m
                .trials
                .iter()
                .map(|t| TrialInfo {
                    trial_id: t.trial_id.clone(),
                    task: Task::Oddball,
                    answer: t.oddball_position as i64,
                    stratum: t.concept.clone(),
                    model_image: t.images.array.clone(),
                    human_images: t.images.cells.clone(),
                    facets: Facets::Oddball {
                        concept: t.concept.clone(),
                        mdl: t.mdl,
                        family: t.family,
                    },
                })
                .collect(),
            Dataset::Numerosity(m) => m
                .trials
                .iter()
                .map(|t| TrialInfo {
                    trial_id: t.trial_id.clone(),
                    task: Task::Numerosity,
                    answer: t.numerosity as i64,
                    stratum: format!("{}/{}", t.condition, t.numerosity),
                    model_image: t.image.clone(),
                    human_images: vec![t.image.clone()],
                    facets: Facets::Numerosity {
                        condition: t.condition,
                        numerosity: t.numerosity,
                    },
                })
                .collect(),
            Dataset::Rotation(m) => m
                .trials
                .iter()
                .map(|t| TrialInfo {
                    trial_id: t.trial_id.clone(),
                    task: Task::Rotation,
                    answer: t.pair_same as i64,
                    stratum: format!("{:03}/{}", t.theta_deg, if t.pair_same { "same" } else { "mirror" }),
                    model_image: t.images.pair.clone(),
                    human_images: vec![t.images.left.clone(), t.images.right.clone()],
                    facets: Facets::Rotation {
                        ch: t.ch,
                        theta_deg: t.theta_deg,
                        disparity_deg: t.disparity_deg,
                        pair_same: t.pair_same,
                        first_mirrored: t.first_mirrored,
                    },
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            Dataset::Oddball(m) => to_json(m),
            Dataset::Numerosity(m) => to_json(m),
            Dataset::Rotation(m) => to_json(m),
        }
    }

    /// Write `<dir>/<task>_manifest.json`; returns the SHA-256 of the bytes.
    pub fn write(&self, dir: &Path) -> Result<String, ManifestError> {
        let path = dir.join(self.task().manifest_file());
        let text = self.to_json();
        std::fs::write(&path, &text).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn load(dir: &Path, task: Task) -> Result<Dataset, ManifestError> {
        let path = dir.join(task.manifest_file());
        Ok(match task {
            Task::Oddball => Dataset::Oddball(read_json(&path)?),
            Task::Numerosity => Dataset::Numerosity(read_json(&path)?),
            Task::Rotation => Dataset::Rotation(read_json(&path)?),
        })
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("manifest types always serialize");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.as_str().parse::<Task>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
        assert!("counting".parse::<Task>().is_err());
    }

    #[test]
    fn condition_flags() {
        assert!(Condition::ColoredOverlapping.colored() && Condition::ColoredOverlapping.overlapping());
        assert!(!Condition::UniformDistinct.colored() && !Condition::UniformDistinct.overlapping());
        assert_eq!(
            serde_json::to_string(&Condition::UniformOverlapping).unwrap(),
            "\"uniform_overlapping\""
        );
    }
}
