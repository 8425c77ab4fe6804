//! Geometric oddball trials: five realizations of a concept and one
//! realization of the concept with two constraints removed.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::GenerationConfig;
use crate::dsl::{default_library, relax_constraints, remove_pairs, ConceptProgram, ConstraintPair, DslError, LibraryError};
use crate::geometry::{realize_seeded, GeometryError, RealizedScene};
use crate::manifest::{ConceptInfo, OddballImages, OddballManifest, OddballTrial, Task, MANIFEST_VERSION};
use crate::raster::{compose_oddball_array, render_scene, Panel, RasterError, StimulusImage};
use crate::rng::{derive_seed, StimRng, RNG_ALGORITHM};
use crate::sink::ImageSink;

pub const CELLS: usize = 6;

#[derive(Debug, Error)]
pub enum OddballError {
    #[error("concept `{concept}`: {source}")]
    Realization {
        concept: String,
        #[source]
        source: GeometryError,
    },
    #[error("concept `{concept}`: {source}")]
    Relax {
        concept: String,
        #[source]
        source: DslError,
    },
    #[error("concept `{concept}`: no oddball reached the violation margin after {restarts} trial restarts")]
    ViolationExhausted { concept: String, restarts: usize },
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A trial's six realized scenes in position order plus its record
/// (image paths left empty until rendering).
#[derive(Clone, Debug)]
pub struct OddballScenes {
    pub trial: OddballTrial,
    pub scenes: Vec<RealizedScene>,
}

pub fn trial_id(concept: &str, k: usize) -> String {
    format!("odd-{concept}-{k:03}")
}

/// Distance of the oddball's point to the removed object, per pair.
pub fn violations(oddball: &RealizedScene, removed: &[ConstraintPair]) -> Vec<f64> {
    removed.iter().map(|p| oddball.pair_distance(p)).collect()
}

/// Build the scenes of one trial. Deterministic in `(concept, seed)`.
pub fn generate_oddball_scenes(
    concept: &ConceptProgram,
    trial_id: &str,
    seed: u64,
    cfg: &GenerationConfig,
) -> Result<OddballScenes, OddballError> {
    let geo = &cfg.geometry;
    let odd = &cfg.oddball;
    let position = StimRng::derived(seed, "position").index(CELLS) + 1;
    let realize_err = |source| OddballError::Realization {
        concept: concept.name.clone(),
        source,
    };
    for restart in 0..odd.max_trial_restarts {
        let mut relax_rng = StimRng::derived(seed, &format!("relax/{restart}"));
        let (relaxed, removed) =
            relax_constraints(concept, odd.relaxed_constraints, &mut relax_rng).map_err(|source| OddballError::Relax {
                concept: concept.name.clone(),
                source,
            })?;
        let mut oddball = None;
        for draw in 0..odd.max_oddball_resamples {
            let s = derive_seed(seed, &format!("oddball/{restart}/{draw}"));
            let scene = realize_seeded(&relaxed, &mut StimRng::new(s), s, geo).map_err(realize_err)?;
            let v = violations(&scene, &removed);
            if v.iter().all(|d| *d >= geo.min_violation) {
                oddball = Some((scene, v.into_iter().fold(f64::INFINITY, f64::min)));
                break;
            }
        }
        let Some((oddball, min_violation)) = oddball else {
            continue;
        };
        let mut scenes = Vec::with_capacity(CELLS);
        let mut cell_seeds = Vec::with_capacity(CELLS);
        for pos in 1..=CELLS {
            if pos == position {
                cell_seeds.push(oddball.seed);
                scenes.push(oddball.clone());
                continue;
            }
            let s = derive_seed(seed, &format!("cell/{restart}/{pos}"));
            scenes.push(realize_seeded(concept, &mut StimRng::new(s), s, geo).map_err(realize_err)?);
            cell_seeds.push(s);
        }
        let trial = OddballTrial {
            trial_id: trial_id.to_string(),
            concept: concept.name.clone(),
            mdl: concept.mdl(),
            family: concept.family,
            oddball_position: position as u8,
            seed,
            cell_seeds,
            removed_constraints: removed,
            min_violation,
            restarts: restart as u32,
            images: OddballImages {
                cells: Vec::new(),
                array: String::new(),
            },
        };
        return Ok(OddballScenes { trial, scenes });
    }
    Err(OddballError::ViolationExhausted {
        concept: concept.name.clone(),
        restarts: odd.max_trial_restarts,
    })
}

/// Re-realize a trial's six scenes from the seeds stored in its record.
pub fn replay_scenes(concept: &ConceptProgram, trial: &OddballTrial, cfg: &GenerationConfig) -> Result<Vec<RealizedScene>, GeometryError> {
    let relaxed = remove_pairs(concept, &trial.removed_constraints);
    trial
        .cell_seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let program = if i + 1 == trial.oddball_position as usize {
                &relaxed
            } else {
                concept
            };
            realize_seeded(program, &mut StimRng::new(s), s, &cfg.geometry)
        })
        .collect()
}

/// Cells in position order followed by the composite array.
pub fn render_oddball(scenes: &[RealizedScene], trial_id: &str, cfg: &GenerationConfig) -> Result<Vec<StimulusImage>, RasterError> {
    let r = &cfg.raster;
    let mut images: Vec<StimulusImage> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| render_scene(s, r.oddball_cell, r.stroke, trial_id, Panel::ArrayCell(i as u8 + 1)))
        .collect();
    let array = compose_oddball_array(&images, r.gutter, trial_id)?;
    images.push(array);
    Ok(images)
}

/// Generate, render and store one trial.
pub fn generate_oddball_trial(
    concept: &ConceptProgram,
    trial_id: &str,
    seed: u64,
    cfg: &GenerationConfig,
    sink: &dyn ImageSink,
) -> Result<OddballTrial, OddballError> {
    let OddballScenes { mut trial, scenes } = generate_oddball_scenes(concept, trial_id, seed, cfg)?;
    let images = render_oddball(&scenes, trial_id, cfg)?;
    let mut paths = images
        .iter()
        .map(|img| sink.put(Task::Oddball, img))
        .collect::<Result<Vec<_>, _>>()?;
    trial.images.array = paths.pop().expect("array image");
    trial.images.cells = paths;
    Ok(trial)
}

pub fn generate_oddball_dataset(
    library: &[ConceptProgram],
    cfg: &GenerationConfig,
    master_seed: u64,
    sink: &dyn ImageSink,
) -> Result<OddballManifest, OddballError> {
    let per = cfg.oddball.per_concept;
    let jobs: Vec<(&ConceptProgram, usize)> = library.iter().flat_map(|c| (0..per).map(move |k| (c, k))).collect();
    let trials = jobs
        .par_iter()
        .map(|(c, k)| {
            let id = trial_id(&c.name, *k);
            let seed = derive_seed(master_seed, &id);
            generate_oddball_trial(c, &id, seed, cfg, sink)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OddballManifest {
        version: MANIFEST_VERSION,
        task: Task::Oddball,
        rng: RNG_ALGORITHM.to_string(),
        seed: master_seed,
        per_concept: per,
        geometry: cfg.geometry.clone(),
        raster: cfg.raster.clone(),
        library: library
            .iter()
            .map(|c| ConceptInfo {
                name: c.name.clone(),
                family: c.family,
                mdl: c.mdl(),
                constraint_pairs: c.constraint_pairs().len(),
            })
            .collect(),
        trials,
    })
}

/// Dataset over the shipped library.
pub fn generate_default_oddball_dataset(cfg: &GenerationConfig, master_seed: u64, sink: &dyn ImageSink) -> Result<OddballManifest, OddballError> {
    generate_oddball_dataset(&default_library()?, cfg, master_seed, sink)
}
