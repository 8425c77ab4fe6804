//! Destinations for rendered images.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::manifest::Task;
use crate::raster::{RasterError, StimulusImage};

/// Relative path of an image: `<task>/<trial_id>/<panel>.png`.
pub fn image_path(task: Task, img: &StimulusImage) -> String {
    format!("{}/{}/{}.png", task.as_str(), img.trial_id, img.panel)
}

pub trait ImageSink: Send + Sync {
    /// Store `img` and return its relative path.
    fn put(&self, task: Task, img: &StimulusImage) -> Result<String, RasterError>;
}

/// Writes PNG files under a root directory.
pub struct DirSink {
    pub root: PathBuf,
}

impl DirSink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirSink { root: root.into() }
    }
}

impl ImageSink for DirSink {
    fn put(&self, task: Task, img: &StimulusImage) -> Result<String, RasterError> {
        let rel = image_path(task, img);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        img.write_png(&path)?;
        Ok(rel)
    }
}

/// Discards images; paths are still computed.
pub struct NullSink;

impl ImageSink for NullSink {
    fn put(&self, task: Task, img: &StimulusImage) -> Result<String, RasterError> {
        Ok(image_path(task, img))
    }
}

/// Keeps images in memory, keyed by relative path.
#[derive(Default)]
pub struct MemorySink {
    pub images: Mutex<BTreeMap<String, StimulusImage>>,
}

impl ImageSink for MemorySink {
    fn put(&self, task: Task, img: &StimulusImage) -> Result<String, RasterError> {
        let rel = image_path(task, img);
        self.images.lock().unwrap().insert(rel.clone(), img.clone());
        Ok(rel)
    }
}
