//! Generation parameters shared by the three task generators.

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub oddball_cell: u32,
    pub numerosity_size: u32,
    pub rotation_panel: u32,
    pub stroke: f64,
    pub gutter: u32,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            oddball_cell: 256,
            numerosity_size: 512,
            rotation_panel: 256,
            stroke: 3.0,
            gutter: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OddballConfig {
    pub per_concept: usize,
    pub relaxed_constraints: usize,
    /// Oddball redraws per trial attempt before the trial is restarted.
    pub max_oddball_resamples: usize,
    pub max_trial_restarts: usize,
}

impl Default for OddballConfig {
    fn default() -> Self {
        OddballConfig {
            per_concept: 100,
            relaxed_constraints: 2,
            max_oddball_resamples: 200,
            max_trial_restarts: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumerosityConfig {
    pub per_cell: usize,
    pub max_numerosity: usize,
    /// Outer blob radius as a fraction of the canvas side.
    pub blob_scale: f64,
    pub min_gap_px: f64,
    pub overlap_band: (f64, f64),
    /// Fraction of its solo mask each shape must keep visible.
    pub visibility_floor: f64,
    pub max_attempts: usize,
    pub saturation: f64,
    pub value: f64,
}

impl Default for NumerosityConfig {
    fn default() -> Self {
        NumerosityConfig {
            per_cell: 100,
            max_numerosity: 8,
            blob_scale: 0.1,
            min_gap_px: 4.0,
            overlap_band: (0.6, 0.8),
            visibility_floor: 0.1,
            max_attempts: 5000,
            saturation: 0.8,
            value: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationConfig {
    /// Fraction of the full 3,744-trial design to emit.
    pub fraction: f64,
    pub angle_step_deg: u32,
    /// Glyph bounding-box side relative to the panel.
    pub glyph_extent: f64,
    pub chirality_resolution: u32,
    pub chirality_threshold: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            fraction: 1.0,
            angle_step_deg: 10,
            glyph_extent: 0.55,
            chirality_resolution: 128,
            chirality_threshold: 0.98,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub geometry: GeometryConfig,
    pub raster: RasterConfig,
    pub oddball: OddballConfig,
    pub numerosity: NumerosityConfig,
    pub rotation: RotationConfig,
}

impl GenerationConfig {
    /// Scale per-cell counts by `scale`, rounding up so every cell keeps
    /// at least one trial.
    pub fn scaled(mut self, scale: f64) -> Self {
        let up = |n: usize| scaled_count(n, scale);
        self.oddball.per_concept = up(self.oddball.per_concept);
        self.numerosity.per_cell = up(self.numerosity.per_cell);
        self.rotation.fraction = (self.rotation.fraction * scale).min(1.0);
        self
    }
}

/// `⌈n · scale⌉`, at least 1, ignoring float noise in the product
/// (100 · 0.05 must give 5, not 6).
pub fn scaled_count(n: usize, scale: f64) -> usize {
    ((n as f64 * scale - 1e-9).ceil() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_rounds_up_without_float_noise() {
        assert_eq!(scaled_count(100, 0.05), 5);
        assert_eq!(scaled_count(3744, 0.05), 188);
        assert_eq!(scaled_count(100, 1.0), 100);
        assert_eq!(scaled_count(100, 0.001), 1);
        let c = GenerationConfig::default().scaled(0.05);
        assert_eq!(c.oddball.per_concept, 5);
        assert_eq!(c.numerosity.per_cell, 5);
    }
}
