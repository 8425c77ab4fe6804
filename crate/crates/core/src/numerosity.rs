//! Spline-blob counting scenes over the overlap × color design.
//!
//! Blobs are closed piecewise cubic Hermite curves through K ∈ {3,4,5}
//! jittered anchors. Each piece leaves and enters its anchors turned
//! toward the interior, so it bows toward the center and the anchors
//! become sharp tips.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{GenerationConfig, NumerosityConfig};
use crate::geometry::{point_segment_distance, Vec2};
use crate::manifest::{Condition, NumerosityManifest, NumerosityTrial, ShapeRecord, Task, MANIFEST_VERSION};
use crate::raster::{fill_rings, mask_overlap_ratio, Mask, Panel, RasterError, Rgb, StimulusImage};
use crate::rng::{derive_seed, StimRng, RNG_ALGORITHM};
use crate::sink::ImageSink;

pub const SAMPLES_PER_SEGMENT: usize = 64;
/// Tangent length relative to the chord.
pub const TANGENT_SCALE: f64 = 0.3;
/// Fraction of an anchor's interior angle that the two tangents there are
/// turned into the interior. Below 1 the pieces meeting at a tip cannot
/// cross; the tip keeps the remaining share of the angle.
pub const TANGENT_TURN: f64 = 0.6;

// The chain search aims inside the accepted band so pixel-level
// differences between the search masks and the final check cannot push a
// pair out of it.
const SEARCH_MARGIN: f64 = 0.02;
const DIRECTION_TRIES: usize = 24;

#[derive(Debug, Error)]
pub enum NumerosityError {
    #[error("{condition} n={numerosity}: placement exhausted after {attempts} attempts")]
    PlacementExhausted {
        condition: Condition,
        numerosity: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A blob centered on the origin, unit-canvas coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub anchors: Vec<Vec2>,
    pub outline: Vec<Vec2>,
}

impl Blob {
    pub fn n_points(&self) -> usize {
        self.anchors.len()
    }

    /// Radius of a circle about the origin containing the outline.
    pub fn bound(&self) -> f64 {
        self.outline.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn placed(&self, center: Vec2) -> Vec<Vec2> {
        self.outline.iter().map(|p| *p + center).collect()
    }
}

fn hermite(p0: Vec2, m0: Vec2, p1: Vec2, m1: Vec2, t: f64) -> Vec2 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11
}

/// Closed outline through `anchors` (counter-clockwise about the origin
/// in y-up terms), `SAMPLES_PER_SEGMENT` points per piece. The first
/// sample of every piece is its anchor.
pub fn blob_outline(anchors: &[Vec2]) -> Vec<Vec2> {
    let k = anchors.len();
    // interior angle at each anchor, measured from the next anchor's
    // direction counter-clockwise to the previous one's
    let interior: Vec<f64> = (0..k)
        .map(|i| {
            let v = anchors[i];
            let a = anchors[(i + 1) % k] - v;
            let b = anchors[(i + k - 1) % k] - v;
            a.cross(b).atan2(a.dot(b)).rem_euclid(TAU)
        })
        .collect();
    let mut out = Vec::with_capacity(k * SAMPLES_PER_SEGMENT);
    for i in 0..k {
        let j = (i + 1) % k;
        let (p0, p1) = (anchors[i], anchors[j]);
        let chord = p1 - p0;
        let len = TANGENT_SCALE * chord.norm();
        let dir = chord.normalized();
        let m0 = dir.rotated(0.5 * TANGENT_TURN * interior[i]) * len;
        let m1 = dir.rotated(-0.5 * TANGENT_TURN * interior[j]) * len;
        for s in 0..SAMPLES_PER_SEGMENT {
            let t = s as f64 / SAMPLES_PER_SEGMENT as f64;
            out.push(hermite(p0, m0, p1, m1, t));
        }
    }
    out
}

/// Anchors for given angles and radii; angles increase counter-clockwise.
pub fn blob_from_polar(angles: &[f64], radii: &[f64]) -> Blob {
    let anchors: Vec<Vec2> = angles
        .iter()
        .zip(radii)
        .map(|(a, r)| Vec2::new(a.cos(), a.sin()) * *r)
        .collect();
    let outline = blob_outline(&anchors);
    Blob { anchors, outline }
}

/// Random blob with outer radius at most `scale` (canvas fraction).
pub fn generate_blob(rng: &mut StimRng, scale: f64) -> Blob {
    let k = 3 + rng.index(3);
    let kf = k as f64;
    let jitter = PI / (3.0 * kf);
    // the global rotation keeps the first tip from always pointing along +x
    let phase = rng.range(0.0, TAU);
    let angles: Vec<f64> = (0..k)
        .map(|i| phase + TAU * i as f64 / kf + rng.range(-jitter, jitter))
        .collect();
    let radii: Vec<f64> = (0..k).map(|_| scale * rng.range(0.6, 1.0)).collect();
    blob_from_polar(&angles, &radii)
}

fn to_px(outline: &[Vec2], size: u32) -> Vec<Vec2> {
    let s = size as f64;
    outline.iter().map(|p| *p * s).collect()
}

fn mask_at(blob: &Blob, center: Vec2, size: u32) -> Mask {
    let px = to_px(&blob.placed(center), size);
    Mask::from_rings(&[&px])
}

pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Smallest distance between two closed outlines; 0 if they touch, cross
/// or one contains the other.
pub fn outline_gap(a: &[Vec2], b: &[Vec2]) -> f64 {
    if point_in_polygon(a[0], b) || point_in_polygon(b[0], a) {
        return 0.0;
    }
    let one_way = |p: &[Vec2], q: &[Vec2]| {
        let mut best = f64::INFINITY;
        for v in p {
            if point_in_polygon(*v, q) {
                return 0.0;
            }
            for i in 0..q.len() {
                best = best.min(point_segment_distance(*v, q[i], q[(i + 1) % q.len()]));
            }
        }
        best
    };
    one_way(a, b).min(one_way(b, a))
}

#[derive(Clone, Debug)]
pub struct Placement {
    pub centers: Vec<Vec2>,
    pub attempts: usize,
}

fn random_center(rng: &mut StimRng, bound: f64) -> Option<Vec2> {
    if bound >= 0.5 {
        return None;
    }
    Some(Vec2::new(rng.range(bound, 1.0 - bound), rng.range(bound, 1.0 - bound)))
}

fn in_canvas(center: Vec2, bound: f64) -> bool {
    center.x - bound >= 0.0 && center.y - bound >= 0.0 && center.x + bound <= 1.0 && center.y + bound <= 1.0
}

/// Place blobs with no contact and at least `min_gap_px` between outlines.
pub fn place_distinct(blobs: &[Blob], cfg: &NumerosityConfig, size: u32, rng: &mut StimRng) -> Option<Placement> {
    let gap = cfg.min_gap_px / size as f64;
    let bounds: Vec<f64> = blobs.iter().map(Blob::bound).collect();
    let mut centers: Vec<Vec2> = Vec::new();
    let mut placed: Vec<Vec<Vec2>> = Vec::new();
    let mut attempts = 0;
    while centers.len() < blobs.len() {
        if attempts >= cfg.max_attempts {
            return None;
        }
        attempts += 1;
        let i = centers.len();
        let c = random_center(rng, bounds[i])?;
        let outline = blobs[i].placed(c);
        let ok = centers.iter().enumerate().all(|(j, cj)| {
            if c.dist(*cj) > bounds[i] + bounds[j] + gap {
                return true;
            }
            outline_gap(&outline, &placed[j]) >= gap
        });
        if ok {
            centers.push(c);
            placed.push(outline);
        }
    }
    Some(Placement { centers, attempts })
}

/// Per-shape pixels left visible when shapes are drawn in order.
pub fn visible_counts(masks: &[Mask], size: u32) -> Vec<usize> {
    let mut owner = vec![u8::MAX; size as usize * size as usize];
    for (k, m) in masks.iter().enumerate() {
        for j in 0..m.h {
            let y = m.y0 + j as i64;
            if y < 0 || y >= size as i64 {
                continue;
            }
            for i in 0..m.w {
                let x = m.x0 + i as i64;
                if x >= 0 && x < size as i64 && m.bits[j * m.w + i] {
                    owner[y as usize * size as usize + x as usize] = k as u8;
                }
            }
        }
    }
    let mut counts = vec![0; masks.len()];
    for o in owner {
        if (o as usize) < masks.len() {
            counts[o as usize] += 1;
        }
    }
    counts
}

/// Chain placement: each blob sits along a random direction from the
/// previous one at an offset found by bisection so that the pair's
/// intersection-over-min lands inside the configured band.
pub fn place_overlapping(blobs: &[Blob], cfg: &NumerosityConfig, size: u32, rng: &mut StimRng) -> Option<Placement> {
    let bounds: Vec<f64> = blobs.iter().map(Blob::bound).collect();
    let (lo_band, hi_band) = cfg.overlap_band;
    let (target_lo, target_hi) = (lo_band + SEARCH_MARGIN, hi_band - SEARCH_MARGIN);
    let s = size as f64;
    let solo: Vec<usize> = blobs
        .iter()
        .map(|b| mask_at(b, Vec2::new(0.5, 0.5), size).count())
        .collect();
    let mut attempts = 0;
    'restart: while attempts < cfg.max_attempts {
        attempts += 1;
        let first = random_center(rng, bounds[0])?;
        let mut centers = vec![first];
        let mut masks = vec![mask_at(&blobs[0], first, size)];
        for i in 1..blobs.len() {
            let prev = centers[i - 1];
            let mut found = None;
            for _ in 0..DIRECTION_TRIES {
                attempts += 1;
                let dir = Vec2::new(1.0, 0.0).rotated(rng.range(0.0, TAU));
                // offsets are whole pixels so the bisection works on a
                // fixed lattice
                let at = |d: f64| {
                    let off = dir * d;
                    prev + Vec2::new((off.x * s).round() / s, (off.y * s).round() / s)
                };
                let iom = |c: Vec2| {
                    let m = mask_at(&blobs[i], c, size);
                    let prev_mask = &masks[i - 1];
                    let (na, nb) = (prev_mask.count(), m.count());
                    if na == 0 || nb == 0 {
                        return (0.0, m);
                    }
                    (prev_mask.intersection_count(&m) as f64 / na.min(nb) as f64, m)
                };
                let (mut lo, mut hi) = (0.0, bounds[i - 1] + bounds[i]);
                let mut hit = None;
                while (hi - lo) * s > 0.25 {
                    let mid = 0.5 * (lo + hi);
                    let c = at(mid);
                    let (r, m) = iom(c);
                    if r > target_hi {
                        lo = mid;
                    } else if r < target_lo {
                        hi = mid;
                    } else {
                        hit = Some((c, m));
                        break;
                    }
                }
                let Some((c, m)) = hit else { continue };
                if !in_canvas(c, bounds[i]) {
                    continue;
                }
                let mut trial_masks = masks.clone();
                trial_masks.push(m);
                let vis = visible_counts(&trial_masks, size);
                let floor_ok = vis
                    .iter()
                    .zip(&solo)
                    .all(|(v, s)| *v as f64 >= cfg.visibility_floor * *s as f64);
                if floor_ok {
                    found = Some((c, trial_masks));
                    break;
                }
            }
            match found {
                Some((c, m)) => {
                    centers.push(c);
                    masks = m;
                }
                None => continue 'restart,
            }
        }
        // the official measure decides, on the exact outlines
        let ok = (1..blobs.len()).all(|i| {
            let a = blobs[i - 1].placed(centers[i - 1]);
            let b = blobs[i].placed(centers[i]);
            matches!(mask_overlap_ratio(&a, &b, size), Ok(r) if r >= lo_band && r <= hi_band)
        });
        if ok {
            return Some(Placement { centers, attempts });
        }
    }
    None
}

/// HSV (h in degrees, s and v in [0,1]) to RGB8.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Hues in degrees, one per shape.
pub fn assign_hues(n: usize, colored: bool, rng: &mut StimRng) -> Vec<f64> {
    let offset = rng.range(0.0, 360.0);
    if !colored {
        return vec![offset; n];
    }
    let mut hues: Vec<f64> = (0..n)
        .map(|i| (offset + i as f64 * 360.0 / n as f64).rem_euclid(360.0))
        .collect();
    rng.shuffle(&mut hues);
    hues
}

/// One trial's geometry and colors, before rendering.
#[derive(Clone, Debug)]
pub struct NumerosityScene {
    pub blobs: Vec<Blob>,
    pub centers: Vec<Vec2>,
    pub hues: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub attempts: usize,
}

pub fn trial_id(condition: Condition, n: usize, k: usize) -> String {
    format!("num-{}-{n}-{k:03}", condition.as_str().replace('_', "-"))
}

pub fn generate_numerosity_scene(
    condition: Condition,
    n: usize,
    seed: u64,
    cfg: &GenerationConfig,
) -> Result<NumerosityScene, NumerosityError> {
    let p = &cfg.numerosity;
    let size = cfg.raster.numerosity_size;
    let mut total = 0;
    // fresh shapes for each redraw so an unlucky shape set cannot stall
    for round in 0.. {
        let mut rng = StimRng::derived(seed, &format!("shapes/{round}"));
        let blobs: Vec<Blob> = (0..n).map(|_| generate_blob(&mut rng, p.blob_scale)).collect();
        let budget = NumerosityConfig {
            max_attempts: (p.max_attempts - total).min(p.max_attempts / 5).max(1),
            ..p.clone()
        };
        let placed = if condition.overlapping() {
            place_overlapping(&blobs, &budget, size, &mut rng)
        } else {
            place_distinct(&blobs, &budget, size, &mut rng)
        };
        match placed {
            Some(pl) => {
                let mut crng = StimRng::derived(seed, "colors");
                let hues = assign_hues(n, condition.colored(), &mut crng);
                let colors = hues.iter().map(|h| hsv_to_rgb(*h, p.saturation, p.value)).collect();
                return Ok(NumerosityScene {
                    blobs,
                    centers: pl.centers,
                    hues,
                    colors,
                    attempts: total + pl.attempts,
                });
            }
            None => total += budget.max_attempts,
        }
        if total >= p.max_attempts || round > 1000 {
            break;
        }
    }
    Err(NumerosityError::PlacementExhausted {
        condition,
        numerosity: n,
        attempts: total,
    })
}

pub fn render_numerosity(scene: &NumerosityScene, size: u32, trial_id: &str) -> StimulusImage {
    let mut img = StimulusImage::new(size, size, trial_id, Panel::Single);
    for ((b, c), color) in scene.blobs.iter().zip(&scene.centers).zip(&scene.colors) {
        let px = to_px(&b.placed(*c), size);
        fill_rings(&mut img, &[&px], *color);
    }
    img
}

/// Outlines of a manifest trial's shapes, in draw order.
pub fn trial_outlines(trial: &NumerosityTrial) -> Vec<Vec<Vec2>> {
    trial
        .shapes
        .iter()
        .map(|s| blob_outline(&s.anchors).into_iter().map(|p| p + s.center).collect())
        .collect()
}

pub fn generate_numerosity_trial(
    condition: Condition,
    n: usize,
    trial_id: &str,
    seed: u64,
    cfg: &GenerationConfig,
    sink: &dyn ImageSink,
) -> Result<NumerosityTrial, NumerosityError> {
    let size = cfg.raster.numerosity_size;
    let scene = generate_numerosity_scene(condition, n, seed, cfg)?;
    let img = render_numerosity(&scene, size, trial_id);
    let image = sink.put(Task::Numerosity, &img)?;
    let outlines: Vec<Vec<Vec2>> = scene.blobs.iter().zip(&scene.centers).map(|(b, c)| b.placed(*c)).collect();
    let adjacent_overlaps = if condition.overlapping() {
        outlines
            .windows(2)
            .map(|w| mask_overlap_ratio(&w[0], &w[1], size))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let shapes = scene
        .blobs
        .iter()
        .zip(&scene.centers)
        .zip(scene.hues.iter().zip(&scene.colors))
        .map(|((b, c), (h, color))| ShapeRecord {
            n_points: b.n_points(),
            anchors: b.anchors.clone(),
            center: *c,
            color: *color,
            hue_deg: *h,
            area_px: mask_at(b, *c, size).count(),
        })
        .collect();
    Ok(NumerosityTrial {
        trial_id: trial_id.to_string(),
        condition,
        numerosity: n,
        seed,
        shapes,
        adjacent_overlaps,
        placement_attempts: scene.attempts,
        image,
    })
}

pub fn generate_numerosity_dataset(cfg: &GenerationConfig, master_seed: u64, sink: &dyn ImageSink) -> Result<NumerosityManifest, NumerosityError> {
    let p = &cfg.numerosity;
    let mut jobs = Vec::new();
    for condition in Condition::ALL {
        for n in 1..=p.max_numerosity {
            for k in 0..p.per_cell {
                jobs.push((condition, n, k));
            }
        }
    }
    let trials = jobs
        .par_iter()
        .map(|&(condition, n, k)| {
            let id = trial_id(condition, n, k);
            let seed = derive_seed(master_seed, &id);
            generate_numerosity_trial(condition, n, &id, seed, cfg, sink)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NumerosityManifest {
        version: MANIFEST_VERSION,
        task: Task::Numerosity,
        rng: RNG_ALGORITHM.to_string(),
        seed: master_seed,
        per_cell: p.per_cell,
        overlap_measure: "intersection_over_min".to_string(),
        adjacency: "consecutive_in_placement_chain".to_string(),
        params: p.clone(),
        raster: cfg.raster.clone(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outline_passes_through_anchors() {
        let mut rng = StimRng::new(2);
        for _ in 0..200 {
            let b = generate_blob(&mut rng, 0.1);
            assert!((3..=5).contains(&b.n_points()));
            assert_eq!(b.outline.len(), b.n_points() * SAMPLES_PER_SEGMENT);
            for (i, a) in b.anchors.iter().enumerate() {
                assert_eq!(b.outline[i * SAMPLES_PER_SEGMENT], *a);
            }
            assert!(b.bound() <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn symmetric_three_point_blob() {
        let angles: Vec<f64> = (0..3).map(|i| TAU * i as f64 / 3.0).collect();
        let b = blob_from_polar(&angles, &[0.1; 3]);
        let n = b.outline.len();
        let step = n / 3;
        for i in 0..n {
            let rotated = b.outline[i].rotated(TAU / 3.0);
            assert!(rotated.dist(b.outline[(i + step) % n]) < 1e-12);
        }
        // the bow stays inside the anchor triangle
        let centroid_dist = b.outline[SAMPLES_PER_SEGMENT / 2].norm();
        assert!(centroid_dist < 0.1 * (PI / 3.0).cos());
    }

    #[test]
    fn hues_per_condition() {
        let mut rng = StimRng::new(8);
        let u = assign_hues(5, false, &mut rng);
        assert!(u.iter().all(|h| *h == u[0]));
        let c = assign_hues(8, true, &mut rng);
        let mut sorted = c.clone();
        sorted.sort_by(f64::total_cmp);
        for w in sorted.windows(2) {
            assert!((w[1] - w[0] - 45.0).abs() < 1e-9);
        }
        let colors: std::collections::BTreeSet<Rgb> = c.iter().map(|h| hsv_to_rgb(*h, 0.8, 0.8)).collect();
        assert_eq!(colors.len(), 8);
        assert_eq!(assign_hues(1, true, &mut rng).len(), 1);
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(360.0, 1.0, 1.0), [255, 0, 0]);
    }

    #[test]
    fn gap_of_separated_and_nested_outlines() {
        let sq = |x: f64, s: f64| vec![Vec2::new(x, 0.0), Vec2::new(x + s, 0.0), Vec2::new(x + s, s), Vec2::new(x, s)];
        assert!((outline_gap(&sq(0.0, 1.0), &sq(3.0, 1.0)) - 2.0).abs() < 1e-12);
        let inner: Vec<Vec2> = sq(0.25, 0.5);
        assert_eq!(outline_gap(&sq(0.0, 1.0), &inner), 0.0);
    }

    #[test]
    fn scenes_for_every_cell() {
        let cfg = GenerationConfig::default();
        for condition in Condition::ALL {
            for n in 1..=8 {
                let s = generate_numerosity_scene(condition, n, derive_seed(3, &format!("{condition}{n}")), &cfg)
                    .unwrap_or_else(|e| panic!("{e}"));
                assert_eq!(s.centers.len(), n);
            }
        }
    }
}
