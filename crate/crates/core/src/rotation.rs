//! Letter mental-rotation pairs.
//!
//! Glyphs are polylines drawn as square-capped bars; each bar is its own
//! quadrilateral, and a glyph's shape is the union of its bars. Glyph
//! coordinates are normalized so the bounding box is centered on the
//! origin with its longer side equal to 1. Rotation is clockwise on screen
//! (y points down).

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{scaled_count, GenerationConfig};
use crate::geometry::Vec2;
use crate::manifest::{GlyphInfo, RotationImages, RotationManifest, RotationTrial, Task, MANIFEST_VERSION};
use crate::raster::{compose_pair, fill_rings, Mask, Panel, RasterError, StimulusImage, BLACK};
use crate::rng::{StimRng, RNG_ALGORITHM};
use crate::sink::ImageSink;

pub const DEFAULT_GLYPH_SOURCE: &str = include_str!("../data/glyphs.txt");
/// Bar thickness in the glyph's drawing box.
pub const STROKE_THICKNESS: f64 = 0.13;
pub const GLYPH_COUNT: usize = 26;
pub const TRIAL_TYPES: usize = 4;

#[derive(Debug, Error)]
pub enum RotationError {
    #[error("glyph file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("glyphs fail the chirality gate: {}", .0.iter().map(|(c, s)| format!("{c} ({s:.4})")).collect::<Vec<_>>().join(", "))]
    Chirality(Vec<(char, f64)>),
    #[error("glyph `{0}` rasterizes to an empty mask")]
    EmptyMask(char),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub type Outline = Vec<Vec<Vec2>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Glyph {
    pub ch: char,
    /// Bar quadrilaterals, normalized.
    pub outline: Outline,
}

/// Square-capped bars for each segment of each stroke.
pub fn stroke_quads(strokes: &[Vec<Vec2>], thickness: f64) -> Outline {
    let h = thickness / 2.0;
    let mut out = Vec::new();
    for s in strokes {
        for w in s.windows(2) {
            let d = (w[1] - w[0]).normalized();
            let n = d.perp();
            let a = w[0] - d * h;
            let b = w[1] + d * h;
            out.push(vec![a + n * h, b + n * h, b - n * h, a - n * h]);
        }
    }
    out
}

fn bounds(outline: &Outline) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in outline.iter().flatten() {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

impl Glyph {
    pub fn from_strokes(ch: char, strokes: &[Vec<Vec2>]) -> Glyph {
        let quads = stroke_quads(strokes, STROKE_THICKNESS);
        let (lo, hi) = bounds(&quads);
        let center = (lo + hi) * 0.5;
        let scale = 1.0 / (hi.x - lo.x).max(hi.y - lo.y);
        let outline = quads
            .into_iter()
            .map(|q| q.into_iter().map(|p| (p - center) * scale).collect())
            .collect();
        Glyph { ch, outline }
    }

    pub fn mirrored(&self) -> Glyph {
        Glyph {
            ch: self.ch,
            outline: transform_glyph(self, true, 0),
        }
    }
}

pub fn parse_glyphs(source: &str) -> Result<Vec<Glyph>, RotationError> {
    let mut out = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| RotationError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (head, body) = line.split_once(':').ok_or_else(|| err("missing `:`"))?;
        let mut chars = head.trim().chars();
        let ch = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(err("glyph label must be one character")),
        };
        let mut strokes = Vec::new();
        for stroke in body.split('|') {
            let mut pts = Vec::new();
            for pair in stroke.split_whitespace() {
                let (x, y) = pair.split_once(',').ok_or_else(|| err("point must be `x,y`"))?;
                let x: f64 = x.parse().map_err(|_| err("bad x coordinate"))?;
                let y: f64 = y.parse().map_err(|_| err("bad y coordinate"))?;
                pts.push(Vec2::new(x, y));
            }
            if pts.len() < 2 {
                return Err(err("stroke needs at least two points"));
            }
            if pts.windows(2).any(|w| w[0] == w[1]) {
                return Err(err("zero-length stroke segment"));
            }
            strokes.push(pts);
        }
        out.push(Glyph::from_strokes(ch, &strokes));
    }
    Ok(out)
}

pub fn default_glyphs() -> Vec<Glyph> {
    parse_glyphs(DEFAULT_GLYPH_SOURCE).expect("shipped glyph file parses")
}

/// Mirror about the vertical axis through the box center, then rotate
/// by `theta_deg` (taken mod 360) about the same center.
pub fn transform_glyph(glyph: &Glyph, mirrored: bool, theta_deg: u32) -> Outline {
    let theta = (theta_deg % 360) as f64;
    rotate_outline(&mirror_outline(&glyph.outline, mirrored), theta)
}

pub fn mirror_outline(outline: &Outline, mirrored: bool) -> Outline {
    if !mirrored {
        return outline.clone();
    }
    outline
        .iter()
        .map(|q| q.iter().map(|p| Vec2::new(-p.x, p.y)).collect())
        .collect()
}

pub fn rotate_outline(outline: &Outline, theta_deg: f64) -> Outline {
    if theta_deg == 0.0 {
        return outline.clone();
    }
    let a = theta_deg.to_radians();
    outline.iter().map(|q| q.iter().map(|p| p.rotated(a)).collect()).collect()
}

/// Place a normalized outline in a `size` panel: centered, with the
/// normalized unit box spanning `extent · size` pixels.
pub fn to_panel(outline: &Outline, size: u32, extent: f64) -> Outline {
    let s = size as f64;
    let c = Vec2::new(s / 2.0, s / 2.0);
    outline
        .iter()
        .map(|q| q.iter().map(|p| c + *p * (extent * s)).collect())
        .collect()
}

/// Union of the polygons' pixel-center masks on a `size²` grid.
pub fn union_mask(outline_px: &Outline, size: u32) -> Vec<bool> {
    let n = size as usize;
    let mut grid = vec![false; n * n];
    for q in outline_px {
        let m = Mask::from_rings(&[q]);
        for j in 0..m.h {
            let y = m.y0 + j as i64;
            if y < 0 || y >= n as i64 {
                continue;
            }
            for i in 0..m.w {
                let x = m.x0 + i as i64;
                if x >= 0 && x < n as i64 && m.bits[j * m.w + i] {
                    grid[y as usize * n + x as usize] = true;
                }
            }
        }
    }
    grid
}

fn centroid(grid: &[bool], size: usize) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (k, b) in grid.iter().enumerate() {
        if *b {
            sx += (k % size) as f64;
            sy += (k / size) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Nonzero bounding box of a square grid: (x0, y0, x1, y1), exclusive.
fn grid_bounds(g: &[bool], size: usize) -> (i64, i64, i64, i64) {
    let (mut x0, mut y0, mut x1, mut y1) = (size as i64, size as i64, 0, 0);
    for (k, b) in g.iter().enumerate() {
        if *b {
            let (x, y) = ((k % size) as i64, (k / size) as i64);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    (x0, y0, x1, y1)
}

struct Shape<'a> {
    grid: &'a [bool],
    size: usize,
    bounds: (i64, i64, i64, i64),
    count: usize,
}

impl<'a> Shape<'a> {
    fn new(grid: &'a [bool], size: usize) -> Self {
        Shape {
            grid,
            size,
            bounds: grid_bounds(grid, size),
            count: grid.iter().filter(|b| **b).count(),
        }
    }

    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size && self.grid[y as usize * self.size + x as usize]
    }
}

/// IoU of `a` and `b` after shifting `b` by a whole-pixel offset.
fn iou_shifted(a: &Shape, b: &Shape, dx: i64, dy: i64) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.bounds;
    let (bx0, by0, bx1, by1) = b.bounds;
    let (lx, ly) = (ax0.max(bx0 + dx), ay0.max(by0 + dy));
    let (hx, hy) = (ax1.min(bx1 + dx), ay1.min(by1 + dy));
    let mut inter = 0usize;
    for y in ly..hy {
        for x in lx..hx {
            inter += (a.at(x, y) && b.at(x - dx, y - dy)) as usize;
        }
    }
    let union = a.count + b.count - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Steepest-ascent search over whole-pixel shifts starting at `(dx, dy)`.
fn climb(a: &Shape, b: &Shape, mut dx: i64, mut dy: i64) -> f64 {
    let mut best = iou_shifted(a, b, dx, dy);
    loop {
        let mut step = None;
        for (ox, oy) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)] {
            let v = iou_shifted(a, b, dx + ox, dy + oy);
            if v > best {
                best = v;
                step = Some((dx + ox, dy + oy));
            }
        }
        match step {
            Some((x, y)) => (dx, dy) = (x, y),
            None => return best,
        }
    }
}

/// Angles whose centroid-aligned IoU ranks highest get a translation
/// search; centroid alignment alone underestimates the best overlap when
/// the shapes differ.
const REFINED_ANGLES: usize = 16;

/// Largest IoU between `a` and `b` rotated by φ ∈ {0°, 1°, …, 359°},
/// rasterized at `res²`. Each φ starts from centroid alignment; the most
/// promising angles are then refined over whole-pixel translations.
pub fn max_rotation_iou(a: &Outline, b: &Outline, res: u32, extent: f64) -> Option<f64> {
    let n = res as usize;
    let ma = union_mask(&to_panel(a, res, extent), res);
    let ca = centroid(&ma, n)?;
    let sa = Shape::new(&ma, n);
    let mut scored: Vec<(f64, u32, Vec<bool>, i64, i64)> = (0..360u32)
        .into_par_iter()
        .map(|phi| {
            let mb = union_mask(&to_panel(&rotate_outline(b, phi as f64), res, extent), res);
            let cb = centroid(&mb, n)?;
            let dx = (ca.0 - cb.0).round() as i64;
            let dy = (ca.1 - cb.1).round() as i64;
            let v = iou_shifted(&sa, &Shape::new(&mb, n), dx, dy);
            Some((v, phi, mb, dx, dy))
        })
        .collect::<Option<Vec<_>>>()?;
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let best = scored
        .par_iter()
        .take(REFINED_ANGLES)
        .map(|(_, _, mb, dx, dy)| climb(&sa, &Shape::new(mb, n), *dx, *dy))
        .reduce(|| 0.0, f64::max);
    Some(best.max(scored[0].0))
}

/// Chirality score: how well the glyph's mirror image can be matched by
/// rotating the glyph. Symmetric shapes score near 1.
pub fn check_chirality(glyph: &Glyph, res: u32) -> Result<f64, RotationError> {
    // the unit box must stay inside the raster under any rotation
    let extent = 0.6;
    max_rotation_iou(&glyph.mirrored().outline, &glyph.outline, res, extent).ok_or(RotationError::EmptyMask(glyph.ch))
}

pub fn disparity(theta_deg: u32) -> u32 {
    let t = theta_deg % 360;
    t.min(360 - t)
}

pub fn trial_id(ch: char, theta: u32, pair_same: bool, first_mirrored: bool) -> String {
    format!(
        "rot-{ch}-{theta:03}-{}-{}",
        if pair_same { "same" } else { "mirror" },
        if first_mirrored { "m" } else { "u" }
    )
}

/// The full crossed design in canonical order: glyph, angle, same/mirror,
/// first mirrored.
pub fn design(glyphs: &[Glyph], step_deg: u32) -> Vec<(usize, u32, bool, bool)> {
    let mut out = Vec::new();
    for g in 0..glyphs.len() {
        for theta in (0..360).step_by(step_deg as usize) {
            for pair_same in [true, false] {
                for first_mirrored in [false, true] {
                    out.push((g, theta, pair_same, first_mirrored));
                }
            }
        }
    }
    out
}

/// Left and right outlines of a trial, normalized.
pub fn trial_outlines(glyph: &Glyph, theta: u32, pair_same: bool, first_mirrored: bool) -> (Outline, Outline) {
    let left = transform_glyph(glyph, first_mirrored, 0);
    let right = transform_glyph(glyph, first_mirrored ^ !pair_same, theta);
    (left, right)
}

pub fn render_outline(outline: &Outline, size: u32, extent: f64, trial_id: &str, panel: Panel) -> StimulusImage {
    let mut img = StimulusImage::new(size, size, trial_id, panel);
    for q in to_panel(outline, size, extent) {
        fill_rings(&mut img, &[&q], BLACK);
    }
    img
}

pub fn generate_rotation_dataset(
    glyphs: &[Glyph],
    cfg: &GenerationConfig,
    master_seed: u64,
    sink: &dyn ImageSink,
) -> Result<RotationManifest, RotationError> {
    let rc = &cfg.rotation;
    let mut infos = Vec::new();
    let mut failing = Vec::new();
    for g in glyphs {
        let score = check_chirality(g, rc.chirality_resolution)?;
        if score >= rc.chirality_threshold {
            failing.push((g.ch, score));
        }
        infos.push(GlyphInfo {
            ch: g.ch,
            chirality_score: score,
        });
    }
    if !failing.is_empty() {
        return Err(RotationError::Chirality(failing));
    }
    let full = design(glyphs, rc.angle_step_deg);
    let mut order: Vec<usize> = (0..full.len()).collect();
    StimRng::derived(master_seed, "rotation/order").shuffle(&mut order);
    let keep = if rc.fraction >= 1.0 {
        full.len()
    } else {
        scaled_count(full.len(), rc.fraction)
    };
    order.truncate(keep);
    let mut selected = order.clone();
    selected.sort_unstable();
    let size = cfg.raster.rotation_panel;
    let trials = selected
        .par_iter()
        .map(|&k| {
            let (g, theta, pair_same, first_mirrored) = full[k];
            let glyph = &glyphs[g];
            let id = trial_id(glyph.ch, theta, pair_same, first_mirrored);
            let (l, r) = trial_outlines(glyph, theta, pair_same, first_mirrored);
            let left = render_outline(&l, size, rc.glyph_extent, &id, Panel::PairLeft);
            let right = render_outline(&r, size, rc.glyph_extent, &id, Panel::PairRight);
            let pair = compose_pair(&left, &right, cfg.raster.gutter, &id)?;
            Ok(RotationTrial {
                trial_id: id,
                ch: glyph.ch,
                theta_deg: theta,
                pair_same,
                first_mirrored,
                disparity_deg: disparity(theta),
                images: RotationImages {
                    left: sink.put(Task::Rotation, &left)?,
                    right: sink.put(Task::Rotation, &right)?,
                    pair: sink.put(Task::Rotation, &pair)?,
                },
            })
        })
        .collect::<Result<Vec<_>, RotationError>>()?;
    let presentation_order = order
        .iter()
        .map(|&k| {
            let (g, theta, s, m) = full[k];
            trial_id(glyphs[g].ch, theta, s, m)
        })
        .collect();
    Ok(RotationManifest {
        version: MANIFEST_VERSION,
        task: Task::Rotation,
        rng: RNG_ALGORITHM.to_string(),
        seed: master_seed,
        fraction: rc.fraction,
        full_design_size: full.len(),
        glyphs: infos,
        raster: cfg.raster.clone(),
        trials,
        presentation_order,
    })
}
