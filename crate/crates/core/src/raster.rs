//! RGB rasterization: anti-aliased strokes, even-odd polygon fill, binary
//! masks for overlap measurement, panel composition and PNG encoding.
//!
//! Pixel coordinates put the origin at the top-left corner of the image
//! with y pointing down; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{point_segment_distance, RealizedObject, RealizedScene, Vec2};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];
pub const INDEX_RED: Rgb = [220, 20, 20];
pub const GUTTER_GREY: Rgb = [200, 200, 200];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("panel size mismatch: expected {expected:?}, found {found:?}")]
    SizeMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("expected {expected} cells, got {found}")]
    CellCount { expected: usize, found: usize },
    #[error("shape rasterizes to an empty mask")]
    EmptyMask,
    #[error("mask resolution {0} is below the minimum of 256")]
    Resolution(u32),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
    #[error("png decoding: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    PngLayout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Role of an image within its trial. The string form doubles as the
/// file stem under `<task>/<trial_id>/`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Panel {
    Single,
    /// 1-based position in an oddball array.
    ArrayCell(u8),
    PairLeft,
    PairRight,
    /// Composite oddball array.
    Array,
    /// Composite rotation pair.
    Pair,
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Panel::Single => f.write_str("scene"),
            Panel::ArrayCell(i) => write!(f, "cell{i}"),
            Panel::PairLeft => f.write_str("left"),
            Panel::PairRight => f.write_str("right"),
            Panel::Array => f.write_str("array"),
            Panel::Pair => f.write_str("pair"),
        }
    }
}

impl FromStr for Panel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "scene" => Panel::Single,
            "left" => Panel::PairLeft,
            "right" => Panel::PairRight,
            "array" => Panel::Array,
            "pair" => Panel::Pair,
            _ => match s.strip_prefix("cell").and_then(|n| n.parse::<u8>().ok()) {
                Some(i) if (1..=6).contains(&i) => Panel::ArrayCell(i),
                _ => return Err(format!("unknown panel `{s}`")),
            },
        })
    }
}

impl Serialize for Panel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Panel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StimulusImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB8.
    pub pixels: Vec<u8>,
    pub trial_id: String,
    pub panel: Panel,
}

impl StimulusImage {
    pub fn new(width: u32, height: u32, trial_id: &str, panel: Panel) -> Self {
        Self::filled(width, height, WHITE, trial_id, panel)
    }

    pub fn filled(width: u32, height: u32, color: Rgb, trial_id: &str, panel: Panel) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&color);
        }
        StimulusImage {
            width,
            height,
            pixels,
            trial_id: trial_id.to_string(),
            panel,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Blend `c` over pixel `(x, y)` with coverage `a ∈ [0, 1]`.
    pub fn blend(&mut self, x: u32, y: u32, c: Rgb, a: f64) {
        if a <= 0.0 {
            return;
        }
        let a = a.min(1.0);
        let i = (y as usize * self.width as usize + x as usize) * 3;
        for k in 0..3 {
            let old = self.pixels[i + k] as f64;
            let v = old + (c[k] as f64 - old) * a;
            self.pixels[i + k] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    /// Copy `src` into this image with its top-left corner at `(x0, y0)`.
    pub fn blit(&mut self, src: &StimulusImage, x0: u32, y0: u32) {
        let row = src.width as usize * 3;
        for y in 0..src.height {
            let d = ((y0 + y) as usize * self.width as usize + x0 as usize) * 3;
            let s = y as usize * row;
            self.pixels[d..d + row].copy_from_slice(&src.pixels[s..s + row]);
        }
    }

    pub fn count_where(&self, pred: impl Fn(Rgb) -> bool) -> usize {
        self.pixels
            .chunks_exact(3)
            .filter(|p| pred([p[0], p[1], p[2]]))
            .count()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Fast);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        let bytes = self.encode_png()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }
}

/// Decode an 8-bit RGB PNG (as written by [`StimulusImage::encode_png`]).
pub fn decode_png(bytes: &[u8], trial_id: &str, panel: Panel) -> Result<StimulusImage, RasterError> {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(RasterError::PngLayout(format!(
            "{:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(StimulusImage {
        width: info.width,
        height: info.height,
        pixels: buf,
        trial_id: trial_id.to_string(),
        panel,
    })
}

/// Coverage of a stroke of width `w` at distance `d` from its centerline:
/// a one-pixel linear ramp centered on the stroke edge.
fn stroke_coverage(d: f64, w: f64) -> f64 {
    (w / 2.0 + 0.5 - d).clamp(0.0, 1.0)
}

/// Max-combined stroke coverage over a float buffer.
struct Coverage {
    w: u32,
    h: u32,
    a: Vec<f32>,
}

impl Coverage {
    fn new(w: u32, h: u32) -> Self {
        Coverage {
            w,
            h,
            a: vec![0.0; w as usize * h as usize],
        }
    }

    /// Visit pixels whose centers fall in the padded box, keeping the max.
    fn stamp(&mut self, lo: Vec2, hi: Vec2, f: impl Fn(Vec2) -> f64) {
        let x0 = lo.x.floor().max(0.0) as u32;
        let y0 = lo.y.floor().max(0.0) as u32;
        let x1 = (hi.x.ceil().max(0.0) as u32).min(self.w);
        let y1 = (hi.y.ceil().max(0.0) as u32).min(self.h);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = f(Vec2::new(x as f64 + 0.5, y as f64 + 0.5)) as f32;
                let slot = &mut self.a[y as usize * self.w as usize + x as usize];
                if c > *slot {
                    *slot = c;
                }
            }
        }
    }

    fn segment(&mut self, a: Vec2, b: Vec2, width: f64) {
        let pad = width / 2.0 + 1.0;
        let lo = Vec2::new(a.x.min(b.x) - pad, a.y.min(b.y) - pad);
        let hi = Vec2::new(a.x.max(b.x) + pad, a.y.max(b.y) + pad);
        self.stamp(lo, hi, |p| stroke_coverage(point_segment_distance(p, a, b), width));
    }

    fn circle(&mut self, c: Vec2, r: f64, width: f64) {
        let pad = r + width / 2.0 + 1.0;
        let inner = (r - width / 2.0 - 1.0).max(0.0);
        let lo = Vec2::new(c.x - pad, c.y - pad);
        let hi = Vec2::new(c.x + pad, c.y + pad);
        self.stamp(lo, hi, |p| {
            let d = p.dist(c);
            if d < inner {
                0.0
            } else {
                stroke_coverage((d - r).abs(), width)
            }
        });
    }

    fn paint(&self, img: &mut StimulusImage, color: Rgb) {
        for y in 0..self.h {
            for x in 0..self.w {
                let a = self.a[y as usize * self.w as usize + x as usize];
                img.blend(x, y, color, a as f64);
            }
        }
    }
}

/// Draw visible objects of a unit-canvas scene as black anti-aliased
/// strokes on a white `size × size` image.
pub fn render_scene(scene: &RealizedScene, size: u32, stroke: f64, trial_id: &str, panel: Panel) -> StimulusImage {
    let mut img = StimulusImage::new(size, size, trial_id, panel);
    let s = size as f64;
    let mut cov = Coverage::new(size, size);
    for obj in scene.visible_objects() {
        match *obj {
            RealizedObject::Line { a, b } => cov.segment(a * s, b * s, stroke),
            RealizedObject::Circle { center, radius } => cov.circle(center * s, radius * s, stroke),
        }
    }
    cov.paint(&mut img, BLACK);
    img
}

/// Draw polylines (pixel coordinates) as anti-aliased strokes.
pub fn stroke_polylines(img: &mut StimulusImage, lines: &[Vec<Vec2>], width: f64, color: Rgb) {
    let mut cov = Coverage::new(img.width, img.height);
    for line in lines {
        for w in line.windows(2) {
            cov.segment(w[0], w[1], width);
        }
    }
    cov.paint(img, color);
}

/// Sorted x-crossings of the horizontal line at `y` with all ring edges.
fn crossings(rings: &[&[Vec2]], y: f64, out: &mut Vec<f64>) {
    out.clear();
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let p = ring[i];
            let q = ring[(i + 1) % n];
            if (p.y <= y) != (q.y <= y) {
                out.push(p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x));
            }
        }
    }
    out.sort_by(f64::total_cmp);
}

fn rings_bounds(rings: &[&[Vec2]]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in rings.iter().flat_map(|r| r.iter()) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

const SUB_SCANLINES: usize = 4;

/// Even-odd fill of one or more closed rings (pixel coordinates) with
/// anti-aliased edges: 4 sub-scanlines per row, exact horizontal span
/// coverage. Paints over whatever is already there.
pub fn fill_rings(img: &mut StimulusImage, rings: &[&[Vec2]], color: Rgb) {
    if rings.iter().all(|r| r.len() < 3) {
        return;
    }
    let (lo, hi) = rings_bounds(rings);
    let y0 = lo.y.floor().max(0.0) as u32;
    let y1 = (hi.y.ceil().max(0.0) as u32).min(img.height);
    let x0 = lo.x.floor().max(0.0) as usize;
    let x1 = (hi.x.ceil().max(0.0) as usize).min(img.width as usize);
    if x1 <= x0 {
        return;
    }
    let mut acc = vec![0.0f64; x1 - x0];
    let mut xs = Vec::new();
    let w = 1.0 / SUB_SCANLINES as f64;
    for y in y0..y1 {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for s in 0..SUB_SCANLINES {
            let sy = y as f64 + (s as f64 + 0.5) * w;
            crossings(rings, sy, &mut xs);
            for span in xs.chunks_exact(2) {
                let (a, b) = (span[0].max(x0 as f64), span[1].min(x1 as f64));
                if b <= a {
                    continue;
                }
                let first = a.floor() as usize;
                let last = (b.ceil() as usize).min(x1);
                for px in first..last {
                    let cover = (b.min(px as f64 + 1.0) - a.max(px as f64)).max(0.0);
                    acc[px - x0] += cover * w;
                }
            }
        }
        for (i, a) in acc.iter().enumerate() {
            img.blend((x0 + i) as u32, y, color, *a);
        }
    }
}

/// Fill a single closed outline onto a copy of `canvas`.
pub fn rasterize_polygon(outline: &[Vec2], fill: Rgb, canvas: &StimulusImage) -> StimulusImage {
    let mut out = canvas.clone();
    fill_rings(&mut out, &[outline], fill);
    out
}

/// Binary mask sampled at pixel centers, stored over its bounding box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub x0: i64,
    pub y0: i64,
    pub w: usize,
    pub h: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    /// Rasterize rings (pixel coordinates, even-odd) without clipping.
    pub fn from_rings(rings: &[&[Vec2]]) -> Mask {
        let (lo, hi) = rings_bounds(rings);
        if !lo.x.is_finite() {
            return Mask::empty();
        }
        let x0 = lo.x.floor() as i64;
        let y0 = lo.y.floor() as i64;
        let w = (hi.x.ceil() as i64 - x0).max(0) as usize;
        let h = (hi.y.ceil() as i64 - y0).max(0) as usize;
        let mut bits = vec![false; w * h];
        let mut xs = Vec::new();
        for j in 0..h {
            let cy = (y0 + j as i64) as f64 + 0.5;
            crossings(rings, cy, &mut xs);
            for span in xs.chunks_exact(2) {
                // pixel i is inside when its center lies in [a, b)
                let a = (span[0] - 0.5 - x0 as f64).ceil().max(0.0) as usize;
                let b = ((span[1] - 0.5 - x0 as f64).ceil().max(0.0) as usize).min(w);
                for i in a..b {
                    bits[j * w + i] = true;
                }
            }
        }
        Mask { x0, y0, w, h, bits }
    }

    pub fn empty() -> Mask {
        Mask {
            x0: 0,
            y0: 0,
            w: 0,
            h: 0,
            bits: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        let (i, j) = (x - self.x0, y - self.y0);
        i >= 0 && j >= 0 && (i as usize) < self.w && (j as usize) < self.h && self.bits[j as usize * self.w + i as usize]
    }

    /// The same mask moved by an integer pixel offset.
    pub fn shifted(&self, dx: i64, dy: i64) -> Mask {
        Mask {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            ..self.clone()
        }
    }

    /// `|self ∩ (other shifted by (dx, dy))|`.
    pub fn intersection_count_shifted(&self, other: &Mask, dx: i64, dy: i64) -> usize {
        let ox = other.x0 + dx;
        let oy = other.y0 + dy;
        let lx = self.x0.max(ox);
        let ly = self.y0.max(oy);
        let hx = (self.x0 + self.w as i64).min(ox + other.w as i64);
        let hy = (self.y0 + self.h as i64).min(oy + other.h as i64);
        let mut n = 0;
        for y in ly..hy {
            let a = (y - self.y0) as usize * self.w;
            let b = (y - oy) as usize * other.w;
            for x in lx..hx {
                if self.bits[a + (x - self.x0) as usize] && other.bits[b + (x - ox) as usize] {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.intersection_count_shifted(other, 0, 0)
    }

    /// Pixels of `self` that lie inside the `width × height` canvas.
    pub fn count_in_canvas(&self, width: u32, height: u32) -> usize {
        let mut n = 0;
        for j in 0..self.h {
            let y = self.y0 + j as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            for i in 0..self.w {
                let x = self.x0 + i as i64;
                if x >= 0 && x < width as i64 && self.bits[j * self.w + i] {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Intersection-over-min of two masks; `None` if either is empty.
pub fn mask_iom(a: &Mask, b: &Mask) -> Option<f64> {
    let (na, nb) = (a.count(), b.count());
    if na == 0 || nb == 0 {
        return None;
    }
    Some(a.intersection_count(b) as f64 / na.min(nb) as f64)
}

/// Intersection-over-min of two closed outlines given in unit-canvas
/// coordinates and rasterized at `resolution` pixels per unit.
pub fn mask_overlap_ratio(a: &[Vec2], b: &[Vec2], resolution: u32) -> Result<f64, RasterError> {
    if resolution < 256 {
        return Err(RasterError::Resolution(resolution));
    }
    let s = resolution as f64;
    let pa: Vec<Vec2> = a.iter().map(|p| *p * s).collect();
    let pb: Vec<Vec2> = b.iter().map(|p| *p * s).collect();
    let ma = Mask::from_rings(&[&pa]);
    let mb = Mask::from_rings(&[&pb]);
    mask_iom(&ma, &mb).ok_or(RasterError::EmptyMask)
}

// Digit strokes in a 0.6 × 1.0 box, y down.
const DIGITS: [&[&[(f64, f64)]]; 6] = [
    &[&[(0.12, 0.2), (0.32, 0.0), (0.32, 1.0)], &[(0.1, 1.0), (0.54, 1.0)]],
    &[&[(0.04, 0.2), (0.18, 0.03), (0.42, 0.03), (0.56, 0.2), (0.54, 0.4), (0.04, 1.0), (0.6, 1.0)]],
    &[
        &[(0.04, 0.1), (0.2, 0.0), (0.44, 0.0), (0.57, 0.12), (0.57, 0.35), (0.4, 0.5), (0.2, 0.5)],
        &[(0.4, 0.5), (0.6, 0.65), (0.6, 0.88), (0.45, 1.0), (0.2, 1.0), (0.04, 0.9)],
    ],
    &[&[(0.45, 1.0), (0.45, 0.0), (0.02, 0.7), (0.6, 0.7)]],
    &[&[
        (0.58, 0.0),
        (0.1, 0.0),
        (0.06, 0.45),
        (0.35, 0.4),
        (0.55, 0.5),
        (0.6, 0.75),
        (0.48, 0.95),
        (0.3, 1.0),
        (0.04, 0.92),
    ]],
    &[&[
        (0.55, 0.05),
        (0.35, 0.0),
        (0.15, 0.15),
        (0.05, 0.5),
        (0.05, 0.8),
        (0.2, 1.0),
        (0.45, 1.0),
        (0.6, 0.85),
        (0.6, 0.6),
        (0.45, 0.45),
        (0.2, 0.45),
        (0.05, 0.6),
    ]],
];

/// Numeral height as a fraction of the cell side.
const NUMERAL_HEIGHT: f64 = 0.12;
/// Inset of the numeral's top-left corner from the cell corner.
pub const NUMERAL_INSET: f64 = 0.05;

/// Top-left pixel of the numeral box for cell `index` (1-based).
pub fn numeral_anchor(index: usize, cell: u32, gutter: u32) -> (u32, u32) {
    let (cx, cy) = cell_origin(index, cell, gutter);
    let inset = (NUMERAL_INSET * cell as f64).round() as u32;
    (cx + inset, cy + inset)
}

/// Top-left pixel of cell `index` (1-based, row-major 3 × 2).
pub fn cell_origin(index: usize, cell: u32, gutter: u32) -> (u32, u32) {
    let i = (index - 1) as u32;
    let (col, row) = (i % 3, i / 3);
    (gutter + col * (cell + gutter), gutter + row * (cell + gutter))
}

fn draw_numeral(img: &mut StimulusImage, digit: usize, x: f64, y: f64, height: f64) {
    let lines: Vec<Vec<Vec2>> = DIGITS[digit - 1]
        .iter()
        .map(|s| s.iter().map(|&(u, v)| Vec2::new(x + u * height, y + v * height)).collect())
        .collect();
    let width = (height / 10.0).max(2.0);
    stroke_polylines(img, &lines, width, INDEX_RED);
}

fn check_same_size(cells: &[&StimulusImage]) -> Result<(u32, u32), RasterError> {
    let first = (cells[0].width, cells[0].height);
    for c in cells {
        if (c.width, c.height) != first {
            return Err(RasterError::SizeMismatch {
                expected: first,
                found: (c.width, c.height),
            });
        }
    }
    Ok(first)
}

/// Lay six square cells out as a 3 × 2 grid on a grey background and
/// stamp each position with its red numeral.
pub fn compose_oddball_array(cells: &[StimulusImage], gutter: u32, trial_id: &str) -> Result<StimulusImage, RasterError> {
    if cells.len() != 6 {
        return Err(RasterError::CellCount {
            expected: 6,
            found: cells.len(),
        });
    }
    let refs: Vec<&StimulusImage> = cells.iter().collect();
    let (cw, ch) = check_same_size(&refs)?;
    let w = 3 * cw + 4 * gutter;
    let h = 2 * ch + 3 * gutter;
    let mut out = StimulusImage::filled(w, h, GUTTER_GREY, trial_id, Panel::Array);
    for (k, cell) in cells.iter().enumerate() {
        let (x, y) = cell_origin(k + 1, cw, gutter);
        out.blit(cell, x, y);
        let (nx, ny) = numeral_anchor(k + 1, cw, gutter);
        draw_numeral(&mut out, k + 1, nx as f64, ny as f64, NUMERAL_HEIGHT * cw as f64);
    }
    Ok(out)
}

/// Two panels side by side with a grey gutter around and between them.
pub fn compose_pair(left: &StimulusImage, right: &StimulusImage, gutter: u32, trial_id: &str) -> Result<StimulusImage, RasterError> {
    let (cw, ch) = check_same_size(&[left, right])?;
    let mut out = StimulusImage::filled(2 * cw + 3 * gutter, ch + 2 * gutter, GUTTER_GREY, trial_id, Panel::Pair);
    out.blit(left, gutter, gutter);
    out.blit(right, 2 * gutter + cw, gutter);
    Ok(out)
}
