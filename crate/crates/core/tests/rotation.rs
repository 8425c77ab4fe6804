use std::collections::BTreeSet;

use probe_core::rotation::{
    check_chirality, default_glyphs, generate_rotation_dataset, max_rotation_iou, rotate_outline, to_panel,
    trial_outlines, union_mask, Glyph,
};
use probe_core::sink::{MemorySink, NullSink};
use probe_core::GenerationConfig;

#[test]
fn every_glyph_is_chiral() {
    for g in default_glyphs() {
        let s = check_chirality(&g, 128).unwrap();
        assert!(s < 0.98, "{}: {s}", g.ch);
    }
}

#[test]
fn chirality_is_symmetric_under_mirroring() {
    for g in default_glyphs().into_iter().step_by(5) {
        let a = check_chirality(&g, 128).unwrap();
        let b = check_chirality(&g.mirrored(), 128).unwrap();
        assert!((a - b).abs() <= 0.01, "{}: {a} vs {b}", g.ch);
    }
}

/// Exhaustive search over every 1° rotation and every whole-pixel shift
/// in a ±12 px window: the score must not miss a better alignment.
fn exhaustive(g: &Glyph) -> f64 {
    let n = 128usize;
    let extent = 0.6;
    let a = union_mask(&to_panel(&g.mirrored().outline, 128, extent), 128);
    let mut best = 0.0f64;
    for phi in 0..360 {
        let b = union_mask(&to_panel(&rotate_outline(&g.outline, phi as f64), 128, extent), 128);
        for dy in -12i64..=12 {
            for dx in -12i64..=12 {
                let (mut i, mut u) = (0usize, 0usize);
                for y in 0..n as i64 {
                    for x in 0..n as i64 {
                        let av = a[y as usize * n + x as usize];
                        let (bx, by) = (x - dx, y - dy);
                        let bv = bx >= 0 && by >= 0 && bx < n as i64 && by < n as i64 && b[by as usize * n + bx as usize];
                        i += (av && bv) as usize;
                        u += (av || bv) as usize;
                    }
                }
                best = best.max(i as f64 / u as f64);
            }
        }
    }
    best
}

#[test]
fn chirality_score_matches_exhaustive_sweep_on_the_closest_glyph() {
    let glyphs = default_glyphs();
    let (g, s) = glyphs
        .iter()
        .map(|g| (g, check_chirality(g, 128).unwrap()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let oracle = exhaustive(g);
    assert!(oracle < 0.98, "{}: {oracle}", g.ch);
    assert!((oracle - s).abs() <= 0.01, "{}: score {s} vs exhaustive {oracle}", g.ch);
}

#[test]
fn scaled_dataset_counts_and_order() {
    let mut c = GenerationConfig::default();
    c.rotation.fraction = 0.05;
    let m = generate_rotation_dataset(&default_glyphs(), &c, 1, &NullSink).unwrap();
    assert_eq!(m.trials.len(), 188);
    assert_eq!(m.full_design_size, 3744);
    let ids: BTreeSet<&str> = m.trials.iter().map(|t| t.trial_id.as_str()).collect();
    let order: BTreeSet<&str> = m.presentation_order.iter().map(String::as_str).collect();
    assert_eq!(ids, order);
    assert_eq!(m.presentation_order.len(), 188);
    for t in &m.trials {
        assert_eq!(t.disparity_deg, t.theta_deg.min(360 - t.theta_deg));
        assert_eq!(t.theta_deg % 10, 0);
        assert_eq!(t.images.pair, format!("rotation/{}/pair.png", t.trial_id));
    }
}

#[test]
fn mirror_pairs_never_match() {
    let glyphs = default_glyphs();
    for (k, g) in glyphs.iter().enumerate() {
        let theta = (k as u32 * 70) % 360;
        let (l, r) = trial_outlines(g, theta, false, k % 2 == 0);
        let best = max_rotation_iou(&l, &r, 128, 0.6).unwrap();
        assert!(best < 0.98, "{} {theta}: {best}", g.ch);
    }
}

#[test]
fn same_unrotated_pair_renders_identical_panels() {
    let mut c = GenerationConfig::default();
    c.rotation.fraction = 1.0;
    let glyphs = &default_glyphs()[..1];
    let sink = MemorySink::default();
    let m = generate_rotation_dataset(glyphs, &c, 2, &sink).unwrap();
    assert_eq!(m.trials.len(), 144);
    let images = sink.images.into_inner().unwrap();
    let t = m.trials.iter().find(|t| t.theta_deg == 0 && t.pair_same && !t.first_mirrored).unwrap();
    assert_eq!(images[&t.images.left].pixels, images[&t.images.right].pixels);
    let t = m.trials.iter().find(|t| t.theta_deg == 0 && !t.pair_same && !t.first_mirrored).unwrap();
    assert_ne!(images[&t.images.left].pixels, images[&t.images.right].pixels);
}
