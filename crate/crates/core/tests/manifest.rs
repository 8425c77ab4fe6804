use probe_core::dsl::default_library;
use probe_core::manifest::{sha256_hex, Dataset};
use probe_core::numerosity::generate_numerosity_dataset;
use probe_core::oddball::generate_oddball_dataset;
use probe_core::rotation::{default_glyphs, generate_rotation_dataset};
use probe_core::sink::NullSink;
use probe_core::{GenerationConfig, Task};

fn datasets(seed: u64) -> Vec<Dataset> {
    let cfg = GenerationConfig::default().scaled(0.01);
    vec![
        Dataset::Oddball(generate_oddball_dataset(&default_library().unwrap(), &cfg, seed, &NullSink).unwrap()),
        Dataset::Numerosity(generate_numerosity_dataset(&cfg, seed, &NullSink).unwrap()),
        Dataset::Rotation(generate_rotation_dataset(&default_glyphs(), &cfg, seed, &NullSink).unwrap()),
    ]
}

#[test]
fn manifests_reload_exactly_and_hash_stably() {
    let dir = tempfile::tempdir().unwrap();
    let first = datasets(42);
    for d in &first {
        let hash = d.write(dir.path()).unwrap();
        let bytes = std::fs::read(dir.path().join(d.task().manifest_file())).unwrap();
        assert_eq!(hash, sha256_hex(&bytes));
        let back = Dataset::load(dir.path(), d.task()).unwrap();
        assert_eq!(&back, d);
        assert_eq!(back.to_json(), d.to_json());
    }
    let again = datasets(42);
    for (a, b) in first.iter().zip(&again) {
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn trial_views_are_consistent() {
    for d in datasets(1) {
        let trials = d.trials();
        assert_eq!(trials.len(), d.len());
        let (lo, hi) = d.task().answer_range();
        for t in &trials {
            assert_eq!(t.task, d.task());
            assert!((lo..=hi).contains(&t.answer));
            assert!(t.model_image.starts_with(d.task().as_str()));
            match d.task() {
                Task::Oddball => assert_eq!(t.human_images.len(), 6),
                Task::Numerosity => assert_eq!(t.human_images.len(), 1),
                Task::Rotation => assert_eq!(t.human_images.len(), 2),
            }
        }
    }
}
