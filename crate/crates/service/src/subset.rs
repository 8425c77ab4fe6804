use std::collections::BTreeMap;

use probe_core::{StimRng, TrialInfo};

/// Stratified uniform sample: ⌈fraction · cell size⌉ trials from every
/// stratum. Returned in manifest order.
pub fn select_human_subset(trials: &[TrialInfo], fraction: f64, seed: u64) -> Vec<TrialInfo> {
    let mut cells: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        cells.entry(&t.stratum).or_default().push(i);
    }
    let mut keep = vec![false; trials.len()];
    for (stratum, members) in &cells {
        let want = ((fraction * members.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let want = want.min(members.len());
        let mut rng = StimRng::derived(seed, &format!("subset/{stratum}"));
        for k in rng.sample_indices(members.len(), want) {
            keep[members[k]] = true;
        }
    }
    trials.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t.clone()).collect()
}
