use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::{mean, sample_sd};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtRecord {
    pub participant: String,
    pub trial_id: String,
    pub rt_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZRecord {
    pub participant: String,
    pub trial_id: String,
    pub rt_ms: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    /// In input order, valid responses of retained participants only.
    pub records: Vec<ZRecord>,
    /// Responses outside the RT bounds.
    pub excluded_responses: usize,
    /// Participants with fewer than two valid responses or zero spread.
    pub dropped_participants: Vec<String>,
}

/// Standardize RTs within each participant over that participant's valid
/// responses (sample sd).
pub fn zscore_rt(responses: &[RtRecord], rt_min_ms: f64, rt_max_ms: f64) -> ZScores {
    let valid = |r: &RtRecord| (rt_min_ms..=rt_max_ms).contains(&r.rt_ms);
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in responses.iter().filter(|r| valid(r)) {
        by.entry(&r.participant).or_default().push(r.rt_ms);
    }
    let mut params: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut dropped = Vec::new();
    for (p, rts) in &by {
        let sd = if rts.len() >= 2 { sample_sd(rts) } else { 0.0 };
        if sd > 0.0 {
            params.insert(p, (mean(rts), sd));
        } else {
            log::warn!(
                "participant {p}: degenerate RTs ({} valid), dropped",
                rts.len()
            );
            dropped.push(p.to_string());
        }
    }
    // participants whose every response is out of bounds
    for r in responses {
        if !by.contains_key(r.participant.as_str()) && !dropped.contains(&r.participant) {
            dropped.push(r.participant.clone());
        }
    }
    dropped.sort();
    let records = responses
        .iter()
        .filter(|r| valid(r))
        .filter_map(|r| {
            let (m, sd) = params.get(r.participant.as_str())?;
            Some(ZRecord {
                participant: r.participant.clone(),
                trial_id: r.trial_id.clone(),
                rt_ms: r.rt_ms,
                z: (r.rt_ms - m) / sd,
            })
        })
        .collect();
    ZScores {
        records,
        excluded_responses: responses.iter().filter(|r| !valid(r)).count(),
        dropped_participants: dropped,
    }
}
