use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::{natural_cmp, ClaimRecord, EpisodeRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AssemblyConfig {
    pub max_claims: usize,
    /// Allowed |declared total - sum of claim costs| before a mismatch is reported.
    pub cost_tolerance: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self { max_claims: 200, cost_tolerance: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMismatch {
    pub episode_id: String,
    pub declared: f64,
    pub summed: f64,
}

#[derive(Clone, Debug, Default)]
pub struct AssemblyReport {
    pub episodes: Vec<EpisodeRecord>,
    pub cost_mismatches: Vec<CostMismatch>,
}

/// Group claims into episodes ordered by claim id, merging rows that share
/// a claim id.
pub fn assemble_episodes(claims: &[ClaimRecord], config: &AssemblyConfig) -> Result<AssemblyReport> {
    let mut by_episode: BTreeMap<&str, Vec<&ClaimRecord>> = BTreeMap::new();
    for claim in claims {
        by_episode.entry(claim.episode_id.as_str()).or_default().push(claim);
    }
    let mut ids: Vec<&str> = by_episode.keys().copied().collect();
    ids.sort_by(|a, b| natural_cmp(a, b));

    let mut report = AssemblyReport::default();
    for id in ids {
        let rows = &by_episode[id];
        let first = rows[0];
        if let Some(other) = rows.iter().find(|r| r.physician_id != first.physician_id) {
            return Err(Error::Integrity(format!(
                "episode {id} names physicians {} and {}",
                first.physician_id, other.physician_id
            )));
        }

        let mut merged: Vec<ClaimRecord> = Vec::new();
        let mut sorted: Vec<&ClaimRecord> = rows.clone();
        // Stable sort keeps source order among rows of one claim.
        sorted.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        for row in sorted {
            match merged.last_mut() {
                Some(last) if last.claim_id == row.claim_id => merge_into(last, row),
                _ => merged.push(row.clone()),
            }
        }
        if merged.len() > config.max_claims {
            return Err(Error::Integrity(format!(
                "episode {id} has {} claims, above the maximum {}",
                merged.len(),
                config.max_claims
            )));
        }

        let episode = EpisodeRecord {
            episode_id: id.to_string(),
            beneficiary_id: first.beneficiary_id.clone(),
            physician_id: first.physician_id.clone(),
            start_day: first.episode_start_day,
            end_day: first.episode_end_day,
            total_cost: first.episode_total_cost,
            claims: merged,
        };
        let summed = episode.claim_cost_sum();
        if (summed - episode.total_cost).abs() > config.cost_tolerance {
            report.cost_mismatches.push(CostMismatch {
                episode_id: episode.episode_id.clone(),
                declared: episode.total_cost,
                summed,
            });
        }
        report.episodes.push(episode);
    }
    Ok(report)
}

fn merge_into(target: &mut ClaimRecord, row: &ClaimRecord) {
    target.claim_cost += row.claim_cost;
    target.claim_start_day = target.claim_start_day.min(row.claim_start_day);
    target.claim_end_day = target.claim_end_day.max(row.claim_end_day);
    target.inpatient_flag |= row.inpatient_flag;
    for (slot, value) in [
        (&mut target.procedure_code, &row.procedure_code),
        (&mut target.procedure_category, &row.procedure_category),
        (&mut target.diagnosis_code, &row.diagnosis_code),
        (&mut target.diagnosis_category, &row.diagnosis_category),
    ] {
        if slot.is_none() {
            slot.clone_from(value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ClaimId;

    fn claim(episode: &str, physician: &str, id: &str, cost: f64) -> ClaimRecord {
        ClaimRecord {
            episode_id: episode.into(),
            beneficiary_id: "b".into(),
            episode_start_day: 0,
            episode_end_day: 100,
            episode_total_cost: 0.0,
            physician_id: physician.into(),
            claim_id: ClaimId::new(id),
            claim_start_day: 1,
            claim_end_day: 1,
            claim_cost: cost,
            procedure_code: None,
            procedure_category: None,
            diagnosis_code: None,
            diagnosis_category: None,
            inpatient_flag: false,
        }
    }

    #[test]
    fn claims_sorted_by_id() {
        let rows = vec![claim("e", "p", "c2", 1.0), claim("e", "p", "c1", 1.0), claim("e", "p", "c3", 1.0)];
        let rep = assemble_episodes(&rows, &AssemblyConfig::default()).unwrap();
        let ids: Vec<&str> = rep.episodes[0].claims.iter().map(|c| c.claim_id.0.as_str()).collect();
        assert_eq!(ids, ["c1", "c2", "c3"]);
    }

    #[test]
    fn duplicate_claim_rows_merge() {
        let mut a = claim("e", "p", "c1", 100.0);
        let mut b = claim("e", "p", "c1", 50.0);
        b.diagnosis_category = Some("DX".into());
        a.procedure_code = Some("P1".into());
        b.procedure_code = Some("P2".into());
        let rep = assemble_episodes(&[a, b], &AssemblyConfig::default()).unwrap();
        let claims = &rep.episodes[0].claims;
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].claim_cost, 150.0);
        assert_eq!(claims[0].diagnosis_category.as_deref(), Some("DX"));
        assert_eq!(claims[0].procedure_code.as_deref(), Some("P1"));
    }

    #[test]
    fn two_physicians_is_integrity_error() {
        let rows = vec![claim("e", "p1", "c1", 1.0), claim("e", "p2", "c2", 1.0)];
        assert!(matches!(
            assemble_episodes(&rows, &AssemblyConfig::default()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn cost_mismatch_reported_not_fatal() {
        let mut rows = vec![claim("e", "p", "c1", 10.0), claim("e", "p", "c2", 5.0)];
        for r in &mut rows {
            r.episode_total_cost = 20.0;
        }
        let rep = assemble_episodes(&rows, &AssemblyConfig::default()).unwrap();
        assert_eq!(rep.cost_mismatches.len(), 1);
        assert_eq!(rep.cost_mismatches[0].summed, 15.0);
    }

    #[test]
    fn too_many_claims_rejected() {
        let rows: Vec<_> = (0..5).map(|i| claim("e", "p", &format!("c{i}"), 1.0)).collect();
        let cfg = AssemblyConfig { max_claims: 4, ..AssemblyConfig::default() };
        assert!(assemble_episodes(&rows, &cfg).is_err());
    }
}
