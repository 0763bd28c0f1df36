use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Claim identifier, ordered naturally: runs of digits compare numerically,
/// so `c2 < c10`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimId(pub String);

impl ClaimId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Ord for ClaimId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for ClaimId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (trim_zeros(&a[..da]), trim_zeros(&b[..db]));
                let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb));
                if ord != Ordering::Equal {
                    return ord;
                }
                // Equal numeric value: fewer leading zeros sorts first.
                let ord = da.cmp(&db);
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                let ord = x.cmp(y);
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[start..]
}

/// One row of the canonical claims table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub episode_id: String,
    pub beneficiary_id: String,
    pub episode_start_day: i64,
    pub episode_end_day: i64,
    pub episode_total_cost: f64,
    pub physician_id: String,
    pub claim_id: ClaimId,
    pub claim_start_day: i64,
    pub claim_end_day: i64,
    pub claim_cost: f64,
    pub procedure_code: Option<String>,
    pub procedure_category: Option<String>,
    pub diagnosis_code: Option<String>,
    pub diagnosis_category: Option<String>,
    pub inpatient_flag: bool,
}

/// All claims of one patient episode, ordered by claim id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub beneficiary_id: String,
    pub physician_id: String,
    pub start_day: i64,
    pub end_day: i64,
    pub claims: Vec<ClaimRecord>,
    /// Declared episode total from the source table.
    pub total_cost: f64,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn claim_cost_sum(&self) -> f64 {
        self.claims.iter().map(|c| c.claim_cost).sum()
    }
}
