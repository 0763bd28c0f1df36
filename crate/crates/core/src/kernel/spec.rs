use crate::error::{Error, Result};
use crate::ingest::StateId;
use crate::spectral::{SpectralFeatures, StatePartition};

/// State-similarity kernel.
#[derive(Clone, Debug)]
pub enum KernelSpec {
    /// 1 within a block, 0 across blocks.
    Partition(StatePartition),
    /// Inner product of Markov feature rows, optionally clamped at zero.
    Spectral { features: SpectralFeatures, clamp_negative: bool },
}

impl KernelSpec {
    pub fn spectral(features: SpectralFeatures) -> Self {
        KernelSpec::Spectral { features, clamp_negative: true }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Partition(_) => "partition",
            KernelSpec::Spectral { .. } => "spectral",
        }
    }

    /// States the kernel is defined on, and therefore the states of any MDP
    /// estimated with it.
    pub fn domain(&self) -> Vec<StateId> {
        match self {
            KernelSpec::Partition(p) => p.space.states(),
            KernelSpec::Spectral { features, .. } => {
                let mut states: Vec<StateId> = features.states.iter().filter(|s| !s.is_terminal()).copied().collect();
                states.push(StateId::Terminal);
                states
            }
        }
    }

    /// Dense kernel matrix over [`Self::domain`].
    pub(crate) fn matrix(&self, domain: &[StateId]) -> Result<Vec<Vec<f64>>> {
        match self {
            KernelSpec::Partition(p) => {
                let blocks: Vec<usize> = domain
                    .iter()
                    .map(|s| p.block_of(s).ok_or_else(|| Error::Lookup(format!("state {s} not in partition"))))
                    .collect::<Result<_>>()?;
                Ok(blocks.iter().map(|a| blocks.iter().map(|b| f64::from(u8::from(a == b))).collect()).collect())
            }
            KernelSpec::Spectral { features, clamp_negative } => {
                let rows: Vec<Option<Vec<f64>>> = domain
                    .iter()
                    .map(|s| {
                        if s.is_terminal() {
                            Ok(None)
                        } else {
                            features.row_of(s).map(Some).ok_or_else(|| Error::Lookup(format!("state {s} has no features")))
                        }
                    })
                    .collect::<Result<_>>()?;
                Ok(rows
                    .iter()
                    .map(|a| rows.iter().map(|b| spectral_value(a.as_deref(), b.as_deref(), *clamp_negative)).collect())
                    .collect())
            }
        }
    }
}

fn spectral_value(a: Option<&[f64]>, b: Option<&[f64]>, clamp: bool) -> f64 {
    match (a, b) {
        (None, None) => 1.0,
        (Some(x), Some(y)) => {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            if clamp {
                dot.max(0.0)
            } else {
                dot
            }
        }
        _ => 0.0,
    }
}

/// Kernel value between two states. TERMINAL is similar only to itself.
pub fn kernel_eval(spec: &KernelSpec, s1: &StateId, s2: &StateId) -> Result<f64> {
    match spec {
        KernelSpec::Partition(p) => {
            let lookup = |s: &StateId| p.block_of(s).ok_or_else(|| Error::Lookup(format!("state {s} not in partition")));
            Ok(f64::from(u8::from(lookup(s1)? == lookup(s2)?)))
        }
        KernelSpec::Spectral { features, clamp_negative } => {
            let lookup = |s: &StateId| -> Result<Option<Vec<f64>>> {
                if s.is_terminal() {
                    Ok(None)
                } else {
                    features.row_of(s).map(Some).ok_or_else(|| Error::Lookup(format!("state {s} has no features")))
                }
            };
            Ok(spectral_value(lookup(s1)?.as_deref(), lookup(s2)?.as_deref(), *clamp_negative))
        }
    }
}
