use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{Basis, BasisSpec};
use super::iteration::IterationRecord;
use super::CriticActorWeights;
use crate::augmented::CostWeights;
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

/// Serialized training result loaded by the controller runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingArtifact {
    pub version: u32,
    /// `model_free` or `model_based`.
    pub method: String,
    pub basis: BasisSpec,
    pub cost: CostWeights,
    pub critic: Vec<f64>,
    /// One row per control channel.
    pub actor: Vec<Vec<f64>>,
    pub converged: bool,
    pub config_hash: String,
    pub seed: u64,
    pub log: Vec<IterationRecord>,
}

impl TrainingArtifact {
    pub fn weights(&self) -> Result<CriticActorWeights> {
        let pa = self.actor.first().map(Vec::len).unwrap_or(0);
        if self.actor.iter().any(|r| r.len() != pa) {
            return Err(Error::Config("ragged actor weight rows".into()));
        }
        let (critic, actor) = self.bases()?;
        if critic.len() != self.critic.len() || actor.len() != pa {
            return Err(Error::Config(format!(
                "weights do not match basis: critic {} vs {}, actor {} vs {}",
                self.critic.len(),
                critic.len(),
                pa,
                actor.len()
            )));
        }
        Ok(CriticActorWeights {
            wc: DVector::from_vec(self.critic.clone()),
            wa: DMatrix::from_fn(self.actor.len(), pa, |i, j| self.actor[i][j]),
        })
    }

    pub fn bases(&self) -> Result<(Basis, Basis)> {
        Ok((self.basis.critic()?, self.basis.actor()?))
    }

    pub fn actor_rows(w: &CriticActorWeights) -> Vec<Vec<f64>> {
        (0..w.wa.nrows()).map(|i| w.wa.row(i).iter().copied().collect()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if a.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!("unsupported artifact version {}", a.version)));
        }
        Ok(a)
    }
}
