use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Mnemonic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("default_cost must be at least 1")]
    ZeroDefault,
    #[error("cost override for `{0}` must be at least 1")]
    ZeroOverride(Mnemonic),
}

/// Per-instruction cycle costs.
///
/// The defaults (one cycle per instruction, one extra cycle for every taken
/// branch or jump) approximate a three-stage in-order pipeline that flushes
/// one fetched instruction on a redirect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleModel {
    pub default_cost: u32,
    pub taken_branch_extra: u32,
    pub overrides: BTreeMap<Mnemonic, u32>,
}

impl Default for CycleModel {
    fn default() -> Self {
        CycleModel { default_cost: 1, taken_branch_extra: 1, overrides: BTreeMap::new() }
    }
}

impl CycleModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.default_cost == 0 {
            return Err(ModelError::ZeroDefault);
        }
        match self.overrides.iter().find(|(_, &c)| c == 0) {
            Some((&m, _)) => Err(ModelError::ZeroOverride(m)),
            None => Ok(()),
        }
    }

    /// Base cost of one instruction kind, excluding any taken-branch penalty.
    pub fn cost(&self, m: Mnemonic) -> u64 {
        u64::from(*self.overrides.get(&m).unwrap_or(&self.default_cost))
    }

    pub fn cost_table(&self) -> Result<CostTable, ModelError> {
        self.validate()?;
        Ok(CostTable {
            base: Mnemonic::ALL.iter().map(|&m| self.cost(m)).collect(),
            taken_extra: u64::from(self.taken_branch_extra),
        })
    }
}

/// Flattened [`CycleModel`] for fast lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTable {
    base: Vec<u64>,
    pub taken_extra: u64,
}

impl CostTable {
    pub fn cost(&self, m: Mnemonic) -> u64 {
        self.base[m.index()]
    }
}
