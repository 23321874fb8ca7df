//! Retargeting of baseline programs to the extended variants.
//!
//! Each rule rewrites matching instruction sequences only when the estimated
//! dynamic cycle count goes down under the active [`CycleModel`]. Execution
//! frequencies come from compile-time loop trip counts.

mod analysis;
mod ir;
mod rules;
mod zol;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asm::Program;
use crate::isa::Variant;
use crate::sim::{CostTable, CycleModel, ModelError};

pub use ir::Unsupported;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteRule {
    MacRule,
    Add2iRule,
    FusedmacRule,
    ZolRule,
}

impl RewriteRule {
    pub const ALL: [RewriteRule; 4] =
        [RewriteRule::MacRule, RewriteRule::Add2iRule, RewriteRule::FusedmacRule, RewriteRule::ZolRule];

    pub fn name(self) -> &'static str {
        match self {
            RewriteRule::MacRule => "mac_rule",
            RewriteRule::Add2iRule => "add2i_rule",
            RewriteRule::FusedmacRule => "fusedmac_rule",
            RewriteRule::ZolRule => "zol_rule",
        }
    }

    pub fn min_variant(self) -> Variant {
        match self {
            RewriteRule::MacRule => Variant::V1,
            RewriteRule::Add2iRule => Variant::V2,
            RewriteRule::FusedmacRule => Variant::V3,
            RewriteRule::ZolRule => Variant::V4,
        }
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleStats {
    /// Candidate sites found (before legality and profitability checks).
    pub matched: u64,
    pub applied: u64,
    /// Sum of static cycle estimates over applied rewrites.
    pub estimated_cycles_saved: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewriteStats {
    pub rules: BTreeMap<RewriteRule, RuleStats>,
}

impl RewriteStats {
    pub fn get(&self, rule: RewriteRule) -> RuleStats {
        self.rules.get(&rule).copied().unwrap_or_default()
    }

    pub fn total_applied(&self) -> u64 {
        self.rules.values().map(|s| s.applied).sum()
    }
}

pub(crate) struct Ctx {
    pub costs: CostTable,
    /// Leave induction increments of convertible loops alone so the hardware
    /// loop rule still sees them.
    pub protect_induction: bool,
}

fn run_rule(
    prog: &Program,
    model: &CycleModel,
    protect: bool,
    rule: fn(&mut ir::Ir, &Ctx, &mut RuleStats),
) -> Result<(Program, RuleStats), ModelError> {
    let ctx = Ctx { costs: model.cost_table()?, protect_induction: protect };
    let mut stats = RuleStats::default();
    let Ok(mut ir) = ir::Ir::from_program(prog) else {
        return Ok((prog.clone(), stats));
    };
    rule(&mut ir, &ctx, &mut stats);
    match ir.to_program() {
        Some(p) => Ok((p, stats)),
        None => Ok((prog.clone(), RuleStats { matched: stats.matched, ..RuleStats::default() })),
    }
}

/// Fuses `mul t, a, b; add c, c, t` into `mac`, renaming or moving operands
/// into x20 (accumulator), x21 and x22.
pub fn apply_mac(prog: &Program, model: &CycleModel) -> Result<(Program, RuleStats), ModelError> {
    run_rule(prog, model, false, rules::mac)
}

/// Fuses adjacent register increments into `add2i`.
pub fn apply_add2i(prog: &Program, model: &CycleModel) -> Result<(Program, RuleStats), ModelError> {
    run_rule(prog, model, false, rules::add2i)
}

/// Fuses an adjacent `mac` and `add2i` into `fusedmac`.
pub fn apply_fusedmac(prog: &Program, model: &CycleModel) -> Result<(Program, RuleStats), ModelError> {
    run_rule(prog, model, false, rules::fusedmac)
}

/// Converts innermost counted `blt` loops into hardware loops.
pub fn apply_zol(prog: &Program, model: &CycleModel) -> Result<(Program, RuleStats), ModelError> {
    run_rule(prog, model, false, zol::zol)
}

/// Whether the rewriter can work on `prog` at all.
pub fn check_supported(prog: &Program) -> Result<(), Unsupported> {
    ir::Ir::from_program(prog).map(|_| ())
}

/// Applies every rule enabled at `variant`, in the order mac, add2i,
/// fusedmac, zol. Programs the rewriter cannot analyse come back unchanged.
pub fn retarget(prog: &Program, variant: Variant, model: &CycleModel) -> Result<(Program, RewriteStats), ModelError> {
    let costs = model.cost_table()?;
    let mut stats = RewriteStats::default();
    let enabled: Vec<RewriteRule> = RewriteRule::ALL.into_iter().filter(|r| variant >= r.min_variant()).collect();
    let Ok(mut ir) = ir::Ir::from_program(prog) else {
        for r in enabled {
            stats.rules.insert(r, RuleStats::default());
        }
        return Ok((prog.clone(), stats));
    };
    let ctx = Ctx { costs, protect_induction: variant >= Variant::V4 };
    for rule in enabled {
        let mut s = RuleStats::default();
        let f: fn(&mut ir::Ir, &Ctx, &mut RuleStats) = match rule {
            RewriteRule::MacRule => rules::mac,
            RewriteRule::Add2iRule => rules::add2i,
            RewriteRule::FusedmacRule => rules::fusedmac,
            RewriteRule::ZolRule => zol::zol,
        };
        f(&mut ir, &ctx, &mut s);
        stats.rules.insert(rule, s);
    }
    match ir.to_program() {
        Some(p) => Ok((p, stats)),
        None => {
            for s in stats.rules.values_mut() {
                s.applied = 0;
                s.estimated_cycles_saved = 0;
            }
            Ok((prog.clone(), stats))
        }
    }
}

#[cfg(test)]
mod tests;
