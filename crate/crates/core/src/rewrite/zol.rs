//! Counted-loop to hardware-loop conversion.

use super::analysis::{Analysis, LoopShape};
use super::ir::{Ir, NodeId};
use super::{Ctx, RuleStats};
use crate::isa::{BranchCond, Instruction, Mnemonic, DLPI_COUNT_MAX};

struct Candidate {
    shape: LoopShape,
    trip: u64,
    /// Count exceeds the `dlpi` immediate; the bound register supplies it.
    from_register: bool,
}

fn backward_blt(ir: &Ir, pos: &[Option<usize>], e: usize) -> Option<usize> {
    let node = &ir.nodes[e];
    match node.inst {
        Instruction::Branch { cond: BranchCond::Lt, .. } => {
            let t = pos[node.target? as usize]?;
            (t <= e).then_some(t)
        }
        _ => None,
    }
}

fn candidate(ir: &Ir, an: &Analysis, insts: &[Instruction], pos: &[Option<usize>], e: usize) -> Option<Candidate> {
    let t = backward_blt(ir, pos, e)?;
    let shape = an.loop_shape(insts, t, e)?;
    let trip = shape.trip?;
    let k = shape.induction;
    if insts[shape.increment].as_reg_increment().is_none()
        || e - t < 2
        || e + 1 >= an.n
        || an.live_in[e + 1] & k.bit() != 0
    {
        return None;
    }
    for j in t..e {
        let inst = &insts[j];
        if inst.is_control_flow() || inst.is_loop_setup() {
            return None;
        }
        if j != shape.increment && inst.uses() & k.bit() != 0 {
            return None;
        }
    }
    if (t..=e).any(|j| an.in_hw_body[j] || an.loop_end[j]) || (t + 1..=e).any(|j| an.targeted[j]) {
        return None;
    }
    // The start may be reached only through the backedge or by falling in.
    if pos[ir.entry as usize] == Some(t) {
        return None;
    }
    let foreign = ir.nodes.iter().enumerate().any(|(j, n)| j != e && n.target.and_then(|x| pos[x as usize]) == Some(t));
    if foreign {
        return None;
    }
    let from_register = trip > u64::from(DLPI_COUNT_MAX);
    if from_register && !(shape.init == Some(0) && shape.step == 1 && shape.bound_value == Some(trip as i64)) {
        return None;
    }
    Some(Candidate { shape, trip, from_register })
}

/// Induction increments of loops the conversion would currently accept.
pub(crate) fn convertible_increments(ir: &Ir) -> Vec<NodeId> {
    let an = Analysis::new(ir);
    let insts: Vec<Instruction> = ir.instructions().copied().collect();
    let pos = ir.positions();
    (0..ir.len()).filter_map(|e| candidate(ir, &an, &insts, &pos, e)).map(|c| ir.nodes[c.shape.increment].id).collect()
}

pub(crate) fn zol(ir: &mut Ir, ctx: &Ctx, stats: &mut RuleStats) {
    let costs = &ctx.costs;
    let per_iter = costs.cost(Mnemonic::Addi) + costs.cost(Mnemonic::Blt);
    let mut an = Analysis::new(ir);
    let mut e = 0;
    while e < ir.len() {
        let pos = ir.positions();
        if backward_blt(ir, &pos, e).is_none() {
            e += 1;
            continue;
        }
        stats.matched += 1;
        let insts: Vec<Instruction> = ir.instructions().copied().collect();
        let Some(c) = candidate(ir, &an, &insts, &pos, e) else {
            e += 1;
            continue;
        };
        let setup = if c.from_register {
            costs.cost(Mnemonic::SetZc) + costs.cost(Mnemonic::Zlp)
        } else {
            costs.cost(Mnemonic::Dlpi)
        };
        let saved = c.trip * per_iter + (c.trip - 1) * costs.taken_extra;
        if setup >= saved {
            e += 1;
            continue;
        }
        let pre_freq = (an.freq[c.shape.start] / c.trip).max(1);
        stats.applied += 1;
        stats.estimated_cycles_saved += pre_freq * (saved - setup);

        let LoopShape { start, backedge, increment, bound, .. } = c.shape;
        let last = if increment == backedge - 1 { backedge - 2 } else { backedge - 1 };
        let end_id = ir.nodes[last].id;
        let first_id = if increment == start { ir.nodes[start + 1].id } else { ir.nodes[start].id };
        let inc_id = ir.nodes[increment].id;
        let blt_id = ir.nodes[backedge].id;
        ir.delete(ir.index_of(inc_id).expect("increment present"));
        ir.delete(ir.index_of(blt_id).expect("backedge present"));
        let at = ir.index_of(first_id).expect("body present");
        if c.from_register {
            ir.insert(at, Instruction::SetZc { rs1: bound }, None, false);
            ir.insert(at + 1, Instruction::Zlp { offset: 0 }, Some(end_id), false);
        } else {
            let count = c.trip as u16;
            ir.insert(at, Instruction::Dlpi { count, offset: 0 }, Some(end_id), false);
        }
        an = Analysis::new(ir);
        e = ir.index_of(end_id).expect("loop end present") + 1;
    }
}
