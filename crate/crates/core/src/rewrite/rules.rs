//! Peephole rules: mac, add2i and fusedmac.

use super::analysis::{Analysis, LoopInfo};
use super::ir::{Ir, NodeId};
use super::{zol, Ctx, RuleStats};
use crate::isa::{Instruction, Mnemonic, Reg};
use crate::profile::mul_add_regs;

const SLOTS: u32 = Reg::MAC_ACC.bit() | Reg::MAC_A.bit() | Reg::MAC_B.bit();

/// Where operand moves go for one mac rewrite.
enum Placement {
    /// Immediately around the pair.
    Local { move_back: bool },
    /// Preheader of the enclosing loop; `exit` moves the accumulator back
    /// after the backedge.
    Hoisted { start: NodeId, exit: Option<NodeId>, pre_freq: u64 },
}

pub(crate) fn mac(ir: &mut Ir, ctx: &Ctx, stats: &mut RuleStats) {
    let mut an = Analysis::new(ir);
    let mut i = 0;
    while i + 1 < ir.len() {
        if let Some(regs) = mul_add_regs(&ir.nodes[i].inst, &ir.nodes[i + 1].inst) {
            stats.matched += 1;
            if let Some((next, saved, at)) = try_mac(ir, &an, i, regs, ctx) {
                *ir = next;
                an = Analysis::new(ir);
                stats.applied += 1;
                stats.estimated_cycles_saved += saved;
                i = at + 1;
                continue;
            }
        }
        i += 1;
    }
}

fn try_mac(ir: &Ir, an: &Analysis, i: usize, [t, a, b, c]: [Reg; 4], ctx: &Ctx) -> Option<(Ir, u64, usize)> {
    let distinct = a != b && a != c && b != c && t != a && t != b;
    if !distinct || [a, b, c].iter().any(|r| r.is_zero()) {
        return None;
    }
    if an.targeted[i + 1] || an.loop_end[i] || an.live_out[i + 1] & t.bit() != 0 {
        return None;
    }
    let (a, b) = if a == Reg::MAC_B || b == Reg::MAC_A { (b, a) } else { (a, b) };
    let mul_id = ir.nodes[i].id;
    let add_id = ir.nodes[i + 1].id;

    // Rename whole webs into the fixed slots where possible.
    let mut w = ir.clone();
    let mut cur: Option<Analysis> = None;
    let mut pending = Vec::new();
    for (r, slot, acc) in [(c, Reg::MAC_ACC, true), (a, Reg::MAC_A, false), (b, Reg::MAC_B, false)] {
        if r == slot {
            continue;
        }
        let wa = cur.get_or_insert_with(|| Analysis::new(&w));
        let web = if acc { wa.def_web(i + 1, r) } else { wa.use_web(i, r) };
        if web.is_some_and(|web| wa.rename_web(&mut w, web, r, slot)) {
            cur = None;
        } else {
            pending.push((r, slot, acc));
        }
    }
    let wa = cur.unwrap_or_else(|| Analysis::new(&w));

    let costs = &ctx.costs;
    let gain = an.freq[i] * (costs.cost(Mnemonic::Mul) + costs.cost(Mnemonic::Add));
    let spend = an.freq[i] * costs.cost(Mnemonic::Mac);
    let mv = costs.cost(Mnemonic::Addi);

    let placement = if pending.is_empty() {
        Placement::Local { move_back: false }
    } else {
        if wa.in_hw_body[i] {
            return None;
        }
        let operands = a.bit() | b.bit() | c.bit();
        match wa.innermost_branch_loop(i).and_then(|l| hoist(&w, &wa, l, i, &pending, operands)) {
            Some(p) => p,
            None => local(&wa, i, &pending)?,
        }
    };
    let move_cost = match placement {
        Placement::Local { move_back } => an.freq[i] * mv * (pending.len() as u64 + u64::from(move_back)),
        Placement::Hoisted { exit, pre_freq, .. } => pre_freq * mv * (pending.len() as u64 + u64::from(exit.is_some())),
    };
    if spend + move_cost >= gain {
        return None;
    }

    let moves: Vec<Instruction> = pending.iter().map(|&(r, slot, _)| Instruction::mv(slot, r)).collect();
    match placement {
        Placement::Local { move_back } => {
            if move_back {
                w.insert(i + 2, Instruction::mv(c, Reg::MAC_ACC), None, false);
            }
            for (k, m) in moves.into_iter().enumerate() {
                let at = w.index_of(mul_id)?;
                w.insert(at, m, None, k == 0);
            }
        }
        Placement::Hoisted { start, exit, .. } => {
            if let Some(exit) = exit {
                let at = w.index_of(exit)?;
                w.insert(at, Instruction::mv(c, Reg::MAC_ACC), None, false);
            }
            for m in moves {
                let at = w.index_of(start)?;
                w.insert(at, m, None, false);
            }
        }
    }
    let at = w.index_of(mul_id)?;
    w.replace(at, Instruction::Mac);
    w.delete(w.index_of(add_id)?);
    Some((w, gain - spend - move_cost, at))
}

fn local(an: &Analysis, i: usize, pending: &[(Reg, Reg, bool)]) -> Option<Placement> {
    let mut move_back = false;
    for &(r, slot, acc) in pending {
        if (an.live_in[i] | an.live_out[i + 1]) & slot.bit() != 0 {
            return None;
        }
        if acc && an.live_out[i + 1] & r.bit() != 0 {
            move_back = true;
        }
    }
    Some(Placement::Local { move_back })
}

fn hoist(
    ir: &Ir,
    an: &Analysis,
    l: LoopInfo,
    i: usize,
    pending: &[(Reg, Reg, bool)],
    operands: u32,
) -> Option<Placement> {
    let insts: Vec<Instruction> = ir.instructions().copied().collect();
    let pos = ir.positions();
    let start = l.start;
    if start == 0 || !an.succ[start - 1].contains(&start) || insts[start - 1].is_loop_setup() {
        return None;
    }
    if an.in_hw_body[start] || pos[ir.entry as usize] == Some(start) {
        return None;
    }
    // Every way into the loop goes through the preheader.
    for (j, node) in ir.nodes.iter().enumerate() {
        if let Some(t) = node.target.and_then(|t| pos[t as usize]) {
            if l.contains(t) && !l.contains(j) {
                return None;
            }
        }
    }
    let body = l.start..=l.end;
    let others = || body.clone().filter(|&j| j != i && j != i + 1);
    let refs = others().fold(0, |m, j| m | insts[j].uses() | insts[j].defs() | insts[j].implicit_regs());
    let defs = body.clone().fold(0, |m, j| m | insts[j].defs());

    let mut exit = None;
    for &(r, slot, acc) in pending {
        if an.live_in[start] & slot.bit() != 0 || refs & slot.bit() != 0 || operands & slot.bit() != 0 {
            return None;
        }
        if acc {
            let single_exit = others().all(|j| j == l.end || !(insts[j].is_control_flow() || insts[j].is_loop_setup()));
            if !single_exit || refs & r.bit() != 0 || l.end + 1 >= an.n {
                return None;
            }
            if an.live_in[l.end + 1] & r.bit() != 0 {
                exit = Some(ir.nodes[l.end + 1].id);
            }
        } else if defs & r.bit() != 0 {
            return None;
        }
    }
    let pre_freq = (an.freq[start] / l.trip.unwrap_or(1)).max(1);
    Some(Placement::Hoisted { start: ir.nodes[start].id, exit, pre_freq })
}

fn fits(i1: i32, i2: i32) -> bool {
    (0..=i32::from(crate::isa::I1_MAX)).contains(&i1) && (0..=i32::from(crate::isa::I2_MAX)).contains(&i2)
}

pub(crate) fn add2i(ir: &mut Ir, ctx: &Ctx, stats: &mut RuleStats) {
    let protected = if ctx.protect_induction { zol::convertible_increments(ir) } else { Vec::new() };
    let fused_cost = ctx.costs.cost(Mnemonic::Add2i);
    let pair_cost = 2 * ctx.costs.cost(Mnemonic::Addi);
    let mut an = Analysis::new(ir);
    let mut i = 0;
    while i + 1 < ir.len() {
        let (first, second) = (&ir.nodes[i], &ir.nodes[i + 1]);
        let (Some((x, i1)), Some((y, i2))) = (first.inst.as_reg_increment(), second.inst.as_reg_increment()) else {
            i += 1;
            continue;
        };
        if x == y {
            i += 1;
            continue;
        }
        stats.matched += 1;
        let fused = if fits(i1, i2) {
            Some(Instruction::Add2i { rs1: x, rs2: y, i1: i1 as u8, i2: i2 as u16 })
        } else if fits(i2, i1) {
            Some(Instruction::Add2i { rs1: y, rs2: x, i1: i2 as u8, i2: i1 as u16 })
        } else {
            None
        };
        let legal = i + 2 < ir.len()
            && !an.targeted[i + 1]
            && !an.loop_end[i]
            && !protected.contains(&first.id)
            && !protected.contains(&second.id);
        match fused {
            Some(inst) if legal && fused_cost < pair_cost => {
                stats.applied += 1;
                stats.estimated_cycles_saved += an.freq[i] * (pair_cost - fused_cost);
                ir.replace(i, inst);
                ir.delete(i + 1);
                an = Analysis::new(ir);
            }
            _ => {}
        }
        i += 1;
    }
}

pub(crate) fn fusedmac(ir: &mut Ir, ctx: &Ctx, stats: &mut RuleStats) {
    let fused_cost = ctx.costs.cost(Mnemonic::Fusedmac);
    let pair_cost = ctx.costs.cost(Mnemonic::Mac) + ctx.costs.cost(Mnemonic::Add2i);
    let mut an = Analysis::new(ir);
    let mut i = 0;
    while i + 1 < ir.len() {
        let pair = match (ir.nodes[i].inst, ir.nodes[i + 1].inst) {
            (Instruction::Mac, Instruction::Add2i { rs1, rs2, i1, i2 })
            | (Instruction::Add2i { rs1, rs2, i1, i2 }, Instruction::Mac) => Some((rs1, rs2, i1, i2)),
            _ => None,
        };
        if let Some((rs1, rs2, i1, i2)) = pair {
            stats.matched += 1;
            let legal =
                (rs1.bit() | rs2.bit()) & SLOTS == 0 && i + 2 < ir.len() && !an.targeted[i + 1] && !an.loop_end[i];
            if legal && fused_cost < pair_cost {
                stats.applied += 1;
                stats.estimated_cycles_saved += an.freq[i] * (pair_cost - fused_cost);
                ir.replace(i, Instruction::Fusedmac { rs1, rs2, i1, i2 });
                ir.delete(i + 1);
                an = Analysis::new(ir);
            }
        }
        i += 1;
    }
}
