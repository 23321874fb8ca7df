//! Whole-program dataflow over the node list: liveness, reaching definitions,
//! def-use webs, loops and static execution-frequency estimates.

use super::ir::Ir;
use crate::isa::{BranchCond, ImmOp, Instruction, Reg};

const ALL_REGS: u32 = !1;

#[derive(Clone, Debug)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(bits: usize) -> BitSet {
        BitSet(vec![0; bits.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn union_with(&mut self, other: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

/// A definition site. `node == None` stands for the value a register holds on
/// entry to the program.
#[derive(Clone, Copy, Debug)]
struct Def {
    node: Option<usize>,
    reg: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LoopKind {
    /// Backward conditional branch or jump.
    Branch,
    /// Hardware loop: body `start..=end`, entered from a setup.
    Hardware,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LoopInfo {
    pub start: usize,
    pub end: usize,
    pub kind: LoopKind,
    pub trip: Option<u64>,
}

impl LoopInfo {
    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

/// A counted `blt` loop: one increment of the induction register per
/// iteration, bound not written inside the loop.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LoopShape {
    pub start: usize,
    pub backedge: usize,
    pub induction: Reg,
    pub bound: Reg,
    pub step: i64,
    /// Index of the instruction stepping the induction register.
    pub increment: usize,
    pub init: Option<i64>,
    pub bound_value: Option<i64>,
    pub trip: Option<u64>,
}

/// Amount `inst` adds to `k`, if it is an increment of `k` alone or one half
/// of a fused double increment.
fn increment_of(inst: &Instruction, k: Reg) -> Option<i32> {
    match *inst {
        Instruction::Add2i { rs1, i1, .. } | Instruction::Fusedmac { rs1, i1, .. } if rs1 == k => Some(i32::from(i1)),
        Instruction::Add2i { rs2, i2, .. } | Instruction::Fusedmac { rs2, i2, .. } if rs2 == k => Some(i32::from(i2)),
        _ => inst.as_reg_increment().filter(|&(r, _)| r == k).map(|(_, step)| step),
    }
}

pub(crate) struct Analysis {
    pub n: usize,
    pub succ: Vec<Vec<usize>>,
    exit_uses: Vec<u32>,
    pub live_in: Vec<u32>,
    pub live_out: Vec<u32>,
    defs: Vec<Def>,
    defs_by_reg: Vec<Vec<usize>>,
    defs_at: Vec<Vec<usize>>,
    rd_in: Vec<BitSet>,
    rd_out: Vec<BitSet>,
    parent: Vec<usize>,
    /// Per web root: contains the entry value, reaches an exit, touched by an
    /// implicit operand.
    pinned: Vec<bool>,
    /// Node is the destination of a jump, branch, loop setup or the entry.
    pub targeted: Vec<bool>,
    /// Node is the last instruction of a hardware-loop body.
    pub loop_end: Vec<bool>,
    pub in_hw_body: Vec<bool>,
    pub loops: Vec<LoopInfo>,
    pub freq: Vec<u64>,
}

impl Analysis {
    pub fn new(ir: &Ir) -> Analysis {
        let n = ir.len();
        let pos = ir.positions();
        let insts: Vec<Instruction> = ir.instructions().copied().collect();
        let target: Vec<Option<usize>> = ir.nodes.iter().map(|nd| nd.target.and_then(|t| pos[t as usize])).collect();
        let entry = pos[ir.entry as usize].expect("entry node exists");
        let exit_live = ir.live_out().unwrap_or(ALL_REGS) & ALL_REGS;

        let mut succ = vec![Vec::new(); n];
        let mut exit_uses = vec![0u32; n];
        let mut targeted = vec![false; n];
        let mut loop_end = vec![false; n];
        let mut in_hw_body = vec![false; n];
        targeted[entry] = true;
        for (i, inst) in insts.iter().enumerate() {
            if let Some(t) = target[i] {
                targeted[t] = true;
            }
            let fall = |s: &mut Vec<usize>, eu: &mut u32| {
                if i + 1 < n {
                    s.push(i + 1)
                } else {
                    *eu = ALL_REGS
                }
            };
            match inst {
                _ if inst.is_halt() => exit_uses[i] = exit_live,
                Instruction::Jal { .. } => succ[i].push(target[i].expect("jal target")),
                Instruction::Branch { .. } => {
                    fall(&mut succ[i], &mut exit_uses[i]);
                    succ[i].push(target[i].expect("branch target"));
                }
                Instruction::Jalr { .. }
                | Instruction::Ecall
                | Instruction::Ebreak
                | Instruction::Fence { .. }
                | Instruction::Illegal(_) => exit_uses[i] = ALL_REGS,
                _ => fall(&mut succ[i], &mut exit_uses[i]),
            }
        }
        // Hardware loops: ZE falls back to the body start.
        let mut loops = Vec::new();
        for (i, inst) in insts.iter().enumerate() {
            if matches!(inst, Instruction::Dlp { .. } | Instruction::Dlpi { .. } | Instruction::Zlp { .. }) {
                let ze = target[i].expect("setup target");
                if ze > i && i + 1 < n {
                    if !succ[ze].contains(&(i + 1)) {
                        succ[ze].push(i + 1);
                    }
                    loop_end[ze] = true;
                    for b in &mut in_hw_body[i + 1..=ze] {
                        *b = true;
                    }
                    let trip = match *inst {
                        Instruction::Dlpi { count, .. } => Some(u64::from(count.max(1))),
                        _ => None,
                    };
                    loops.push(LoopInfo { start: i + 1, end: ze, kind: LoopKind::Hardware, trip });
                }
            }
        }
        let mut pred = vec![Vec::new(); n];
        for (i, ss) in succ.iter().enumerate() {
            for &s in ss {
                pred[s].push(i);
            }
        }

        // Liveness.
        let mut live_in = vec![0u32; n];
        let mut live_out = vec![0u32; n];
        let mut changed = true;
        while changed {
            changed = false;
            for i in (0..n).rev() {
                let out = succ[i].iter().fold(exit_uses[i], |m, &s| m | live_in[s]);
                let inn = insts[i].uses() | (out & !insts[i].defs());
                if out != live_out[i] || inn != live_in[i] {
                    live_out[i] = out;
                    live_in[i] = inn;
                    changed = true;
                }
            }
        }

        // Reaching definitions. Entry values get ids 0..32.
        let mut defs: Vec<Def> = (0..32).map(|r| Def { node: None, reg: r as u8 }).collect();
        let mut defs_at = vec![Vec::new(); n];
        for (i, inst) in insts.iter().enumerate() {
            let m = inst.defs();
            for r in 1..32u8 {
                if m >> r & 1 == 1 {
                    defs_at[i].push(defs.len());
                    defs.push(Def { node: Some(i), reg: r });
                }
            }
        }
        let nd = defs.len();
        let mut defs_by_reg = vec![Vec::new(); 32];
        for (d, def) in defs.iter().enumerate() {
            defs_by_reg[def.reg as usize].push(d);
        }
        let mut entry_set = BitSet::new(nd);
        for r in 1..32 {
            entry_set.set(r);
        }
        let mut rd_in = vec![BitSet::new(nd); n];
        let mut rd_out = vec![BitSet::new(nd); n];
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                let mut inn = if i == entry { entry_set.clone() } else { BitSet::new(nd) };
                for &p in &pred[i] {
                    inn.union_with(&rd_out[p]);
                }
                let killed = insts[i].defs();
                let mut out = inn.clone();
                for r in 1..32 {
                    if killed >> r & 1 == 1 {
                        for &d in &defs_by_reg[r] {
                            out.0[d / 64] &= !(1 << (d % 64));
                        }
                    }
                }
                for &d in &defs_at[i] {
                    out.set(d);
                }
                if out.0 != rd_out[i].0 || inn.0 != rd_in[i].0 {
                    rd_in[i] = inn;
                    rd_out[i] = out;
                    changed = true;
                }
            }
        }

        let mut an = Analysis {
            n,
            succ,
            exit_uses,
            live_in,
            live_out,
            defs,
            defs_by_reg,
            defs_at,
            rd_in,
            rd_out,
            parent: (0..nd).collect(),
            pinned: vec![false; nd],
            targeted,
            loop_end,
            in_hw_body,
            loops,
            freq: vec![1; n],
        };
        an.build_webs(&insts);

        for (i, inst) in insts.iter().enumerate() {
            if let Some(t) = target[i] {
                if t <= i && !inst.is_loop_setup() {
                    let trip = an.loop_shape(&insts, t, i).and_then(|s| s.trip);
                    an.loops.push(LoopInfo { start: t, end: i, kind: LoopKind::Branch, trip });
                }
            }
        }
        for l in &an.loops {
            for f in &mut an.freq[l.start..=l.end] {
                *f = f.saturating_mul(l.trip.unwrap_or(1));
            }
        }
        an
    }

    fn find(&self, mut d: usize) -> usize {
        while self.parent[d] != d {
            d = self.parent[d];
        }
        d
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
    }

    fn reaching(&self, set: &BitSet, r: usize) -> impl Iterator<Item = usize> + '_ {
        let ids: Vec<usize> = self.defs_by_reg[r].iter().copied().filter(|&d| set.get(d)).collect();
        ids.into_iter()
    }

    fn build_webs(&mut self, insts: &[Instruction]) {
        let mut pin = Vec::new();
        for (i, inst) in insts.iter().enumerate() {
            let uses = inst.uses();
            let both = uses & inst.defs();
            for r in 1..32 {
                if uses >> r & 1 == 0 {
                    continue;
                }
                let ds: Vec<usize> = self.reaching(&self.rd_in[i], r).collect();
                for w in ds.windows(2) {
                    self.union(w[0], w[1]);
                }
                if both >> r & 1 == 1 {
                    let own = self.def_at(i, r).expect("def recorded");
                    if let Some(&first) = ds.first() {
                        self.union(first, own);
                    }
                }
            }
            for r in 1..32 {
                if self.exit_uses[i] >> r & 1 == 1 {
                    let ds: Vec<usize> = self.reaching(&self.rd_out[i], r).collect();
                    for w in ds.windows(2) {
                        self.union(w[0], w[1]);
                    }
                    pin.extend(ds);
                }
            }
            let imp = inst.implicit_regs();
            for r in 1..32 {
                if imp >> r & 1 == 1 {
                    pin.extend(self.reaching(&self.rd_in[i], r));
                    pin.extend(self.def_at(i, r));
                }
            }
        }
        pin.extend(1..32);
        for d in pin {
            let root = self.find(d);
            self.pinned[root] = true;
        }
    }

    fn def_at(&self, i: usize, r: usize) -> Option<usize> {
        self.defs_at[i].iter().copied().find(|&d| self.defs[d].reg as usize == r)
    }

    /// Web of the value of `r` read at node `i`.
    pub fn use_web(&self, i: usize, r: Reg) -> Option<usize> {
        self.reaching(&self.rd_in[i], r.index()).next().map(|d| self.find(d))
    }

    /// Web of the value of `r` written at node `i`.
    pub fn def_web(&self, i: usize, r: Reg) -> Option<usize> {
        self.def_at(i, r.index()).map(|d| self.find(d))
    }

    fn touches(&self, insts: &[Instruction], i: usize, web: usize, r: Reg) -> bool {
        let ri = r.index();
        let in_web = |set: &BitSet| self.reaching(set, ri).any(|d| self.find(d) == web);
        (insts[i].uses() & r.bit() != 0 && in_web(&self.rd_in[i]))
            || self.def_web(i, r) == Some(web)
            || (self.live_in[i] & r.bit() != 0 && in_web(&self.rd_in[i]))
            || (self.live_out[i] & r.bit() != 0 && in_web(&self.rd_out[i]))
    }

    /// Renames web `web` of register `from` to `to` in place, if no other
    /// value of `to` is live or referenced anywhere the web is.
    pub fn rename_web(&self, ir: &mut Ir, web: usize, from: Reg, to: Reg) -> bool {
        if to.is_zero() || from == to || self.pinned[web] {
            return false;
        }
        let insts: Vec<Instruction> = ir.instructions().copied().collect();
        let span: Vec<usize> = (0..self.n).filter(|&i| self.touches(&insts, i, web, from)).collect();
        let clash = span.iter().any(|&i| {
            let inst = &insts[i];
            (self.live_in[i] | self.live_out[i] | inst.uses() | inst.defs() | inst.implicit_regs()) & to.bit() != 0
                || inst.implicit_regs() & from.bit() != 0
        });
        if clash {
            return false;
        }
        for &i in &span {
            let refs = insts[i].uses() | insts[i].defs();
            if refs & from.bit() != 0 {
                ir.rename_at(i, from, to);
            }
        }
        true
    }

    /// Value of `r` if every definition reaching `set` is the same constant.
    fn const_in(&self, insts: &[Instruction], set: &BitSet, r: Reg, depth: u32) -> Option<i64> {
        if r.is_zero() {
            return Some(0);
        }
        let mut value = None;
        for d in self.reaching(set, r.index()) {
            let v = self.const_def(insts, d, depth)?;
            if value.is_some_and(|x| x != v) {
                return None;
            }
            value = Some(v);
        }
        value
    }

    fn const_def(&self, insts: &[Instruction], d: usize, depth: u32) -> Option<i64> {
        let i = self.defs[d].node?;
        match insts[i] {
            Instruction::Lui { imm, .. } => Some(i64::from((imm << 12) as i32)),
            Instruction::AluImm { op: ImmOp::Addi, rs1, imm, .. } if depth > 0 => {
                let base = self.const_in(insts, &self.rd_in[i], rs1, depth - 1)?;
                Some(i64::from((base as i32).wrapping_add(imm)))
            }
            _ => None,
        }
    }

    /// Constant value of `r` just before node `i`.
    #[cfg(test)]
    pub fn const_before(&self, insts: &[Instruction], i: usize, r: Reg) -> Option<i64> {
        self.const_in(insts, &self.rd_in[i], r, 4)
    }

    /// Recognises `start..=backedge` as a counted `blt` loop.
    pub fn loop_shape(&self, insts: &[Instruction], start: usize, backedge: usize) -> Option<LoopShape> {
        let Instruction::Branch { cond: BranchCond::Lt, rs1: k, rs2: bound, .. } = insts[backedge] else {
            return None;
        };
        if k.is_zero() || k == bound || start >= backedge {
            return None;
        }
        let mut increment = None;
        for (i, inst) in insts.iter().enumerate().take(backedge).skip(start) {
            if inst.defs() & bound.bit() != 0 {
                return None;
            }
            if inst.defs() & k.bit() != 0 {
                match increment_of(inst, k) {
                    Some(step) if step > 0 && increment.is_none() => increment = Some((i, step)),
                    _ => return None,
                }
            }
        }
        let (increment, step) = increment?;
        let (init, bound_value) = if start > 0 && self.succ[start - 1].contains(&start) {
            let out = &self.rd_out[start - 1];
            (self.const_in(insts, out, k, 4), self.const_in(insts, out, bound, 4))
        } else {
            (None, None)
        };
        let trip = match (init, bound_value) {
            (Some(k0), Some(n)) if k0 < n => Some(((n - k0) as u64).div_ceil(step as u64)),
            (Some(_), Some(_)) => Some(1),
            _ => None,
        };
        Some(LoopShape {
            start,
            backedge,
            induction: k,
            bound,
            step: i64::from(step),
            increment,
            init,
            bound_value,
            trip,
        })
    }

    /// Innermost branch loop containing `i`.
    pub fn innermost_branch_loop(&self, i: usize) -> Option<LoopInfo> {
        self.loops
            .iter()
            .filter(|l| l.kind == LoopKind::Branch && l.contains(i))
            .min_by_key(|l| l.end - l.start)
            .copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::isa::Variant;

    fn analyse(src: &str) -> (Ir, Analysis) {
        let ir = Ir::from_program(&assemble(src, Variant::V4).unwrap()).unwrap();
        let an = Analysis::new(&ir);
        (ir, an)
    }

    #[test]
    fn liveness_respects_liveout() {
        let (_, an) = analyse(".liveout x5\nli x5, 1\nli x6, 2\nhalt");
        assert_eq!(an.live_out[0], 1 << 5);
        assert_eq!(an.live_out[1], 1 << 5);
        let (_, an) = analyse("li x5, 1\nhalt");
        assert_eq!(an.live_out[0], ALL_REGS);
    }

    #[test]
    fn loop_live_through_backedge() {
        let (_, an) = analyse(".liveout none\nli x5, 0\nli x6, 4\nl: addi x5, x5, 1\nblt x5, x6, l\nhalt");
        assert_eq!(an.live_in[2], 1 << 5 | 1 << 6);
        assert_eq!(an.live_out[3], 1 << 5 | 1 << 6);
        assert_eq!(an.live_in[4], 0);
    }

    #[test]
    fn trip_count_and_frequency() {
        let src = ".liveout none\nli x10, 3\nli x11, 10\nli x5, 0\no: li x6, 0\ni: addi x6, x6, 2\nblt x6, x11, i\naddi x5, x5, 1\nblt x5, x10, o\nhalt";
        let (ir, an) = analyse(src);
        let insts: Vec<_> = ir.instructions().copied().collect();
        let inner = an.loop_shape(&insts, 4, 5).unwrap();
        assert_eq!(inner.trip, Some(5));
        assert_eq!(inner.increment, 4);
        let outer = an.loop_shape(&insts, 3, 7).unwrap();
        assert_eq!(outer.trip, Some(3));
        assert_eq!(an.freq[4], 15);
        assert_eq!(an.freq[3], 3);
        assert_eq!(an.freq[8], 1);
    }

    #[test]
    fn large_constants_fold() {
        let (ir, an) = analyse(".liveout none\nli x5, 100000\naddi x6, x5, -1\nhalt");
        let insts: Vec<_> = ir.instructions().copied().collect();
        assert_eq!(an.const_before(&insts, 3, Reg::x(5)), Some(100000));
        assert_eq!(an.const_before(&insts, 3, Reg::x(6)), Some(99999));
    }

    #[test]
    fn webs_split_on_redefinition() {
        let (ir, an) = analyse(".liveout x7\nli x5, 1\nadd x7, x5, x5\nli x5, 2\nadd x7, x7, x5\nhalt");
        assert_ne!(an.use_web(1, Reg::x(5)), an.use_web(3, Reg::x(5)));
        let mut ir2 = ir.clone();
        let w = an.use_web(3, Reg::x(5)).unwrap();
        assert!(an.rename_web(&mut ir2, w, Reg::x(5), Reg::x(9)));
        assert_eq!(ir2.nodes[2].inst, Instruction::addi(Reg::x(9), Reg::ZERO, 2));
        assert_eq!(ir2.nodes[0].inst, ir.nodes[0].inst);
        // x7 reaches the exit, so its web is pinned.
        let w = an.def_web(3, Reg::x(7)).unwrap();
        assert!(!an.rename_web(&mut ir2, w, Reg::x(7), Reg::x(9)));
    }

    #[test]
    fn rename_refuses_clashes() {
        let (ir, an) = analyse(".liveout x8\nli x9, 5\nli x5, 1\nadd x8, x5, x9\nhalt");
        let w = an.use_web(2, Reg::x(5)).unwrap();
        let mut ir2 = ir.clone();
        assert!(!an.rename_web(&mut ir2, w, Reg::x(5), Reg::x(9)));
        assert!(an.rename_web(&mut ir2, w, Reg::x(5), Reg::x(21)));
    }

    #[test]
    fn hardware_loop_edges() {
        let (_, an) = analyse(".liveout none\ndlpi 4, e\naddi x5, x5, 1\ne: addi x6, x6, 1\nhalt");
        assert!(an.loop_end[2]);
        assert!(an.targeted[2]);
        assert!(an.succ[2].contains(&1));
        assert_eq!(an.freq[1], 4);
        assert_eq!(an.freq[3], 1);
    }
}
