//! Fusible-pattern mining over traces and execution-weighted static code.
//!
//! Each pattern is matched greedily left to right without overlap, so a count
//! is the number of disjoint instruction groups a fused instruction could
//! replace.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::Program;
use crate::isa::{BranchCond, Instruction, RegOp};
use crate::sim::{CycleModel, ModelError, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("immediate histogram is empty")]
    EmptyHistogram,
    #[error("pc_hist has {got} entries, program has {want} instructions")]
    HistLength { got: usize, want: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub add: u64,
    pub mul: u64,
    pub mul_add: u64,
    pub addi: u64,
    pub addi_addi: u64,
    pub fusedmac: u64,
    pub blt: u64,
}

impl PatternCounts {
    pub fn metrics(&self) -> [(&'static str, u64); 7] {
        [
            ("add", self.add),
            ("mul", self.mul),
            ("mul_add", self.mul_add),
            ("addi", self.addi),
            ("addi_addi", self.addi_addi),
            ("fusedmac", self.fusedmac),
            ("blt", self.blt),
        ]
    }
}

/// Raw and cycle-weighted pattern counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternReport {
    pub raw: PatternCounts,
    pub weighted: PatternCounts,
    pub total_retired: u64,
    pub total_cycles: u64,
}

/// Cycle-weighted occurrences of `(i1, i2)` immediates in matched `addi` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImmediateHistogram {
    pub entries: BTreeMap<(u32, u32), u64>,
    /// Weight of pairs with at least one negative immediate.
    pub signed: u64,
}

#[derive(Serialize, Deserialize)]
struct HistEntry {
    i1: u32,
    i2: u32,
    weight: u64,
}

#[derive(Serialize, Deserialize)]
struct HistRepr {
    entries: Vec<HistEntry>,
    signed: u64,
}

impl Serialize for ImmediateHistogram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HistRepr {
            entries: self.entries.iter().map(|(&(i1, i2), &weight)| HistEntry { i1, i2, weight }).collect(),
            signed: self.signed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ImmediateHistogram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = HistRepr::deserialize(d)?;
        let mut entries = BTreeMap::new();
        for e in repr.entries {
            *entries.entry((e.i1, e.i2)).or_insert(0) += e.weight;
        }
        Ok(ImmediateHistogram { entries, signed: repr.signed })
    }
}

impl ImmediateHistogram {
    pub fn add(&mut self, i1: i32, i2: i32, weight: u64) {
        if i1 < 0 || i2 < 0 {
            self.signed += weight;
        } else {
            *self.entries.entry((i1 as u32, i2 as u32)).or_insert(0) += weight;
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum::<u64>() + self.signed
    }

    /// Weight covered by unsigned fields of `b1` and `b2` bits.
    pub fn covered(&self, b1: u32, b2: u32) -> u64 {
        self.entries
            .iter()
            .filter(|(&(i1, i2), _)| u64::from(i1) < 1 << b1 && u64::from(i2) < 1 << b2)
            .map(|(_, w)| w)
            .sum()
    }

    /// Fraction of total weight covered; the signed bucket never is.
    pub fn coverage(&self, b1: u32, b2: u32) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.covered(b1, b2) as f64 / t as f64,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i1", "i2", "weight"]).expect("in-memory write");
        for (&(i1, i2), weight) in &self.entries {
            w.serialize((i1, i2, weight)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Total immediate bits available to a dual-immediate instruction.
pub const SPLIT_BITS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitChoice {
    pub b1: u32,
    pub b2: u32,
    pub coverage: f64,
}

/// Picks the `(b1, 15 - b1)` split that covers the most weight, preferring
/// the smallest `b1` on ties.
pub fn select_split(hist: &ImmediateHistogram) -> Result<SplitChoice, ProfileError> {
    if hist.total() == 0 {
        return Err(ProfileError::EmptyHistogram);
    }
    let mut best = (0u64, 0u32);
    for b1 in 1..SPLIT_BITS {
        let c = hist.covered(b1, SPLIT_BITS - b1);
        if b1 == 1 || c > best.0 {
            best = (c, b1);
        }
    }
    let b1 = best.1;
    Ok(SplitChoice { b1, b2: SPLIT_BITS - b1, coverage: hist.coverage(b1, SPLIT_BITS - b1) })
}

/// Report plus histogram.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub report: PatternReport,
    pub histogram: ImmediateHistogram,
}

impl Profile {
    pub fn split(&self) -> Option<SplitChoice> {
        select_split(&self.histogram).ok()
    }

    /// One row per metric: `metric,raw,weighted`.
    pub fn report_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "raw", "weighted"]).expect("in-memory write");
        let (raw, weighted) = (self.report.raw.metrics(), self.report.weighted.metrics());
        for ((name, r), (_, c)) in raw.iter().zip(weighted.iter()) {
            w.serialize((name, r, c)).expect("in-memory write");
        }
        w.serialize(("total", self.report.total_retired, self.report.total_cycles)).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// `mul t, a, b` then `add c, c, t` (either operand order), `t` not `x0`, `c != t`.
pub fn is_mul_add(first: &Instruction, second: &Instruction) -> bool {
    mul_add_regs(first, second).is_some()
}

/// Registers of a mul/add accumulator pair: `(t, a, b, c)`.
pub fn mul_add_regs(first: &Instruction, second: &Instruction) -> Option<[crate::isa::Reg; 4]> {
    match (*first, *second) {
        (
            Instruction::Alu { op: RegOp::Mul, rd: t, rs1: a, rs2: b },
            Instruction::Alu { op: RegOp::Add, rd: c, rs1, rs2 },
        ) if !t.is_zero() && c != t && ((rs1 == c && rs2 == t) || (rs1 == t && rs2 == c)) => Some([t, a, b, c]),
        _ => None,
    }
}

/// Two register-increment `addi`s on distinct registers: their immediates.
pub fn addi_pair(first: &Instruction, second: &Instruction) -> Option<(i32, i32)> {
    let (x, i1) = first.as_reg_increment()?;
    let (y, i2) = second.as_reg_increment()?;
    (x != y).then_some((i1, i2))
}

/// `addi, addi, mul, add` where the increments do not touch the product's
/// registers.
pub fn is_fusedmac_window(w: [&Instruction; 4]) -> bool {
    let Some(_) = addi_pair(w[0], w[1]) else { return false };
    let Some([t, a, b, c]) = mul_add_regs(w[2], w[3]) else { return false };
    let (x, _) = w[0].as_reg_increment().expect("checked");
    let (y, _) = w[1].as_reg_increment().expect("checked");
    [x, y].iter().all(|r| ![t, a, b, c].contains(r))
}

fn is_blt(inst: &Instruction) -> bool {
    matches!(inst, Instruction::Branch { cond: BranchCond::Lt, .. })
}

/// Greedy, non-overlapping matcher over a stream of weighted instructions.
#[derive(Default)]
struct Scanner {
    window: VecDeque<(Instruction, u64)>,
    index: u64,
    free_mul_add: u64,
    free_addi: u64,
    free_fused: u64,
    profile: Profile,
}

impl Scanner {
    /// Feeds one instruction occurring `mult` times with per-occurrence cost `weight`.
    fn push(&mut self, inst: Instruction, weight: u64, mult: u64) {
        if self.window.len() == 4 {
            self.window.pop_front();
        }
        self.window.push_back((inst, weight));
        let i = self.index;
        self.index += 1;
        let r = &mut self.profile.report;
        r.total_retired += mult;
        r.total_cycles += weight * mult;

        let tally = |raw: &mut u64, weighted: &mut u64| {
            *raw += mult;
            *weighted += weight * mult;
        };
        match inst {
            Instruction::Alu { op: RegOp::Add, .. } => tally(&mut r.raw.add, &mut r.weighted.add),
            Instruction::Alu { op: RegOp::Mul, .. } => tally(&mut r.raw.mul, &mut r.weighted.mul),
            Instruction::AluImm { op: crate::isa::ImmOp::Addi, .. } => tally(&mut r.raw.addi, &mut r.weighted.addi),
            _ if is_blt(&inst) => tally(&mut r.raw.blt, &mut r.weighted.blt),
            _ => {}
        }

        let n = self.window.len();
        let w = &self.window;
        let tail_weight = |k: usize| w.iter().skip(n - k).map(|e| e.1).sum::<u64>() * mult;
        if n >= 2 && i >= 1 && i > self.free_mul_add && is_mul_add(&w[n - 2].0, &w[n - 1].0) {
            r.raw.mul_add += mult;
            r.weighted.mul_add += tail_weight(2);
            self.free_mul_add = i + 1;
        }
        if n >= 2 && i >= 1 && i > self.free_addi {
            if let Some((i1, i2)) = addi_pair(&w[n - 2].0, &w[n - 1].0) {
                let pw = tail_weight(2);
                r.raw.addi_addi += mult;
                r.weighted.addi_addi += pw;
                self.profile.histogram.add(i1, i2, pw);
                self.free_addi = i + 1;
            }
        }
        if n == 4 && i >= 3 && i - 3 >= self.free_fused && is_fusedmac_window([&w[0].0, &w[1].0, &w[2].0, &w[3].0]) {
            r.raw.fusedmac += mult;
            r.weighted.fusedmac += tail_weight(4);
            self.free_fused = i + 1;
        }
    }

    /// Starts a new independent sequence (basic-block boundary).
    fn reset(&mut self) {
        self.window.clear();
        self.free_mul_add = self.index;
        self.free_addi = self.index;
        self.free_fused = self.index;
    }
}

/// Streaming trace profiler. Feed events in retirement order, then call
/// [`Profiler::finish`].
pub struct Profiler {
    base: Vec<u64>,
    taken_extra: u64,
    pending: Option<TraceEvent>,
    scanner: Scanner,
}

impl Profiler {
    pub fn new(model: &CycleModel) -> Result<Profiler, ProfileError> {
        model.validate()?;
        Ok(Profiler {
            base: crate::isa::Mnemonic::ALL.iter().map(|&m| model.cost(m)).collect(),
            taken_extra: u64::from(model.taken_branch_extra),
            pending: None,
            scanner: Scanner::default(),
        })
    }

    fn settle(&mut self, ev: TraceEvent, next_pc: Option<u32>) {
        let taken = match ev.inst {
            Instruction::Jal { .. } | Instruction::Jalr { .. } => true,
            Instruction::Branch { .. } => next_pc.is_some_and(|p| p != ev.pc.wrapping_add(4)),
            _ => false,
        };
        let weight = self.base[ev.inst.mnemonic().index()] + if taken { self.taken_extra } else { 0 };
        self.scanner.push(ev.inst, weight, 1);
    }

    pub fn push(&mut self, ev: &TraceEvent) {
        if let Some(prev) = self.pending.replace(*ev) {
            self.settle(prev, Some(ev.pc));
        }
    }

    pub fn finish(mut self) -> Profile {
        if let Some(prev) = self.pending.take() {
            self.settle(prev, None);
        }
        self.scanner.profile
    }
}

/// Profiles a recorded trace.
pub fn profile_trace(events: &[TraceEvent], model: &CycleModel) -> Result<Profile, ProfileError> {
    let mut p = Profiler::new(model)?;
    for e in events {
        p.push(e);
    }
    Ok(p.finish())
}

/// Profiles static code: patterns are matched inside basic blocks and
/// multiplied by each block's execution count from `pc_hist`. Costs are the
/// model's base costs (no taken-branch penalty).
pub fn profile_static(prog: &Program, pc_hist: &[u64], model: &CycleModel) -> Result<Profile, ProfileError> {
    model.validate()?;
    if pc_hist.len() != prog.text.len() {
        return Err(ProfileError::HistLength { got: pc_hist.len(), want: prog.text.len() });
    }
    let leaders = block_leaders(prog);
    let mut scanner = Scanner::default();
    let mut mult = 0;
    for (i, inst) in prog.text.iter().enumerate() {
        if leaders[i] {
            scanner.reset();
            mult = pc_hist[i];
        }
        scanner.push(*inst, model.cost(inst.mnemonic()), mult);
    }
    Ok(scanner.profile)
}

fn block_leaders(prog: &Program) -> Vec<bool> {
    let n = prog.text.len();
    let mut leader = vec![false; n + 1];
    if n > 0 {
        leader[0] = true;
    }
    leader[prog.entry.min(n)] = true;
    let mut mark = |t: i64| {
        if (0..=n as i64).contains(&t) {
            leader[t as usize] = true;
        }
    };
    for (i, inst) in prog.text.iter().enumerate() {
        let t = inst.target_offset().map(|off| i as i64 + i64::from(off / 4));
        if inst.is_control_flow() {
            mark(i as i64 + 1);
            if let Some(t) = t {
                mark(t);
            }
        }
        if inst.is_loop_setup() {
            mark(i as i64 + 1);
            if let Some(t) = t {
                mark(t + 1);
            }
        }
    }
    leader.truncate(n);
    leader
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Reg;

    fn mul(t: u8, a: u8, b: u8) -> Instruction {
        Instruction::Alu { op: RegOp::Mul, rd: Reg::x(t), rs1: Reg::x(a), rs2: Reg::x(b) }
    }

    fn add(c: u8, a: u8, b: u8) -> Instruction {
        Instruction::Alu { op: RegOp::Add, rd: Reg::x(c), rs1: Reg::x(a), rs2: Reg::x(b) }
    }

    fn inc(r: u8, imm: i32) -> Instruction {
        Instruction::addi(Reg::x(r), Reg::x(r), imm)
    }

    fn straight(insts: &[Instruction]) -> Profile {
        let events: Vec<TraceEvent> =
            insts.iter().enumerate().map(|(i, &inst)| TraceEvent { pc: 4 * i as u32, inst, cycle: i as u64 }).collect();
        profile_trace(&events, &CycleModel::default()).unwrap()
    }

    #[test]
    fn two_mul_add_pairs() {
        let p = straight(&[mul(7, 5, 6), add(8, 8, 7), mul(7, 5, 6), add(8, 7, 8)]);
        assert_eq!(p.report.raw.mul_add, 2);
        assert_eq!(p.report.weighted.mul_add, 4);
    }

    #[test]
    fn greedy_does_not_reuse() {
        let p = straight(&[mul(7, 5, 6), add(8, 8, 7), add(9, 9, 7)]);
        assert_eq!(p.report.raw.mul_add, 1);
        assert_eq!(p.report.raw.add, 2);
    }

    #[test]
    fn non_accumulator_add_is_not_a_pair() {
        let p = straight(&[mul(7, 5, 6), add(8, 9, 7), mul(7, 5, 6), add(7, 7, 7)]);
        assert_eq!(p.report.raw.mul_add, 0);
    }

    #[test]
    fn histogram_weights_pairs() {
        let mut seq = Vec::new();
        for _ in 0..3 {
            seq.extend([inc(5, 1), inc(6, 12), Instruction::Mac]);
        }
        let p = straight(&seq);
        assert_eq!(p.histogram.entries, BTreeMap::from([((1, 12), 6)]));
        assert_eq!(p.histogram.total(), p.report.weighted.addi_addi);
    }

    #[test]
    fn signed_bucket() {
        let p = straight(&[inc(5, -1), inc(6, 4)]);
        assert_eq!(p.histogram.signed, 2);
        assert!(p.histogram.entries.is_empty());
        assert_eq!(p.histogram.coverage(5, 10), 0.0);
    }

    #[test]
    fn same_register_is_not_a_pair() {
        let p = straight(&[inc(5, 1), inc(5, 1), inc(5, 1)]);
        assert_eq!(p.report.raw.addi_addi, 0);
        assert_eq!(p.report.raw.addi, 3);
    }

    #[test]
    fn fusedmac_window() {
        let p = straight(&[inc(9, 1), inc(18, 12), mul(7, 5, 6), add(8, 8, 7)]);
        assert_eq!(p.report.raw.fusedmac, 1);
        assert_eq!(p.report.weighted.fusedmac, 4);
        // increment of a product operand blocks fusion
        let p = straight(&[inc(5, 1), inc(18, 12), mul(7, 5, 6), add(8, 8, 7)]);
        assert_eq!(p.report.raw.fusedmac, 0);
        assert_eq!(p.report.raw.mul_add, 1);
    }

    #[test]
    fn split_examples() {
        let mut h = ImmediateHistogram::default();
        h.add(3, 100, 5);
        h.add(40, 100, 5);
        assert_eq!(h.coverage(5, 10), 0.5);

        let mut single = ImmediateHistogram::default();
        single.add(0, 0, 1);
        let s = select_split(&single).unwrap();
        assert_eq!((s.b1, s.b2, s.coverage), (1, 14, 1.0));

        assert_eq!(select_split(&ImmediateHistogram::default()), Err(ProfileError::EmptyHistogram));
    }

    #[test]
    fn small_then_large_prefers_five_ten() {
        // Small first immediates up to 31, second immediates up to 1023.
        let mut h = ImmediateHistogram::default();
        h.add(1, 12, 500);
        h.add(1, 64, 300);
        h.add(4, 576, 200);
        h.add(31, 1000, 50);
        h.add(16, 1023, 40);
        h.add(2, 1024, 5);
        h.add(40, 8, 3);
        let s = select_split(&h).unwrap();
        assert_eq!((s.b1, s.b2), (5, 10));
        for b1 in 1..15 {
            assert!(h.covered(b1, 15 - b1) <= h.covered(5, 10));
        }
    }

    #[test]
    fn taken_blt_weight() {
        let blt = Instruction::Branch { cond: BranchCond::Lt, rs1: Reg::x(5), rs2: Reg::x(6), offset: -4 };
        let events = [
            TraceEvent { pc: 0, inst: inc(5, 1), cycle: 0 },
            TraceEvent { pc: 4, inst: blt, cycle: 1 },
            TraceEvent { pc: 0, inst: inc(5, 1), cycle: 3 },
            TraceEvent { pc: 4, inst: blt, cycle: 4 },
            TraceEvent { pc: 8, inst: Instruction::HALT, cycle: 5 },
        ];
        let p = profile_trace(&events, &CycleModel::default()).unwrap();
        assert_eq!(p.report.raw.blt, 2);
        assert_eq!(p.report.weighted.blt, 3);
        assert_eq!(p.report.total_cycles, 7);
    }

    #[test]
    fn static_mode_scales_blocks() {
        let src = "li x10, 4\nloop: addi x9, x9, 1\naddi x18, x18, 12\nmul x7, x5, x6\nadd x8, x8, x7\naddi x19, x19, 1\nblt x19, x10, loop\nhalt";
        let prog = crate::asm::assemble(src, crate::isa::Variant::V0).unwrap();
        let r = crate::sim::run(&prog, crate::isa::Variant::V0, &CycleModel::default(), &Default::default()).unwrap();
        let p = profile_static(&prog, &r.state.pc_hist, &CycleModel::default()).unwrap();
        assert_eq!(p.report.raw.fusedmac, 4);
        assert_eq!(p.report.raw.addi_addi, 4);
        assert_eq!(p.report.raw.blt, 4);
        assert_eq!(p.report.weighted.blt, 4);
        assert_eq!(p.histogram.entries, BTreeMap::from([((1, 12), 8)]));
    }

    #[test]
    fn report_and_histogram_csv() {
        let p = straight(&[inc(5, 1), inc(6, 12)]);
        let csv = p.report_csv();
        assert!(csv.starts_with("metric,raw,weighted\n"));
        assert!(csv.contains("addi_addi,1,2\n"));
        assert_eq!(p.histogram.to_csv(), "i1,i2,weight\n1,12,2\n");
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Profile>(&json).unwrap(), p);
    }
}
