//! Editable program form: instructions carry stable node ids and control-flow
//! targets refer to ids, so insertions and deletions never invalidate them.

use crate::asm::Program;
use crate::isa::{encode, Instruction, Reg};

pub(crate) type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Node {
    pub id: NodeId,
    pub inst: Instruction,
    pub target: Option<NodeId>,
    pub line: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Ir {
    pub nodes: Vec<Node>,
    labels: Vec<(String, NodeId)>,
    pub entry: NodeId,
    next_id: NodeId,
    shell: Program,
}

/// Why a program is left untouched by the rewriter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unsupported {
    Empty,
    /// Indirect jumps and pc-relative address formation defeat static targets.
    IndirectControl,
    /// Loop registers written from data.
    DynamicLoopBounds,
    /// A label or target outside the instruction range, or misaligned.
    DanglingTarget,
}

impl Ir {
    pub fn from_program(prog: &Program) -> Result<Ir, Unsupported> {
        let n = prog.text.len();
        if n == 0 {
            return Err(Unsupported::Empty);
        }
        let mut nodes = Vec::with_capacity(n);
        for (i, inst) in prog.text.iter().enumerate() {
            match inst {
                Instruction::Jalr { .. } | Instruction::Auipc { .. } => return Err(Unsupported::IndirectControl),
                Instruction::SetZs { .. } | Instruction::SetZe { .. } => return Err(Unsupported::DynamicLoopBounds),
                _ => {}
            }
            let target = match inst.target_offset() {
                Some(_) if inst.is_halt() => None,
                Some(off) => {
                    let t = i as i64 + i64::from(off / 4);
                    if off % 4 != 0 || !(0..n as i64).contains(&t) {
                        return Err(Unsupported::DanglingTarget);
                    }
                    Some(t as NodeId)
                }
                None => None,
            };
            nodes.push(Node { id: i as NodeId, inst: *inst, target, line: prog.lines.get(i).copied().unwrap_or(0) });
        }
        let mut labels = Vec::with_capacity(prog.labels.len());
        for (name, &idx) in &prog.labels {
            if idx >= n {
                return Err(Unsupported::DanglingTarget);
            }
            labels.push((name.clone(), idx as NodeId));
        }
        if prog.entry >= n {
            return Err(Unsupported::DanglingTarget);
        }
        let mut shell = prog.clone();
        shell.text.clear();
        shell.lines.clear();
        shell.labels.clear();
        Ok(Ir { nodes, labels, entry: prog.entry as NodeId, next_id: n as NodeId, shell })
    }

    /// Lays the nodes out again, recomputing offsets. `None` if an offset no
    /// longer fits its field.
    pub fn to_program(&self) -> Option<Program> {
        let pos = self.positions();
        let mut prog = self.shell.clone();
        for (i, node) in self.nodes.iter().enumerate() {
            let inst = match node.target {
                Some(t) => {
                    let off = (pos[t as usize]? as i64 - i as i64) * 4;
                    node.inst.with_target_offset(i32::try_from(off).ok()?)
                }
                None => node.inst,
            };
            if !matches!(inst, Instruction::Illegal(_)) {
                encode(&inst).ok()?;
            }
            prog.text.push(inst);
            prog.lines.push(node.line);
        }
        for (name, id) in &self.labels {
            prog.labels.insert(name.clone(), pos[*id as usize]?);
        }
        prog.entry = pos[self.entry as usize]?;
        Some(prog)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn live_out(&self) -> Option<u32> {
        self.shell.live_out
    }

    /// Current index of every id (`None` for deleted ids).
    pub fn positions(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.next_id as usize];
        for (i, node) in self.nodes.iter().enumerate() {
            pos[node.id as usize] = Some(i);
        }
        pos
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    fn redirect(&mut self, from: NodeId, to: NodeId) {
        for node in &mut self.nodes {
            if node.target == Some(from) {
                node.target = Some(to);
            }
        }
        for (_, id) in &mut self.labels {
            if *id == from {
                *id = to;
            }
        }
        if self.entry == from {
            self.entry = to;
        }
    }

    /// Replaces the instruction at `index`, keeping its id and target.
    pub fn replace(&mut self, index: usize, inst: Instruction) {
        self.nodes[index].inst = inst;
        if inst.target_offset().is_none() {
            self.nodes[index].target = None;
        }
    }

    /// Removes the node at `index`; anything referring to it now refers to the
    /// following node.
    pub fn delete(&mut self, index: usize) {
        assert!(index + 1 < self.nodes.len(), "cannot delete the final node");
        let from = self.nodes[index].id;
        let to = self.nodes[index + 1].id;
        self.nodes.remove(index);
        self.redirect(from, to);
    }

    /// Inserts `inst` before the node at `index`. With `inherit`, references
    /// to that node move to the new one so every path into it runs the new
    /// instruction first.
    pub fn insert(&mut self, index: usize, inst: Instruction, target: Option<NodeId>, inherit: bool) -> NodeId {
        let anchor = &self.nodes[index.min(self.nodes.len() - 1)];
        let (anchor_id, line) = (anchor.id, anchor.line);
        let id = self.next_id;
        self.next_id += 1;
        if inherit && index < self.nodes.len() {
            self.redirect(anchor_id, id);
        }
        self.nodes.insert(index, Node { id, inst, target, line });
        id
    }

    pub fn rename_at(&mut self, index: usize, from: Reg, to: Reg) {
        let n = &mut self.nodes[index];
        n.inst = n.inst.rename(from, to);
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.nodes.iter().map(|n| &n.inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::isa::Variant;

    #[test]
    fn unchanged_ir_is_identity() {
        let src = ".liveout none\nli x5, 0\nl: addi x5, x5, 1\nblt x5, x6, l\nj e\nnop\ne: halt\n.data\nd: .byte 3";
        let p = assemble(src, Variant::V0).unwrap();
        let ir = Ir::from_program(&p).unwrap();
        assert_eq!(ir.to_program().unwrap(), p);
    }

    #[test]
    fn delete_moves_references_forward() {
        let p = assemble("j b\nnop\nb: addi x5, x5, 1\nc: halt", Variant::V0).unwrap();
        let mut ir = Ir::from_program(&p).unwrap();
        ir.delete(2);
        let q = ir.to_program().unwrap();
        assert_eq!(q.text.len(), 3);
        assert_eq!(q.text[0].target_offset(), Some(8));
        assert_eq!(q.labels["b"], 2);
        assert_eq!(q.labels["c"], 2);
    }

    #[test]
    fn insert_with_and_without_inheritance() {
        let p = assemble("l: nop\nblt x1, x2, l\nhalt", Variant::V0).unwrap();
        let mut ir = Ir::from_program(&p).unwrap();
        ir.insert(0, Instruction::addi(Reg::x(3), Reg::ZERO, 1), None, false);
        let q = ir.to_program().unwrap();
        assert_eq!(q.text[2].target_offset(), Some(-4));
        assert_eq!(q.labels["l"], 1);
        assert_eq!(q.lines[0], q.lines[1]);

        let mut ir = Ir::from_program(&p).unwrap();
        ir.insert(0, Instruction::addi(Reg::x(3), Reg::ZERO, 1), None, true);
        let q = ir.to_program().unwrap();
        assert_eq!(q.text[2].target_offset(), Some(-8));
        assert_eq!(q.labels["l"], 0);
    }

    #[test]
    fn bails_on_indirect_control() {
        let p = assemble("jalr x0, 0(x1)", Variant::V0).unwrap();
        assert_eq!(Ir::from_program(&p).unwrap_err(), Unsupported::IndirectControl);
        let p = assemble("set.ze x1\nhalt", Variant::V4).unwrap();
        assert_eq!(Ir::from_program(&p).unwrap_err(), Unsupported::DynamicLoopBounds);
        let p = assemble("beq x0, x0, 8\nhalt", Variant::V0).unwrap();
        assert_eq!(Ir::from_program(&p).unwrap_err(), Unsupported::DanglingTarget);
    }
}
