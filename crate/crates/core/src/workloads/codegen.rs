//! Baseline (v0) assembly for a kernel spec.
//!
//! Every loop is a do-while counted `blt` loop whose induction register starts
//! at zero. The innermost reduction is
//!
//! ```text
//! lb   x5, 0(x9)        # input
//! lb   x6, 0(x18)       # weight
//! addi x9, x9, 1        # small step first
//! addi x18, x18, F      # then the larger weight stride
//! mul  x7, x5, x6
//! add  x8, x8, x7
//! addi x19, x19, 1
//! blt  x19, x14, loop
//! ```
//!
//! Register map: x10..x14 loop bounds (oh, ow, f, k, c), x23..x27 counters
//! (kx, ky, f, ox, oy), x28 current pixel, x29 current row, x30 filter
//! weights, x31 output pointer, x3/x4/x15 scratch. x20..x22 are never used.

use std::fmt::Write as _;

use thiserror::Error;

use super::oracle::{DataError, GoldenResult, KernelData};
use super::spec::{Activation, KernelSpec, Layer, SpecError};
use super::tensor::{DType, Tensor};
use crate::asm::{assemble, AsmError, Program};
use crate::isa::Variant;
use crate::sim::MachineState;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("generated assembly rejected: {0}")]
    Asm(#[from] AsmError),
}

/// A layer output buffer in the data image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputBuffer {
    pub label: String,
    pub dtype: DType,
    pub dims: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub asm: String,
    pub program: Program,
    pub outputs: Vec<OutputBuffer>,
    /// Label of the argmax result word, if any.
    pub result: Option<String>,
}

impl Generated {
    /// Reads the layer outputs back out of simulator memory. `prog` is the
    /// program that ran (a retargeted copy keeps the same data labels).
    pub fn read(&self, prog: &Program, state: &MachineState) -> Option<GoldenResult> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for b in &self.outputs {
            let n: usize = b.dims.iter().map(|&d| d as usize).product();
            let bytes = state.bytes(prog.data_addr(&b.label)?, n * b.dtype.size())?;
            outputs.push(Tensor::from_le_bytes(b.dtype, b.dims.clone(), bytes));
        }
        let class = match &self.result {
            Some(label) => {
                let w = state.bytes(prog.data_addr(label)?, 4)?;
                Some(u32::from_le_bytes([w[0], w[1], w[2], w[3]]))
            }
            None => None,
        };
        Some(GoldenResult { outputs, class })
    }
}

struct Emitter {
    text: String,
    labels: usize,
}

impl Emitter {
    fn op(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.text, "    {}", s.as_ref());
    }

    fn label(&mut self, l: &str) {
        let _ = writeln!(self.text, "{l}:");
    }

    fn fresh(&mut self, layer: usize, stem: &str) -> String {
        self.labels += 1;
        format!("l{layer}_{stem}{}", self.labels)
    }

    /// `r += v`, through x15 when `v` does not fit an immediate.
    fn bump(&mut self, r: &str, v: i64) {
        if v == 0 {
            return;
        }
        if (-2048..=2047).contains(&v) {
            self.op(format!("addi {r}, {r}, {v}"));
        } else {
            self.op(format!("li x15, {v}"));
            self.op(format!("add {r}, {r}, x15"));
        }
    }

    fn reduction_step(&mut self, p_step: i64, q_step: i64, counter: &str, bound: &str, top: &str) {
        self.op("lb x5, 0(x9)");
        self.op("lb x6, 0(x18)");
        self.bump("x9", p_step);
        self.bump("x18", q_step);
        self.op("mul x7, x5, x6");
        self.op("add x8, x8, x7");
        self.op(format!("addi {counter}, {counter}, 1"));
        self.op(format!("blt {counter}, {bound}, {top}"));
    }

    /// Requantize x8 and store it, then step the output pointer.
    fn epilogue(&mut self, li: usize, shift: u32, act: Activation, keep32: bool) {
        if shift > 0 {
            self.op(format!("srai x8, x8, {shift}"));
        }
        if act == Activation::Relu {
            // x8 &= (x8 < 0) - 1
            self.op("slti x3, x8, 0");
            self.op("addi x3, x3, -1");
            self.op("and x8, x8, x3");
        }
        if !keep32 {
            let hi = self.fresh(li, "sat_hi");
            self.op("li x4, 127");
            self.op(format!("bge x4, x8, {hi}"));
            self.op("mv x8, x4");
            self.label(&hi);
            if act != Activation::Relu {
                let lo = self.fresh(li, "sat_lo");
                self.op("li x4, -128");
                self.op(format!("bge x8, x4, {lo}"));
                self.op("mv x8, x4");
                self.label(&lo);
            }
        }
        self.op(if keep32 { "sw x8, 0(x31)" } else { "sb x8, 0(x31)" });
    }

    fn conv(&mut self, li: usize, layer: &Layer, input: &str, keep32: bool) {
        let Layer::Conv2d { in_w, in_c, kernel, stride, filters, activation, requant_shift, depthwise, .. } = *layer
        else {
            unreachable!("conv layer")
        };
        let od = layer.output_dims();
        let (w, c, k, s) = (i64::from(in_w), i64::from(in_c), i64::from(kernel), i64::from(stride));
        let [l_oy, l_ox, l_f, l_ky, l_kx, l_rc] = ["oy", "ox", "f", "ky", "kx", "rc"].map(|n| self.fresh(li, n));
        self.op(format!("la x31, out{li}"));
        self.op(format!("li x10, {}", od[0]));
        self.op(format!("li x11, {}", od[1]));
        self.op(format!("li x12, {filters}"));
        self.op(format!("li x13, {kernel}"));
        self.op(format!("li x14, {in_c}"));
        self.op(format!("la x29, {input}"));
        self.op("li x27, 0");
        self.label(&l_oy);
        self.op("mv x28, x29");
        self.op("li x26, 0");
        self.label(&l_ox);
        self.op(format!("la x30, w{li}"));
        self.op("li x25, 0");
        self.label(&l_f);
        self.op("li x8, 0");
        self.op(if depthwise { "add x9, x28, x25" } else { "mv x9, x28" });
        self.op("mv x18, x30");
        self.op("li x24, 0");
        self.label(&l_ky);
        self.op("li x23, 0");
        self.label(&l_kx);
        if depthwise {
            self.reduction_step(c, c, "x23", "x13", &l_kx);
        } else {
            self.op("li x19, 0");
            self.label(&l_rc);
            self.reduction_step(1, i64::from(filters), "x19", "x14", &l_rc);
            self.op("addi x23, x23, 1");
            self.op(format!("blt x23, x13, {l_kx}"));
        }
        self.op("addi x24, x24, 1");
        self.bump("x9", (w - k) * c);
        self.op(format!("blt x24, x13, {l_ky}"));
        self.epilogue(li, requant_shift, activation, keep32);
        self.op(format!("addi x31, x31, {}", if keep32 { 4 } else { 1 }));
        self.op("addi x25, x25, 1");
        self.op("addi x30, x30, 1");
        self.op(format!("blt x25, x12, {l_f}"));
        self.op("addi x26, x26, 1");
        self.bump("x28", s * c);
        self.op(format!("blt x26, x11, {l_ox}"));
        self.op("addi x27, x27, 1");
        self.bump("x29", s * w * c);
        self.op(format!("blt x27, x10, {l_oy}"));
    }

    fn dense(&mut self, li: usize, layer: &Layer, input: &str, keep32: bool) {
        let Layer::Dense { in_dim, out_dim, activation, requant_shift } = *layer else { unreachable!("dense layer") };
        let [l_o, l_i] = ["o", "i"].map(|n| self.fresh(li, n));
        self.op(format!("la x31, out{li}"));
        self.op(format!("li x12, {out_dim}"));
        self.op(format!("li x14, {in_dim}"));
        self.op(format!("la x30, w{li}"));
        self.op("li x25, 0");
        self.label(&l_o);
        self.op("li x8, 0");
        self.op(format!("la x9, {input}"));
        self.op("mv x18, x30");
        self.op("li x19, 0");
        self.label(&l_i);
        self.reduction_step(1, i64::from(out_dim), "x19", "x14", &l_i);
        self.epilogue(li, requant_shift, activation, keep32);
        self.op(format!("addi x31, x31, {}", if keep32 { 4 } else { 1 }));
        self.op("addi x25, x25, 1");
        self.op("addi x30, x30, 1");
        self.op(format!("blt x25, x12, {l_o}"));
    }

    fn argmax(&mut self, li: usize, dim: u32, input: &str, dtype: DType) {
        let (load, size) = match dtype {
            DType::I8 => ("lb", 1),
            DType::I32 => ("lw", 4),
        };
        self.op(format!("la x9, {input}"));
        self.op(format!("{load} x5, 0(x9)"));
        self.op("li x6, 0");
        if dim >= 2 {
            let [top, keep] = ["scan", "keep"].map(|n| self.fresh(li, n));
            self.op("li x19, 1");
            self.op(format!("li x14, {dim}"));
            self.op(format!("addi x9, x9, {size}"));
            self.label(&top);
            self.op(format!("{load} x7, 0(x9)"));
            self.op(format!("bge x5, x7, {keep}"));
            self.op("mv x5, x7");
            self.op("mv x6, x19");
            self.label(&keep);
            self.op(format!("addi x9, x9, {size}"));
            self.op("addi x19, x19, 1");
            self.op(format!("blt x19, x14, {top}"));
        }
        self.op("la x15, result");
        self.op("sw x6, 0(x15)");
    }
}

fn emit_bytes(out: &mut String, label: &str, t: &Tensor) {
    let _ = writeln!(out, "{label}:");
    let values: Vec<i32> = (0..t.len()).map(|i| t.get(i)).collect();
    for chunk in values.chunks(16) {
        let list: Vec<String> = chunk.iter().map(i32::to_string).collect();
        let _ = writeln!(out, "    .byte {}", list.join(", "));
    }
}

/// Generates the baseline program for `spec` with `data` in its data image.
pub fn codegen(spec: &KernelSpec, data: &KernelData) -> Result<Generated, CodegenError> {
    spec.validate()?;
    data.check(spec)?;
    let last = spec.final_compute();
    let mut e = Emitter { text: String::new(), labels: 0 };
    let _ =
        writeln!(e.text, "# {}: {} layers, {} multiply-accumulates", spec.name, spec.layers.len(), spec.mac_count());
    e.text.push_str(".liveout none\n.text\n");

    let mut input = "input".to_string();
    let mut input_dtype = DType::I8;
    let mut outputs = Vec::new();
    let mut result = None;
    for (li, layer) in spec.layers.iter().enumerate() {
        let keep32 = Some(li) == last;
        let _ = writeln!(e.text, "# layer {li}: {}", layer.kind());
        match layer {
            Layer::Conv2d { .. } => e.conv(li, layer, &input, keep32),
            Layer::Dense { .. } => e.dense(li, layer, &input, keep32),
            Layer::Argmax { dim } => {
                e.argmax(li, *dim, &input, input_dtype);
                result = Some("result".to_string());
                continue;
            }
        }
        input = format!("out{li}");
        input_dtype = if keep32 { DType::I32 } else { DType::I8 };
        outputs.push(OutputBuffer { label: input.clone(), dtype: input_dtype, dims: layer.output_dims() });
    }
    e.op("halt");

    let mut d = String::from(".data\n");
    emit_bytes(&mut d, "input", &data.input);
    let mut weights = data.weights.iter();
    let mut out_iter = outputs.iter();
    for (li, layer) in spec.layers.iter().enumerate() {
        if !layer.is_compute() {
            continue;
        }
        emit_bytes(&mut d, &format!("w{li}"), weights.next().expect("checked"));
        let b = out_iter.next().expect("one buffer per compute layer");
        let n: usize = b.dims.iter().map(|&x| x as usize).product();
        if b.dtype == DType::I32 {
            d.push_str("    .align 2\n");
        }
        let _ = writeln!(d, "{}:\n    .space {}", b.label, n * b.dtype.size());
    }
    if result.is_some() {
        d.push_str("    .align 2\nresult:\n    .space 4\n");
    }
    let asm = e.text + &d;
    let program = assemble(&asm, Variant::V0)?;
    Ok(Generated { asm, program, outputs, result })
}
