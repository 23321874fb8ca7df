//! Plain integer reference inference, independent of the ISA and simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::spec::{Activation, KernelSpec, Layer};
use super::tensor::{DType, Tensor};

/// Default PRNG seed for inputs and weights.
pub const DEFAULT_SEED: u64 = 0x4D52_564C;

/// Input tensor plus one weight tensor per compute layer, in layer order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelData {
    pub input: Tensor,
    pub weights: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("{what}: expected {expected:?} {dtype:?}, got {found:?} {found_dtype:?}")]
    Shape { what: String, expected: Vec<u32>, dtype: DType, found: Vec<u32>, found_dtype: DType },
    #[error("expected {expected} weight tensors, got {found}")]
    WeightCount { expected: usize, found: usize },
}

fn random_i8(rng: &mut ChaCha8Rng, dims: Vec<u32>) -> Tensor {
    let n = dims.iter().map(|&d| d as usize).product();
    Tensor::i8(dims, (0..n).map(|_| rng.gen::<i8>()).collect())
}

impl KernelData {
    /// Uniform int8 input and weights over the full range.
    pub fn random(spec: &KernelSpec, seed: u64) -> KernelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_i8(&mut rng, spec.input_dims());
        let weights = spec.layers.iter().filter_map(Layer::weight_dims).map(|d| random_i8(&mut rng, d)).collect();
        KernelData { input, weights }
    }

    /// Same weights as [`KernelData::random`] with `weight_seed`, fresh input
    /// from `input_seed`.
    pub fn with_input_seed(spec: &KernelSpec, weight_seed: u64, input_seed: u64) -> KernelData {
        let mut data = KernelData::random(spec, weight_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
        data.input = random_i8(&mut rng, spec.input_dims());
        data
    }

    pub fn check(&self, spec: &KernelSpec) -> Result<(), DataError> {
        let expect = |what: String, t: &Tensor, dims: Vec<u32>| {
            if t.dims != dims || t.dtype() != DType::I8 {
                Err(DataError::Shape {
                    what,
                    expected: dims,
                    dtype: DType::I8,
                    found: t.dims.clone(),
                    found_dtype: t.dtype(),
                })
            } else {
                Ok(())
            }
        };
        expect("input".into(), &self.input, spec.input_dims())?;
        let dims: Vec<Vec<u32>> = spec.layers.iter().filter_map(Layer::weight_dims).collect();
        if dims.len() != self.weights.len() {
            return Err(DataError::WeightCount { expected: dims.len(), found: self.weights.len() });
        }
        for (i, (t, d)) in self.weights.iter().zip(dims).enumerate() {
            expect(format!("weights {i}"), t, d)?;
        }
        Ok(())
    }
}

/// Per-compute-layer outputs and, when the spec ends in argmax, the class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenResult {
    pub outputs: Vec<Tensor>,
    pub class: Option<u32>,
}

/// Shift, activation and (for intermediate layers) saturation to int8.
pub(crate) fn requantize(acc: i32, shift: u32, act: Activation, saturate: bool) -> i32 {
    let mut v = acc >> shift;
    if act == Activation::Relu {
        v = v.max(0);
    }
    if saturate {
        v = v.clamp(-128, 127);
    }
    v
}

pub fn oracle(spec: &KernelSpec, data: &KernelData) -> GoldenResult {
    oracle_counted(spec, data).0
}

/// Runs the reference model and also counts the multiply-accumulates it
/// performed.
pub fn oracle_counted(spec: &KernelSpec, data: &KernelData) -> (GoldenResult, u64) {
    let last = spec.final_compute();
    let mut macs = 0u64;
    let mut outputs = Vec::new();
    let mut class = None;
    let mut act: Tensor = data.input.clone();
    let mut weights = data.weights.iter();
    for (li, layer) in spec.layers.iter().enumerate() {
        let keep32 = Some(li) == last;
        let x = |i: usize| act.get(i);
        let (dims, values) = match *layer {
            Layer::Conv2d { in_w, in_c, kernel, stride, filters, activation, requant_shift, depthwise, .. } => {
                let w = weights.next().expect("weights checked");
                let od = layer.output_dims();
                let (oh, ow) = (od[0] as usize, od[1] as usize);
                let (iw, c, k, s, f_n) =
                    (in_w as usize, in_c as usize, kernel as usize, stride as usize, filters as usize);
                let mut out = Vec::with_capacity(oh * ow * f_n);
                for oy in 0..oh {
                    for ox in 0..ow {
                        for f in 0..f_n {
                            let mut acc = 0i32;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let pix = ((oy * s + ky) * iw + ox * s + kx) * c;
                                    let channels = if depthwise { f..f + 1 } else { 0..c };
                                    for ch in channels {
                                        let wi = if depthwise {
                                            (ky * k + kx) * c + f
                                        } else {
                                            ((ky * k + kx) * c + ch) * f_n + f
                                        };
                                        acc = acc.wrapping_add(x(pix + ch) * w.get(wi));
                                        macs += 1;
                                    }
                                }
                            }
                            out.push(requantize(acc, requant_shift, activation, !keep32));
                        }
                    }
                }
                (od, out)
            }
            Layer::Dense { in_dim, out_dim, activation, requant_shift } => {
                let w = weights.next().expect("weights checked");
                let (n_in, n_out) = (in_dim as usize, out_dim as usize);
                let out = (0..n_out)
                    .map(|o| {
                        let acc = (0..n_in).fold(0i32, |acc, i| acc.wrapping_add(x(i) * w.get(i * n_out + o)));
                        macs += n_in as u64;
                        requantize(acc, requant_shift, activation, !keep32)
                    })
                    .collect();
                (vec![out_dim], out)
            }
            Layer::Argmax { dim } => {
                let mut best = 0usize;
                for i in 1..dim as usize {
                    if x(i) > x(best) {
                        best = i;
                    }
                }
                class = Some(best as u32);
                continue;
            }
        };
        act = if keep32 {
            Tensor::i32(dims, values)
        } else {
            Tensor::i8(dims, values.into_iter().map(|v| v as i8).collect())
        };
        outputs.push(act.clone());
    }
    (GoldenResult { outputs, class }, macs)
}
