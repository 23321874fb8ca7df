use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest product magnitude of two int8 values.
const MAX_PRODUCT: u64 = 128 * 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    /// Valid (unpadded) convolution over an HWC int8 tensor. Weights are
    /// laid out `[ky][kx][c][f]`, or `[ky][kx][c]` when `depthwise`.
    Conv2d {
        in_h: u32,
        in_w: u32,
        in_c: u32,
        kernel: u32,
        stride: u32,
        filters: u32,
        activation: Activation,
        requant_shift: u32,
        #[serde(default)]
        depthwise: bool,
    },
    /// Fully connected layer, weights `[in][out]`.
    Dense {
        in_dim: u32,
        out_dim: u32,
        activation: Activation,
        #[serde(default)]
        requant_shift: u32,
    },
    /// Index of the largest element of the previous layer's output; ties go
    /// to the lowest index.
    Argmax { dim: u32 },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Dense { .. } => "dense",
            Layer::Argmax { .. } => "argmax",
        }
    }

    pub fn is_compute(&self) -> bool {
        !matches!(self, Layer::Argmax { .. })
    }

    /// Output dims: `[h, w, c]` for convolutions, `[n]` for dense.
    pub fn output_dims(&self) -> Vec<u32> {
        match *self {
            Layer::Conv2d { in_h, in_w, kernel, stride, filters, .. } => {
                vec![(in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1, filters]
            }
            Layer::Dense { out_dim, .. } => vec![out_dim],
            Layer::Argmax { .. } => vec![1],
        }
    }

    pub fn input_dims(&self) -> Vec<u32> {
        match *self {
            Layer::Conv2d { in_h, in_w, in_c, .. } => vec![in_h, in_w, in_c],
            Layer::Dense { in_dim, .. } => vec![in_dim],
            Layer::Argmax { dim } => vec![dim],
        }
    }

    pub fn weight_dims(&self) -> Option<Vec<u32>> {
        match *self {
            Layer::Conv2d { kernel, in_c, filters, depthwise: false, .. } => Some(vec![kernel, kernel, in_c, filters]),
            Layer::Conv2d { kernel, in_c, depthwise: true, .. } => Some(vec![kernel, kernel, in_c]),
            Layer::Dense { in_dim, out_dim, .. } => Some(vec![in_dim, out_dim]),
            Layer::Argmax { .. } => None,
        }
    }

    /// Products summed into one accumulator.
    pub fn reduction_len(&self) -> u64 {
        match *self {
            Layer::Conv2d { kernel, in_c, depthwise, .. } => {
                u64::from(kernel) * u64::from(kernel) * if depthwise { 1 } else { u64::from(in_c) }
            }
            Layer::Dense { in_dim, .. } => u64::from(in_dim),
            Layer::Argmax { .. } => 0,
        }
    }

    pub fn mac_count(&self) -> u64 {
        if !self.is_compute() {
            return 0;
        }
        self.output_dims().iter().map(|&d| u64::from(d)).product::<u64>() * self.reduction_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("spec has no layers")]
    Empty,
    #[error("layer {layer}: `{field}` must be positive")]
    Zero { layer: usize, field: &'static str },
    #[error("layer {layer}: kernel {kernel} larger than input {h}x{w}")]
    KernelTooLarge { layer: usize, kernel: u32, h: u32, w: u32 },
    #[error("layer {layer}: expects input {expected:?}, previous layer produces {found:?}")]
    Chain { layer: usize, expected: Vec<u32>, found: Vec<u32> },
    #[error("layer {layer}: argmax must be the last layer and follow a compute layer")]
    ArgmaxPosition { layer: usize },
    #[error("layer {layer}: worst-case accumulator {bound} does not fit in 31 bits")]
    Overflow { layer: usize, bound: u64 },
    #[error("layer {layer}: depthwise convolution needs filters == in_c")]
    Depthwise { layer: usize },
    #[error("layer {layer}: requant_shift {shift} exceeds 31")]
    Shift { layer: usize, shift: u32 },
    #[error("layer {layer}: tensor too large for the data image")]
    TooLarge { layer: usize },
}

/// Upper bound on the generated data image, keeping it well inside the
/// default simulator memory.
const MAX_DATA: u64 = 1 << 19;

impl KernelSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.layers.is_empty() {
            return Err(SpecError::Empty);
        }
        let mut prev: Option<Vec<u32>> = None;
        let volume = |d: &[u32]| d.iter().map(|&x| u64::from(x)).product::<u64>();
        let mut data = volume(&self.layers[0].input_dims());
        for (i, layer) in self.layers.iter().enumerate() {
            let nonzero =
                |field: &'static str, v: u32| if v == 0 { Err(SpecError::Zero { layer: i, field }) } else { Ok(()) };
            match *layer {
                Layer::Conv2d { in_h, in_w, in_c, kernel, stride, filters, requant_shift, depthwise, .. } => {
                    for (f, v) in [
                        ("in_h", in_h),
                        ("in_w", in_w),
                        ("in_c", in_c),
                        ("kernel", kernel),
                        ("stride", stride),
                        ("filters", filters),
                    ] {
                        nonzero(f, v)?;
                    }
                    if kernel > in_h || kernel > in_w {
                        return Err(SpecError::KernelTooLarge { layer: i, kernel, h: in_h, w: in_w });
                    }
                    if depthwise && filters != in_c {
                        return Err(SpecError::Depthwise { layer: i });
                    }
                    if requant_shift > 31 {
                        return Err(SpecError::Shift { layer: i, shift: requant_shift });
                    }
                }
                Layer::Dense { in_dim, out_dim, requant_shift, .. } => {
                    nonzero("in_dim", in_dim)?;
                    nonzero("out_dim", out_dim)?;
                    if requant_shift > 31 {
                        return Err(SpecError::Shift { layer: i, shift: requant_shift });
                    }
                }
                Layer::Argmax { dim } => {
                    nonzero("dim", dim)?;
                    if i + 1 != self.layers.len() || i == 0 {
                        return Err(SpecError::ArgmaxPosition { layer: i });
                    }
                }
            }
            let input = layer.input_dims();
            if let Some(found) = &prev {
                let ok = match layer {
                    Layer::Conv2d { .. } => found == &input,
                    _ => volume(found) == volume(&input),
                };
                if !ok {
                    return Err(SpecError::Chain { layer: i, expected: input, found: found.clone() });
                }
            }
            let bound = layer.reduction_len() * MAX_PRODUCT;
            if bound >= 1 << 31 {
                return Err(SpecError::Overflow { layer: i, bound });
            }
            data += layer.weight_dims().map_or(0, |d| volume(&d)) + 4 * volume(&layer.output_dims());
            if data > MAX_DATA {
                return Err(SpecError::TooLarge { layer: i });
            }
            prev = Some(layer.output_dims());
        }
        Ok(())
    }

    pub fn input_dims(&self) -> Vec<u32> {
        self.layers[0].input_dims()
    }

    pub fn compute_layers(&self) -> impl Iterator<Item = (usize, &Layer)> {
        self.layers.iter().enumerate().filter(|(_, l)| l.is_compute())
    }

    /// Index of the last compute layer, whose output stays 32-bit.
    pub fn final_compute(&self) -> Option<usize> {
        self.layers.iter().rposition(Layer::is_compute)
    }

    pub fn mac_count(&self) -> u64 {
        self.layers.iter().map(Layer::mac_count).sum()
    }

    pub fn from_json(text: &str) -> Result<KernelSpec, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(in_h: u32, in_c: u32, kernel: u32, stride: u32, filters: u32) -> Layer {
        Layer::Conv2d {
            in_h,
            in_w: in_h,
            in_c,
            kernel,
            stride,
            filters,
            activation: Activation::Relu,
            requant_shift: 4,
            depthwise: false,
        }
    }

    #[test]
    fn json_schema() {
        let text = r#"{"name":"t","layers":[
            {"type":"conv2d","in_h":4,"in_w":4,"in_c":1,"kernel":2,"stride":1,"filters":2,"activation":"relu","requant_shift":3},
            {"type":"dense","in_dim":18,"out_dim":3,"activation":"none"},
            {"type":"argmax","dim":3}]}"#;
        let s = KernelSpec::from_json(text).unwrap();
        s.validate().unwrap();
        assert_eq!(s.layers[0].output_dims(), vec![3, 3, 2]);
        assert_eq!(KernelSpec::from_json(&s.to_json()).unwrap(), s);
        assert!(KernelSpec::from_json(&text.replace("\"stride\"", "\"strides\"")).is_err());
        assert!(KernelSpec::from_json(&text.replace("argmax", "softmax")).is_err());
    }

    #[test]
    fn chain_and_position_checks() {
        let s = KernelSpec { name: "x".into(), layers: vec![conv(8, 1, 3, 1, 4), conv(6, 2, 3, 1, 1)] };
        assert!(matches!(s.validate(), Err(SpecError::Chain { layer: 1, .. })));
        let s = KernelSpec { name: "x".into(), layers: vec![Layer::Argmax { dim: 4 }] };
        assert_eq!(s.validate(), Err(SpecError::ArgmaxPosition { layer: 0 }));
        let s = KernelSpec { name: "x".into(), layers: vec![conv(2, 1, 3, 1, 1)] };
        assert!(matches!(s.validate(), Err(SpecError::KernelTooLarge { .. })));
        assert_eq!(KernelSpec { name: "e".into(), layers: vec![] }.validate(), Err(SpecError::Empty));
    }

    #[test]
    fn overflow_bound() {
        // 8 * 8 * 2048 products of magnitude 128 * 128 reach exactly 2^31.
        let s = KernelSpec { name: "x".into(), layers: vec![conv(8, 2048, 8, 1, 1)] };
        assert_eq!(s.validate(), Err(SpecError::Overflow { layer: 0, bound: 1 << 31 }));
        let s = KernelSpec { name: "x".into(), layers: vec![conv(8, 2047, 8, 1, 1)] };
        assert!(s.validate().is_ok());
    }
}
