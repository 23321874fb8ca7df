//! Quantized CNN kernels: declarative specs, baseline code generation and
//! the integer reference model.

mod codegen;
mod oracle;
mod spec;
mod tensor;

pub use codegen::{codegen, CodegenError, Generated, OutputBuffer};
pub use oracle::{oracle, oracle_counted, DataError, GoldenResult, KernelData, DEFAULT_SEED};
pub use spec::{Activation, KernelSpec, Layer, SpecError};
pub use tensor::{DType, Tensor, TensorData, TensorError, TENSOR_MAGIC};

/// Two strided convolutions, a dense layer and argmax over 28x28 int8 images.
pub fn lenet5_star() -> KernelSpec {
    KernelSpec {
        name: "lenet5_star".into(),
        layers: vec![
            Layer::Conv2d {
                in_h: 28,
                in_w: 28,
                in_c: 1,
                kernel: 6,
                stride: 2,
                filters: 12,
                activation: Activation::Relu,
                requant_shift: 8,
                depthwise: false,
            },
            Layer::Conv2d {
                in_h: 12,
                in_w: 12,
                in_c: 12,
                kernel: 6,
                stride: 2,
                filters: 32,
                activation: Activation::Relu,
                requant_shift: 10,
                depthwise: false,
            },
            Layer::Dense { in_dim: 512, out_dim: 10, activation: Activation::None, requant_shift: 0 },
            Layer::Argmax { dim: 10 },
        ],
    }
}

/// Small single-layer kernels: a standard convolution, a depthwise
/// convolution and a dense layer.
pub fn microkernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec {
            name: "conv_8x8x4_k3".into(),
            layers: vec![Layer::Conv2d {
                in_h: 8,
                in_w: 8,
                in_c: 4,
                kernel: 3,
                stride: 1,
                filters: 8,
                activation: Activation::Relu,
                requant_shift: 6,
                depthwise: false,
            }],
        },
        KernelSpec {
            name: "depthwise_8x8x8_k3".into(),
            layers: vec![Layer::Conv2d {
                in_h: 8,
                in_w: 8,
                in_c: 8,
                kernel: 3,
                stride: 1,
                filters: 8,
                activation: Activation::Relu,
                requant_shift: 4,
                depthwise: true,
            }],
        },
        KernelSpec {
            name: "dense_64x16".into(),
            layers: vec![Layer::Dense { in_dim: 64, out_dim: 16, activation: Activation::None, requant_shift: 0 }],
        },
    ]
}

/// LeNet-5* followed by the microkernels.
pub fn bundled() -> Vec<KernelSpec> {
    let mut all = vec![lenet5_star()];
    all.extend(microkernels());
    all
}

/// Looks a bundled workload up by name.
pub fn by_name(name: &str) -> Option<KernelSpec> {
    bundled().into_iter().find(|s| s.name == name)
}
