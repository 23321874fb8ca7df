//! Custom RISC-V ISA extensions for int8 CNN inference: encoding, assembly,
//! cycle-accurate simulation, profiling, rewriting and benchmarking.

#![allow(clippy::needless_range_loop)]

pub mod asm;
pub mod eval;
pub mod isa;
pub mod profile;
pub mod rewrite;
pub mod sim;
pub mod workloads;
