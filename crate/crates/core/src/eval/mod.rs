//! Variant x workload benchmark matrix with energy and memory accounting.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{assemble, disassemble, AsmError};
use crate::isa::Variant;
use crate::rewrite::retarget;
use crate::sim::{run, CycleModel, Limits, ModelError, SimError};
use crate::workloads::{codegen, oracle, CodegenError, GoldenResult, KernelData, KernelSpec};

pub use report::{svg_chart, to_csv, write_report, BenchReport, Metric, CSV_HEADER, REPORT_VERSION};

/// Power per variant and core clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Watts for v0..v4.
    pub power_w: [f64; 5],
    pub clock_hz: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams { power_w: [0.830, 0.852, 0.850, 0.847, 0.849], clock_hz: 100e6 }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !self.power_w.iter().all(|&p| ok(p)) || !ok(self.clock_hz) {
            return Err(EvalError::Params);
        }
        Ok(())
    }

    pub fn power(&self, v: Variant) -> f64 {
        self.power_w[v.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("energy needs a positive cycle count")]
    ZeroCycles,
    #[error("power and clock must be positive and finite")]
    Params,
}

/// Energy per inference in joules: power times run time.
pub fn energy(cycles: u64, variant: Variant, params: &EnergyParams) -> Result<f64, EvalError> {
    if cycles == 0 {
        return Err(EvalError::ZeroCycles);
    }
    params.validate()?;
    Ok(params.power(variant) * (cycles as f64 / params.clock_hz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRow {
    pub workload: String,
    pub variant: Variant,
    pub cycles: u64,
    pub instructions: u64,
    pub energy_j: f64,
    pub pm_bytes: u64,
    pub dm_bytes: u64,
    /// Baseline cycles over this row's cycles.
    pub speedup: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub model: CycleModel,
    pub energy: EnergyParams,
    pub seed: u64,
    pub limits: Limits,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            model: CycleModel::default(),
            energy: EnergyParams::default(),
            seed: crate::workloads::DEFAULT_SEED,
            limits: Limits::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{workload}: {source}")]
    Codegen { workload: String, source: CodegenError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Energy(#[from] EvalError),
    #[error("{workload} at {variant}: rewritten listing does not reassemble: {source}")]
    Reassemble { workload: String, variant: Variant, source: AsmError },
    #[error("{workload} at {variant}: {source}")]
    Sim { workload: String, variant: Variant, source: SimError },
    #[error("{workload} at {variant}: output differs from the reference model: {detail}")]
    Mismatch { workload: String, variant: Variant, detail: String },
}

impl BenchError {
    /// Whether the failure is a wrong answer rather than a crash or bad input.
    pub fn is_mismatch(&self) -> bool {
        matches!(self, BenchError::Mismatch { .. })
    }
}

/// First difference between an observed result and the reference.
pub fn describe_mismatch(got: &GoldenResult, want: &GoldenResult) -> Option<String> {
    for (li, (g, w)) in got.outputs.iter().zip(&want.outputs).enumerate() {
        if g != w {
            let at = (0..g.len().min(w.len())).find(|&i| g.get(i) != w.get(i)).unwrap_or(0);
            return Some(format!("output {li} element {at}: got {}, want {}", g.get(at), w.get(at)));
        }
    }
    if got.class != want.class {
        return Some(format!("class {:?}, want {:?}", got.class, want.class));
    }
    (got.outputs.len() != want.outputs.len()).then(|| "layer count differs".to_string())
}

struct Cell {
    cycles: u64,
    instructions: u64,
    pm_bytes: u64,
    dm_bytes: u64,
}

fn run_cell(spec: &KernelSpec, data: &KernelData, variant: Variant, cfg: &BenchConfig) -> Result<Cell, BenchError> {
    let workload = spec.name.clone();
    let g = codegen(spec, data).map_err(|source| BenchError::Codegen { workload: workload.clone(), source })?;
    let (rewritten, _) = retarget(&g.program, variant, &cfg.model)?;
    // Go through text so the listing itself is what gets measured.
    let prog = assemble(&disassemble(&rewritten), variant).map_err(|source| BenchError::Reassemble {
        workload: workload.clone(),
        variant,
        source,
    })?;
    let st = run(&prog, variant, &cfg.model, &cfg.limits)
        .map_err(|source| BenchError::Sim { workload: workload.clone(), variant, source })?
        .state;
    let got = g.read(&prog, &st).ok_or_else(|| BenchError::Mismatch {
        workload: workload.clone(),
        variant,
        detail: "output buffers unreadable".into(),
    })?;
    if let Some(detail) = describe_mismatch(&got, &oracle(spec, data)) {
        return Err(BenchError::Mismatch { workload, variant, detail });
    }
    Ok(Cell {
        cycles: st.cycles,
        instructions: st.instructions(),
        pm_bytes: prog.pm_bytes() as u64,
        dm_bytes: prog.dm_bytes() as u64,
    })
}

/// Retargets, runs and checks every (workload, variant) cell. Rows come out
/// in workload-major order; any wrong answer fails the whole matrix.
pub fn bench_matrix(
    specs: &[KernelSpec],
    variants: &[Variant],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>, BenchError> {
    cfg.energy.validate()?;
    cfg.model.validate()?;
    let data: Vec<KernelData> = specs.iter().map(|s| KernelData::random(s, cfg.seed)).collect();
    let mut wanted = vec![Variant::V0];
    wanted.extend(variants.iter().copied().filter(|&v| v != Variant::V0));
    let cells: Vec<(usize, Variant)> = (0..specs.len()).flat_map(|s| wanted.iter().map(move |&v| (s, v))).collect();
    let results: Vec<Result<Cell, BenchError>> =
        cells.par_iter().map(|&(s, v)| run_cell(&specs[s], &data[s], v, cfg)).collect();

    let mut rows = Vec::new();
    let mut results = results.into_iter();
    for spec in specs {
        let mut by_variant = Vec::new();
        for &v in &wanted {
            by_variant.push((v, results.next().expect("one result per cell")?));
        }
        let base = by_variant[0].1.cycles;
        for &v in variants {
            let cell = &by_variant.iter().find(|(w, _)| *w == v).expect("variant ran").1;
            rows.push(BenchRow {
                workload: spec.name.clone(),
                variant: v,
                cycles: cell.cycles,
                instructions: cell.instructions,
                energy_j: energy(cell.cycles, v, &cfg.energy)?,
                pm_bytes: cell.pm_bytes,
                dm_bytes: cell.dm_bytes,
                speedup: base as f64 / cell.cycles as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::microkernels;

    #[test]
    fn energy_formula() {
        let p = EnergyParams::default();
        let e = energy(1_000_000, Variant::V0, &p).unwrap();
        assert!((e - 8.3e-3).abs() <= f64::EPSILON * 8.3e-3, "{e}");
        assert_eq!(energy(2_000_000, Variant::V0, &p).unwrap(), 2.0 * e);
        assert_eq!(energy(0, Variant::V0, &p), Err(EvalError::ZeroCycles));
        let bad = EnergyParams { clock_hz: 0.0, ..p };
        assert_eq!(energy(1, Variant::V0, &bad), Err(EvalError::Params));
    }

    #[test]
    fn params_json() {
        let p: EnergyParams = serde_json::from_str(r#"{"clock_hz": 50e6}"#).unwrap();
        assert_eq!(p.power_w, EnergyParams::default().power_w);
        assert_eq!(p.clock_hz, 50e6);
        assert!(serde_json::from_str::<EnergyParams>(r#"{"power": 1}"#).is_err());
    }

    #[test]
    fn matrix_rows() {
        let specs = microkernels();
        let rows = bench_matrix(&specs[2..], &Variant::ALL, &BenchConfig::default()).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].speedup, 1.0);
        for w in rows.windows(2) {
            assert!(w[1].cycles < w[0].cycles);
        }
        for r in &rows {
            assert_eq!(r.energy_j, energy(r.cycles, r.variant, &EnergyParams::default()).unwrap());
            assert_eq!(r.pm_bytes % 4, 0);
        }
        let only_v3 = bench_matrix(&specs[2..], &[Variant::V3], &BenchConfig::default()).unwrap();
        assert_eq!(only_v3.len(), 1);
        assert_eq!(only_v3[0], rows[3]);
    }
}
