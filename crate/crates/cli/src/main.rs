use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use rvfuse::asm::{assemble, disassemble, from_image, to_image, Program, IMAGE_MAGIC};
use rvfuse::eval::{bench_matrix, write_report, BenchConfig, BenchError, EnergyParams};
use rvfuse::isa::Variant;
use rvfuse::profile::{Profiler, SplitChoice};
use rvfuse::rewrite::retarget;
use rvfuse::sim::{run, run_observed, CycleModel, Limits, SimError};
use rvfuse::workloads::{bundled, by_name, codegen, oracle, KernelData, KernelSpec, DEFAULT_SEED};

#[derive(Parser)]
#[command(
    name = "rvfuse",
    version,
    about = "Assembler, simulator, profiler and rewriter for RV32IM with custom mac/add2i/fusedmac/zol extensions"
)]
struct Cli {
    /// Target processor variant.
    #[arg(long, global = true, default_value = "v4")]
    variant: Variant,
    /// JSON cycle model (default_cost, taken_branch_extra, overrides).
    #[arg(long, global = true, value_name = "PATH")]
    cycle_model: Option<PathBuf>,
    /// JSON energy parameters (power_w, clock_hz).
    #[arg(long, global = true, value_name = "PATH")]
    energy_params: Option<PathBuf>,
    /// Seed for generated weights and inputs.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Maximum retired instructions per simulation.
    #[arg(long, global = true, default_value_t = Limits::default().budget,
          value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a source file into a binary image.
    Asm {
        input: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Disassemble a binary image back to source.
    Disasm {
        input: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Run a program and report pattern counts and the immediate split.
    Profile {
        /// Source, image, or bundled workload name.
        program: String,
    },
    /// Retarget a program to --variant.
    Rewrite { program: String },
    /// Benchmark workloads across variants and write a report.
    Bench {
        /// Bundled workload names or KernelSpec JSON files (default: all bundled).
        workloads: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = Variant::ALL)]
        variants: Vec<Variant>,
    },
    /// Generate baseline assembly and golden output for a workload.
    Gen { workload: String },
    /// Simulate a program and print its final state.
    Run { program: String },
}

struct Env {
    variant: Variant,
    model: CycleModel,
    energy: EnergyParams,
    seed: u64,
    out: PathBuf,
    limits: Limits,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stem(name: &str) -> String {
    Path::new(name).file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_spec(arg: &str) -> Result<KernelSpec> {
    if let Some(s) = by_name(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        let names: Vec<String> = bundled().into_iter().map(|s| s.name).collect();
        bail!("`{arg}` is neither a file nor a bundled workload ({})", names.join(", "));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    let spec = KernelSpec::from_json(&text).with_context(|| format!("parsing {arg}"))?;
    spec.validate().with_context(|| format!("validating {arg}"))?;
    Ok(spec)
}

/// Loads a binary image or assembly file, or generates a bundled workload.
fn load_program(arg: &str, env: &Env) -> Result<Program> {
    let path = Path::new(arg);
    if !path.exists() {
        let spec = load_spec(arg)?;
        return Ok(codegen(&spec, &KernelData::random(&spec, env.seed))?.program);
    }
    let bytes = fs::read(path).with_context(|| format!("reading {arg}"))?;
    if bytes.starts_with(IMAGE_MAGIC) {
        return from_image(&bytes).with_context(|| format!("decoding {arg}"));
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{arg} is not UTF-8 text"))?;
    assemble(&text, env.variant).with_context(|| format!("assembling {arg}"))
}

fn cmd_asm(env: &Env, input: &Path, output: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let prog = assemble(&text, env.variant).with_context(|| format!("assembling {}", input.display()))?;
    let out = output.unwrap_or_else(|| env.out.join(format!("{}.bin", stem(&input.to_string_lossy()))));
    write(&out, to_image(&prog)?)
}

fn cmd_disasm(env: &Env, input: &Path, output: Option<PathBuf>) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let prog = from_image(&bytes).with_context(|| format!("decoding {}", input.display()))?;
    let out = output.unwrap_or_else(|| env.out.join(format!("{}.s", stem(&input.to_string_lossy()))));
    write(&out, disassemble(&prog))
}

fn cmd_profile(env: &Env, arg: &str) -> Result<()> {
    let prog = load_program(arg, env)?;
    let mut profiler = Profiler::new(&env.model)?;
    run_observed(&prog, env.variant, &env.model, &env.limits, |e| profiler.push(e))?;
    let profile = profiler.finish();
    let split: Option<SplitChoice> = profile.split();
    let coverage_5_10 = (profile.histogram.total() > 0).then(|| profile.histogram.coverage(5, 10));
    let doc = json!({
        "report": profile.report,
        "histogram": profile.histogram,
        "split": split,
        "coverage_5_10": coverage_5_10,
    });
    let name = stem(arg);
    write(&env.out.join(format!("{name}.profile.json")), serde_json::to_string_pretty(&doc)? + "\n")?;
    write(&env.out.join(format!("{name}.profile.csv")), profile.report_csv())?;
    write(&env.out.join(format!("{name}.immediates.csv")), profile.histogram.to_csv())?;
    for (metric, raw) in profile.report.raw.metrics() {
        println!("{metric:>10} {raw}");
    }
    match split {
        Some(s) => println!("split ({}, {}) covers {:.4}", s.b1, s.b2, s.coverage),
        None => println!("no addi pairs"),
    }
    Ok(())
}

fn cmd_rewrite(env: &Env, arg: &str) -> Result<()> {
    let prog = load_program(arg, env)?;
    let (out, stats) = retarget(&prog, env.variant, &env.model)?;
    let name = format!("{}.{}", stem(arg), env.variant);
    write(&env.out.join(format!("{name}.s")), disassemble(&out))?;
    write(&env.out.join(format!("{name}.stats.json")), serde_json::to_string_pretty(&stats)? + "\n")?;
    println!("{} -> {} instructions, {} rewrites", prog.text.len(), out.text.len(), stats.total_applied());
    Ok(())
}

fn cmd_bench(env: &Env, workloads: &[String], variants: &[Variant]) -> Result<()> {
    let specs =
        if workloads.is_empty() { bundled() } else { workloads.iter().map(|w| load_spec(w)).collect::<Result<_>>()? };
    let cfg = BenchConfig { model: env.model.clone(), energy: env.energy.clone(), seed: env.seed, limits: env.limits };
    let rows = bench_matrix(&specs, variants, &cfg)?;
    let dir = env.out.join("report");
    write_report(&dir, &rows).with_context(|| format!("writing report to {}", dir.display()))?;
    eprintln!("wrote {}", dir.display());
    println!("{:<20} {:>3} {:>10} {:>10} {:>12} {:>8}", "workload", "var", "cycles", "instrs", "energy_uJ", "speedup");
    for r in &rows {
        println!(
            "{:<20} {:>3} {:>10} {:>10} {:>12.2} {:>8.3}",
            r.workload,
            r.variant,
            r.cycles,
            r.instructions,
            r.energy_j * 1e6,
            r.speedup
        );
    }
    Ok(())
}

fn cmd_gen(env: &Env, arg: &str) -> Result<()> {
    let spec = load_spec(arg)?;
    let data = KernelData::random(&spec, env.seed);
    let g = codegen(&spec, &data)?;
    let golden = oracle(&spec, &data);
    write(&env.out.join(format!("{}.s", spec.name)), &g.asm)?;
    write(&env.out.join(format!("{}.spec.json", spec.name)), spec.to_json() + "\n")?;
    write(&env.out.join(format!("{}.input.tnsr", spec.name)), data.input.to_blob())?;
    if let Some(last) = golden.outputs.last() {
        write(&env.out.join(format!("{}.golden.tnsr", spec.name)), last.to_blob())?;
    }
    if let Some(c) = golden.class {
        println!("class {c}");
    }
    Ok(())
}

fn cmd_run(env: &Env, arg: &str) -> Result<()> {
    let prog = load_program(arg, env)?;
    let st = run(&prog, env.variant, &env.model, &env.limits)?.state;
    let retired: serde_json::Map<String, serde_json::Value> =
        st.retired_map().into_iter().map(|(m, n)| (m.to_string(), n.into())).collect();
    let doc = json!({
        "variant": env.variant,
        "cycles": st.cycles,
        "instructions": st.instructions(),
        "registers": st.x,
        "retired": retired,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn variants_help() -> String {
    let mut s = String::from("Variants:\n");
    for v in Variant::ALL {
        s += &format!("  {v}  {}\n", v.description());
    }
    s + "\nExit codes: 0 ok, 1 output differs from the reference model, 2 usage/parse/IO error, 3 simulation trap or budget exhausted"
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(b) = cause.downcast_ref::<BenchError>() {
            return match b {
                BenchError::Mismatch { .. } => 1,
                BenchError::Sim { .. } => 3,
                _ => 2,
            };
        }
        if let Some(s) = cause.downcast_ref::<SimError>() {
            return if matches!(s, SimError::Model(_)) { 2 } else { 3 };
        }
    }
    2
}

fn main_inner(cli: Cli) -> Result<()> {
    let model: CycleModel = match &cli.cycle_model {
        Some(p) => read_json(p)?,
        None => CycleModel::default(),
    };
    model.validate().context("invalid cycle model")?;
    let energy: EnergyParams = match &cli.energy_params {
        Some(p) => read_json(p)?,
        None => EnergyParams::default(),
    };
    energy.validate().context("invalid energy parameters")?;
    let env = Env {
        variant: cli.variant,
        model,
        energy,
        seed: cli.seed,
        out: cli.out,
        limits: Limits { budget: cli.budget, ..Limits::default() },
    };
    match cli.cmd {
        Cmd::Asm { input, output } => cmd_asm(&env, &input, output),
        Cmd::Disasm { input, output } => cmd_disasm(&env, &input, output),
        Cmd::Profile { program } => cmd_profile(&env, &program),
        Cmd::Rewrite { program } => cmd_rewrite(&env, &program),
        Cmd::Bench { workloads, variants } => cmd_bench(&env, &workloads, &variants),
        Cmd::Gen { workload } => cmd_gen(&env, &workload),
        Cmd::Run { program } => cmd_run(&env, &program),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(variants_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
