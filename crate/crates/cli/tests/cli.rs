use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rvfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvfuse")).current_dir(dir).args(args).output().expect("spawn rvfuse")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "status {:?}\n{}", o.status, String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const LOOP: &str = "\
.data
buf: .word 0
.text
    li x5, 0
    li x6, 8
    li x7, 0
top:
    addi x7, x7, 3
    addi x5, x5, 1
    blt x5, x6, top
    la x8, buf
    sw x7, 0(x8)
    jal x0, 0
";

#[test]
fn help_lists_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&rvfuse(dir.path(), &["--help"]));
    for v in ["v0", "v1", "v2", "v3", "v4"] {
        assert!(out.contains(&format!("  {v}  ")), "{out}");
    }
    assert!(out.contains("zero-overhead"));
}

#[test]
fn asm_disasm_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&rvfuse(d, &["gen", "dense_64x16"]));
    ok(&rvfuse(d, &["asm", "out/dense_64x16.s", "-o", "a.bin"]));
    let bin = fs::read(d.join("a.bin")).unwrap();
    assert_eq!(&bin[..4], b"MRVL");
    ok(&rvfuse(d, &["disasm", "a.bin", "-o", "a.s"]));
    ok(&rvfuse(d, &["asm", "a.s", "-o", "b.bin"]));
    assert_eq!(fs::read(d.join("b.bin")).unwrap(), bin);
}

#[test]
fn bad_immediate_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.s"), ".text\n    nop\n    addi x1, x0, 5000\n").unwrap();
    let o = rvfuse(dir.path(), &["asm", "bad.s"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = rvfuse(dir.path(), &["--budget", "0", "run", "bad.s"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("l.s"), LOOP).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&ok(&rvfuse(dir.path(), &["--variant", "v0", "run", "l.s"]))).unwrap();
    assert_eq!(v["registers"][7], 24);
    let o = rvfuse(dir.path(), &["--budget", "5", "run", "l.s"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn profile_lenet_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&rvfuse(d, &["--variant", "v0", "profile", "lenet5_star"]));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/lenet5_star.profile.json")).unwrap()).unwrap();
    assert_eq!(v["coverage_5_10"], 1.0);
    assert!(v["report"]["raw"]["mul_add"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(d.join("out/lenet5_star.immediates.csv")).unwrap().starts_with("i1,i2,weight"));

    fs::write(d.join("empty.s"), ".text\n    jal x0, 0\n").unwrap();
    let out = ok(&rvfuse(d, &["profile", "empty.s"]));
    assert!(out.contains("no addi pairs"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/empty.profile.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["raw"]["mul_add"], 0);
    assert!(v["split"].is_null());
}

#[test]
fn rewrite_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("l.s"), LOOP).unwrap();
    ok(&rvfuse(d, &["--variant", "v0", "rewrite", "l.s"]));
    ok(&rvfuse(d, &["--variant", "v0", "asm", "l.s", "-o", "orig.bin"]));
    ok(&rvfuse(d, &["--variant", "v0", "asm", "out/l.v0.s", "-o", "re.bin"]));
    assert_eq!(fs::read(d.join("orig.bin")).unwrap(), fs::read(d.join("re.bin")).unwrap());
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/l.v0.stats.json")).unwrap()).unwrap();
    assert!(stats.as_object().unwrap().is_empty());

    ok(&rvfuse(d, &["rewrite", "lenet5_star"]));
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/lenet5_star.v4.stats.json")).unwrap()).unwrap();
    assert!(stats["zol_rule"]["applied"].as_u64().unwrap() > 0);
    let text = fs::read_to_string(d.join("out/lenet5_star.v4.s")).unwrap();
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let mut loops = 0;
    for (i, l) in lines.iter().enumerate() {
        let Some(end) = l.strip_prefix("dlpi ").and_then(|r| r.split(", ").nth(1)) else { continue };
        loops += 1;
        let close = lines[i..].iter().position(|x| *x == format!("{end}:")).expect("loop end label") + i;
        assert!(lines[i..=close + 1].iter().all(|x| !x.starts_with("blt")), "blt inside loop at line {i}");
    }
    assert!(loops > 0);
}

#[test]
fn bench_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&rvfuse(d, &["--out", "a", "bench"]));
    ok(&rvfuse(d, &["--out", "b", "bench"]));
    for f in ["bench.csv", "bench.json", "cycles.svg", "energy.svg"] {
        let a = fs::read(d.join("a/report").join(f)).unwrap();
        assert_eq!(a, fs::read(d.join("b/report").join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(d.join("a/report/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);

    ok(&rvfuse(d, &["--out", "c", "--seed", "9", "bench", "dense_64x16", "--variants", "v0,v4"]));
    let csv = fs::read_to_string(d.join("c/report/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = rvfuse(d, &["bench", "no_such_workload"]);
    assert_eq!(o.status.code(), Some(2));
}
