//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptgrad"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    bin()
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

/// Shared tiny fixture: task files plus a small pretrained checkpoint,
/// built once per test binary.
struct Fixture {
    _dir: TempDir,
    task: PathBuf,
    checkpoint: PathBuf,
    prompt: String,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let task = dir.path().join("task");
        run_ok(&[
            "gen-task",
            "--task",
            "sentiment",
            "--seed",
            "5",
            "--corpus-docs",
            "160",
            "--train-n",
            "10",
            "--val-n",
            "4",
            "--test-n",
            "6",
            "--out",
            task.to_str().unwrap(),
        ]);
        let pre = dir.path().join("pre");
        run_ok(&[
            "pretrain",
            "--corpus",
            task.join("corpus.txt").to_str().unwrap(),
            "--out",
            pre.to_str().unwrap(),
            "--seed",
            "5",
            "--steps",
            "120",
            "--d",
            "16",
            "--layers",
            "1",
            "--heads",
            "2",
            "--d-ff",
            "32",
            "--max-seq",
            "96",
        ]);
        let prompt = fs::read_to_string(task.join("prompt.txt")).unwrap();
        Fixture {
            task,
            checkpoint: pre.join("checkpoint.bin"),
            prompt,
            _dir: dir,
        }
    })
}

fn optimize_args<'a>(f: &'a Fixture, out: &'a Path, seed: &'a str) -> Vec<String> {
    vec![
        "optimize".into(),
        "--checkpoint".into(),
        f.checkpoint.display().to_string(),
        "--prompt".into(),
        f.prompt.clone(),
        "--train".into(),
        f.task.join("train.jsonl").display().to_string(),
        "--val".into(),
        f.task.join("val.jsonl").display().to_string(),
        "--lr".into(),
        "0.01".into(),
        "--epochs".into(),
        "3".into(),
        "--seed".into(),
        seed.into(),
        "--out".into(),
        out.display().to_string(),
    ]
}

#[test]
fn gen_task_writes_all_files() {
    let f = fixture();
    for name in [
        "corpus.txt",
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "stimuli_a.txt",
        "stimuli_b.txt",
        "prompt.txt",
        "resolved_config.json",
    ] {
        assert!(f.task.join(name).exists(), "missing {name}");
    }
}

#[test]
fn unknown_task_is_usage_error() {
    assert_eq!(exit_code(&["gen-task", "--task", "nonsense"]), 2);
}

#[test]
fn missing_corpus_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    assert_eq!(
        exit_code(&[
            "pretrain",
            "--corpus",
            "nonexistent-corpus.txt",
            "--out",
            out.to_str().unwrap(),
        ]),
        2
    );
}

#[test]
fn pretrain_same_seed_prints_same_hash() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let mut hashes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let output = run_ok(&[
            "pretrain",
            "--corpus",
            f.task.join("corpus.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
            "--steps",
            "30",
            "--d",
            "16",
            "--layers",
            "1",
            "--heads",
            "2",
            "--d-ff",
            "32",
            "--max-seq",
            "96",
        ]);
        let stdout = String::from_utf8_lossy(&output.stdout).to_string();
        let hash = stdout
            .lines()
            .find(|l| l.starts_with("checkpoint hash:"))
            .expect("hash line")
            .to_string();
        hashes.push(hash);
    }
    assert_eq!(hashes[0], hashes[1]);
    let a = fs::read(dir.path().join("a/checkpoint.bin")).unwrap();
    let b = fs::read(dir.path().join("b/checkpoint.bin")).unwrap();
    assert_eq!(a, b, "checkpoint files differ across identical seeds");
}

#[test]
fn optimize_rerun_is_byte_identical() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    let args1: Vec<String> = optimize_args(f, &out1, "3");
    let args2: Vec<String> = optimize_args(f, &out2, "3");
    let st1 = bin().args(&args1).status().unwrap();
    let st2 = bin().args(&args2).status().unwrap();
    assert!(st1.success() && st2.success());
    let a = fs::read(out1.join("artifact.bin")).unwrap();
    let b = fs::read(out2.join("artifact.bin")).unwrap();
    assert_eq!(a, b, "artifacts differ across identical runs");
    let ra = fs::read(out1.join("train_report.json")).unwrap();
    let rb = fs::read(out2.join("train_report.json")).unwrap();
    assert_eq!(ra, rb, "reports differ across identical runs");
}

#[test]
fn optimize_lr_zero_exits_2() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let mut args = optimize_args(f, &out, "0");
    let lr_pos = args.iter().position(|a| a == "--lr").unwrap();
    args[lr_pos + 1] = "0".into();
    let code = bin().args(&args).status().unwrap().code().unwrap();
    assert_eq!(code, 2);
}

#[test]
fn too_long_example_names_line_number() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("long.jsonl");
    let long_text = "the film was happy and ".repeat(12);
    fs::write(
        &data,
        format!(
            "{}\n{}\n",
            r#"{"input": " ok => ", "target": "pos"}"#,
            format!(r#"{{"input": " {long_text} => ", "target": "pos"}}"#)
        ),
    )
    .unwrap();
    let out = dir.path().join("x");
    let output = bin()
        .args([
            "optimize",
            "--checkpoint",
            f.checkpoint.to_str().unwrap(),
            "--prompt",
            &f.prompt,
            "--train",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code().unwrap(), 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    assert!(stderr.contains("exceeds capacity"), "stderr: {stderr}");
}

#[test]
fn divergent_lr_exits_3_without_artifact() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let mut args = optimize_args(f, &out, "0");
    let lr_pos = args.iter().position(|a| a == "--lr").unwrap();
    args[lr_pos + 1] = "1e307".into();
    args.push("--epochs".into()); // later flag wins in clap? keep single
    args.pop();
    let epochs_pos = args.iter().position(|a| a == "--epochs").unwrap();
    args[epochs_pos + 1] = "40".into();
    args.push("--no-early-stop".into());
    let code = bin().args(&args).status().unwrap().code().unwrap();
    assert_eq!(code, 3);
    assert!(!out.join("artifact.bin").exists(), "partial artifact written");
}

#[test]
fn refuses_nonempty_out_dir_without_force() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("existing.txt"), "data").unwrap();
    let args = optimize_args(f, &out, "0");
    let code = bin().args(&args).status().unwrap().code().unwrap();
    assert_eq!(code, 2);
    // With --force the same run goes through.
    let mut args = optimize_args(f, &out, "0");
    args.push("--force".into());
    let code = bin().args(&args).status().unwrap().code().unwrap();
    assert_eq!(code, 0);
}

#[test]
fn sweep_enumerates_grid_in_order() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sw");
    run_ok(&[
        "sweep",
        "--checkpoint",
        f.checkpoint.to_str().unwrap(),
        "--prompt",
        &f.prompt,
        "--train",
        f.task.join("train.jsonl").to_str().unwrap(),
        "--val",
        f.task.join("val.jsonl").to_str().unwrap(),
        "--test",
        f.task.join("test.jsonl").to_str().unwrap(),
        "--lrs",
        "0.001,0.01,0.1",
        "--epochs-grid",
        "1,2",
        "--max-tokens",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7, "header + 6 grid rows:\n{csv}");
    assert_eq!(lines[0], "lr,epochs,val_loss,test_accuracy");
    let keys: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let mut parts = l.split(',');
            (
                parts.next().unwrap().to_string(),
                parts.next().unwrap().to_string(),
            )
        })
        .collect();
    let expected = [
        ("0.001", "1"),
        ("0.001", "2"),
        ("0.01", "1"),
        ("0.01", "2"),
        ("0.1", "1"),
        ("0.1", "2"),
    ];
    for (got, want) in keys.iter().zip(expected.iter()) {
        assert_eq!((got.0.as_str(), got.1.as_str()), *want);
    }
}

#[test]
fn sweep_parallel_matches_sequential() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let base: Vec<String> = vec![
        "sweep".into(),
        "--checkpoint".into(),
        f.checkpoint.display().to_string(),
        "--prompt".into(),
        f.prompt.clone(),
        "--train".into(),
        f.task.join("train.jsonl").display().to_string(),
        "--test".into(),
        f.task.join("test.jsonl").display().to_string(),
        "--lrs".into(),
        "0.01,0.05".into(),
        "--epochs-grid".into(),
        "1".into(),
        "--max-tokens".into(),
        "6".into(),
    ];
    let seq_out = dir.path().join("seq");
    let par_out = dir.path().join("par");
    let mut seq_args = base.clone();
    seq_args.extend(["--out".into(), seq_out.display().to_string()]);
    let mut par_args = base;
    par_args.extend([
        "--out".into(),
        par_out.display().to_string(),
        "--parallel".into(),
    ]);
    assert!(bin().args(&seq_args).status().unwrap().success());
    assert!(bin().args(&par_args).status().unwrap().success());
    let seq_csv = fs::read_to_string(seq_out.join("sweep.csv")).unwrap();
    let par_csv = fs::read_to_string(par_out.join("sweep.csv")).unwrap();
    assert_eq!(seq_csv, par_csv, "parallel sweep must keep result order");
}

#[test]
fn infer_writes_trace_and_diag_entropy_reads_it() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let inf = dir.path().join("inf");
    let output = run_ok(&[
        "infer",
        "--checkpoint",
        f.checkpoint.to_str().unwrap(),
        "--prompt",
        &f.prompt,
        "--input",
        " the film was happy => ",
        "--max-tokens",
        "6",
        "--out",
        inf.to_str().unwrap(),
    ]);
    assert!(inf.join("trace.json").exists());
    assert!(!output.stdout.is_empty());

    let de = dir.path().join("de");
    run_ok(&[
        "diag",
        "entropy",
        "--trace",
        inf.join("trace.json").to_str().unwrap(),
        "--out",
        de.to_str().unwrap(),
    ]);
    assert!(de.join("entropy_report.json").exists());
}

#[test]
fn diag_entropy_uniform_v8_reports_three_bits() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.json");
    let uniform: Vec<f64> = vec![0.125; 8];
    let file = serde_json::json!({
        "tokens": [0, 0],
        "stop": "max-tokens",
        "vocab": 8,
        "distributions": [uniform, uniform],
    });
    fs::write(&trace, serde_json::to_string(&file).unwrap()).unwrap();
    let out = dir.path().join("rep");
    let output = run_ok(&[
        "diag",
        "entropy",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("trajectory entropy: 3.000000 bits"),
        "stdout: {stdout}"
    );
}

#[test]
fn config_file_provides_defaults_flags_override() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, r#"{"lr": 0.005, "epochs": 2, "seed": 17}"#).unwrap();
    let out = dir.path().join("x");
    run_ok(&[
        "optimize",
        "--checkpoint",
        f.checkpoint.to_str().unwrap(),
        "--prompt",
        &f.prompt,
        "--train",
        f.task.join("train.jsonl").to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--lr",
        "0.02",
        "--out",
        out.to_str().unwrap(),
    ]);
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["lr"], 0.02, "flag must override config file");
    assert_eq!(resolved["epochs"], 2, "config file must override default");
    assert_eq!(resolved["seed"], 17);
}

#[test]
fn eval_via_prompt_text_reports_accuracy() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ev");
    let output = run_ok(&[
        "eval",
        "--checkpoint",
        f.checkpoint.to_str().unwrap(),
        "--prompt",
        &f.prompt,
        "--test",
        f.task.join("test.jsonl").to_str().unwrap(),
        "--max-tokens",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("accuracy:"), "stdout: {stdout}");
    assert!(out.join("eval_report.json").exists());
}

#[test]
fn gradcheck_passes_on_default_model() {
    let output = run_ok(&["gradcheck", "--prompt", "a:", "--input", " b", "--target", "c", "--seed", "11"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("PASS"), "stdout: {stdout}");
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(exit_code(&["bogus"]), 2);
}
