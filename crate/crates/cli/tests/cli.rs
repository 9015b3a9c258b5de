use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lightcon::Checkpoint;
use lightcon_cli::metrics::{read_log, MetricsRecord, RecordKind};

const TINY: &str = r#"
[run]
checkpoint_every = 5

[train]
total_epochs = 10
warmup_epochs = 1
batch_size = 20
queue_capacity = 64
seed = 3

[train.smoothing]
k = 5

[model]
encoder_hidden = [16]
feature_dim = 12
projector_hidden = 12
embed_dim = 8

[data.synth]
n_instances = 200
n_eval = 50
input_dim = 8
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lightcon"));
    cmd.env_remove("LIGHTCON_LOG_DIR");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn pretrain(config: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("pretrain")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra))
}

fn log_of(out: &Path) -> Vec<MetricsRecord> {
    let logs: Vec<PathBuf> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    assert_eq!(logs.len(), 1, "{logs:?}");
    read_log(&logs[0]).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn accuracy(o: &Output) -> f64 {
    let text = stdout(o);
    let mut words = text.split_whitespace();
    words.find(|w| *w == "accuracy");
    words
        .next()
        .unwrap_or_default()
        .parse()
        .unwrap_or_else(|_| panic!("no accuracy in {text}"))
}

#[test]
fn zero_epochs_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    assert!(pretrain(&cfg, &out, &["--epochs", "0"]).status.success());
    let ckpt = Checkpoint::<f32>::load(out.join("final.ckpt")).unwrap();
    assert_eq!((ckpt.step, ckpt.epoch), (0, 0));
    assert!(log_of(&out).is_empty());
    assert!(out.join("config.toml").exists());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let full = dir.path().join("full");
    assert!(pretrain(&cfg, &full, &[]).status.success());
    let resumed = dir.path().join("resumed");
    let mid = full.join("epoch-0005.ckpt");
    assert!(pretrain(&cfg, &resumed, &["--resume", mid.to_str().unwrap()])
        .status
        .success());

    let a = Checkpoint::<f32>::load(full.join("final.ckpt")).unwrap();
    let b = Checkpoint::<f32>::load(resumed.join("final.ckpt")).unwrap();
    assert_eq!(a.epoch, 10);
    assert_eq!(a.to_bytes(), b.to_bytes());

    let steps = |r: &[MetricsRecord]| r.iter().filter(|x| x.kind == RecordKind::Step).count();
    assert_eq!(steps(&log_of(&full)), 100);
    assert_eq!(steps(&log_of(&resumed)), 50);
    assert_eq!(log_of(&full)[55].payload, log_of(&resumed)[0].payload);
}

#[test]
fn alpha_one_and_infonce_log_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let soft = dir.path().join("soft");
    let info = dir.path().join("info");
    assert!(pretrain(&cfg, &soft, &["--alpha", "1.0", "--epochs", "3"])
        .status
        .success());
    assert!(pretrain(&cfg, &info, &["--loss", "infonce", "--epochs", "3"])
        .status
        .success());
    let strip = |r: Vec<MetricsRecord>| r.into_iter().map(|x| (x.kind, x.payload)).collect::<Vec<_>>();
    let (a, b) = (strip(log_of(&soft)), strip(log_of(&info)));
    assert_eq!(a.len(), 33);
    assert_eq!(a, b);
}

#[test]
fn untrained_encoder_on_structureless_data_is_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{TINY}class_sep = 0.0\nfalse_neg_rate = 0.0\nfalse_pos_rate = 0.0\n")
        .replace("n_instances = 200", "n_instances = 2000")
        .replace("n_eval = 50", "n_eval = 2000");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("run");
    assert!(pretrain(&cfg, &out, &["--epochs", "0"]).status.success());
    let o = run(bin().arg("eval").arg("--checkpoint").arg(out.join("final.ckpt")));
    assert!(o.status.success());
    let acc = accuracy(&o);
    assert!((acc - 0.1).abs() < 0.05, "accuracy {acc}");
    let evals: Vec<_> = log_of(&out)
        .into_iter()
        .filter(|r| r.kind == RecordKind::Eval)
        .collect();
    assert_eq!(evals.len(), 1);
}

#[test]
fn trained_separable_run_is_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{TINY}instance_spread = 0.2\naug_noise = 0.2\nfalse_pos_rate = 0.0\n")
        .replace("n_instances = 200", "n_instances = 1000")
        .replace("n_eval = 50", "n_eval = 500");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("run");
    assert!(pretrain(&cfg, &out, &[]).status.success());
    for protocol in ["knn", "linear"] {
        let o = run(bin()
            .args(["eval", "--protocol", protocol, "--checkpoint"])
            .arg(out.join("final.ckpt")));
        assert!(o.status.success());
        assert!(accuracy(&o) > 0.9, "{protocol}: {}", stdout(&o));
    }
}

#[test]
fn oversized_k_is_clamped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    assert!(pretrain(&cfg, &out, &["--epochs", "0"]).status.success());
    let o = run(bin()
        .args(["eval", "--set", "eval.knn.k=5000", "--checkpoint"])
        .arg(out.join("final.ckpt")));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: k clamped to the 200"));
    assert!(stdout(&o).contains("k = 200"));
}

#[test]
fn log_dir_can_be_redirected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let logs = dir.path().join("logs");
    let out = dir.path().join("run");
    let o = run(bin()
        .env("LIGHTCON_LOG_DIR", &logs)
        .args(["pretrain", "--epochs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success());
    assert_eq!(log_of(&logs).len(), 22);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(
        code(run(bin().args(["pretrain", "--config", "/nonexistent/run.toml"]))),
        1
    );
    assert_eq!(code(run(bin().args(["pretrain", "--set", "train.learning_rate=1"]))), 2);
    assert_eq!(code(run(bin().args(["gradcheck", "--trials", "0"]))), 2);

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a dump").unwrap();
    let o = run(bin()
        .args(["pretrain", "--set", "data.source=dump", "--set"])
        .arg(format!("data.dump_path=\"{}\"", garbage.display())));
    assert_eq!(code(o), 3);

    let out = dir.path().join("run");
    let o = pretrain(&cfg, &out, &["--epochs", "2", "--set", "train.base_lr=1e300"]);
    assert_eq!(code(o), 4);

    assert!(pretrain(&cfg, &dir.path().join("ok"), &["--epochs", "0"])
        .status
        .success());
    let o = run(bin()
        .args(["eval", "--set", "data.synth.input_dim=6", "--checkpoint"])
        .arg(dir.path().join("ok/final.ckpt")));
    assert_eq!(code(o), 5);

    assert_eq!(
        code(run(bin().args(["gradcheck", "--trials", "1", "--corrupt-gradient"]))),
        6
    );
}

#[test]
fn gradcheck_single_trial_is_deterministic() {
    let once = || stdout(&run(bin().args(["gradcheck", "--trials", "1", "--seed", "9"])));
    let a = once();
    assert_eq!(a, once());
    assert!(a.contains("encoder_chain"));
    assert!(a.trim_end().ends_with("pass"));
}

#[test]
fn synth_dump_round_trips_through_pretrain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let dump = dir.path().join("data.bin");
    assert!(
        run(bin().args(["synth-dump", "--config"]).arg(&cfg).arg("--out").arg(&dump))
            .status
            .success()
    );
    let from_dump = dir.path().join("dump");
    let o = pretrain(
        &cfg,
        &from_dump,
        &[
            "--epochs",
            "2",
            "--set",
            "data.source=dump",
            "--set",
            &format!("data.dump_path=\"{}\"", dump.display()),
        ],
    );
    assert!(o.status.success());
    let direct = dir.path().join("direct");
    assert!(pretrain(&cfg, &direct, &["--epochs", "2"]).status.success());
    // The dump rounds inputs to f32.
    let losses = |r: Vec<MetricsRecord>| {
        r.into_iter()
            .filter(|x| x.kind == RecordKind::Step)
            .map(|x| x.payload["loss"].as_f64().unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b) = (losses(log_of(&from_dump)), losses(log_of(&direct)));
    assert_eq!(a.len(), 20);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-5 * y.abs(), "{x} vs {y}");
    }
}

fn sweep(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("sweep")
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra))
}

fn sweep_cells(out: &Path) -> Vec<serde_json::Value> {
    read_log(&out.join("sweep.jsonl"))
        .unwrap()
        .into_iter()
        .map(|r| r.payload)
        .collect()
}

#[test]
fn single_cell_sweep_matches_pretrain_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("total_epochs = 10", "total_epochs = 3"));
    let out = dir.path().join("sweep");
    assert!(sweep(&cfg, &out, &["--alpha", "0.8", "--k", "5"]).status.success());
    let cells = sweep_cells(&out);
    assert_eq!(cells.len(), 1);

    let run_dir = dir.path().join("run");
    assert!(pretrain(&cfg, &run_dir, &[]).status.success());
    let o = run(bin().arg("eval").arg("--checkpoint").arg(run_dir.join("final.ckpt")));
    assert_eq!(cells[0]["accuracy"].as_f64().unwrap(), accuracy(&o));
}

#[test]
fn grid_sweep_records_every_cell_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("total_epochs = 10", "total_epochs = 2"));
    let grid = ["--alpha", "0.8", "--k", "5,10,20,30"];
    let first = sweep(&cfg, &dir.path().join("a"), &grid);
    assert!(first.status.success());
    let cells = sweep_cells(&dir.path().join("a"));
    assert_eq!(
        cells.iter().map(|c| c["k"].as_u64().unwrap()).collect::<Vec<_>>(),
        [5, 10, 20, 30]
    );

    let table = |o: &Output| {
        stdout(o)
            .lines()
            .filter(|l| !l.starts_with("records"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let second = sweep(&cfg, &dir.path().join("b"), &grid);
    assert_eq!(table(&first), table(&second));
    assert!(table(&first).contains("K=30"));

    let mut parallel_args = grid.to_vec();
    parallel_args.push("--parallel");
    assert!(sweep(&cfg, &dir.path().join("c"), &parallel_args).status.success());
    let key = |c: &serde_json::Value| (c["k"].as_u64().unwrap(), c["accuracy"].as_f64().unwrap().to_bits());
    let mut par: Vec<_> = sweep_cells(&dir.path().join("c")).iter().map(key).collect();
    par.sort();
    assert_eq!(par, cells.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn sweep_rejects_an_invalid_cell_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("sweep");
    let o = sweep(&cfg, &out, &["--alpha", "0.8,1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("sweep.jsonl").exists());
}
