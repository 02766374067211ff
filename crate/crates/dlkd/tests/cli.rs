use std::path::Path;
use std::process::{Command, Output};

use dlkd::datadir::{load_split, Split};
use dlkd::formats::{load_checkpoint, load_logits};

fn dlkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlkd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dlkd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = "epochs = 2\nbatch_size = 2\nlr = 0.001\nwidths = 2,3\nseeds = 5\nclasses = 2\nper_class = 4\ndims = 1x4x8x8\ndata_seed = 3\n";

#[test]
fn single_arm_commands_chain_together() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = dir.join("data");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    ok(&["gen-data", "--classes", "2", "--per-class", "4", "--dims", "1x4x8x8", "--seed", "3", "--out", p(&data)]);
    let train = load_split(&data, Split::Train).unwrap();
    assert_eq!(train.len(), 6);
    assert_eq!(load_split(&data, Split::Test).unwrap().len(), 2);

    let (teacher, logits, student, baseline) = (dir.join("t.ckpt"), dir.join("t.logits"), dir.join("s.ckpt"), dir.join("b.ckpt"));
    ok(&["train-teacher", "--data", p(&data), "--config", p(&cfg), "--out", p(&teacher), "--metrics", p(&dir.join("t.csv"))]);
    ok(&["cache-logits", "--teacher", p(&teacher), "--data", p(&data), "--out", p(&logits)]);
    ok(&["train-student", "--data", p(&data), "--logits", p(&logits), "--config", p(&cfg), "--out", p(&student), "--metrics", p(&dir.join("s.csv"))]);
    ok(&["train-baseline", "--data", p(&data), "--config", p(&cfg), "--out", p(&baseline), "--metrics", p(&dir.join("b.csv"))]);

    let store = load_logits(&logits).unwrap();
    assert_eq!(store.len(), 6);
    assert_eq!(store.teacher_hash, load_checkpoint(&teacher).unwrap().fingerprint());
    let csv = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,l_ar,l_kd,total,train_top1,wall_seconds");
    assert_eq!(csv.lines().count(), 3);

    let eval_csv = dir.join("e.csv");
    ok(&["eval", "--model", p(&teacher), "--data", p(&data), "--enhance", "--out", p(&eval_csv)]);
    let text = std::fs::read_to_string(&eval_csv).unwrap();
    assert!(text.starts_with("variant,top1,top5,test_size,seed\nteacher,"), "{text}");
    ok(&["eval", "--model", p(&baseline), "--data", p(&data), "--variant", "baseline", "--out", p(&eval_csv)]);
    let text = std::fs::read_to_string(&eval_csv).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("baseline,"));
    assert!(text.lines().nth(1).unwrap().ends_with(",2,5"));
}

#[test]
fn experiment_writes_report_and_per_seed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("out");
    ok(&["experiment", "--config", p(&cfg), "--out", p(&out)]);
    for f in ["report.csv", "report.txt", "config.txt", "data/manifest.txt", "seed-5/teacher.ckpt", "seed-5/teacher.logits", "seed-5/student.csv", "seed-5/baseline.ckpt", "seed-5/metrics.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("seed,")).count(), 3);
    let metrics = std::fs::read_to_string(out.join("seed-5/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn zero_beta_makes_student_and_baseline_rows_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, format!("{TINY}beta = 0\n")).unwrap();
    let out = tmp.path().join("out");
    ok(&["experiment", "--config", p(&cfg), "--out", p(&out)]);
    let s = std::fs::read(out.join("seed-5/student.ckpt")).unwrap();
    let b = std::fs::read(out.join("seed-5/baseline.ckpt")).unwrap();
    assert_eq!(s, b);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let row = |v: &str| report.lines().find(|l| l.starts_with(&format!("seed,{v},"))).unwrap().split(',').skip(2).collect::<Vec<_>>().join(",");
    assert_eq!(row("student"), row("baseline"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(dlkd(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(dlkd(&["gen-data", "--classes", "2"]).status.code(), Some(1));

    let bad_cfg = dir.join("bad.cfg");
    std::fs::write(&bad_cfg, "epochs = 2\nlearning_rate = 1\n").unwrap();
    let out = dlkd(&["experiment", "--config", p(&bad_cfg), "--out", p(&dir.join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let junk = dir.join("junk.ckpt");
    std::fs::write(&junk, b"DLKD\x01").unwrap();
    let out = dlkd(&["eval", "--model", p(&junk), "--data", p(dir), "--out", p(&dir.join("e.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = dlkd(&["gen-data", "--classes", "9", "--per-class", "2", "--dims", "1x4x8x8", "--seed", "1", "--out", p(&dir.join("d"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--seed", "7"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("worst relative error"));
}
