use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wct::eval::MetricsReport;

fn wct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wct")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesize and corrupt a small dataset; returns (train, test) paths.
fn prepare(dir: &Path) -> (PathBuf, PathBuf) {
    let raw = dir.join("raw.jsonl");
    let test = dir.join("test.jsonl");
    let noisy = dir.join("noisy.jsonl");
    let out = wct(&[
        "synth", "--classes", "3", "--per-class", "60", "--dim", "4", "--separation", "3", "--seed", "1",
        "--out", p(&raw), "--test-per-class", "20", "--test-out", p(&test),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = wct(&["corrupt", "--input", p(&raw), "--out", p(&noisy), "--rate", "0.2", "--human-per-class", "8", "--seed", "2"]);
    assert_eq!(code(&out), 0);
    (noisy, test)
}

const QUICK: [&str; 10] =
    ["--hidden", "8", "--batch-size", "16", "--step1-epochs", "3", "--cotrain-epochs", "2", "--finetune-epochs", "2"];

#[test]
fn help_and_version() {
    assert_eq!(code(&wct(&["--help"])), 0);
    let v = wct(&["--version"]);
    assert_eq!(code(&v), 0);
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(code(&wct(&[])), 2);
}

#[test]
fn synth_writes_one_line_per_example_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let args = |out: &Path| {
        wct(&["synth", "--classes", "4", "--per-class", "250", "--dim", "10", "--seed", "7", "--out", p(out)])
    };
    let out = args(&a);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "K=4 n=0 m=1000 dim=10");
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 1000);
    args(&b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(code(&wct(&["synth", "--classes", "4"])), 2);
}

#[test]
fn corrupt_reports_counts_and_validates_rate() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.jsonl");
    wct(&["synth", "--classes", "4", "--per-class", "250", "--out", p(&raw)]);
    let out = wct(&["corrupt", "--input", p(&raw), "--out", p(&dir.path().join("n.jsonl")), "--rate", "0.15"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "corrupted=150 human=0");
    let bad = wct(&["corrupt", "--input", p(&raw), "--out", p(&dir.path().join("x.jsonl")), "--rate", "1.5"]);
    assert_eq!(code(&bad), 2);

    let big = dir.path().join("big.jsonl");
    wct(&["synth", "--classes", "4", "--per-class", "600", "--out", p(&big)]);
    let out = wct(&["corrupt", "--input", p(&big), "--out", p(&dir.path().join("h.jsonl")), "--rate", "0.1", "--human-per-class", "500"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "corrupted=40 human=2000");

    let missing = wct(&["corrupt", "--input", p(&dir.path().join("nope.jsonl")), "--out", p(&big), "--rate", "0.1"]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn cartography_exports_rows_in_range() {
    let dir = TempDir::new().unwrap();
    let (data, _) = prepare(dir.path());
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["cartography", "--input", p(&data), "--out", p(out), "--epochs", "3", "--hidden", "8"];
        args.extend_from_slice(extra);
        wct(&args)
    };
    let a = dir.path().join("a.csv");
    assert_eq!(code(&run(&a, &[])), 0);
    let text = fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], wct::cartography::MAP_HEADER);
    // 180 examples, 24 moved to the human set.
    assert_eq!(lines.len(), 156 + 1);
    for row in &lines[1..] {
        let c: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    let b = dir.path().join("b.csv");
    run(&b, &[]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let s = dir.path().join("s.csv");
    assert_eq!(code(&run(&s, &["--sample", "40", "--scope", "all", "--seed", "3"])), 0);
    assert_eq!(fs::read_to_string(&s).unwrap().lines().count(), 41);
}

#[test]
fn train_writes_per_seed_outputs_and_aggregate() {
    let dir = TempDir::new().unwrap();
    let (data, test) = prepare(dir.path());
    let out = dir.path().join("runs");
    let mut args = vec!["train", "--input", p(&data), "--test", p(&test), "--out", p(&out), "--method", "wct-cv", "--seeds", "1,2,3"];
    args.extend_from_slice(&QUICK);
    let res = wct(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for seed in 1..=3 {
        let s = out.join(format!("seed-{seed}"));
        for f in ["metrics.jsonl", "weights.csv", "cartography-1.csv", "cartography-2.csv", "report.json", "final-1.json", "final-2.json"] {
            assert!(s.join(f).is_file(), "missing {f}");
        }
        assert!(s.join("checkpoints/step2-1.json").is_file());
        for line in fs::read_to_string(s.join("metrics.jsonl")).unwrap().lines() {
            serde_json::from_str::<wct::training::EpochLog>(line).unwrap();
        }
    }
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["test"]["runs"], 3);
}

#[test]
fn train_method_specific_outputs() {
    let dir = TempDir::new().unwrap();
    let (data, _) = prepare(dir.path());
    let run = |method: &str| {
        let out = dir.path().join(method);
        let mut args = vec!["train", "--input", p(&data), "--out", p(&out), "--method", method];
        args.extend_from_slice(&QUICK);
        (wct(&args), out.join("seed-0"))
    };
    let (res, ds) = run("ds");
    assert_eq!(code(&res), 0);
    assert!(!ds.join("weights.csv").exists());
    assert!(ds.join("final-1.json").exists() && !ds.join("final-2.json").exists());

    let (res, cc) = run("wct-cc");
    assert_eq!(code(&res), 0);
    let maps: Vec<Vec<String>> = (1..=2)
        .map(|c| fs::read_to_string(cc.join(format!("cartography-{c}.csv"))).unwrap().lines().skip(1).map(String::from).collect())
        .collect();
    let weights = fs::read_to_string(cc.join("weights.csv")).unwrap();
    for ((w, m1), m2) in weights.lines().skip(1).zip(&maps[0]).zip(&maps[1]) {
        let w: Vec<&str> = w.split(',').collect();
        let (c1, c2) = (m1.split(',').nth(1).unwrap(), m2.split(',').nth(1).unwrap());
        assert_eq!(c1, w[1]);
        assert_eq!(c2, w[2]);
        if c1 == c2 {
            assert_eq!(w[1], w[2]);
        }
    }

    let bad = wct(&["train", "--input", p(&data), "--out", p(&dir.path().join("x")), "--method", "mystery"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn parallel_matches_sequential() {
    let dir = TempDir::new().unwrap();
    let (data, test) = prepare(dir.path());
    let run = |name: &str, parallel: bool| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--input", p(&data), "--test", p(&test), "--out", p(&out), "--method", "coteaching", "--seeds", "4,5"];
        if parallel {
            args.push("--parallel");
        }
        args.extend_from_slice(&QUICK);
        assert_eq!(code(&wct(&args)), 0);
        out
    };
    let a = run("seq", false);
    let b = run("par", true);
    for f in ["aggregate.json", "seed-4/metrics.jsonl", "seed-5/report.json", "seed-5/final-2.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_flags_compose() {
    let dir = TempDir::new().unwrap();
    let (data, _) = prepare(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("# quick run\ninput = {}\nmethod = ds\nseeds = 5\nhidden = 8\nds-epochs = 2\n", p(&data))).unwrap();

    // (method flag given?, seeds flag given?) -> (weights.csv expected, seed dir)
    let cases = [
        (false, false, false, "seed-5"),
        (true, false, true, "seed-5"),
        (false, true, false, "seed-6"),
        (true, true, true, "seed-6"),
    ];
    for (i, (method_flag, seeds_flag, weighted, seed_dir)) in cases.into_iter().enumerate() {
        let out = dir.path().join(format!("case{i}"));
        let mut args = vec!["train", "--config", p(&cfg), "--out", p(&out)];
        if method_flag {
            args.extend(["--method", "wct-cc"]);
        }
        if seeds_flag {
            args.extend(["--seeds", "6"]);
        }
        args.extend(["--step1-epochs", "2", "--cotrain-epochs", "1", "--finetune-epochs", "1"]);
        let res = wct(&args);
        assert_eq!(code(&res), 0, "case {i}: {}", String::from_utf8_lossy(&res.stderr));
        let seed = out.join(seed_dir);
        assert!(seed.is_dir(), "case {i}");
        assert_eq!(seed.join("weights.csv").exists(), weighted, "case {i}");
    }

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "learning-rat = 0.1\n").unwrap();
    assert_eq!(code(&wct(&["train", "--config", p(&bad), "--input", p(&data), "--out", p(dir.path())])), 2);
    fs::write(&bad, "batch-size = zero\n").unwrap();
    assert_eq!(code(&wct(&["train", "--config", p(&bad), "--input", p(&data), "--out", p(dir.path())])), 2);
    fs::write(&bad, "finetune-learning-rate = 0.01\n").unwrap();
    assert_eq!(code(&wct(&["train", "--config", p(&bad), "--input", p(&data), "--out", p(dir.path())])), 2);
    assert_eq!(code(&wct(&["train", "--out", p(dir.path())])), 2);
}

#[test]
fn eval_single_and_ensemble() {
    let dir = TempDir::new().unwrap();
    let (data, test) = prepare(dir.path());
    let out = dir.path().join("run");
    let mut args = vec!["train", "--input", p(&data), "--out", p(&out), "--method", "simple-ft"];
    args.extend_from_slice(&QUICK);
    assert_eq!(code(&wct(&args)), 0);
    let c1 = out.join("seed-0/final-1.json");
    let c2 = out.join("seed-0/final-2.json");

    let single = wct(&["eval", "--checkpoint", p(&c1), "--data", p(&test)]);
    assert_eq!(code(&single), 0);
    let twin = wct(&["eval", "--checkpoint", p(&c1), "--checkpoint", p(&c1), "--data", p(&test)]);
    assert_eq!(stdout(&single), stdout(&twin));

    let report_path = dir.path().join("r.json");
    let pair = wct(&["eval", "--checkpoint", p(&c1), "--checkpoint", p(&c2), "--data", p(&test), "--out", p(&report_path)]);
    assert_eq!(code(&pair), 0);
    let text = fs::read_to_string(&report_path).unwrap();
    let report: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(format!("{}\n", serde_json::to_string_pretty(&report).unwrap()), text);
    assert_eq!(report.support.iter().sum::<usize>(), 60);

    assert_eq!(code(&wct(&["eval", "--checkpoint", p(&dir.path().join("none.json")), "--data", p(&test)])), 1);
    let wide = dir.path().join("wide.jsonl");
    wct(&["synth", "--classes", "3", "--per-class", "5", "--dim", "7", "--out", p(&wide)]);
    let mismatch = wct(&["eval", "--checkpoint", p(&c1), "--data", p(&wide)]);
    assert_eq!(code(&mismatch), 1);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("features"));
}
