use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn topohrl(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topohrl"))
        .arg("--data-dir")
        .arg(data)
        .args(["--workers", "1"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn generate(data: &Path, dir: &str, regime: &str, count: usize) {
    let out = data.join(dir);
    ok(&topohrl(
        data,
        &["generate", "--regime", regime, "--count", &count.to_string(), "--steps", "576", "--seed", "4", "--out", out.to_str().unwrap()],
    ));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "a", "contingencies", 20);
    generate(tmp.path(), "b", "contingencies", 20);
    let (a, b) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    assert_eq!(a.len(), 20 * 3 + 2);
    assert!(a == b, "two runs with the same seed differ");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    let count = |k: &str| manifest[k].as_array().unwrap().len();
    assert_eq!(count("train") + count("val") + count("test"), 20);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = topohrl(tmp.path(), &["train", "--agent", "greedy"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not trainable"));
    assert_eq!(topohrl(tmp.path(), &["train", "--agent", "ppo"]).status.code(), Some(1));
    assert_eq!(topohrl(tmp.path(), &["generate", "--count", "0"]).status.code(), Some(1));
    // a missing scenario set is a runtime failure, not a usage error
    assert_eq!(topohrl(tmp.path(), &["evaluate", "--agent", "greedy"]).status.code(), Some(2));
}

#[test]
fn evaluation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    generate(data, "s", "no_contingencies", 20);
    let run = |out: &str| {
        let table = ok(&topohrl(
            data,
            &["evaluate", "--agent", "greedy", "--scenarios", data.join("s").to_str().unwrap(), "--set", "all", "--out", data.join(out).to_str().unwrap(), "--records"],
        ));
        assert!(table.contains("Mean episode length"));
        fs::read(data.join(out).join("report.json")).unwrap()
    };
    assert_eq!(run("e1"), run("e2"));
    assert_eq!(fs::read_dir(data.join("e1/records")).unwrap().count(), 20);
}

#[test]
fn catalog_dump_lists_106_actions() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(&topohrl(tmp.path(), &["catalog", "dump"]));
    assert!(text.starts_with("106 actions, 7 controllable substations"));
    let json: serde_json::Value = serde_json::from_str(&ok(&topohrl(tmp.path(), &["catalog", "dump", "--json"]))).unwrap();
    assert!(json.to_string().len() > 100);
}

#[test]
fn short_training_run_writes_checkpoints_metrics_and_a_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    // buckets of five leave one validation scenario each
    generate(data, "s", "contingencies", 50);
    let cfg = data.join("exp.toml");
    fs::write(
        &cfg,
        r#"
agent = "ppo_substation"
regime = "contingencies"
seeds = [0]
interactions = 256
eval_interval = 128

[train]
hidden = [16]

[train.ppo]
batch = 64
minibatch = 32
sgd_iters = 2
"#,
    )
    .unwrap();
    let runs = data.join("runs");
    ok(&topohrl(
        data,
        &["train", "--config", cfg.to_str().unwrap(), "--scenarios", data.join("s").to_str().unwrap(), "--out", runs.to_str().unwrap()],
    ));
    let seed = runs.join("ppo_substation/seed_0");
    for f in ["best.ckpt", "last.ckpt", "metrics.jsonl", "summary.json", "train_config.json"] {
        assert!(seed.join(f).exists(), "{f} missing");
    }
    let rows = fs::read_to_string(seed.join("metrics.jsonl")).unwrap();
    assert!(rows.lines().count() >= 1);
    let inspect = ok(&topohrl(data, &["checkpoint", "inspect", seed.join("best.ckpt").to_str().unwrap()]));
    assert!(inspect.contains("actor"));
    let described = ok(&topohrl(data, &["agent", "describe", "--agent", "ppo_substation", "--checkpoint", seed.join("best.ckpt").to_str().unwrap()]));
    assert!(described.contains("greedy search"));
    // the checkpoint of one agent kind is refused by another
    let wrong = topohrl(data, &["agent", "describe", "--agent", "ppo_native", "--checkpoint", seed.join("best.ckpt").to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));

    let svg = data.join("curves.svg");
    ok(&topohrl(data, &["plot", runs.to_str().unwrap(), "--out", svg.to_str().unwrap()]));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<svg"));
}
