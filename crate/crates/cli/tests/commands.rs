use std::path::Path;
use std::process::{Command, Output};

fn starlk(cwd: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_starlk"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs");
    out
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = starlk(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = "\
[run]
seed = 4
precision = test

[data]
side = 32

[model]
num_classes = 3

[train]
epochs = 2
batch_size = 8
";

#[test]
fn full_workflow_on_a_generated_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path().join("cwd");
    std::fs::create_dir(&cwd).unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("run.ini");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = ok(
        &cwd,
        &[
            "gen-synthetic",
            "--out",
            data.to_str().unwrap(),
            "--num-classes",
            "3",
            "--images-per-class",
            "6",
        ],
    );
    assert!(out.contains("18 images"), "{out}");
    assert!(data.join("manifest.txt").exists());

    let root = format!("data.root={}", data.display());
    let common = ["--config", cfg, "--out", run.to_str().unwrap(), "--set", root.as_str()];
    let with = |cmd: &str, extra: &[&str]| -> Vec<String> {
        let mut v = vec![cmd.to_string()];
        v.extend(common.iter().map(|s| s.to_string()));
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let call = |args: Vec<String>| ok(&cwd, &args.iter().map(String::as_str).collect::<Vec<_>>());

    let out = call(with("train", &[]));
    assert!(out.contains("epoch    2"), "{out}");
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,loss,top1,lr"));
    assert_eq!(history.lines().count(), 3);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["history"].as_array().unwrap().len(), 2);

    call(with("eval", &[]));
    let first = std::fs::read(run.join("eval.json")).unwrap();
    call(with("eval", &[]));
    assert_eq!(first, std::fs::read(run.join("eval.json")).unwrap());

    call(with("roc", &[]));
    let roc = std::fs::read_to_string(run.join("roc.csv")).unwrap();
    let rows: Vec<Vec<f64>> = roc
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.windows(2).all(|w| w[0][0] <= w[1][0] && w[0][1] >= w[1][1] && w[0][2] <= w[1][2]));
    assert!(run.join("eer.json").exists());

    let out = call(with("occlusion", &["--ratios", "0,0.1", "--patch", "4"]));
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(std::fs::read_to_string(run.join("occlusion.csv")).unwrap().starts_with("ratio,accuracy"));

    call(with("cam", &[]));
    let cam = image::open(run.join("cam.png")).unwrap().to_luma8();
    assert_eq!(cam.dimensions(), (32, 32));

    let out = call(with("mix-preview", &["--lambda", "0.2,0.5", "--size", "32"]));
    assert!(out.contains("lambda=0.2000") && out.contains("path=vanilla"), "{out}");
    assert!(out.contains("path=star"), "{out}");
    assert!(run.join("starmask_l0.500.png").exists());

    // nothing leaks into the working directory
    assert_eq!(std::fs::read_dir(&cwd).unwrap().count(), 0);
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.ini");
    std::fs::write(&cfg, "[train]\nepohcs = 3\n").unwrap();
    let out = starlk(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("epohcs"), "{err}");

    let out = starlk(tmp.path(), &["mix-preview", "--lambda", "1.5", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let out = starlk(tmp.path(), &["eval", "--out", "missing", "--set", "model.num_classes=10"]);
    assert!(!out.status.success());
}
