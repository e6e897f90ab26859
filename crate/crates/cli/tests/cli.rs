use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5

[data]
input_dim = 6
separation = 3.0

[[data.clients]]
client_id = "left"
classes = 3
samples = 90

[[data.clients]]
client_id = "right"
classes = 4
samples = 120
shift = 0.5

[train]
rounds = 1
hidden = [8]
"#;

fn feduaa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feduaa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &Path, cmd: &str, config: &Path, out: &str) -> Output {
    let out = dir.join(out);
    feduaa(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_default_writes_five_clients_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = feduaa(&["generate", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csvs: Vec<_> = fs::read_dir(out.join("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv") && n != "manifest.csv")
        .collect();
    assert_eq!(csvs.len(), 5);
    let manifest = fs::read_to_string(out.join("data/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 6);
    assert!(out.join("resolved_config.toml").exists());
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    for out in ["a", "b"] {
        assert!(run_in(dir.path(), "generate", &cfg, out).status.success());
    }
    for file in ["left.csv", "right.csv", "manifest.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a/data").join(file)).unwrap(),
            fs::read(dir.path().join("b/data").join(file)).unwrap()
        );
    }
}

#[test]
fn duplicate_client_id_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("client_id = \"right\"", "client_id = \"left\"");
    let cfg = write_config(dir.path(), "dup.toml", &text);
    let o = run_in(dir.path(), "generate", &cfg, "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("left"));
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &format!("{SMALL}\nwarmup = 3\n"));
    let o = run_in(dir.path(), "train", &cfg, "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warmup"));
}

#[test]
fn missing_config_file_exits_3() {
    let o = feduaa(&["train", "--config", "/nonexistent/feduaa.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_one_round_two_clients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let o = run_in(dir.path(), "train", &cfg, "run");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let last = stdout(&o).lines().last().unwrap().to_string();
    assert!(last.starts_with("average_auc="), "{last}");

    let run = dir.path().join("run");
    let log = fs::read_to_string(run.join("round_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2);
    assert!(log.starts_with(
        "round,client_id,l_ice,l_kl,l_uce,l_tce,total,theta,weight,train_auc,test_auc"
    ));
    let eval = fs::read_to_string(run.join("eval_report.csv")).unwrap();
    let avg: f64 = last["average_auc=".len()..].parse().unwrap();
    assert!(eval
        .lines()
        .last()
        .unwrap()
        .starts_with(&format!("average,{avg},")));
    for ckpt in ["global_encoder.ckpt", "left.ckpt", "right.ckpt"] {
        assert!(run.join("checkpoints").join(ckpt).exists());
    }
}

#[test]
fn train_from_generated_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    assert!(run_in(dir.path(), "generate", &cfg, "gen").status.success());
    let manifest = dir.path().join("gen/data/manifest.csv");
    let text = SMALL.replace(
        "[data]\n",
        &format!("[data]\nmanifest = {:?}\n", manifest.to_str().unwrap()),
    );
    let from_manifest = write_config(dir.path(), "manifest.toml", &text);
    let a = run_in(dir.path(), "train", &from_manifest, "m");
    let b = run_in(dir.path(), "train", &cfg, "g");
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    assert_eq!(
        fs::read(dir.path().join("m/round_log.csv")).unwrap(),
        fs::read(dir.path().join("g/round_log.csv")).unwrap()
    );
}

#[test]
fn uaw_and_static_share_initial_broadcast_but_not_logs() {
    let dir = tempfile::tempdir().unwrap();
    let uaw = write_config(dir.path(), "uaw.toml", SMALL);
    let uniform = write_config(
        dir.path(),
        "uniform.toml",
        &format!("{SMALL}\n[ablation]\naggregation = \"static_uniform\"\n"),
    );
    assert!(run_in(dir.path(), "train", &uaw, "u").status.success());
    assert!(run_in(dir.path(), "train", &uniform, "s").status.success());
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("round_log.csv")).unwrap();
    assert_ne!(read("u"), read("s"));
    // eval_initial reflects the round-0 broadcast state
    let initial = |d: &str| fs::read(dir.path().join(d).join("eval_initial.csv")).unwrap();
    assert_eq!(initial("u"), initial("s"));
}

#[test]
fn rerun_is_byte_identical_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    for out in ["a", "b"] {
        assert!(run_in(dir.path(), "train", &cfg, out).status.success());
    }
    for file in [
        "round_log.csv",
        "reports.csv",
        "eval_report.csv",
        "checkpoints/left.ckpt",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    let out = dir.path().join("c");
    let o = feduaa(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.starts_with("seed = 6"));
}

#[test]
fn gradcheck_exit_codes() {
    let ok = feduaa(&["gradcheck", "--cases", "100"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    for term in ["l_ice", "l_kl", "l_tce", "total"] {
        assert!(stdout(&ok).contains(&format!("{term} max_rel_error=")));
    }
    let flipped = feduaa(&["gradcheck", "--cases", "5", "--inject-tce-sign-flip"]);
    assert_eq!(flipped.status.code(), Some(1));
    assert!(stdout(&flipped).contains("case seed"));
    assert_eq!(
        feduaa(&["gradcheck", "--cases", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn noise_sweep_rows_and_clean_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let o = run_in(dir.path(), "noise-sweep", &cfg, "sweep");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep/noise_sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(csv.lines().next(), Some("sigma2,method,average_auc"));
    for method in ["uaw", "static_uniform", "singleset"] {
        assert_eq!(rows.iter().filter(|r| r[1] == method).count(), 4);
        let clean = fs::read_to_string(
            dir.path()
                .join("sweep/runs")
                .join(method)
                .join("eval_report.csv"),
        )
        .unwrap();
        let avg = clean
            .lines()
            .last()
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .to_string();
        let row = rows.iter().find(|r| r[0] == "0" && r[1] == method).unwrap();
        assert_eq!(row[2], avg);
    }

    // existing runs are reused, so a rerun is identical
    assert!(run_in(dir.path(), "noise-sweep", &cfg, "sweep")
        .status
        .success());
    assert_eq!(
        fs::read_to_string(dir.path().join("sweep/noise_sweep.csv")).unwrap(),
        csv
    );

    fs::remove_file(
        dir.path()
            .join("sweep/runs/singleset/checkpoints/right.ckpt"),
    )
    .unwrap();
    assert_eq!(
        run_in(dir.path(), "noise-sweep", &cfg, "sweep")
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn sigmas_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("s");
    let o = feduaa(&[
        "noise-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sigmas",
        "0,3",
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("noise_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}
