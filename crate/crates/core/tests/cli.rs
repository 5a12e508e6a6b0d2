use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedbcd(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedbcd"));
    cmd.args(args).env_remove("FEDBCD_SEED");
    if let Some(s) = seed {
        cmd.env("FEDBCD_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = fedbcd(&["train", "--out", p(&out), "--set", "training.total_sync_rounds=12", "--set", "data.n=400"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sync_round,total_local_iters,loss,grad_norm_sq,eval_metric,messages,scalars,elapsed_ms");
    assert_eq!(lines.len(), 13);
    assert!(lines[12].starts_with("12,60,"));
    let m = manifest(&out);
    assert_eq!(m["status"], "completed");
    assert_eq!(m["config"]["training"]["total_sync_rounds"], 12);
    assert_eq!(m["config"]["training"]["eta0"], 0.1, "defaults are materialized");
    assert!(m["dataset_fingerprint"].as_str().unwrap().len() == 64);
    let params: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("params.json")).unwrap()).unwrap();
    assert_eq!(params["blocks"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fedbcd(&["train", "--out", p(tmp.path()), "--set", "training.local_iters=0"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Q >= 1"), "{}", stderr(&o));

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[training]\nlocal_iter = 3\n").unwrap();
    let o = fedbcd(&["train", "--config", p(&cfg), "--out", p(tmp.path())], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("local_iter"), "{}", stderr(&o));

    let o = fedbcd(&["train", "--out", p(tmp.path()), "--set", "training.seed=1"], Some("abc"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_keeps_partial_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("div");
    let cfg = tmp.path().join("div.toml");
    fs::write(
        &cfg,
        "[data]\ntask = \"linear_noisy\"\nn = 400\n\n[training]\nloss = \"squared\"\nlocal_iters = 100\neta0 = 5.0\ntotal_sync_rounds = 50\n",
    )
    .unwrap();
    let o = fedbcd(&["train", "--config", p(&cfg), "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let rows = fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count() - 1;
    assert!(rows < 50, "{rows}");
    assert_eq!(manifest(&out)["status"], "diverged");
}

#[test]
fn seed_env_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = |d: &Path| vec!["train".to_string(), "--out".into(), p(d).into(), "--set".into(), "training.total_sync_rounds=5".into()];
    let run = |d: &Path, s| {
        let v = args(d);
        fedbcd(&v.iter().map(String::as_str).collect::<Vec<_>>(), s)
    };
    assert_eq!(run(&a, Some("123")).status.code(), Some(0));
    assert_eq!(run(&b, None).status.code(), Some(0));
    assert_eq!(manifest(&a)["seed"], 123);
    assert_eq!(manifest(&b)["seed"], 7);
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn sweep_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = fedbcd(
        &["sweep", "--out", p(&out), "--q", "1,5,5", "--algos", "fedsgd,fedbcd_p", "--set", "training.eta0=0.05", "--set", "sweep.max_rounds=100"],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate Q"), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{csv}");
    assert!(rows[0].starts_with("fedsgd,1,"));
    // The Q = 1 cell of the parallel variant repeats FedSGD exactly.
    assert_eq!(rows[0].split(',').nth(2), rows[1].split(',').nth(2));

    let never = tmp.path().join("never");
    let o = fedbcd(
        &["sweep", "--out", p(&never), "--q", "1,2", "--algos", "fedbcd_p", "--set", "sweep.target_value=1.01", "--set", "sweep.max_rounds=5"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(never.join("sweep.csv")).unwrap();
    assert_eq!(csv, "algo,q,rounds_to_target\nfedbcd_p,1,6\nfedbcd_p,2,6\n");
    assert!(fs::read_to_string(never.join("sweep.txt")).unwrap().contains('—'));

    let o = fedbcd(&["sweep", "--out", p(&never), "--q", ""], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn audit_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let quick = ["--set", "audit.rounds=20", "--set", "data.n=500"];
    let ok = tmp.path().join("ok");
    let mut args = vec!["audit", "--out", p(&ok), "--party", "1", "--trials", "3"];
    args.extend(quick);
    let o = fedbcd(&args, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ok.join("audit.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["trials"].as_array().unwrap().len(), 3);
    assert_eq!(report["trials"][0]["rounds"].as_array().unwrap().len(), 20);

    let bad = tmp.path().join("bad");
    let mut args = vec!["audit", "--out", p(&bad), "--negative-control", "--trials", "1"];
    args.extend(quick);
    let o = fedbcd(&args, None);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(bad.join("audit.json")).unwrap()).unwrap();
    assert_eq!(report["trials"][0]["first_failure_round"], 0);

    let thin = tmp.path().join("thin");
    let o = fedbcd(
        &["audit", "--out", p(&thin), "--party", "0", "--set", "data.d=3", "--set", "data.widths=[1,2]"],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d_k >= 2"), "{}", stderr(&o));
}

#[test]
fn gen_data_feeds_csv_training() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = fedbcd(&["gen-data", "--out", p(&data), "--set", "data.n=300", "--set", "data.d=6", "--set", "training.parties=3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["party_0.csv", "party_1.csv", "party_2.csv", "labels.csv", "w_star.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let cfg = tmp.path().join("csv.toml");
    fs::write(
        &cfg,
        "[data]\nsource = \"csv\"\nparty_files = [\"data/party_0.csv\", \"data/party_1.csv\", \"data/party_2.csv\"]\nlabel_file = \"data/labels.csv\"\n\n[training]\nparties = 3\ntotal_sync_rounds = 10\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    let o = fedbcd(&["train", "--config", p(&cfg), "--out", p(&run)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Same samples as the synthetic generator, so the same fingerprint.
    let synth = tmp.path().join("synth");
    let o = fedbcd(
        &["train", "--out", p(&synth), "--set", "data.n=300", "--set", "data.d=6", "--set", "training.parties=3", "--set", "training.total_sync_rounds=10"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&run)["dataset_fingerprint"], manifest(&synth)["dataset_fingerprint"]);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(synth.join("metrics.csv")).unwrap());
}

#[test]
fn help_and_usage() {
    let o = fedbcd(&["--help"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["train", "sweep", "audit", "gen-data"] {
        assert!(text.contains(cmd), "{text}");
    }
    assert_eq!(fedbcd(&["frobnicate"], None).status.code(), Some(2));
}
