use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_subsel");

fn subsel(args: &[&str], oracle_cmd: Option<&str>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("SUBSEL_ORACLE_CMD");
    if let Some(cmd) = oracle_cmd {
        c.env("SUBSEL_ORACLE_CMD", cmd);
    }
    c.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "k = 12\ndelta = 0.25\nagent = \"random_search\"\nrandom_search_rollouts = 40\nseeds = [0, 1]\n";

#[test]
fn run_writes_report_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = subsel(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(report["budget"], 3);
    let ids = fs::read_to_string(out.join("seed-0/selected_ids.txt")).unwrap();
    assert!(!ids.trim().is_empty());

    fs::remove_file(out.join("seed-0/selected_ids.txt")).unwrap();
    let o = subsel(&["export", "--report", out.join("report.json").to_str().unwrap()], None);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("seed-0/selected_ids.txt")).unwrap(), ids);
}

#[test]
fn seed_and_agent_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = subsel(
        &["run", "--config", &cfg, "--seed", "7", "--agent", "top_loss", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["agent"], "top_loss");
    assert_eq!(report["runs"][0]["seed"], 7);
}

#[test]
fn brute_matches_the_best_random_search() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(subsel(&["brute", "--config", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    assert!(subsel(&["run", "--config", &cfg, "--out", b.to_str().unwrap()], None).status.success());
    let load = |p: &Path| -> serde_json::Value { serde_json::from_slice(&fs::read(p.join("report.json")).unwrap()).unwrap() };
    let best = load(&a)["runs"][0]["result"]["score"].as_f64().unwrap();
    for run in load(&b)["runs"].as_array().unwrap() {
        assert!(run["result"]["score"].as_f64().unwrap() <= best + 1e-12);
    }
}

#[test]
fn sweep_over_delta_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k = 16\nagent = \"random\"\n");
    let out = dir.path().join("sweep");
    let o = subsel(
        &["sweep", "--config", &cfg, "--axis", "delta", "--values", "0.125,0.25", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let budgets: Vec<u64> = summary["cells"].as_array().unwrap().iter().map(|c| c["budget"].as_u64().unwrap()).collect();
    assert_eq!(budgets, vec![2, 4]);
    assert!(out.join("summary.csv").exists());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["k = 0\n", "delta = 3.0\n", "bogus = 1\n", "agent = \"nope\"\n"] {
        let cfg = write_config(dir.path(), body);
        let o = subsel(&["run", "--config", &cfg], None);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
    let o = subsel(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL);
    let o = subsel(&["sweep", "--config", &cfg, "--axis", "colour", "--values", "1"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = subsel(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some("exit 1"));
    assert_eq!(o.status.code(), Some(3));
    // answers the handshake, then dies on the first evaluation
    let script = r#"read l; echo '{"id":1,"protocol":1,"capabilities":["eval_loss","eval_acc","point_losses"]}'; read l; exit 4"#;
    let o = subsel(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], Some(script));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("seed-0/ERROR").exists());
}

#[test]
fn stub_oracle_through_env_reproduces_in_process_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(subsel(&["run", "--config", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    let stub = format!("{BIN} stub-oracle --config {cfg}");
    let o = subsel(&["run", "--config", &cfg, "--out", b.to_str().unwrap()], Some(&stub));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in ["seed-0", "seed-1"] {
        assert_eq!(
            fs::read(a.join(seed).join("selected_ids.txt")).unwrap(),
            fs::read(b.join(seed).join("selected_ids.txt")).unwrap()
        );
    }
}

#[test]
fn stub_oracle_answers_the_protocol() {
    use std::io::Write;
    let mut child = Command::new(BIN)
        .arg("stub-oracle")
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"id\":1,\"op\":\"hello\"}\n{\"id\":2,\"op\":\"eval_loss\",\"split\":\"val\",\"train_ids\":[]}\n{\"id\":3,\"op\":\"shutdown\"}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["protocol"], 1);
    // empty training set: f(loss) = 0, so loss = e^2.5 / 2
    let loss = lines[1]["loss"].as_f64().unwrap();
    assert!((loss - 2.5f64.exp() / 2.0).abs() < 1e-9, "{loss}");
    assert_eq!(lines[2]["ok"], true);
}
