use std::collections::BTreeMap;
use std::path::Path;

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["lendsim"];
    full.extend_from_slice(args);
    lendsim_cli::run(full)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn invalid_fields_exit_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(
        cli(&[
            "recommend",
            "--alpha",
            "0.5",
            "--r-step",
            "0",
            "--out-dir",
            o
        ]),
        2
    );
    assert_eq!(
        cli(&[
            "recommend",
            "--alpha",
            "1.5",
            "--c-min",
            "4",
            "--out-dir",
            o
        ]),
        2
    );
    assert_eq!(
        cli(&["simulate", "--dist-a", "gauss:0,1", "--out-dir", o]),
        2
    );
    assert_eq!(
        cli(&[
            "reproduce-figure",
            "--which",
            "grid",
            "--efficiency-mode",
            "nope",
            "--out-dir",
            o
        ]),
        2
    );
    assert!(!out.exists());
}

#[test]
fn parse_errors_and_unknown_flags_exit_2() {
    assert_eq!(cli(&["simulate", "--k", "abc"]), 2);
    assert_eq!(cli(&["simulate", "--bogus"]), 2);
    assert_eq!(
        cli(&[
            "--threads",
            "0",
            "analyze-markov",
            "--pi0",
            "1/2",
            "--k",
            "1/10",
            "--c",
            "1",
            "--beta",
            "7/20"
        ]),
        2
    );
    // no upward step: the chain is not absorbing
    assert_eq!(
        cli(&[
            "analyze-markov",
            "--pi0",
            "1/2",
            "--k",
            "0",
            "--c",
            "1",
            "--beta",
            "1/4"
        ]),
        2
    );
}

#[test]
fn missing_input_file_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("none.csv");
    let m = missing.to_str().unwrap();
    assert_eq!(cli(&["dominance-check", "--file-a", m, "--file-b", m]), 4);
    let model = tmp.path().join("m.json");
    assert_eq!(
        cli(&[
            "train-risk",
            "--in",
            m,
            "--out-model",
            model.to_str().unwrap()
        ]),
        4
    );
    assert!(!model.exists());
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let args = [
            "recommend",
            "--alpha",
            "0.2",
            "0.8",
            "--n",
            "120",
            "--seeds",
            "3",
            "--seed",
            "11",
            "--out-dir",
            dir.to_str().unwrap(),
        ];
        assert_eq!(cli(&args), 0);
        snapshot(&dir)
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert!(a.contains_key("grid_alpha_0.2.json") && a.contains_key("grid_alpha_0.8.csv"));
    assert!(a.contains_key("config.toml"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let args = [
        "simulate",
        "--n",
        "300",
        "--horizon",
        "15",
        "--c-d",
        "0.5",
        "--seed",
        "9",
        "--agents",
        "--out-dir",
        first.to_str().unwrap(),
    ];
    assert_eq!(cli(&args), 0);
    let config = first.join("config.toml");
    let text = std::fs::read_to_string(&config).unwrap();
    assert!(text.contains("command = \"simulate\""));
    assert!(
        text.contains("beta = 0.5"),
        "defaults are resolved:\n{text}"
    );

    let second = tmp.path().join("second");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            second.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(snapshot(&first), snapshot(&second));

    // the manifest can stand in for the config file; command-line flags win
    let third = tmp.path().join("third");
    let manifest = first.join("manifest.json");
    assert_eq!(
        cli(&[
            "--config",
            manifest.to_str().unwrap(),
            "--seed",
            "10",
            "--out-dir",
            third.to_str().unwrap()
        ]),
        0
    );
    assert_ne!(
        snapshot(&first)["summary.csv"],
        snapshot(&third)["summary.csv"]
    );
    let echoed = std::fs::read_to_string(third.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 10"));
}

#[test]
fn manifest_lists_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("mm");
    let args = [
        "reproduce-figure",
        "--which",
        "max-mean",
        "--n",
        "200",
        "--seeds",
        "4",
        "--out-dir",
        dir.to_str().unwrap(),
    ];
    assert_eq!(cli(&args), 0);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "reproduce-figure");
    assert_eq!(m["config"]["dist-a"], "beta:8,3");
    let names: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["max_mean_curve.csv", "max_mean_curve.json", "config.toml"]
    );
    let csv = std::fs::read_to_string(dir.join("max_mean_curve.csv")).unwrap();
    assert!(csv.starts_with("c,beta_hat,max_mean_a,max_mean_d,se_a,se_d\n"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn sample_then_dominance_check() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, d) = (tmp.path().join("a.csv"), tmp.path().join("d.csv"));
    assert_eq!(
        cli(&[
            "sample",
            "--a",
            "4",
            "--b",
            "8",
            "--n",
            "5000",
            "--seed",
            "2",
            "--out",
            a.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "sample",
            "--a",
            "3",
            "--b",
            "8",
            "--n",
            "5000",
            "--seed",
            "2",
            "--out",
            d.to_str().unwrap()
        ]),
        0
    );
    let out = tmp.path().join("dom");
    let fa = format!("{}#score", a.display());
    assert_eq!(
        cli(&[
            "dominance-check",
            "--file-a",
            &fa,
            "--file-b",
            d.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap()
        ]),
        0
    );
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("dominance.json")).unwrap()).unwrap();
    assert_eq!(r["dominates"], true);
    // a column that does not exist is an input error
    let bad = format!("{}#nope", a.display());
    assert_eq!(
        cli(&[
            "dominance-check",
            "--file-a",
            &bad,
            "--file-b",
            d.to_str().unwrap()
        ]),
        2
    );
}
