use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn qruns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qruns"))
        .args(args)
        .env_remove("QRUNS_THREADS")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = qruns(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn csv(args: &[&str]) -> Vec<Vec<String>> {
    let mut full = args.to_vec();
    full.extend(["--format", "csv"]);
    let out = qruns(&full);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn code(args: &[&str]) -> i32 {
    qruns(args).status.code().expect("exit code")
}

#[test]
fn pmf_all_methods_agree() {
    let doc = json(&[
        "pmf", "--n", "5", "--k", "2", "--theta", "0.5", "--q", "0.5", "--method", "all",
    ]);
    assert_eq!(doc["metadata"]["tool"], "qruns");
    assert_eq!(doc["payload"]["methods"].as_array().unwrap().len(), 3);
    assert!(doc["payload"]["max_deviation"].as_f64().unwrap() < 1e-9);
    let rows = csv(&[
        "pmf", "--n", "5", "--k", "2", "--theta", "0.5", "--q", "0.5", "--method", "all",
    ]);
    assert_eq!(
        rows[0],
        ["x", "exact", "recursive", "corollary", "max_deviation"]
    );
    assert_eq!(rows.len(), 1 + 3);
}

#[test]
fn pmf_classical_column_only_at_q_one() {
    let doc = json(&[
        "pmf", "--n", "7", "--k", "2", "--theta", "0.4", "--q", "1", "--method", "all",
    ]);
    assert_eq!(doc["payload"]["methods"].as_array().unwrap().len(), 4);
    assert_eq!(
        code(&[
            "pmf",
            "--n",
            "7",
            "--k",
            "2",
            "--theta",
            "0.4",
            "--q",
            "0.9",
            "--method",
            "classical"
        ]),
        2
    );
}

#[test]
fn pmf_without_room_for_a_run() {
    let rows = csv(&[
        "pmf", "--n", "3", "--k", "5", "--theta", "0.5", "--q", "0.5",
    ]);
    assert_eq!(rows, vec![vec!["x", "p"], vec!["0", "1.0"]]);
}

#[test]
fn json_and_csv_carry_the_same_numbers() {
    let args = [
        "pmf", "--n", "12", "--k", "2", "--theta", "0.37", "--q", "0.83",
    ];
    let doc = json(&args);
    let rows = csv(&args);
    for (row, obj) in rows[1..]
        .iter()
        .zip(doc["payload"]["rows"].as_array().unwrap())
    {
        let from_csv: f64 = row[1].parse().unwrap();
        assert_eq!(from_csv.to_bits(), obj["p"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn usage_and_domain_errors() {
    assert_eq!(
        code(&["pmf", "--n", "5", "--k", "2", "--theta", "1.5", "--q", "0.5"]),
        2
    );
    assert_eq!(
        code(&["pmf", "--n", "5", "--k", "0", "--theta", "0.5", "--q", "0.5"]),
        2
    );
    assert_eq!(
        code(&["pmf", "--n", "5", "--k", "2", "--theta", "0.5", "--q", "0"]),
        2
    );
    assert_eq!(
        code(&["pmf", "--n", "5", "--k", "2", "--theta", "0.5", "--q", "0.5", "--method", "bogus"]),
        1
    );
    assert_eq!(code(&["pmf", "--n", "5"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
    let out = qruns(&[
        "pmf", "--n", "5", "--k", "2", "--theta", "1.5", "--q", "0.5",
    ]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

#[test]
fn moments_paths_agree() {
    for k in 1..4 {
        let ks = k.to_string();
        let doc = json(&[
            "moments", "--n", &ks, "--k", &ks, "--theta", "0.3", "--q", "0.7",
        ]);
        let p = &doc["payload"];
        let want = 0.3f64.powi(k);
        assert!((p["mean_closed"].as_f64().unwrap() - want).abs() < 1e-15);
        assert!((p["rho"][1].as_f64().unwrap() - want).abs() < 1e-15);
    }
    let doc = json(&[
        "moments", "--n", "14", "--k", "3", "--theta", "0.6", "--q", "0.8",
    ]);
    assert!(doc["payload"]["mean_deviation"].as_f64().unwrap() < 1e-9);
    assert!(doc["payload"]["variance_deviation"].as_f64().unwrap() < 1e-9);
    assert!(doc["payload"]["gamma1"].is_number());
    let doc = json(&[
        "moments", "--n", "3", "--k", "3", "--theta", "1", "--q", "0.5",
    ]);
    assert!(doc["payload"]["gamma1"].is_null());
    assert!(doc["payload"]["gamma2"].is_null());
    assert_eq!(doc["payload"]["degenerate_variance"], true);
    assert_eq!(
        code(&["moments", "--n", "5", "--k", "2", "--theta", "0.5", "--q", "0.5", "--order", "1"]),
        2
    );
}

#[test]
fn verify_passes_and_fails_honestly() {
    let doc = json(&[
        "verify", "--n", "10", "--k", "2", "--theta", "0.6", "--q", "0.8",
    ]);
    assert_eq!(doc["payload"]["pass"], true);
    assert!(doc["payload"]["max_deviation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(
        code(&[
            "verify",
            "--n",
            "10",
            "--k",
            "2",
            "--theta",
            "0.6",
            "--q",
            "0.8",
            "--tolerance",
            "1e-300"
        ]),
        4
    );
    assert_eq!(
        code(&["verify", "--n", "21", "--k", "2", "--theta", "0.6", "--q", "0.8"]),
        2
    );
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.txt");
    let p = path.to_str().unwrap();
    let args = [
        "simulate",
        "--n",
        "15",
        "--k",
        "3",
        "--theta",
        "0.5",
        "--q",
        "0.8",
        "--draws",
        "1000",
        "--seed",
        "9",
        "--save-sample",
        p,
    ];
    let a = json(&args);
    let b = json(&args);
    assert_eq!(a, b);
    assert_eq!(a["metadata"]["seed"], 9);
    assert_eq!(a["payload"]["counts"].as_array().unwrap().len(), 1000);
    assert!(fs::read_to_string(&path).unwrap().starts_with("15 3 0.8\n"));
    let doc = json(&["mle", "--input", p, "--alpha", "0.05"]);
    let est = doc["payload"]["estimate"]["theta_hat"].as_f64().unwrap();
    let lo = doc["payload"]["interval"]["lower"].as_f64().unwrap();
    let hi = doc["payload"]["interval"]["upper"].as_f64().unwrap();
    assert!(lo <= est && est <= hi);
    let rows = csv(&["mle", "--input", p]);
    assert_eq!(rows[0][4], "theta_hat");
    assert_eq!(rows[1][4].parse::<f64>().unwrap(), est);
}

#[test]
fn simulate_sequences_match_counts() {
    let rows = csv(&[
        "simulate",
        "--n",
        "12",
        "--k",
        "2",
        "--theta",
        "0.6",
        "--q",
        "0.9",
        "--draws",
        "20",
        "--sequences",
    ]);
    assert_eq!(rows[0], ["draw", "sequence", "count"]);
    for row in &rows[1..] {
        assert_eq!(row[1].len(), 12);
        let runs = row[1].split('0').filter(|b| b.len() == 2).count();
        assert_eq!(runs.to_string(), row[2]);
    }
}

#[test]
fn mle_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "15 3 0.8\n1\nx\n").unwrap();
    assert_eq!(code(&["mle", "--input", bad.to_str().unwrap()]), 2);
    fs::write(&bad, "15 3 0.8\n1\n").unwrap();
    assert_eq!(
        code(&["mle", "--input", bad.to_str().unwrap(), "--alpha", "1.5"]),
        2
    );
    assert_eq!(
        code(&[
            "mle",
            "--input",
            dir.path().join("missing.txt").to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn mcstudy_flag_grid_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let o = out.to_str().unwrap();
    let rows = csv(&[
        "mcstudy",
        "--q",
        "0.8",
        "--n",
        "15",
        "--k",
        "3",
        "--theta",
        "0.3,0.6",
        "--sample-size",
        "100",
        "--m",
        "20",
        "--seed",
        "5",
        "--out-dir",
        o,
    ]);
    assert_eq!(
        rows[0].join(","),
        "q,n,k,theta0,N,M,bias,se,rmse,cp,mw,boundary_rate"
    );
    assert_eq!(rows.len(), 3);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let stdout_csv: Vec<String> = rows.iter().map(|r| r.join(",")).collect();
    assert_eq!(report.lines().collect::<Vec<_>>(), stdout_csv);
    let reps = fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert!(reps.starts_with("cell_id,replicate,theta_hat,ci_lower,ci_upper,flags\n"));
    assert_eq!(reps.lines().count(), 1 + 40);
    let plot = fs::read_to_string(out.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 3 * 2);

    let config = dir.path().join("study.toml");
    fs::write(&config, "q = [0.8]\nn = [15]\nk = [3]\ntheta = [0.3, 0.6]\nsample_size = [100]\nreplicates = 20\nseed = 5\n").unwrap();
    let from_file = csv(&["mcstudy", "--config", config.to_str().unwrap()]);
    assert_eq!(from_file, rows);

    fs::write(&config, "q = [0.8]\nbogus = 1\n").unwrap();
    assert_eq!(code(&["mcstudy", "--config", config.to_str().unwrap()]), 2);
    assert_eq!(code(&["mcstudy"]), 1);
    assert_eq!(code(&["mcstudy", "--paper-grid", "--q", "0.5"]), 1);
    assert_eq!(code(&["mcstudy", "--q", "0.8", "--n", "15"]), 1);
    assert_eq!(
        code(&[
            "mcstudy",
            "--q",
            "0.8",
            "--n",
            "15",
            "--k",
            "3",
            "--theta",
            "0.5",
            "--sample-size",
            "10",
            "--m",
            "1"
        ]),
        2
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "mcstudy",
        "--q",
        "0.6",
        "--n",
        "11",
        "--k",
        "3",
        "--theta",
        "0.4",
        "--sample-size",
        "100",
        "--m",
        "30",
        "--format",
        "csv",
    ];
    let one = {
        let mut a = args.to_vec();
        a.extend(["--threads", "1"]);
        qruns(&a).stdout
    };
    let env = Command::new(env!("CARGO_BIN_EXE_qruns"))
        .args(args)
        .env("QRUNS_THREADS", "3")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert_eq!(one, env.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_qruns"))
        .args(args)
        .env("QRUNS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
