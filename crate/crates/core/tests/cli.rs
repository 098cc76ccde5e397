use std::path::Path;
use std::process::{Command, Output};

use exbic::cli::{EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use exbic::io::ResultDocument;
use exbic::EvalReport;

const FAST: [&str; 6] = ["--restarts", "3", "--k", "10", "--delta-ladder", "1,0.5"];

fn exbic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exbic"))
        .args(args)
        .env_remove("EXBIC_THREADS")
        .output()
        .unwrap()
}

fn ten_blocks(dir: &Path) -> (String, String) {
    let m = dir.join("m.tsv").display().to_string();
    let t = dir.join("truth.json").display().to_string();
    let out = exbic(&["synth", "--preset", "ten-blocks", "--seed", "2", "--out-matrix", &m, "--out-truth", &t]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    (m, t)
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"))
}

#[test]
fn synth_bicluster_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (m, t) = ten_blocks(dir.path());
    let res = dir.path().join("res.json").display().to_string();
    let mut args = vec!["bicluster", "--input", &m, "--delta-frac", "0.05", "--out", &res];
    args.extend(FAST);
    assert_eq!(exbic(&args).status.code(), Some(EXIT_OK));
    let doc: ResultDocument = serde_json::from_slice(&std::fs::read(&res).unwrap()).unwrap();
    assert_eq!(doc.manifest.command, "bicluster");
    assert_eq!(doc.total_volume, doc.biclusters.iter().map(|b| b.volume).sum::<usize>());

    let out = exbic(&["eval", "--result", &res, "--truth", &t]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let report: EvalReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.n_discovered, doc.biclusters.len());
}

#[test]
fn output_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = ten_blocks(dir.path());
    let run = |threads: &str| {
        let mut args = vec!["--threads", threads, "bicluster", "--input", &m, "--delta-frac", "0.05"];
        args.extend(FAST);
        exbic(&args).stdout
    };
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("4"));
}

#[test]
fn manifest_replay_reproduces_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = ten_blocks(dir.path());
    let first = dir.path().join("a.json").display().to_string();
    let mut args = vec!["bicluster", "--input", &m, "--delta-frac", "0.05", "--seed", "5", "--out", &first];
    args.extend(FAST);
    assert_eq!(exbic(&args).status.code(), Some(EXIT_OK));
    let replay = exbic(&["bicluster", "--from-manifest", &first]);
    assert_eq!(replay.status.code(), Some(EXIT_OK));
    assert_eq!(replay.stdout, std::fs::read(&first).unwrap());

    // an edited input is refused
    std::fs::write(&m, "1\t2\n3\t4\n").unwrap();
    let stale = exbic(&["bicluster", "--from-manifest", &first]);
    assert_eq!(stale.status.code(), Some(EXIT_USAGE));
}

#[test]
fn gap_scan_writes_curve_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = ten_blocks(dir.path());
    let csv = dir.path().join("gap.csv").display().to_string();
    let summary = dir.path().join("gap.json").display().to_string();
    let mut args = vec![
        "gap-scan", "--input", &m, "--grid-points", "3", "--grid-max-frac", "0.1", "--replicates", "2",
        "--out", &csv, "--summary", &summary,
    ];
    args.extend(["--restarts", "2", "--k", "10", "--delta-ladder", "1"]);
    let out = exbic(&args);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta,v_data,v_ref_mean,v_ref_std,gap"));
    assert_eq!(lines.count(), 3);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    assert!(doc["selected_index"].as_u64().unwrap() < 3);
    assert_eq!(doc["manifest"]["gap"]["replicates"], 2);
}

#[test]
fn wdp_command_solves_bid_files() {
    let dir = tempfile::tempdir().unwrap();
    let bids = dir.path().join("bids.txt");
    std::fs::write(&bids, "# price goods\n5 0 1\n3 0\n3 1\n4 2\n").unwrap();
    let out = exbic(&["wdp", "--bids", bids.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let alloc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(alloc["revenue"], 10.0);
    assert_eq!(alloc["winners"], serde_json::json!([1, 2, 3]));
}

#[test]
fn preprocess_keeps_most_variable_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    let rows: Vec<String> = (0..5)
        .map(|i| (0..10).map(|j| ((i * j * 37) % 2000).to_string()).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(&input, rows.join("\n")).unwrap();
    let out_path = dir.path().join("clean.csv");
    let out = exbic(&[
        "preprocess", "--input", input.to_str().unwrap(), "--top-frac", "0.3", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    for line in text.lines() {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|v| (100.0..=1600.0).contains(v)));
    }
}

#[test]
fn failures_map_to_exit_codes_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();

    let out = exbic(&["bicluster", "--delta", "0.1"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr_error(&out)["message"].is_string());

    let out = exbic(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert_eq!(stderr_error(&out)["error"], "usage");

    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "1\t2\n3\tx\n").unwrap();
    let out = exbic(&["bicluster", "--input", bad.to_str().unwrap(), "--delta", "0.1"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(stderr_error(&out)["message"].as_str().unwrap().contains('2'));

    let missing = dir.path().join("absent.tsv");
    let out = exbic(&["bicluster", "--input", missing.to_str().unwrap(), "--delta", "0.1"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));

    let small = dir.path().join("small.tsv");
    std::fs::write(&small, "1\t2\t3\n4\t5\t6\n").unwrap();
    let out = exbic(&["bicluster", "--input", small.to_str().unwrap(), "--delta", "0.1"]);
    assert_eq!(out.status.code(), Some(EXIT_INFEASIBLE));

    let out = exbic(&["--threads", "0", "wdp", "--bids", "x"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}
