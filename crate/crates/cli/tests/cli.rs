mod common;

use common::{ok, run, stderr};

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "gen",
            "group-bias",
            "--k",
            "3",
            "--n",
            "3000",
            "--seed",
            "5",
            "-o",
            "gb.csv",
        ],
    );
    dir
}

#[test]
fn flag_misuse_exits_with_usage_code() {
    let dir = setup();
    let p = dir.path();
    let cases: &[(&[&str], &str)] = &[
        (
            &["calibrate", "ours", "--in", "gb.csv", "--m", "10", "-o", "a.json"],
            "discretization-free",
        ),
        (
            &["calibrate", "mcboost", "--in", "gb.csv", "-o", "a.json"],
            "requires --m",
        ),
        (
            &["calibrate", "lsboost", "--in", "gb.csv", "-o", "a.json"],
            "requires --m",
        ),
        (
            &[
                "calibrate",
                "multiaccurate",
                "--in",
                "gb.csv",
                "--lr",
                "0.5",
                "-o",
                "a.json",
            ],
            "--lr",
        ),
        (
            &["calibrate", "ours", "--in", "gb.csv", "--lr", "0", "-o", "a.json"],
            "learning rate",
        ),
        (&["gen", "xor", "--gamma", "1.5", "-o", "x.csv"], "gamma"),
        (
            &["sweep", "ours", "--in", "gb.csv", "--folds", "0", "-o", "s.csv"],
            "--folds",
        ),
        (&["evaluate", "--in", "gb.csv", "-o", "e.csv"], "--model"),
        (&["frobnicate"], "frobnicate"),
    ];
    for (args, needle) in cases {
        let out = run(p, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn bad_input_exits_with_data_code() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("bad.csv"), "y,f0,g_a\n1,1.5,1\n").unwrap();
    for args in [
        &["calibrate", "ours", "--in", "missing.csv", "-o", "a.json"][..],
        &["calibrate", "ours", "--in", "bad.csv", "-o", "a.json"][..],
        &["evaluate", "--model", "missing.json", "--in", "gb.csv", "-o", "e.csv"][..],
    ] {
        let out = run(p, args);
        assert_eq!(out.status.code(), Some(3), "{args:?}: {}", stderr(&out));
        let err = stderr(&out);
        assert!(
            err.starts_with("error: ") && err.trim_end().lines().count() == 1,
            "{err}"
        );
    }
}

#[test]
fn evaluate_writes_one_row_per_m() {
    let dir = setup();
    let p = dir.path();
    ok(
        p,
        &[
            "calibrate",
            "ours",
            "--in",
            "gb.csv",
            "--max-trees",
            "40",
            "-o",
            "ours.json",
        ],
    );
    ok(
        p,
        &[
            "evaluate",
            "--model",
            "ours.json",
            "--in",
            "gb.csv",
            "--m-sweep",
            "30,10,20,10",
            "-o",
            "ev.csv",
        ],
    );
    let text = std::fs::read_to_string(p.join("ev.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "method,m,nonempty_range,mc_error,squared_loss,epsilon_round,worst_group_binned_ece,multiaccuracy_error"
    );
    let ms: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ms, ["10", "20", "30"]);
    assert!(lines[1..].iter().all(|l| l.starts_with("ours,")));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("ev.json")).unwrap()).unwrap();
    assert_eq!(json["reports"].as_array().unwrap().len(), 3);

    // grid models only report their native size
    ok(
        p,
        &["calibrate", "mcboost", "--in", "gb.csv", "--m", "20", "-o", "mcb.json"],
    );
    ok(
        p,
        &["evaluate", "--model", "mcb.json", "--in", "gb.csv", "-o", "ev2.csv"],
    );
    let text = std::fs::read_to_string(p.join("ev2.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("mcboost,20,"));
}

#[test]
fn trace_ends_with_a_summary_carrying_the_config() {
    let dir = setup();
    let p = dir.path();
    ok(
        p,
        &[
            "calibrate",
            "ours",
            "--in",
            "gb.csv",
            "--max-trees",
            "25",
            "--seed",
            "3",
            "-o",
            "m.json",
        ],
    );
    let trace = std::fs::read_to_string(p.join("m.trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let summary = lines.last().unwrap();
    assert_eq!(summary["config"]["seed"], 3);
    assert_eq!(summary["config"]["settings"]["max_trees"], 25);
    assert!(summary["kept_trees"].as_u64().unwrap() <= 25);
    assert!(lines[..lines.len() - 1].iter().all(|l| l["iteration"].is_u64()));
}

#[test]
fn sweep_ranks_and_writes_the_winner() {
    let dir = setup();
    let p = dir.path();
    ok(
        p,
        &[
            "sweep",
            "multiaccurate",
            "--in",
            "gb.csv",
            "--folds",
            "3",
            "-o",
            "s.csv",
        ],
    );
    let text = std::fs::read_to_string(p.join("s.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let means: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]));
    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("s.best.json")).unwrap()).unwrap();
    assert_eq!(best["params"], rows[0][2]);

    let out = run(
        p,
        &[
            "sweep",
            "ours",
            "--in",
            "gb.csv",
            "--lr-grid",
            "0.1",
            "--subsample-grid",
            "1.5",
            "-o",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
