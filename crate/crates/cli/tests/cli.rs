use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emcurve::{NestedClusterModel, PointSet};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emcurve"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_curve(path: PathBuf) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("abscissa,value"));
    lines
        .map(|l| {
            let (a, v) = l.split_once(',').unwrap();
            (a.parse().unwrap(), v.parse().unwrap())
        })
        .collect()
}

fn toy_model(dir: &Path) {
    ok(dir, &["generate", "--family", "toy", "-o", "toy.csv", "--partition-out", "part.json"]);
    ok(dir, &["fit", "-i", "toy.csv", "--partition", "part.json", "--levels", "0.5,0.3,0.06", "-o", "model.json"]);
}

#[test]
fn generate_heavy_tail() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--family", "heavy-tail", "-n", "1000", "--seed", "7", "-o", "ht.csv"]);
    let pts = PointSet::read_csv_path(dir.path().join("ht.csv")).unwrap();
    assert_eq!((pts.len(), pts.dim()), (1000, 2));
    let config = std::fs::read_to_string(dir.path().join("ht.csv.config.json")).unwrap();
    assert!(config.contains("\"timestamp\""));
    assert!(config.contains("heavy-tail"));
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--family", "heavy-tail", "-n", "500", "--seed", "3", "-o", "a.csv"]);
    ok(dir.path(), &["generate", "--family", "heavy-tail", "-n", "500", "--seed", "3", "-o", "b.csv"]);
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["generate", "--family", "heavy-tail", "-n", "0", "-o", "x.csv"]).status.code(), Some(1));
    assert_eq!(run(d, &["generate", "--family", "cauchy", "-n", "5", "-o", "x.csv"]).status.code(), Some(1));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    toy_model(d);
    let out = run(d, &["curve", "--kind", "mv-empirical", "-m", "model.json", "--eval-input", "toy.csv", "--grid", "1.5:1.5:1:linear", "-o", "c.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(d, &["curve", "--kind", "em-oracle", "--grid", "0.1:0.5:3:linear", "-o", "c.csv"]);
    assert_eq!(out.status.code(), Some(1), "missing oracle");
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.csv"), "").unwrap();
    assert_eq!(run(d, &["fit", "-i", "empty.csv", "--grid-side", "1", "-o", "m.json"]).status.code(), Some(2));
    std::fs::write(d.join("bad.csv"), "1,2\n3\n").unwrap();
    assert_eq!(run(d, &["fit", "-i", "bad.csv", "--grid-side", "1", "-o", "m.json"]).status.code(), Some(2));
    assert_eq!(run(d, &["score", "-m", "missing.json", "-i", "bad.csv", "-o", "s.csv"]).status.code(), Some(2));
}

#[test]
fn toy_fit_curve_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_model(d);
    assert_eq!(std::fs::read_to_string(d.join("toy.csv")).unwrap().lines().count(), 21);
    let model = NestedClusterModel::read_json_path(d.join("model.json")).unwrap();
    assert_eq!(model.depth(), 3);
    assert_eq!((0..3).map(|k| model.cluster_len(k)).collect::<Vec<_>>(), vec![1, 1, 3]);

    ok(d, &["curve", "--kind", "em-empirical", "-m", "model.json", "--eval-input", "toy.csv", "--grid", "0.1:0.1:1:linear", "-o", "em.csv"]);
    let c = read_curve(d.join("em.csv"));
    assert!((c[0].1 - 0.65).abs() < 1e-12);

    ok(d, &["curve", "--kind", "mv-empirical", "-m", "model.json", "--eval-input", "toy.csv", "--grid", "0.5:0.96:2:linear", "-o", "mv.csv"]);
    assert_eq!(read_curve(d.join("mv.csv")).iter().map(|p| p.1).collect::<Vec<_>>(), vec![1.0, 3.5]);

    ok(d, &["score", "-m", "model.json", "-i", "toy.csv", "-o", "scores.csv"]);
    let text = std::fs::read_to_string(d.join("scores.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    // Point 19 sits in A3, points 10..19 in A2: both score 0.06.
    assert_eq!(rows[0][3], "0.5");
    assert_eq!(rows[19][3], "0.06");
    assert_eq!(rows[10][4], "0");
    assert_eq!(rows[0][4], "10");
}

#[test]
fn fit_round_trip_scores_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--family", "heavy-tail", "-n", "5000", "--seed", "1", "-o", "ht.csv"]);
    ok(d, &["fit", "-i", "ht.csv", "--grid-side", "0.5", "--depth", "40", "-o", "m.json"]);
    ok(d, &["score", "-m", "m.json", "-i", "ht.csv", "-o", "s1.csv"]);
    ok(d, &["score", "-m", "m.json", "-i", "ht.csv", "-o", "s2.csv"]);
    let s1 = std::fs::read(d.join("s1.csv")).unwrap();
    assert_eq!(s1, std::fs::read(d.join("s2.csv")).unwrap());
    let model = NestedClusterModel::read_json_path(d.join("m.json")).unwrap();
    assert_eq!(model.depth(), 40);
    let pts = PointSet::read_csv_path(d.join("ht.csv")).unwrap();
    let text = String::from_utf8(s1).unwrap();
    for (line, p) in text.lines().skip(1).zip(pts.iter()) {
        let score: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(score.to_bits(), model.score(p).unwrap().to_bits());
    }
    ok(d, &["fit", "-i", "ht.csv", "--grid-side", "0.5", "--depth", "1", "-o", "one.json"]);
    assert_eq!(NestedClusterModel::read_json_path(d.join("one.json")).unwrap().depth(), 1);
}

#[test]
fn heavy_tail_mode_cell_enters_first() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut hits = 0;
    for seed in 0..5 {
        let seed = seed.to_string();
        ok(d, &["generate", "--family", "heavy-tail", "-n", "100000", "--seed", &seed, "-o", "ht.csv"]);
        ok(d, &["fit", "-i", "ht.csv", "--grid-side", "1", "-o", "m.json"]);
        let model = NestedClusterModel::read_json_path(d.join("m.json")).unwrap();
        // The four unit cells touching the origin share the top density.
        let first = model.cluster(0);
        if first.iter().all(|c| c.0.iter().all(|&k| k == 0 || k == -1)) {
            hits += 1;
        }
    }
    assert!(hits >= 5);
}

#[test]
fn oracle_curves() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["curve", "--kind", "em-oracle", "--oracle", "heavy-tail", "--grid", "0.01:0.5:20:log", "-o", "o.csv"]);
    let c = read_curve(d.join("o.csv"));
    assert_eq!(c.last().unwrap(), &(0.5, 0.0));
    assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));

    ok(d, &["curve", "--kind", "em-class", "--oracle", "heavy-tail", "--grid-side", "0.5", "--region", "-10:10", "--grid", "0.01:0.5:20:log", "-o", "f.csv"]);
    for ((_, star), (_, class)) in c.iter().zip(read_curve(d.join("f.csv"))) {
        assert!(class <= star + 1e-15);
    }
}

#[test]
fn diagnose_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_model(d);
    // n = 2 points, R forced to 0, δ = 1/2.
    std::fs::write(d.join("two.csv"), "x0,x1\n1.5,0.5\n0.0,0.5\n").unwrap();
    ok(d, &["diagnose", "-i", "two.csv", "-m", "model.json", "--delta", "0.5", "--rademacher-override", "0", "-o", "r.json"]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!((r["penalty"].as_f64().unwrap() - (2f64.ln() / 4.0).sqrt()).abs() < 1e-15);

    // Piecewise oracle aligned with the model grid: no bias.
    let density = r#"{"spec":{"d":2,"l":0.5},"cells":[{"index":[0,0],"value":1.0},{"index":[1,0],"value":3.0}]}"#;
    std::fs::write(d.join("density.json"), density).unwrap();
    ok(d, &["generate", "--family", "piecewise", "--density", "density.json", "-n", "2000", "-o", "pw.csv"]);
    ok(d, &["fit", "-i", "pw.csv", "--grid-side", "0.5", "-o", "pw.json"]);
    ok(d, &["diagnose", "-i", "pw.csv", "-m", "pw.json", "--oracle", "piecewise", "--density", "density.json", "-o", "pw_report.json"]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("pw_report.json")).unwrap()).unwrap();
    assert!(r["bias"]["value"].as_f64().unwrap().abs() < 1e-12);
    assert!(r["rademacher"]["mean"].as_f64().unwrap() > 0.0);
    assert!(!r["level_gaps"].as_array().unwrap().is_empty());

    // Heavy tail: bias shrinks from l = 1 to l = 0.2.
    ok(d, &["generate", "--family", "heavy-tail", "-n", "2000", "-o", "ht.csv"]);
    let mut bias = Vec::new();
    for l in ["1", "0.2"] {
        ok(d, &["fit", "-i", "ht.csv", "--grid-side", l, "-o", "ht.json"]);
        ok(d, &["diagnose", "-i", "ht.csv", "-m", "ht.json", "--oracle", "heavy-tail", "--region", "-10:10", "-o", "h.json"]);
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("h.json")).unwrap()).unwrap();
        bias.push(r["bias"]["value"].as_f64().unwrap());
    }
    assert!(bias[1] < bias[0]);
}

#[test]
fn thread_cap_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("EM_THREADS", "1")
        .args(["generate", "--family", "toy", "-o", "t.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .current_dir(dir.path())
        .env("EM_THREADS", "zero")
        .args(["generate", "--family", "toy", "-o", "t.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
