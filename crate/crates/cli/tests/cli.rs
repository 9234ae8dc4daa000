use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qknn::simulate::{gen_scenario, ErrorDist, Scenario};
use qknn::{KnnGraph, QuantileLevel};
use qknn_cli::io::{load_csv, read_table};

fn qknn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qknn"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = qknn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &tempfile::TempDir, scenario: &str, n: &str, error: &str, seed: &str) -> PathBuf {
    let path = p(dir, &format!("sim_{scenario}_{n}_{seed}.csv"));
    ok(&[
        "simulate",
        "--scenario",
        scenario,
        "--n",
        n,
        "--error",
        error,
        "--seed",
        seed,
        "--output",
        s(&path),
    ]);
    path
}

#[test]
fn simulate_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(&dir, "4", "200", "t3", "9");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# scenario=4"));
    let loaded = load_csv(&path).unwrap();
    let want = gen_scenario(
        Scenario::Heteroscedastic,
        200,
        QuantileLevel::MEDIAN,
        ErrorDist::StudentT(3.0),
        9,
    )
    .unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * b.abs().max(f64::MIN_POSITIVE);
    assert_eq!(loaded.data.d(), 5);
    assert!(loaded
        .data
        .x()
        .iter()
        .zip(want.x.iter())
        .all(|(a, b)| close(*a, *b)));
    assert!(loaded
        .data
        .y()
        .iter()
        .zip(&want.y)
        .all(|(a, b)| close(*a, *b)));
    assert!(loaded
        .theta_star
        .unwrap()
        .iter()
        .zip(&want.theta_star)
        .all(|(a, b)| close(*a, *b)));
}

#[test]
fn predict_at_one_neighbor_reproduces_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "3", "150", "t2", "1");
    let fit = p(&dir, "fit.csv");
    let graph = p(&dir, "graph.txt");
    let summary = ok(&[
        "fit",
        "--input",
        s(&data),
        "--output",
        s(&fit),
        "--lambda",
        "0.3",
        "--tau",
        "0.7",
        "--dump-graph",
        s(&graph),
    ]);
    assert!(summary.starts_with("solver=admm lambda=0.3 "), "{summary}");
    let pred = p(&dir, "pred.csv");
    ok(&[
        "predict",
        "--model",
        s(&fit),
        "--input",
        s(&data),
        "--output",
        s(&pred),
        "--k",
        "1",
    ]);
    let fitted: Vec<String> = fs::read_to_string(&fit)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    let predicted: Vec<String> = fs::read_to_string(&pred)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    assert_eq!(fitted.len(), 150);
    assert_eq!(fitted, predicted);

    let g = KnnGraph::read_edge_list(fs::File::open(&graph).map(std::io::BufReader::new).unwrap())
        .unwrap();
    assert_eq!((g.n(), g.k()), (150, 5));
}

#[test]
fn header_only_input_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = p(&dir, "empty.csv");
    fs::write(&input, "x1,x2,y\n").unwrap();
    let out = qknn(&[
        "fit",
        "--input",
        s(&input),
        "--output",
        s(&p(&dir, "o.csv")),
        "--lambda",
        "1",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(
        err.starts_with("error: ") && err.contains("empty dataset"),
        "{err}"
    );
}

#[test]
fn bad_arguments_fail_with_one_line() {
    for args in [
        vec!["fit", "--lambda", "1"],
        vec![
            "select", "--input", "x.csv", "--output", "y.csv", "--grid", "1:0:3",
        ],
        vec![
            "simulate",
            "--scenario",
            "7",
            "--n",
            "10",
            "--error",
            "cauchy",
            "--output",
            "/tmp/never.csv",
        ],
        vec!["frobnicate"],
    ] {
        let out = qknn(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    assert!(qknn(&["--help"]).status.success());
}

#[test]
fn select_writes_report_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "1", "120", "gaussian", "2");
    let report = p(&dir, "report.csv");
    let fit = p(&dir, "fit.csv");
    let summary = ok(&[
        "select",
        "--input",
        s(&data),
        "--output",
        s(&report),
        "--fit-output",
        s(&fit),
        "--grid",
        "0.05:5:5:log",
        "--threads",
        "2",
    ]);
    assert!(summary.starts_with("criterion=bic lambda="), "{summary}");
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,criterion,dof,converged");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0.05,") && lines[5].starts_with("5,"));
    assert_eq!(
        read_table(&fit).unwrap().header.last().unwrap(),
        "theta_hat"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "1", "80", "gaussian", "3");
    let conf = p(&dir, "run.conf");
    fs::write(&conf, "# experiment\nlambda = 0.7\nsolver = mm\n").unwrap();
    let out = p(&dir, "fit.csv");
    let a = ok(&[
        "fit",
        "--config",
        s(&conf),
        "--input",
        s(&data),
        "--output",
        s(&out),
    ]);
    assert!(a.starts_with("solver=mm lambda=0.7 "), "{a}");
    let b = ok(&[
        "fit",
        "--config",
        s(&conf),
        "--input",
        s(&data),
        "--output",
        s(&out),
        "--lambda",
        "0.2",
    ]);
    assert!(b.starts_with("solver=mm lambda=0.2 "), "{b}");
}

#[test]
fn bench_is_deterministic_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = p(&dir, name);
        let timing = p(&dir, &format!("timing_{name}"));
        let res = qknn(&[
            "bench",
            "--scenarios",
            "1,4",
            "--n",
            "60",
            "--solvers",
            "qknn-admm,qknn-mm,knn-l2",
            "--replicates",
            "2",
            "--seed",
            "5",
            "--grid",
            "0.05:2:4:log",
            "--l2-grid",
            "0.1:10:3:log",
            "--no-timing",
            "--threads",
            "2",
            "--output",
            s(&out),
            "--timing-output",
            s(&timing),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        (
            fs::read(&out).unwrap(),
            String::from_utf8(res.stderr).unwrap(),
        )
    };
    let (a, warnings) = run("a.csv");
    let (b, _) = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,n,error,tau,solver,mse_mean,mse_se,time_mean_s,replicates,seed"
    );
    // scenario 1: 2 rows x 3 solvers, scenario 4: 2 rows x 3 solvers
    assert_eq!(lines.len(), 13);
    assert!(lines[1].starts_with("1,60,gaussian,0.5,qknn-admm,"));
    assert!(lines[1].ends_with(",NA,2,5"));
    // MM handles only the median, so scenario 4 (tau 0.9 and 0.1) fails for it
    assert!(
        lines[8].starts_with("4,60,t3,0.9,qknn-mm,NA,NA,NA,"),
        "{}",
        lines[8]
    );
    assert_eq!(
        warnings
            .lines()
            .filter(|l| l.starts_with("warning: cell"))
            .count(),
        2
    );
}
