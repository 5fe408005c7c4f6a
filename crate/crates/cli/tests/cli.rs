use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bayesbench"));
    c.env_remove("BB_SEED").env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three languages with a clear speed order over 12 tasks, two variants each.
fn performance_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("language,task,variant,seconds\n");
    for t in 0..12 {
        let base = 1.0 + (t * 37 % 11) as f64 / 3.0;
        for (l, (lang, factor)) in [("C", 0.2), ("C#", 1.0), ("Ruby", 6.0)].into_iter().enumerate() {
            for v in 0..2 {
                let jitter = 1.0 + ((t * 13 + v * 7 + l * 3) % 5) as f64 / 10.0;
                text.push_str(&format!("{lang},t{t},v{v},{}\n", base * factor * jitter));
            }
        }
    }
    let p = dir.join("perf.csv");
    fs::write(&p, text).unwrap();
    p
}

/// Balanced 48-subject experiment with counts that depend on every factor.
fn experiment_csv(dir: &Path, name: &str, vary_treatment: bool) -> PathBuf {
    let mut text = String::from("subject,treatment,system,lab,experience,ability,fixed\n");
    for i in 0..48 {
        let treatment = if vary_treatment && i % 2 == 1 { "auto" } else { "manual" };
        let system = ["J", "X"][i / 2 % 2];
        let lab = ["1", "2"][i / 4 % 2];
        let experience = ["B", "M"][i / 8 % 2];
        let ability = ["low", "medium", "high"][i / 16 % 3];
        let fixed = 1 + (i % 2) + i / 16 + (i * 7 % 3);
        text.push_str(&format!("s{i},{treatment},{system},{lab},{experience},{ability},{fixed}\n"));
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn freq_compare_writes_table_and_reduced_graph() {
    let dir = TempDir::new().unwrap();
    let data = performance_csv(dir.path());
    let (table, dot) = (dir.path().join("t.csv"), dir.path().join("g.dot"));
    let o = run(&[
        "freq-compare", "--data", path(&data), "--correction", "holm", "--alpha", "0.05",
        "--out", path(&table), "--dot", path(&dot),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(&table).unwrap();
    assert!(t.starts_with("language,measure,C,C#\n"));
    assert_eq!(t.lines().count(), 1 + 2 * 5);
    let g = fs::read_to_string(&dot).unwrap();
    assert!(g.contains("\"C#\" -> \"C\"") && g.contains("\"Ruby\" -> \"C#\""));
    // implied by the other two edges
    assert!(!g.contains("\"Ruby\" -> \"C\""));

    let md = run(&["freq-compare", "--data", path(&data)]);
    assert_eq!(code(&md), 0);
    assert!(stdout(&md).starts_with("| language | measure | C | C# |"));
}

#[test]
fn bayes_compare_exports_posteriors_per_prior() {
    let dir = TempDir::new().unwrap();
    let data = performance_csv(dir.path());
    let post = dir.path().join("post");
    let out = dir.path().join("bayes.md");
    let o = run(&[
        "--sequential", "bayes-compare", "--data", path(&data), "--bench", path(&data), "--prior", "all",
        "--grid", "999x100", "--out", path(&out), "--posteriors", path(&post),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&out).unwrap().contains("centered_95"));
    let files = fs::read_dir(&post).unwrap().count();
    assert_eq!(files, 3 * 3);
    let grid = fs::read_to_string(post.join("C_vs_C#_shifted.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 999);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("uniform: 3 pairs, 3 significant at 95%"), "{stderr}");

    assert_eq!(code(&run(&["bayes-compare", "--data", path(&data), "--grid", "lots"])), 2);
}

#[test]
fn omnibus_reports_kruskal_wallis() {
    let dir = TempDir::new().unwrap();
    let data = performance_csv(dir.path());
    let o = run(&["omnibus", "--data", path(&data)]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("complete tasks: 12") && s.contains("C vs Ruby"));
}

#[test]
fn regress_and_predict_round_trip_through_the_draw_file() {
    let dir = TempDir::new().unwrap();
    let data = experiment_csv(dir.path(), "exp.csv", true);
    let fit = dir.path().join("fit.csv");
    let o = bin()
        .args(["regress", "--data", path(&data), "--model", "poisson", "--warmup", "500", "--keep", "500", "--out", path(&fit)])
        .env("BB_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&fit).unwrap();
    assert!(table.starts_with("coefficient,estimate,error,lower95,upper95\nintercept,"));
    assert_eq!(table.lines().count(), 5);
    let draws = dir.path().join("fit.csv.draws.csv");
    assert!(draws.exists());

    let scenario = dir.path().join("team.toml");
    fs::write(&scenario, "ability = [0.4, 0.4, 0.2]\ntreatment = [0.5, 0.5]\nexperience = [0.5, 0.5]\n").unwrap();
    let args = ["predict", "--fit", path(&draws), "--scenario", path(&scenario), "--draws", "5000"];
    let a = bin().args(args).env("BB_SEED", "3").output().unwrap();
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    // explicit flag beats the environment
    let b = bin().args(args).args(["--seed", "3"]).env("BB_SEED", "99").output().unwrap();
    assert_eq!(stdout(&a), stdout(&b));
    let mean: f64 = stdout(&a).lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(mean > 0.5 && mean < 6.0, "{mean}");

    fs::write(&scenario, "ability = [0.5, 0.5, 0.5]\ntreatment = [0.5, 0.5]\nexperience = [0.5, 0.5]\n").unwrap();
    assert_eq!(code(&run(&args)), 2);
}

#[test]
fn ols_prints_the_fit_table() {
    let dir = TempDir::new().unwrap();
    let data = experiment_csv(dir.path(), "exp.csv", true);
    let o = run(&["regress", "--data", path(&data), "--model", "ols"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1 + 6);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["omnibus", "--data", path(&dir.path().join("missing.csv"))])), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "language,task\nC,t1\n").unwrap();
    assert_eq!(code(&run(&["freq-compare", "--data", path(&bad)])), 2);

    // constant treatment column makes the design singular
    let flat = experiment_csv(dir.path(), "flat.csv", false);
    assert_eq!(code(&run(&["regress", "--data", path(&flat), "--model", "ols"])), 3);

    // far too short to pass the convergence gate
    let data = experiment_csv(dir.path(), "exp.csv", true);
    let o = run(&["regress", "--data", path(&data), "--model", "gaussian", "--chains", "2", "--warmup", "5", "--keep", "100", "--thin", "1"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}
