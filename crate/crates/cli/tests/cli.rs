use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: [&str; 5] = [
    "population.n=60",
    "run.seeds=[1, 2]",
    "run.train_episodes=2",
    "run.train_months=12",
    "run.shock_grid=[0.0, 0.3]",
];

fn mortsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mortsim"))
        .args(args)
        .env_remove("MORTSIM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn with_sets<'a>(mut args: Vec<&'a str>, sets: &[&'a str]) -> Vec<&'a str> {
    for s in sets {
        args.push("--set");
        args.push(s);
    }
    args
}

fn baseline() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.toml")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn small_run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    small_run_jobs(config, out, extra, "2")
}

fn small_run_jobs(config: &Path, out: &Path, extra: &[&str], jobs: &str) -> Output {
    let config = config.to_str().unwrap();
    let out = out.to_str().unwrap();
    let args = with_sets(vec!["run", config, "--out", out, "--jobs", jobs], &SMALL);
    mortsim(&with_sets(args, extra))
}

#[test]
fn shipped_config_validates() {
    let o = mortsim(&["validate", baseline().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "OK");
}

#[test]
fn shipped_config_is_the_default_scenario() {
    let text = std::fs::read_to_string(baseline()).unwrap();
    let file = mortsim::scenario::Scenario::parse(&text, &[], PathBuf::new(), "b".into()).unwrap();
    assert_eq!(file.config, mortsim::scenario::ScenarioConfig::default());
}

#[test]
fn negative_amount_is_a_validation_failure() {
    let o = mortsim(&with_sets(
        vec!["validate", baseline().to_str().unwrap()],
        &["products.mode=upfront", "products.amounts=[-5000]"],
    ));
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("amount must be >= 0"), "{}", stdout(&o));
}

#[test]
fn missing_population_file_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "[population]\npath = \"missing/pop.toml\"\n").unwrap();
    let o = mortsim(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("missing/pop.toml"), "{}", stdout(&o));
}

#[test]
fn unreadable_config_exits_with_validation_code() {
    let o = mortsim(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/scenario.toml"));
}

#[test]
fn run_writes_manifest_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = small_run(&baseline(), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("run.json").is_file());
    assert!(out.join("summary/metrics.csv").is_file());
    assert!(out.join("summary/servicer.csv").is_file());
    for seed in [1, 2] {
        for shock in ["0", "0.3"] {
            let cell = out.join(format!("seed-{seed}/off/shock-{shock}"));
            assert!(cell.join("rates.csv").is_file(), "{}", cell.display());
            assert!(cell.join("manifest.json").is_file());
        }
        assert!(out
            .join(format!("snapshots/seed-{seed}/plain/learner-00000.bin"))
            .is_file());
    }
    assert!(!dir.path().join("run.partial").exists());
    let manifest = mortsim::scenario::RunManifest::read(&out).unwrap();
    assert_eq!(manifest.cells.len(), 4);
    assert!(manifest.paired);
}

#[test]
fn single_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = small_run(&baseline(), &out, &["run.seeds=[1]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("seed-1").is_dir());
    assert!(!out.join("seed-2").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(small_run(&baseline(), &a, &[]).status.code(), Some(0));
    assert_eq!(
        small_run_jobs(&baseline(), &b, &[], "1").status.code(),
        Some(0)
    );
    let first = tree(&a);
    assert_eq!(first, tree(&b));
    // rerunning into an existing run directory replaces it
    assert_eq!(small_run(&baseline(), &a, &[]).status.code(), Some(0));
    assert_eq!(first, tree(&a));
}

#[test]
fn override_is_equivalent_to_file_edit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("edited.toml");
    std::fs::write(
        &cfg,
        "[products]\nmode = \"upfront\"\namounts = [0, 2500]\n[servicer]\nforeclosure_trigger_months = 3\n",
    )
    .unwrap();
    let a = dir.path().join("file");
    let b = dir.path().join("flags");
    assert_eq!(small_run(&cfg, &a, &[]).status.code(), Some(0));
    let o = small_run(
        &baseline(),
        &b,
        &[
            "products.mode=upfront",
            "products.amounts=[0, 2500]",
            "servicer.foreclosure_trigger_months=3",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn snapshots_skip_training_and_reproduce_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(small_run(&baseline(), &a, &[]).status.code(), Some(0));
    let snaps = a.join("snapshots");
    let o = mortsim(&with_sets(
        vec![
            "run",
            baseline().to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--snapshots",
            snaps.to_str().unwrap(),
        ],
        &SMALL,
    ));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rates = "seed-2/off/shock-0.3/rates.csv";
    assert_eq!(
        std::fs::read(a.join(rates)).unwrap(),
        std::fs::read(b.join(rates)).unwrap()
    );
    assert!(!b.join("snapshots").exists());
}

#[test]
fn missing_snapshots_fail_at_runtime_and_leave_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let bogus = dir.path().join("no-snapshots");
    let o = mortsim(&with_sets(
        vec![
            "run",
            baseline().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--snapshots",
            bogus.to_str().unwrap(),
        ],
        &SMALL,
    ));
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!dir.path().join("run.partial").exists());
}

#[test]
fn foreign_output_directory_is_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("precious");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "keep me").unwrap();
    let o = small_run(&baseline(), &out, &["run.seeds=[1]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("refusing"), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out.join("notes.txt")).unwrap(),
        "keep me"
    );
}

#[test]
fn output_dir_defaults_to_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mortsim"))
        .args(with_sets(
            vec!["run", baseline().to_str().unwrap()],
            &[SMALL.as_slice(), &["run.seeds=[1]"]].concat(),
        ))
        .env("MORTSIM_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("baseline/run.json").is_file());
}

#[test]
fn compare_identical_runs_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(small_run(&baseline(), &a, &[]).status.code(), Some(0));
    let o = mortsim(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "shock_size,metric,group,variant_a,variant_b,a,b,delta,delta_pp"
    );
    let mut rows = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if !f[7].is_empty() {
            assert_eq!(f[7].parse::<f64>().unwrap(), 0.0, "{line}");
        }
        rows += 1;
    }
    assert!(rows > 20);
    assert!(table.contains("0.3,foreclosure_rate,q1,off,off,"));
}

#[test]
fn compare_reports_reserve_savings_per_quintile() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("m0");
    let b = dir.path().join("m5000");
    let sets = ["products.mode=upfront"];
    let o = small_run(&baseline(), &a, &[sets[0], "products.amounts=[0]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = small_run(&baseline(), &b, &[sets[0], "products.amounts=[5000]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("delta.csv");
    let o = mortsim(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table, stdout(&o));
    for q in ["q1", "q2", "q3", "q4", "q5", "all"] {
        let prefix = format!("0.3,foreclosure_rate,{q},upfront-0,upfront-5000,");
        let row = table.lines().find(|l| l.starts_with(&prefix));
        assert!(row.is_some(), "missing {prefix}");
        let pp = row.unwrap().rsplit(',').next().unwrap();
        assert!(pp.parse::<f64>().is_ok(), "{}", row.unwrap());
    }
}

#[test]
fn compare_refuses_different_population_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(small_run(&baseline(), &a, &[]).status.code(), Some(0));
    assert_eq!(
        small_run(&baseline(), &b, &["population.n=80"])
            .status
            .code(),
        Some(0)
    );
    let o = mortsim(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("n_borrowers differs (60 vs 80)"),
        "{}",
        stderr(&o)
    );
}
