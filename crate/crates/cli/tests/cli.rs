use std::path::Path;
use std::process::{Command, Output};

fn futrl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_futrl"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

const SMALL: [&str; 4] = ["--set", "synthetic.n_days=2000", "--set", "split.first_test_year=2010"];

#[test]
fn synth_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(futrl(&a, &["synth", "--seed", "3"]).status.success());
    assert!(futrl(&b, &["synth", "--seed", "3"]).status.success());
    assert!(futrl(&c, &["synth", "--seed", "4"]).status.success());
    let catalog = read(a.join("data/catalog.csv"));
    assert_eq!(catalog.lines().count(), 13);
    assert_eq!(read(a.join("data/CMD1.csv")), read(b.join("data/CMD1.csv")));
    assert_ne!(read(a.join("data/CMD1.csv")), read(c.join("data/CMD1.csv")));
    assert_eq!(read(a.join("manifest.json")), read(b.join("manifest.json")));
    assert!(read(a.join("manifest.json")).contains("\"synthetic_seed\": 3"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = futrl(dir.path(), &["--set", "reward.no_such_key=1", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let out = futrl(dir.path(), &["--set", "reward.sigma_tgt=-1", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "evaluation.calendar = \"sometimes\"\n").unwrap();
    let out = futrl(dir.path(), &["--config", bad.to_str().unwrap(), "synth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_backtest_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "agents.algos=[]"]);
    for cmd in ["backtest", "sweep", "report"] {
        let mut a = args.clone();
        a.push(cmd);
        let o = futrl(out, &a);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let metrics = read(out.join("metrics.csv"));
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 5);
    assert!(rows.iter().all(|r| r.split(',').count() == 11 && !r.contains("NA")));
    assert!(metrics.starts_with("scope,strategy,expected_return,std,downside_deviation,sharpe"));

    let sweep = read(out.join("cost_sweep.csv"));
    assert_eq!(sweep.lines().count(), 1 + 3 * 7);
    for strategy in ["Long", "Sign(R)", "MACD"] {
        let sharpes: Vec<f64> = sweep
            .lines()
            .filter(|l| l.starts_with(&format!("{strategy},")))
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(sharpes.windows(2).all(|w| w[1] <= w[0]), "{strategy}: {sharpes:?}");
    }

    assert_eq!(read(out.join("per_contract.csv")).lines().count(), 1 + 3 * 12);
    let table = read(out.join("table2.txt"));
    assert!(table.contains("All") && table.contains("MACD") && table.contains('*'));
    for svg in ["equity_curve.svg", "cost_sweep_sharpe.svg", "per_contract_sharpe.svg"] {
        assert!(read(out.join(svg)).starts_with("<svg"), "{svg}");
    }
}

#[test]
fn backtest_without_checkpoints_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "agents.algos=[\"dqn\"]", "backtest"]);
    let o = futrl(dir.path(), &args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn features_are_written_per_contract() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.push("features");
    assert!(futrl(dir.path(), &args).status.success());
    let f = read(dir.path().join("features/FX1.csv"));
    // rows start once every feature is defined
    assert_eq!(f.lines().count(), 1 + 2000 - futrl::indicators::MACD_FIRST_VALID);
    assert!(f.lines().next().unwrap().starts_with("date,"));
}
