use std::fs;
use std::process::{Command, Output};

fn rcof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcof")).args(args).output().expect("run rcof")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SWEEP: &str = r#"
[experiment]
name = "cli"
schemes = ["rcof", "rqcof"]
p = 251
trials = 20
seed = 5

[channel]
model = "soft-handoff"
antennas = 2
gamma = 0.7

[sweep]
axis = "r0"
snr_db = 20
values = [1, 3, 6]
"#;

#[test]
fn sweep_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let out = dir.path().join("out.csv");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = rcof(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(fs::read(&out).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs.pop().unwrap()).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "scheme,x,mean_rate,stderr,rank_deficiency_fraction,trials,seed");
    assert_eq!(data.len(), 7);
    assert!(data[1].starts_with("rcof,1.0,1.0,"));
}

#[test]
fn sweep_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let overlay = dir.path().join("ub.csv");
    fs::write(&overlay, "label,x,rate\nupper,1,1.0\nupper,6,6.0\n").unwrap();
    let o = rcof(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "9", "--trials", "3", "--scheme", "rcof", "--overlay", overlay.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# seed: 9"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 5);
    assert!(data.iter().all(|l| l.starts_with("rcof,") || l.starts_with("overlay:upper,")));
    assert!(data.iter().filter(|l| l.starts_with("rcof,")).all(|l| l.ends_with(",3,9")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, SWEEP.replace("p = 251", "p = 250")).unwrap();
    let o = rcof(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.p"));

    assert_eq!(rcof(&["sweep", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
    assert_eq!(rcof(&["rate", "--scheme", "dpc", "--channel", "1", "--snr-db", "20"]).status.code(), Some(2));
    assert_eq!(rcof(&["rate", "--scheme", "rcof", "--channel", "1,x", "--snr-db", "20"]).status.code(), Some(2));
    assert_eq!(rcof(&["bogus"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let o = rcof(&["rate", "--scheme", "ifbf-rcof", "--channel", "1,1;1,1", "--snr-db", "20"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(rcof(&["reduce", "--matrix", "1,2;2,4"]).status.code(), Some(3));
}

#[test]
fn rate_query_reports_components() {
    let o = rcof(&["rate", "--scheme", "rcof", "--channel", "1,1.5", "--snr-db", "40", "--r0", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("symmetric_rate: 3.000000"));
    assert!(text.contains("r0: 3"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a = [2, 3]"));

    let o = rcof(&["rate", "--scheme", "qcof", "--channel", "1", "--snr-db", "20", "--p", "251"]);
    assert!(stdout(&o).contains("max_entropy:"));
}

#[test]
fn reduce_prints_a_unimodular_transform() {
    let o = rcof(&["reduce", "--matrix", "1,0.9;0,1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("-0.100000"));
    assert!(text.trim_end().ends_with("det = 1") || text.trim_end().ends_with("det = -1"));
}

#[test]
fn select_runs_greedy_and_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.toml");
    fs::write(&inst, "p = 2\nl = 2\nrows = [[1, 0], [0, 1], [1, 1]]\nsigma2 = [0.5, 1.0, 0.25]\n").unwrap();
    let o = rcof(&["select", "--config", inst.to_str().unwrap(), "--brute-force"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("greedy: users [3, 1] objective 0.5 feasible true"));
    assert!(text.contains("brute-force: users [1, 3] objective 0.5 feasible true"));
}
