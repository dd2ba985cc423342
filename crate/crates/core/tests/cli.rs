use std::io::Write;
use std::process::{Command, Output};

fn gdpkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdpkit")).args(args).env_remove("GDPKIT_FORMAT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn measure_reports_a_tight_bracket() {
    let o = gdpkit(&["measure", "--family", "laplace", "--eps-pure", "2", "--c", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let (lo, hi) = (v["mu_lo"].as_f64().unwrap(), v["mu_hi"].as_f64().unwrap());
    assert!(lo <= 1.8007 && 1.8007 <= hi && hi - lo <= 1.0 / 200.0, "{v}");
    assert_eq!(v["rng"], "chacha8");
}

#[test]
fn ceiling_exits_one_with_structured_output() {
    let o = gdpkit(&["measure", "--family", "icea", "--m", "20", "--n", "4", "--c", "50"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "ceiling_exceeded");
}

#[test]
fn identify_rejects_icea() {
    let o = gdpkit(&["identify", "--family", "icea", "--m", "20", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "not_gdp");
    assert_eq!(v["evidence"]["trend"], "diverging");
    assert_eq!(v["mu_lower_bound"], "inf");
}

#[test]
fn bad_profile_file_names_the_line() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "eps,delta\n0,0.5\nx,0.1\n").unwrap();
    let o = gdpkit(&["profile", "--profile-file", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn tabulated_profile_round_trips() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "eps,delta\n0,0.5\n1,0.2\n2,0.05\n").unwrap();
    let o = gdpkit(&["profile", "--profile-file", f.path().to_str().unwrap(), "--eps-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,value"));
    assert!(lines.count() > 10);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gdpkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gdpkit(&["measure", "--family", "laplace", "--c", "-1"]).status.code(), Some(2));
    assert_eq!(gdpkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn format_flag_and_env_agree() {
    let args = ["compose", "--mus", "1,1"];
    let by_flag = gdpkit(&["--format", "csv", "compose", "--mus", "1,1"]);
    let by_env = Command::new(env!("CARGO_BIN_EXE_gdpkit")).args(args).env("GDPKIT_FORMAT", "csv").output().unwrap();
    assert_eq!(by_flag.status.code(), Some(0));
    assert_eq!(by_flag.stdout, by_env.stdout);
    assert_ne!(by_flag.stdout, gdpkit(&args).stdout);
}

#[test]
fn table_csv_has_all_methods() {
    let o = gdpkit(&["table", "--eps", "0.2", "--k", "50", "--c", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("method,mu,"));
    for m in ["basic", "advanced", "rdp", "gdp", "gdp_lap", "optimal", "gdp_summary"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{m},"))), "{m} missing:\n{text}");
    }
}
