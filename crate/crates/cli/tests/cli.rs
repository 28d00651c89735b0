use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paritylab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn run_env(args: &[&str], dir: &Path, key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paritylab")).args(args).env(key, value).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn bounds_prints_the_reach_bound() {
    let d = tmp();
    let o = run(&["bounds", "--n", "6", "--k", "4", "--m", "3"], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0.28125\n");
    assert_eq!(stdout(&run(&["bounds", "--n", "4", "--k", "3", "--m", "2"], d.path())), "0.5\n");
    let table = stdout(&run(&["bounds", "--n", "4", "--m", "2"], d.path()));
    assert_eq!(table.lines().next(), Some("n,m,k,log2_bound,bound"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn exponent_report_flags_the_condition() {
    let d = tmp();
    let o = run(&["bounds", "--n", "100", "--c", "0.04", "--alpha", "0.01"], d.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["condition_holds"], true);
    assert_eq!(v["exponent_negative"], true);
    let o = run(&["bounds", "--n", "100", "--c", "0.05", "--alpha", "0.01"], d.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["condition_holds"], false);
}

#[test]
fn usage_errors_exit_2_with_help() {
    let d = tmp();
    let o = run(&["verify-lemmas", "--seed", "1", "--bogus"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--bogus") && err.contains("Options:"), "{err}");
    // Missing mandatory seed.
    assert_eq!(run(&["tradeoff", "--n", "4"], d.path()).status.code(), Some(2));
    assert_eq!(run(&["crypto", "attack", "--n", "4"], d.path()).status.code(), Some(2));
    // Out-of-range values detected after parsing.
    assert_eq!(run(&["verify-lemmas", "--n", "4", "--r", "1", "--seed", "1"], d.path()).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--n", "4", "--k", "4", "--m", "2"], d.path()).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--n", "4"], d.path()).status.code(), Some(2));
    assert_eq!(run(&["tradeoff", "--seed", "1", "--target", "1.5"], d.path()).status.code(), Some(2));
    assert_eq!(run_env(&["bounds", "--n", "6", "--k", "4", "--m", "3"], d.path(), "PARITYLAB_DP_BUDGET", "lots").status.code(), Some(2));
    assert_eq!(run(&["--help"], d.path()).status.code(), Some(0));
    assert_eq!(run(&[], d.path()).status.code(), Some(2));
}

#[test]
fn verify_lemmas_reports_and_passes() {
    let d = tmp();
    let o = run(&["verify-lemmas", "--n", "4", "--r", "3", "--seed", "7", "--trials", "100"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["ok"], true);
    let suites = v["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 4);
    for s in suites {
        assert_eq!(s["cases"], 100);
        assert_eq!(s["passed"], 100);
    }
}

#[test]
fn csv_and_json_carry_the_same_values() {
    let d = tmp();
    let args = ["crypto", "attack", "--n", "5", "--memory", "30", "--trials", "500", "--seed", "3"];
    let json: serde_json::Value = serde_json::from_str(&stdout(&run(&args, d.path()))).unwrap();
    let mut csv_args = args.to_vec();
    csv_args.extend(["--format", "csv"]);
    let csv = stdout(&run(&csv_args, d.path()));
    assert!(csv.starts_with("path,value\n"));
    let field = |path: &str| csv.lines().find_map(|l| l.strip_prefix(&format!("{path},"))).unwrap().to_string();
    assert_eq!(field("key_guess_rate"), json["key_guess_rate"].to_string());
    assert_eq!(field("key_guess.successes"), json["key_guess"]["successes"].to_string());
    assert_eq!(field("threat_model"), "known-plaintext");
}

#[test]
fn crypto_round_trip_and_tampering() {
    let d = tmp();
    let p = d.path();
    std::fs::write(p.join("msg.bin"), b"bounded storage").unwrap();
    assert!(run(&["crypto", "keygen", "--n", "10", "--seed", "5", "--out", "k.hex"], p).status.success());
    let key = std::fs::read_to_string(p.join("k.hex")).unwrap();
    assert_eq!(key.trim().len(), 2 * (2 + 2));
    let o = run(&["crypto", "encrypt", "--key", key.trim(), "--in", "msg.bin", "--out", "msg.bsc", "--seed", "7"], p);
    assert!(o.status.success());
    let stream = std::fs::read(p.join("msg.bsc")).unwrap();
    assert_eq!(&stream[..4], b"BSC1");
    assert_eq!(stream.len(), 15 + 15 * 8 * 2);
    assert!(run(&["crypto", "decrypt", "--key-file", "k.hex", "--in", "msg.bsc", "--out", "back.bin"], p).status.success());
    assert_eq!(std::fs::read(p.join("back.bin")).unwrap(), b"bounded storage");

    let mut bad = stream.clone();
    bad[0] = b'X';
    std::fs::write(p.join("bad.bsc"), bad).unwrap();
    let o = run(&["crypto", "decrypt", "--key-file", "k.hex", "--in", "bad.bsc", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 0"));
    let o = run(&["crypto", "decrypt", "--key", "zz", "--in", "msg.bsc", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["crypto", "decrypt", "--in", "msg.bsc", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_name_the_path() {
    let d = tmp();
    let o = run(&["bounds", "--n", "6", "--m", "3", "--out", "no/such/dir/t.csv"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/dir/t.csv"));
    let o = run(&["reduce", "--in", "missing.json"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
}

#[test]
fn reduce_writes_program_and_report() {
    let d = tmp();
    let p = d.path();
    std::fs::write(
        p.join("prog.json"),
        r#"{"n":2,"m":1,"width":1,"layer_sizes":[1,1],
            "transitions":[[[0,0,0,0,0,0,0,0]],[null]],
            "leaf_labels":[[null],["01|"]]}"#,
    )
    .unwrap();
    let o = run(&["reduce", "--in", "prog.json", "--r", "1.5", "--program-out", "aff.json"], p);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["ok"], true);
    assert_eq!(report["r"], 1.5);
    let aff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("aff.json")).unwrap()).unwrap();
    assert!(aff["labels"].is_array() && aff["gamma"].is_array());
    std::fs::write(p.join("junk.json"), "{\"n\": 2}").unwrap();
    assert_eq!(run(&["reduce", "--in", "junk.json"], p).status.code(), Some(1));
}

#[test]
fn tradeoff_csv_schema() {
    let d = tmp();
    let o = run(&["tradeoff", "--n", "4", "--learner", "gaussian,exhaustive", "--trials", "400", "--seed", "2"], d.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "learner,n,memory_bits,m,success,ci_halfwidth,seed");
    assert!(lines[1].starts_with("gaussian,4,20,"));
    assert!(lines[2].starts_with("exhaustive_t12,4,8,"));
    let capped = stdout(&run(&["tradeoff", "--n", "6", "--learner", "exhaustive", "--cap", "4", "--trials", "50", "--seed", "2"], d.path()));
    assert!(capped.lines().nth(1).unwrap().contains(",>=4,"), "{capped}");
}
