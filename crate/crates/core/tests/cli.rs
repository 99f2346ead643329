use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csp-refute"))
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let st = bin()
        .args(["gen", "--family", "builtin:1in3", "--n", "7", "--m", "14", "--seed", "2", "-o", &p("i.json")])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let st = bin()
        .args(["--threads", "1", "refute", &p("i.json"), "--t", "2", "-o", &p("c.json")])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let out = bin().args(["verify", &p("c.json"), "--instance", &p("i.json")]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);

    // a certificate for another instance fails the digest check
    bin()
        .args(["gen", "--family", "builtin:1in3", "--n", "7", "--m", "14", "--seed", "3", "-o", &p("j.json")])
        .status()
        .unwrap();
    let st = bin().args(["verify", &p("c.json"), "--instance", &p("j.json")]).output().unwrap();
    assert_eq!(st.status.code(), Some(5));
}

#[test]
fn opt_t_and_check_twise_json() {
    let out = bin().args(["opt-t", "--family", "builtin:neq", "--t", "2", "--exact"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let opt = v["opt_t"].as_f64().unwrap();
    assert!((opt - 0.5).abs() < 1e-9, "opt_2(NEQ) = {opt}");

    let out = bin().args(["check-twise", "--family", "builtin:xor3", "--t", "2"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["answer"], "yes");
}

#[test]
fn bench_norms_csv_header() {
    let out = bin()
        .args(["bench-norms", "--n", "16", "--m", "40,80", "--seeds", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,m,ell,S_size,parity,seed,norm,predicted,ratio"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn usage_and_io_exit_codes() {
    assert_eq!(bin().arg("nope").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["refute", "/no/such/file.json"]).output().unwrap().status.code(), Some(4));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}
