use std::path::Path;
use std::process::{Command, Output};

fn cipherdb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cipherdb")).current_dir(dir).args(args).output().expect("spawn cipherdb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "status {:?}, stderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn generate_encrypt_query_mutate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(cipherdb(dir, &["--seed", "7", "gen-data", "--scale", "0.0001", "--out", "data"]));
    ok(cipherdb(dir, &["--manifest", "data/manifest.toml", "--seed", "1", "keygen"]));
    // A second keygen must not silently replace the keys.
    assert_eq!(cipherdb(dir, &["--manifest", "data/manifest.toml", "keygen"]).status.code(), Some(1));
    let m = ["--manifest", "data/manifest.toml", "--seed", "2"];
    ok(cipherdb(dir, &[&m[..], &["encrypt", "--data", "data"]].concat()));
    assert!(dir.join("store/store.toml").exists());

    let count = |dir: &Path| {
        let out = ok(cipherdb(dir, &[&m[..], &["--format", "csv", "query", "SELECT COUNT(*) FROM SUPPLIER"]].concat()));
        out.lines().nth(1).unwrap().parse::<u64>().unwrap()
    };
    assert_eq!(count(dir), 10);
    let del = ok(cipherdb(dir, &[&m[..], &["query", "DELETE FROM SUPPLIER WHERE S_SUPPKEY = 1"]].concat()));
    assert!(del.contains("1 row(s) affected"), "{del}");
    assert_eq!(count(dir), 9);

    let sql = ok(cipherdb(dir, &[&m[..], &["translate", "SELECT S_NAME FROM SUPPLIER WHERE S_SUPPKEY = 2"]].concat()));
    assert!(sql.contains("dbo.EqualityCom(x, "), "{sql}");
    assert!(!sql.contains("SUPPLIER"), "{sql}");

    let bad = cipherdb(dir, &[&m[..], &["query", "SELECT NOPE FROM SUPPLIER"]].concat());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cipherdb(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(cipherdb(tmp.path(), &["bench", "--n", "0"]).status.code(), Some(1));
    // Missing manifest is a data error.
    assert_eq!(cipherdb(tmp.path(), &["keygen"]).status.code(), Some(2));
}

#[test]
fn experiments_are_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| ok(cipherdb(tmp.path(), args));
    let a = run(&["--seed", "4", "--format", "csv", "sim-dist", "--t", "8", "--r", "16", "--samples", "10000"]);
    let b = run(&["--seed", "4", "--format", "csv", "sim-dist", "--t", "8", "--r", "16", "--samples", "10000"]);
    assert_eq!(a, b);
    assert!(a.starts_with("m,samples,bins,chi2,p_value"));
    let attack = run(&["--seed", "4", "attack-occa", "--trials", "1000"]);
    assert!(attack.contains("wins=1000"), "{attack}");
    assert_eq!(cipherdb(tmp.path(), &["attack-occa", "--trials", "10"]).status.code(), Some(1));
    let noise = run(&["--seed", "4", "--format", "csv", "noise", "--trials", "200"]);
    assert_eq!(noise, run(&["--seed", "4", "--format", "csv", "noise", "--trials", "200"]));
}

#[test]
fn shell_runs_statements_and_survives_errors() {
    use std::io::Write;
    use std::process::Stdio;
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(cipherdb(dir, &["--seed", "7", "gen-data", "--scale", "0.0001", "--out", "data"]));
    ok(cipherdb(dir, &["--manifest", "data/manifest.toml", "--seed", "1", "keygen"]));
    ok(cipherdb(dir, &["--manifest", "data/manifest.toml", "--seed", "2", "encrypt", "--data", "data"]));
    let mut child = Command::new(env!("CARGO_BIN_EXE_cipherdb"))
        .current_dir(dir)
        .args(["--manifest", "data/manifest.toml", "--format", "csv", "shell"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"SELECT COUNT(*)\n FROM REGION; SELECT X FROM NOWHERE;\nSELECT COUNT(*) FROM NATION;\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out), "COUNT(*)\n5\nCOUNT(*)\n25\n");
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
