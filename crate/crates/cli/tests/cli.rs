use std::path::Path;
use std::process::{Command, Output};

fn parlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parlab"))
        .args(args)
        .current_dir(cwd)
        .env("PARLAB_THREADS", "2")
        .output()
        .expect("spawn parlab")
}

fn run_config(dir: &Path, body: &str) -> Output {
    std::fs::write(dir.join("c.toml"), body).unwrap();
    parlab(&["run", "c.toml"], dir)
}

/// Data rows of a table, skipping the comment and header lines.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# "), "table lacks header comment");
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn zero_source_gives_constant_field_in_created_directory() {
    let d = tempfile::tempdir().unwrap();
    let out = run_config(
        d.path(),
        "kind = \"forward\"\noutput = \"deep/nested/out\"\nlaw = \"quasilinear\"\nlambda = 0.7\n\
         [grid]\nnt = 8\nnx = 8\n",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = d.path().join("deep/nested/out");
    let field = rows(&dir.join("field.csv"));
    assert_eq!(field.len(), 9 * 81);
    assert!(field.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.7));
    assert!(rows(&dir.join("flux.csv"))
        .iter()
        .all(|r| r[4].parse::<f64>().unwrap() == 0.0));
    assert!(dir.join("report.json").exists());
}

#[test]
fn zero_planted_tensor_recovers_zeros() {
    let d = tempfile::tempdir().unwrap();
    let out = run_config(
        d.path(),
        "kind = \"density\"\noutput = \"o\"\nlaw = \"bump\"\nlambda = 0.5\n\
         [grid]\nnt = 32\nnx = 32\n[params]\nm = 1\nq = [0.0, 0.0]\nrhos = [10.0, 20.0]\n",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rec = rows(&d.path().join("o/recovered_q.csv"));
    assert_eq!(rec.len(), 2);
    assert!(
        rec.iter().all(|r| r[2].parse::<f64>().unwrap() == 0.0),
        "{rec:?}"
    );
    assert!(d.path().join("o/concentration.svg").exists());
}

#[test]
fn unknown_law_is_a_configuration_error() {
    let d = tempfile::tempdir().unwrap();
    let out = run_config(
        d.path(),
        "kind = \"forward\"\noutput = \"o\"\nlaw = \"nope\"\n[grid]\nnt = 4\nnx = 4\n",
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("law: unknown law \"nope\""), "{err}");
    assert!(!d.path().join("o").exists());
}

#[test]
fn unknown_param_key_is_a_configuration_error() {
    let d = tempfile::tempdir().unwrap();
    let out = run_config(
        d.path(),
        "kind = \"forward\"\noutput = \"o\"\nlaw = \"heat\"\n[grid]\nnt = 4\nnx = 4\n[params]\nsorce = 1\n",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sorce"));
}

#[test]
fn experiment_failure_writes_diagnostic() {
    let d = tempfile::tempdir().unwrap();
    let out = run_config(
        d.path(),
        "kind = \"go-verify\"\noutput = \"o\"\nlaw = \"bump\"\n[grid]\nnt = 16\nnx = 16\n\
         [params]\nrhos = [1000.0]\n",
    );
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("o/error.json")).unwrap())
            .unwrap();
    assert!(diag["error"].as_str().unwrap().contains("rho"));
}

#[test]
fn dtn_ledger_appends_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let body = "kind = \"dtn\"\noutput = \"o\"\nlaw = \"quasilinear\"\nseed = 3\n\
                [grid]\nnt = 64\nnx = 6\n[params]\nlambdas = [0.0, 1.0]\nnoise = 0.01\n\
                [[params.sources]]\namplitude = 0.1\nfrequency = 1.0\n";
    assert!(run_config(d.path(), body).status.success());
    let first = rows(&d.path().join("o/dtn.csv"));
    assert!(run_config(d.path(), body).status.success());
    let both = rows(&d.path().join("o/dtn.csv"));
    assert_eq!(both.len(), 2 * first.len());
    assert_eq!(&both[..first.len()], &both[first.len()..]);
    assert!(first.iter().any(|r| r[1] == "1.0"));
}

#[test]
fn list_laws_prints_builtins() {
    let d = tempfile::tempdir().unwrap();
    let out = parlab(&["list-laws"], d.path());
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("heat") && s.contains("quasilinear"));
}

#[test]
fn verify_subset_writes_summary() {
    let d = tempfile::tempdir().unwrap();
    let out = parlab(&["verify", "--only", "2", "--output", "v"], d.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("PASS") && s.contains("1 of 1"));
    assert!(d.path().join("v/summary.json").exists());
}
