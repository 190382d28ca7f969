use std::path::PathBuf;
use std::process::Command;

/// `cargo test` builds the examples next to the test binaries.
fn example(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().unwrap().parent().unwrap().join("examples");
    dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX))
}

fn run(name: &str, args: &[&str]) -> String {
    let path = example(name);
    assert!(path.exists(), "{} not built", path.display());
    let o = Command::new(&path).args(args).output().unwrap();
    assert!(o.status.success(), "{name} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn autodiff() {
    assert!(!run("autodiff", &[]).is_empty());
}

#[test]
fn weno_baseline() {
    assert!(run("weno_baseline", &["tophat"]).contains("tophat"));
}

#[test]
fn euler_sod() {
    assert!(!run("euler_sod", &["64"]).is_empty());
}

#[test]
fn gradcheck() {
    assert!(run("gradcheck", &["3"]).contains("PASS"));
}

#[test]
fn train_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run("train_burgers", &["4", out]);
    let ckpt = dir.path().join("ckpt_000004.bin");
    assert!(ckpt.exists());
    let ckpt = ckpt.to_str().unwrap();
    assert!(!run("action_dump", &[ckpt]).is_empty());
    assert!(!run("random_suite", &["6", ckpt]).is_empty());
    assert!(!run("error_table", &["burgers", ckpt]).is_empty());
}

#[test]
fn run_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "command = \"series\"\nics = [\"tophat\"]\nn = 32\nbaseline = true\nout_dir = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    run("run_config", &[cfg.to_str().unwrap()]);
    assert!(out.join("series_tophat_32.csv").exists());
}
