use std::path::Path;
use std::process::{Command, Output};

use bptts::config::RunConfig;

fn bptts(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bptts"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_exits_zero_and_bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bptts(&["--help"], dir.path())), 0);
    assert_eq!(code(&bptts(&["train", "--no-such-flag"], dir.path())), 2);
    assert_eq!(code(&bptts(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&bptts(&["eval", "-n", "abc"], dir.path())), 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Needs a checkpoint or --baseline.
    assert_eq!(code(&bptts(&["eval"], dir.path())), 2);
    assert_eq!(code(&bptts(&["eval", "--baseline", "--ics", "nope"], dir.path())), 2);
    assert_eq!(code(&bptts(&["eval", "--baseline", "--system", "euler", "--ics", "tophat"], dir.path())), 2);
    assert_eq!(code(&bptts(&["gradcheck", "--inject-fault", "nope"], dir.path())), 2);
    let missing = bptts(&["eval", "--checkpoint", "missing.bin"], dir.path());
    assert_eq!(code(&missing), 2);
    std::fs::write(dir.path().join("bad.toml"), "episodes = \"many\"\n").unwrap();
    assert_eq!(code(&bptts(&["train", "--config", "bad.toml"], dir.path())), 2);
    std::fs::write(dir.path().join("typo.toml"), "episodez = 3\n").unwrap();
    assert_eq!(code(&bptts(&["train", "--config", "typo.toml"], dir.path())), 2);
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = bptts(&["table", "--baseline", "--dump-config", "--system", "euler", "--grids", "32,64", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.grids, [32, 64]);
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.steps, Some(1000));
    std::fs::write(dir.path().join("c.toml"), &text).unwrap();
    let again = bptts(&["table", "--config", "c.toml", "--dump-config"], dir.path());
    assert_eq!(stdout(&again), text);
    // Flags win over the file.
    let over = bptts(&["table", "--config", "c.toml", "--seed", "5", "--dump-config"], dir.path());
    assert_eq!(RunConfig::from_toml(&stdout(&over)).unwrap().seed, 5);
}

#[test]
fn gradcheck_passes_and_injected_fault_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["gradcheck", "--sizes", "8", "--gc-steps", "2", "--seeds", "0", "--max-per-group", "4"];
    let ok = bptts(&small, dir.path());
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).contains("PASS"));
    for kind in ["mul", "exp", "sum", "opaque"] {
        let mut args = small.to_vec();
        args.extend(["--inject-fault", kind]);
        let bad = bptts(&args, dir.path());
        assert_eq!(code(&bad), 4, "{kind}: {}", stdout(&bad));
        assert!(stdout(&bad).contains("FAIL"));
    }
}

#[test]
fn train_then_evaluate_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run = run.to_str().unwrap();
    let t = bptts(
        &["train", "-n", "24", "--steps", "6", "--episodes", "6", "--eval-every", "3", "--hidden", "8", "--out", run],
        dir.path(),
    );
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    assert!(stdout(&t).contains("best checkpoint"));
    for f in ["config.toml", "train_log.csv", "best", "ckpt_000000.bin", "ckpt_000006.bin"] {
        assert!(Path::new(run).join(f).exists(), "{f}");
    }
    let out = dir.path().join("eval");
    let e = bptts(
        &["eval", "--checkpoint", run, "--hidden", "8", "-n", "32", "--ics", "tophat", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    let csv = std::fs::read_to_string(out.join("eval_tophat_32.csv")).unwrap();
    assert!(csv.starts_with("ic,n,rl_error,weno_error\ntophat,32,"));
}

#[test]
fn baseline_products_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let table = bptts(&["table", "--baseline", "--system", "euler", "--ics", "sod", "--grids", "32,64", "--out", out], dir.path());
    assert_eq!(code(&table), 0, "{}", String::from_utf8_lossy(&table.stderr));
    let csv = std::fs::read_to_string(dir.path().join("table_euler_all.csv")).unwrap();
    assert!(csv.starts_with("ic,rl_32,weno_32,rl_64,weno_64\nsod,"));

    let series = bptts(&["series", "--baseline", "--ics", "tophat", "-n", "32", "--out", out], dir.path());
    assert_eq!(code(&series), 0);
    let csv = std::fs::read_to_string(dir.path().join("series_tophat_32.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[1].starts_with("0,0.0000000000000000e0,0.0000000000000000e0,"));

    let actions = bptts(&["actions", "--baseline", "--ics", "tophat", "-n", "32", "--t", "last", "--out", out], dir.path());
    assert_eq!(code(&actions), 0);
    let csv = std::fs::read_to_string(dir.path().join("actions_tophat_32.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 33);

    let suite = bptts(&["random-suite", "--baseline", "--count", "3", "--max-n", "64", "--out", out], dir.path());
    assert_eq!(code(&suite), 0);
    assert!(stdout(&suite).contains("3 environments"));
    assert!(dir.path().join("random_suite_seed0_3.csv").exists());
}

#[test]
fn persistent_blowup_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bptts(
        &[
            "train", "--ics", "rarefaction,accelerating_shock", "--dt", "0.5", "-n", "16", "--steps", "20",
            "--episodes", "40", "--eval-every", "20", "--hidden", "4", "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("blow"));
}
