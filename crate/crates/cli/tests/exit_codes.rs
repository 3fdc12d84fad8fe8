use std::process::Command;

fn code(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_offtl"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["finetune", "--help"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["finetune", "--strategy", "sideways"]), 1);
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "dropout = 1.5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&["--config", cfg, "gradcheck", "--batches", "1"]), 1);
    assert_eq!(
        code(&["--set", "no_such_key=1", "gradcheck", "--batches", "1"]),
        1
    );
}

#[test]
fn data_errors_and_failed_checks() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = dir.path().join("lda.txt");
    assert_eq!(
        code(&[
            "lda-train",
            "--corpus",
            missing.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        2
    );
    assert_eq!(code(&["gradcheck", "--batches", "1", "--tol", "0"]), 2);
    assert_eq!(code(&["gradcheck", "--batches", "1"]), 0);
}
