use std::io::Write;

use simmer_core::selfcheck::{check_params_file, run_all};

#[test]
fn builtin_checks_pass() {
    for c in run_all(7) {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn corrupted_params_fail_the_file_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(b"SIMRPRM1 garbage").unwrap();
    drop(f);
    assert!(!check_params_file(&path).passed);
}
