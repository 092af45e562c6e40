//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libthsq.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");

    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compilation failed");

    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program exited with {:?}",
        out.status.code()
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
