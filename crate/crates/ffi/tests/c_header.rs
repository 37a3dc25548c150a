//! Compiles and runs the C example against the generated header and the
//! built static library, proving the ABI from the consumer side.

use std::path::PathBuf;
use std::process::Command;

fn have(tool: &str) -> bool {
    Command::new(tool)
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

#[test]
fn c_demo_compiles_and_runs() {
    let cc = ["cc", "gcc", "clang"].into_iter().find(|t| have(t));
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    let demo = manifest.join("examples").join("demo.c");
    assert!(include.join("lae.h").exists(), "header not generated");

    // The static library lands in the workspace target dir next to this
    // test binary's directory.
    let lib_dir = PathBuf::from(std::env::current_exe().unwrap())
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    assert!(
        lib_dir.join("liblae_ffi.a").exists(),
        "staticlib missing in {}",
        lib_dir.display()
    );

    let out_dir = std::env::temp_dir().join("lae_c_header_test");
    std::fs::create_dir_all(&out_dir).unwrap();
    let exe = out_dir.join("demo");

    let compile = Command::new(cc)
        .arg(&demo)
        .arg(format!("-I{}", include.display()))
        .arg(format!("-L{}", lib_dir.display()))
        .args(["-llae_ffi", "-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .expect("spawn C compiler");
    assert!(
        compile.status.success(),
        "C compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).output().expect("run the C demo");
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        run.status.success(),
        "demo exited with {:?}: {stdout}\n{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.contains("diverged=-1"), "stdout: {stdout}");
    assert!(stdout.contains("d_align="), "stdout: {stdout}");
}
