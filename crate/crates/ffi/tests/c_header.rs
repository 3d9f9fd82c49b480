//! Compile the generated header as C and C++, and link a small C program
//! against the static library when a C compiler is available.

use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles() {
    let include = crate_dir().join("include");
    let src = crate_dir().join("tests/c/smoke.c");
    for (tool, lang) in [("cc", "c"), ("c++", "c++")] {
        if !have(tool) {
            eprintln!("{tool} not found, skipping");
            continue;
        }
        let out = Command::new(tool)
            .args(["-x", lang, "-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/ holds the library; the test binary lives in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libministone_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib().filter(|_| have("cc")) else {
        eprintln!("static library or cc missing, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success());
    let line = String::from_utf8(run.stdout).unwrap();
    let outcome: i32 = line.split_whitespace().next().unwrap().parse().unwrap();
    assert!((0..=2).contains(&outcome));
}
