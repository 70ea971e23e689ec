//! The generated C header must parse as both C and C++.

use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn compiler_available(cc: &str) -> bool {
    Command::new(cc)
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = crate_dir().join("include/memlearn.h");
    assert!(header.exists(), "build.rs should have generated {header:?}");
    let demo = crate_dir().join("examples/demo.c");
    for (cc, std, source) in [
        ("cc", "-std=c11", &demo),
        ("c++", "-std=c++17", &header),
    ] {
        if !compiler_available(cc) {
            eprintln!("note: {cc} not available; skipping");
            continue;
        }
        let out = Command::new(cc)
            .arg("-fsyntax-only")
            .arg(std)
            .arg("-I")
            .arg(crate_dir().join("include"))
            .arg(if source == &demo { "-xc" } else { "-xc++" })
            .arg(source)
            .output()
            .expect("compiler runs");
        assert!(
            out.status.success(),
            "{cc} rejected {source:?}:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
