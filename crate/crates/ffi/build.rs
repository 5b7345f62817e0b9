//! Generates the C header from the exported API. The canonical copy lands
//! in OUT_DIR; a convenience copy is refreshed at include/grnlfa.h so the
//! header ships with the sources.

use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    let out_dir = PathBuf::from(env::var("OUT_DIR").expect("cargo sets OUT_DIR"));

    let config = cbindgen::Config::from_file(PathBuf::from(&crate_dir).join("cbindgen.toml"))
        .expect("cbindgen.toml parses");
    let bindings = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation succeeds");

    bindings.write_to_file(out_dir.join("grnlfa.h"));
    // Best-effort convenience copy; builds from read-only sources skip it.
    let include = PathBuf::from(&crate_dir).join("include");
    if std::fs::create_dir_all(&include).is_ok() {
        bindings.write_to_file(include.join("grnlfa.h"));
    }

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
