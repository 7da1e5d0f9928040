use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out_dir = PathBuf::from(env::var("OUT_DIR").unwrap());

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("CONDBELL_H".to_string()),
        cpp_compat: true,
        documentation: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };

    let header = out_dir.join("condbell.h");
    cbindgen::generate_with_config(&crate_dir, config)
        .expect("cbindgen header generation")
        .write_to_file(&header);
    println!("cargo:rustc-env=CONDBELL_HEADER_PATH={}", header.display());

    // Also drop a copy under <target>/include for consumers building
    // against the static or shared library.
    let target_include = target_dir().join("include");
    if std::fs::create_dir_all(&target_include).is_ok() {
        let _ = std::fs::copy(&header, target_include.join("condbell.h"));
    }

    println!("cargo:rerun-if-changed=src/lib.rs");
}

fn target_dir() -> PathBuf {
    if let Ok(target) = env::var("CARGO_TARGET_DIR") {
        return PathBuf::from(target);
    }
    // OUT_DIR is <target>/<profile>/build/<pkg>/out.
    let mut dir = PathBuf::from(env::var("OUT_DIR").unwrap());
    for _ in 0..3 {
        dir.pop();
    }
    dir
}
