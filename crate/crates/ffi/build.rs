use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("chemokin.h");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        cpp_compat: true,
        include_guard: Some("CHEMOKIN_H".into()),
        documentation: true,
        header: Some("/* C interface to the chemokin chemotaxis toolkit. */".into()),
        usize_is_size_t: true,
        ..Default::default()
    };

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen generates the C header")
        .write_to_file(&header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
