fn main() {
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets the manifest dir");
    let header = std::path::Path::new(&dir).join("include").join("mvcca.h");
    cbindgen::generate(&dir)
        .expect("C header generation")
        .write_to_file(&header);
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
