use std::process::Command;

#[test]
fn generated_header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/dim.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["dim_last_error", "dim_tensor_new", "dim_frechet_distance", "dim_generator_listen", "DIM_STATUS_PANIC"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .output()
        else {
            eprintln!("{compiler} not available; skipped");
            continue;
        };
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
