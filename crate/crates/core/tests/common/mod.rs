#![allow(dead_code)]

pub mod brute;
pub mod interp;

use std::path::PathBuf;

use heapfix_core::lang::{parse, Program};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every corpus fixture as `(file stem, program)`, sorted by name.
pub fn corpus() -> Vec<(String, Program)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "mc"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let src = std::fs::read_to_string(&p).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let program = parse(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, program)
        })
        .collect()
}

pub fn fixture(name: &str) -> Program {
    let src = std::fs::read_to_string(corpus_dir().join(format!("{name}.mc"))).unwrap();
    parse(&src).unwrap()
}
