#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::Deserialize;
use weat_core::example::Origin;
use weat_core::{import_line_explanations, import_source, WorkedExample};

pub const EXAMPLES: [&str; 8] = [
    "Initials",
    "JAdjacentDuplicates",
    "JArrayIncrementElements",
    "JArrayMax",
    "JPrintDigitsReverse",
    "JSearchArrayValues",
    "JSmallestDivisor",
    "PointTester",
];

#[derive(Deserialize)]
struct Meta {
    id: String,
    title: String,
    description: String,
    language: String,
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn examples_dir() -> PathBuf {
    fixtures().join("examples")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap()
}

pub fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The fixture example with no explanations, as an author would create it.
pub fn load_example(name: &str) -> WorkedExample {
    let dir = examples_dir().join(name);
    let meta: Meta = serde_json::from_str(&read(dir.join("meta.json"))).unwrap();
    import_source(&meta.title, &meta.description, &read(dir.join("source.java")), &meta.language, t0())
        .unwrap()
        .with_id(meta.id)
}

/// The fixture example carrying the expert explanations.
pub fn load_expert(name: &str) -> WorkedExample {
    let mut example = load_example(name);
    let text = read(examples_dir().join(name).join("expert.txt"));
    import_line_explanations(&mut example, &text, Origin::HumanAuthored, t0()).unwrap();
    example
}
