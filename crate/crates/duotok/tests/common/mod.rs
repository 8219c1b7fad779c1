#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use duotok::formats;
use duotok_core::rng;
use duotok_core::{FeatureSequence, Matrix, Route};

pub const TOY_CLUSTERS: usize = 8;
pub const TOY_RADIUS: f64 = 4.0;
pub const TOY_SPREAD: f64 = 0.3;
pub const TOY_FRAMES: usize = 200;
pub const TOY_FILES_PER_ROUTE: usize = 5;

/// 2-D features around 8 centres on a circle. The cluster index mostly
/// advances by one per frame, so consecutive tokens are predictable.
pub fn toy_features(seed: u64, file: u64) -> FeatureSequence {
    let mut r = rng::stream(seed, file);
    let mut c = (rng::uniform(&mut r) * TOY_CLUSTERS as f64) as usize;
    let mut rows = Vec::with_capacity(TOY_FRAMES);
    for _ in 0..TOY_FRAMES {
        let ang = 2.0 * std::f64::consts::PI * c as f64 / TOY_CLUSTERS as f64;
        rows.push([
            TOY_RADIUS * ang.cos() + TOY_SPREAD * rng::normal(&mut r),
            TOY_RADIUS * ang.sin() + TOY_SPREAD * rng::normal(&mut r),
        ]);
        c = if rng::uniform(&mut r) < 0.9 {
            (c + 1) % TOY_CLUSTERS
        } else {
            (rng::uniform(&mut r) * TOY_CLUSTERS as f64) as usize
        };
    }
    FeatureSequence::new(Matrix::from_rows(&rows).unwrap(), 25.0).unwrap()
}

/// Writes `song<i>_vocal`/`song<i>_accomp` feature files plus a route manifest; returns the
/// manifest path.
pub fn write_toy_corpus(dir: &Path, seed: u64) -> PathBuf {
    let mut manifest = String::new();
    for i in 0..TOY_FILES_PER_ROUTE {
        for (suffix, route, offset) in [("vocal", Route::Vocal, 0), ("accomp", Route::Accompaniment, 100)] {
            let name = format!("song{i}_{suffix}.dtft");
            let f = toy_features(seed, (i + offset) as u64);
            formats::write_file(&dir.join(&name), &formats::encode_features(&f).unwrap()).unwrap();
            manifest.push_str(&format!("{name}\t{}\n", route.name()));
        }
    }
    let path = dir.join("routes.tsv");
    std::fs::write(&path, manifest).unwrap();
    path
}

pub fn sine(freq: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64) as usize;
    (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect()
}

pub fn duotok(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duotok"))
        .args(args)
        .output()
        .expect("spawn duotok")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    xs.windows(w).map(|win| win.iter().sum::<f64>() / w as f64).collect()
}
