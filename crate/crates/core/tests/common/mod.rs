#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_kpcluster"))
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn kpcluster")
}

/// A burst-catalog CSV with three log-normal populations that differ in
/// fluence, peak flux and duration.
pub fn write_synthetic_catalog(path: &Path, sizes: [usize; 3], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let frac = Uniform::new(0.3, 0.6).unwrap();
    // (log10 fluence, log10 T90, log10 peak)
    let groups = [(-6.5, 1.3, 0.3), (-5.2, 1.6, 0.6), (-6.8, -0.5, 0.9)];
    let mut text = String::from("id,F1,F2,F3,F4,P64,P256,P1024,T50,T90\n");
    let mut id = 0;
    for (g, &n) in groups.iter().zip(&sizes) {
        for _ in 0..n {
            let mut fields = vec![format!("b{id}")];
            for j in 0..4 {
                let lf = g.0 + 0.3 * z.sample(&mut rng) - 0.3 * j as f64;
                fields.push(format!("{:.6e}", 10f64.powf(lf)));
            }
            for _ in 0..3 {
                fields.push(format!("{:.6e}", 10f64.powf(g.2 + 0.2 * z.sample(&mut rng))));
            }
            let t90 = 10f64.powf(g.1 + 0.25 * z.sample(&mut rng));
            let t50 = t90 * frac.sample(&mut rng);
            fields.push(format!("{t50:.6e}"));
            fields.push(format!("{t90:.6e}"));
            text.push_str(&fields.join(","));
            text.push('\n');
            id += 1;
        }
    }
    std::fs::write(path, text).unwrap();
}

/// A small grid config over `data` that keeps test runtimes short.
pub fn write_small_config(path: &Path, data: &Path, seed: u64) {
    let config = serde_json::json!({
        "data": data,
        "seed": seed,
        "bootstrap_replicates": 200,
        "gap_references": 10,
        "gap_restarts": 3,
        "restarts": 5,
        "kmax": 5,
        "max_kpcs": 3,
        "grid": {
            "families": ["proposed", "rbf", "polynomial"],
            "p_values": [1, "1/2"],
            "polynomial_degrees": [1]
        }
    });
    std::fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

/// Every file under `dir` except wall-clock timing, as (relative name, bytes).
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}
