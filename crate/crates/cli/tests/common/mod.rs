#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TINY_CONFIG: &str = "\
base_channels = 4
latent_channels = 2
downsample_factor = 4
mixtures = 2
residual_blocks_per_stage = 1
patch_size = 32
dataset = synthetic:2x40
iterations = 4
";

pub fn gmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = gmc(args);
    assert!(
        out.status.success(),
        "gmc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{stdout}"))
        .to_string()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, TINY_CONFIG).unwrap();
    p
}

pub fn write_ppm(path: &Path, width: usize, height: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend((0..width * height * 3).map(|_| rng.random::<u8>()));
    std::fs::write(path, bytes).unwrap();
}

/// Trains both tiny stages in `dir`; returns `(config, weights, weights_g2)`.
pub fn trained(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = write_config(dir);
    let run = dir.join("run");
    ok(&["train", "--stage", "1", "--config", s(&cfg), "--out", s(&run)]);
    let from = run.join("stage1.gmck");
    ok(&["train", "--stage", "2", "--config", s(&cfg), "--from", s(&from), "--out", s(&run)]);
    (cfg, run.join("weights.gmcw"), run.join("weights_g2.gmcw"))
}
