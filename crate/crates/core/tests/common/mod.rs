#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A run small enough to finish in seconds.
pub const TINY_CONFIG: &str = r#"
env_name = "fork_reach"
n_demos = 6
seeds = [7]
n_scenarios_eval = 4
attempts = 3
n_scenarios_collect = 4
attempts_collect = 3
rounds = 2
train_iters = 150
batch_size = 16

[policy]
latent_dim = 8
time_emb_dim = 8
encoder_hidden = [16]
eps_hidden = [32, 32]

[exploration]
kind = "modal"

[selection]
theta = 0.9
intra_demo = true
iql_iters = 50
iql_hidden = [16]
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Relative path to file contents for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn dispatch(args: &[&str]) -> i32 {
    let mut argv = vec!["diffimprove"];
    argv.extend_from_slice(args);
    diffimprove::cli::dispatch(argv)
}
