#![allow(dead_code)]

use tierguard::config::ExperimentConfig;

/// Small synthetic experiment that trains in well under a second.
pub fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.run.seed = seed;
    cfg.dataset.synthetic.n_normal = 600;
    cfg.dataset.synthetic.n_attack = 80;
    cfg.dataset.synthetic.features = 12;
    cfg.autoencoder.code_size = 4;
    cfg.autoencoder.epochs = 8;
    cfg.autoencoder.batch_size = 64;
    cfg.adaboost.rounds = 15;
    cfg.adaboost.class_weight_values = vec![1.0, 4.0];
    cfg
}

pub fn write_config(dir: &std::path::Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, cfg.to_toml_string()).unwrap();
    p
}
