#![allow(dead_code)]

use std::path::PathBuf;

use ringplan::{io, ClusterSpec, CostCoefficients};
use serde::Deserialize;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn reference_model() -> (ClusterSpec, CostCoefficients) {
    let dir = configs_dir();
    (
        io::read(&dir.join("cluster.json")).expect("cluster config"),
        io::read(&dir.join("coefficients.json")).expect("coefficient config"),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceConfig {
    pub cluster: String,
    pub coefficients: String,
    pub global_batch_size: usize,
    pub seeds: Vec<u64>,
    pub static_degrees: Vec<usize>,
    pub case1_preset: String,
    pub case2_preset: String,
}

pub fn acceptance_config() -> AcceptanceConfig {
    let text =
        std::fs::read_to_string(configs_dir().join("acceptance.json")).expect("acceptance config");
    serde_json::from_str(&text).expect("valid acceptance config")
}
