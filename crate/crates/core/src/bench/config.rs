use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compress::PruneSchedule;
use crate::dsp::Polarization;
use crate::neuralnet::{TrainConfig, DEFAULT_DIMS};
use crate::txsim::{FiberParams, TxConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::config(format!("unknown profile `{other}` (paper|desk)"))),
        }
    }
}

/// Seeds for every random stage. `name` is echoed in error messages so a
/// failing run can be replayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedSet {
    pub name: String,
    pub train_data: u64,
    pub test_data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl Default for SeedSet {
    fn default() -> Self {
        Self::named("default")
    }
}

impl SeedSet {
    /// `default` maps to fixed seeds; any other name is hashed (FNV-1a) into
    /// an independent set.
    pub fn named(name: &str) -> Self {
        if name == "default" {
            return Self {
                name: name.into(),
                train_data: 1,
                test_data: 2,
                init: 1,
                shuffle: 11,
            };
        }
        let mut h: u64 = 0xcbf29ce484222325;
        for b in name.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut next = move || {
            h = h.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = h;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        Self {
            name: name.into(),
            train_data: next(),
            test_data: next(),
            init: next(),
            shuffle: next(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplifierConfig {
    pub nf_db: f64,
    /// Set to false for a noiseless link.
    pub noise: bool,
}

impl Default for AmplifierConfig {
    fn default() -> Self {
        Self {
            nf_db: 4.5,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyConfig {
    pub enabled: bool,
    pub n_symbols: usize,
    pub n_inferences: usize,
    pub n_repeats: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_symbols: 30_000,
            n_inferences: 100,
            n_repeats: 25,
        }
    }
}

/// Everything a pipeline run depends on. Defaults reproduce the full-scale
/// experiment; [`ExperimentConfig::apply_profile`] shrinks it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub tx: TxConfig,
    pub fiber: FiberParams,
    pub amplifier: AmplifierConfig,
    pub launch_powers_dbm: Vec<f64>,
    pub n_symbols_train: usize,
    pub n_symbols_test: usize,
    pub dims: Vec<usize>,
    pub n_neighbors: usize,
    pub polarizations: Vec<Polarization>,
    pub train: TrainConfig,
    pub prune: PruneSchedule,
    pub sparsities: Vec<f64>,
    pub quantize: bool,
    pub calibration_samples: usize,
    pub latency: LatencyConfig,
    pub seeds: SeedSet,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Paper,
            tx: TxConfig::default(),
            fiber: FiberParams::ssmf(),
            amplifier: AmplifierConfig::default(),
            launch_powers_dbm: vec![0.0, 1.0, 2.0],
            n_symbols_train: 1 << 18,
            n_symbols_test: 1 << 18,
            dims: DEFAULT_DIMS.to_vec(),
            n_neighbors: 10,
            polarizations: vec![Polarization::H],
            train: TrainConfig::default(),
            prune: PruneSchedule::default(),
            sparsities: (2..=9).map(|k| k as f64 / 10.0).collect(),
            quantize: true,
            calibration_samples: crate::compress::DEFAULT_CALIBRATION_SAMPLES,
            latency: LatencyConfig::default(),
            seeds: SeedSet::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = Self::default();
        cfg.apply_profile(profile);
        cfg
    }

    /// `paper`: 2^18 symbols, 1000-epoch cap, 300 fine-tune epochs, full
    /// latency protocol. `desk`: 2^14 symbols, 200-epoch cap, 60 fine-tune
    /// epochs and a 5 x 10 latency protocol.
    pub fn apply_profile(&mut self, profile: Profile) {
        self.profile = profile;
        match profile {
            Profile::Paper => {
                self.n_symbols_train = 1 << 18;
                self.n_symbols_test = 1 << 18;
                self.train.max_epochs = 1000;
                self.prune.total_epochs = 300;
                self.latency.n_repeats = 25;
                self.latency.n_inferences = 100;
            }
            Profile::Desk => {
                self.n_symbols_train = 1 << 14;
                self.n_symbols_test = 1 << 14;
                self.train.max_epochs = 200;
                self.prune.total_epochs = 60;
                self.latency.n_repeats = 5;
                self.latency.n_inferences = 10;
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a JSON config. A `profile` key applies that profile's scale
    /// first; explicit keys in the file then take precedence.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let mut base = Self::default();
        if let Some(p) = value.get("profile") {
            let profile: Profile = serde_json::from_value(p.clone())?;
            base.apply_profile(profile);
        }
        let mut merged = serde_json::to_value(&base)?;
        merge_json(&mut merged, value);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.fiber.validate()?;
        self.train.validate()?;
        for &s in &self.sparsities {
            if !(0.0..=0.95).contains(&s) {
                return Err(Error::config(format!("sparsity {s} outside [0, 0.95]")));
            }
            PruneSchedule { sf: s, ..self.prune.clone() }.validate()?;
        }
        if self.launch_powers_dbm.is_empty() || self.launch_powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("need at least one finite launch power"));
        }
        if self.polarizations.is_empty() {
            return Err(Error::config("need at least one polarization"));
        }
        let m = 2 * self.n_neighbors + 1;
        if self.dims.len() < 2 || self.dims[0] != 4 * m || *self.dims.last().unwrap() != 2 {
            return Err(Error::config(format!(
                "dims {:?} must start at {} inputs (4 x (2N + 1)) and end at 2 outputs",
                self.dims,
                4 * m
            )));
        }
        if self.n_symbols_train <= m || self.n_symbols_test <= m {
            return Err(Error::config("datasets shorter than one window"));
        }
        if self.calibration_samples == 0 {
            return Err(Error::config("calibration needs at least one sample"));
        }
        if self.latency.enabled
            && (self.latency.n_symbols == 0 || self.latency.n_inferences == 0 || self.latency.n_repeats == 0)
        {
            return Err(Error::config("latency protocol sizes must be > 0"));
        }
        if self.amplifier.noise && !self.amplifier.nf_db.is_finite() {
            return Err(Error::config("noise figure must be finite"));
        }
        Ok(())
    }

    /// Seed set description used in error messages.
    pub fn seed_label(&self) -> String {
        let s = &self.seeds;
        format!(
            "{} (train_data={}, test_data={}, init={}, shuffle={})",
            s.name, s.train_data, s.test_data, s.init, s.shuffle
        )
    }
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
