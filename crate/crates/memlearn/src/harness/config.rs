//! Simulation configuration: TOML schema, defaults, validation, digests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::athena::AthenaConfig;
use crate::hermes::PopetConfig;
use crate::memory::{CacheLevel, DramChannel, MemoryModel};
use crate::pythia::PythiaConfig;
use crate::trace::SyntheticSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config key '{key}': {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Trace file path; `.gz` files are decompressed transparently.
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    /// Maximum outstanding loads before the clock stalls.
    pub load_window: usize,
    /// A load must resolve within this many younger records.
    pub resolve_window: u64,
}

impl Default for CoreSection {
    fn default() -> Self {
        Self {
            load_window: 16,
            resolve_window: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub size_kb: u64,
    pub ways: usize,
    pub round_trip: u64,
}

impl CacheGeometry {
    fn build(&self, name: &'static str) -> Result<CacheLevel, ConfigError> {
        let key = format!("caches.{}", name.to_ascii_lowercase());
        if self.ways == 0 {
            return Err(ConfigError::invalid(&key, "ways must be positive"));
        }
        let bytes = self.size_kb * 1024;
        let line_ways = 64 * self.ways as u64;
        if bytes == 0 || bytes % line_ways != 0 {
            return Err(ConfigError::invalid(
                &key,
                format!("size {} KB is not divisible into {}-way 64 B sets", self.size_kb, self.ways),
            ));
        }
        let sets = (bytes / line_ways) as usize;
        if !sets.is_power_of_two() {
            return Err(ConfigError::invalid(
                &key,
                format!("derived set count {sets} is not a power of two"),
            ));
        }
        if self.round_trip == 0 {
            return Err(ConfigError::invalid(&key, "round_trip must be positive"));
        }
        Ok(CacheLevel::new(name, sets, self.ways, self.round_trip))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CachesSection {
    pub l1: CacheGeometry,
    pub l2: CacheGeometry,
    pub llc: CacheGeometry,
}

impl Default for CachesSection {
    fn default() -> Self {
        Self {
            l1: CacheGeometry {
                size_kb: 48,
                ways: 12,
                round_trip: 5,
            },
            l2: CacheGeometry {
                size_kb: 1280,
                ways: 20,
                round_trip: 15,
            },
            llc: CacheGeometry {
                size_kb: 3072,
                ways: 12,
                round_trip: 55,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DramSection {
    pub bytes_per_cycle: u64,
    pub access_latency: u64,
    pub bandwidth_window: u64,
}

impl Default for DramSection {
    fn default() -> Self {
        Self {
            bytes_per_cycle: 8,
            access_latency: 200,
            bandwidth_window: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefetcherKind {
    None,
    Stride,
    Nextline,
    Adversarial,
    Pythia,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PrefetcherSection {
    pub kind: PrefetcherKind,
    pub degree: u32,
}

impl Default for PrefetcherSection {
    fn default() -> Self {
        Self {
            kind: PrefetcherKind::None,
            degree: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HermesPreset {
    /// Optimistic issue latency (6 cycles).
    O,
    /// Pessimistic issue latency (18 cycles).
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcpKind {
    Popet,
    /// Predicts off-chip exactly when the access would miss every level.
    Oracle,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HermesSection {
    pub enabled: bool,
    /// Overrides `popet.issue_latency_cycles` when set.
    pub preset: Option<HermesPreset>,
    pub ocp: OcpKind,
    pub popet: PopetConfig,
}

impl Default for HermesSection {
    fn default() -> Self {
        Self {
            enabled: false,
            preset: None,
            ocp: OcpKind::Popet,
            popet: PopetConfig::default(),
        }
    }
}

impl HermesSection {
    /// POPET configuration with the preset's issue latency applied.
    pub fn resolved_popet(&self) -> PopetConfig {
        let mut cfg = self.popet;
        if let Some(preset) = self.preset {
            cfg.issue_latency_cycles = match preset {
                HermesPreset::O => 6,
                HermesPreset::P => 18,
            };
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AthenaSection {
    pub enabled: bool,
    pub config: AthenaConfig,
}

impl Default for AthenaSection {
    fn default() -> Self {
        Self {
            enabled: false,
            config: AthenaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Fraction of records excluded from metrics collection (learning stays
    /// active). `warmup_records` takes precedence when set.
    pub warmup_fraction: f64,
    pub warmup_records: Option<u64>,
    pub report_format: ReportFormat,
    pub trace: TraceSection,
    pub core: CoreSection,
    pub caches: CachesSection,
    pub dram: DramSection,
    pub prefetcher: PrefetcherSection,
    pub pythia: PythiaConfig,
    pub hermes: HermesSection,
    pub athena: AthenaSection,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            warmup_fraction: 0.1,
            warmup_records: None,
            report_format: ReportFormat::Json,
            trace: TraceSection::default(),
            core: CoreSection::default(),
            caches: CachesSection::default(),
            dram: DramSection::default(),
            prefetcher: PrefetcherSection::default(),
            pythia: PythiaConfig::default(),
            hermes: HermesSection::default(),
            athena: AthenaSection::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(ConfigError::invalid(
                "warmup_fraction",
                "must lie in [0, 1)",
            ));
        }
        if self.trace.path.is_some() && self.trace.synthetic.is_some() {
            return Err(ConfigError::invalid(
                "trace",
                "path and synthetic are mutually exclusive",
            ));
        }
        if let Some(spec) = &self.trace.synthetic {
            spec.validate()
                .map_err(|e| ConfigError::invalid("trace.synthetic", e.to_string()))?;
        }
        if self.core.load_window == 0 {
            return Err(ConfigError::invalid("core.load_window", "must be positive"));
        }
        if self.core.resolve_window == 0 {
            return Err(ConfigError::invalid(
                "core.resolve_window",
                "must be positive",
            ));
        }
        self.caches.l1.build("L1")?;
        self.caches.l2.build("L2")?;
        self.caches.llc.build("LLC")?;
        if self.dram.bytes_per_cycle == 0 || self.dram.bytes_per_cycle > 4096 {
            return Err(ConfigError::invalid(
                "dram.bytes_per_cycle",
                "must lie in 1..=4096",
            ));
        }
        if self.dram.access_latency == 0 {
            return Err(ConfigError::invalid(
                "dram.access_latency",
                "must be positive",
            ));
        }
        if self.dram.bandwidth_window == 0 {
            return Err(ConfigError::invalid(
                "dram.bandwidth_window",
                "must be positive",
            ));
        }
        self.pythia
            .validate()
            .map_err(|e| ConfigError::invalid("pythia", e))?;
        self.hermes
            .resolved_popet()
            .validate()
            .map_err(|e| ConfigError::invalid("hermes", e))?;
        self.athena
            .config
            .validate()
            .map_err(|e| ConfigError::invalid("athena", e))?;
        if self.athena.enabled {
            if self.prefetcher.kind == PrefetcherKind::None {
                return Err(ConfigError::invalid(
                    "athena.enabled",
                    "requires a configured prefetcher to coordinate",
                ));
            }
            if !self.hermes.enabled {
                return Err(ConfigError::invalid(
                    "athena.enabled",
                    "requires hermes.enabled (the coordinator drives both mechanisms)",
                ));
            }
        }
        Ok(())
    }

    /// Cache hierarchy and DRAM channel built from this configuration.
    pub fn build_memory(&self) -> Result<MemoryModel, ConfigError> {
        Ok(MemoryModel::new(
            self.caches.l1.build("L1")?,
            self.caches.l2.build("L2")?,
            self.caches.llc.build("LLC")?,
            DramChannel::new(
                self.dram.bytes_per_cycle,
                self.dram.access_latency,
                self.dram.bandwidth_window,
            ),
        ))
    }

    /// Stable digest of the canonicalized (fully resolved) configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::new(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Seed priority: explicit CLI flag, then MEMLEARN_SEED, then the config file.
pub fn resolve_seed(config_seed: u64, cli_seed: Option<u64>) -> u64 {
    if let Some(seed) = cli_seed {
        return seed;
    }
    if let Ok(env) = std::env::var("MEMLEARN_SEED") {
        if let Ok(seed) = env.trim().parse::<u64>() {
            return seed;
        }
    }
    config_seed
}
