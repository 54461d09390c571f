//! Experiment configuration documents.
//!
//! Configs are JSON objects with a mandatory `schema_version` field. Parse
//! failures surface serde's line/column diagnostics; semantic failures name
//! the violated invariant. The molecule may be a built-in name, an inline
//! spec, or a reference to a molecule file (same schema as the inline form).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::hamiltonians::{library, FieldContext, MoleculeSpec};
use crate::nvsensor::{NVRunParams, SequenceFamily};
use crate::protocols::{ProtocolKind, ProtocolParams};
use crate::spectra::AxisConvention;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Molecule selector: built-in name, molecule-file reference, or inline spec.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum MoleculeRef {
    Builtin(String),
    File { file: String },
    Inline(MoleculeSpec),
}

// Hand-rolled so that a malformed inline molecule reports its missing or
// invalid field instead of "did not match any variant".
impl<'de> serde::Deserialize<'de> for MoleculeRef {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(deserializer)?;
        match value {
            serde_json::Value::String(name) => Ok(MoleculeRef::Builtin(name)),
            serde_json::Value::Object(ref map) if map.len() == 1 && map.contains_key("file") => {
                match map.get("file") {
                    Some(serde_json::Value::String(file)) => {
                        Ok(MoleculeRef::File { file: file.clone() })
                    }
                    _ => Err(D::Error::custom("molecule.file must be a string path")),
                }
            }
            other @ serde_json::Value::Object(_) => serde_json::from_value(other)
                .map(MoleculeRef::Inline)
                .map_err(|e| D::Error::custom(format!("inline molecule: {e}"))),
            _ => Err(D::Error::custom(
                "molecule must be a built-in name, {\"file\": path}, or an inline spec",
            )),
        }
    }
}

impl MoleculeRef {
    /// Resolves to a concrete molecule; `base_dir` anchors file references.
    pub fn resolve(&self, base_dir: &Path) -> Result<MoleculeSpec> {
        let spec = match self {
            MoleculeRef::Builtin(name) => library::by_name(name)?,
            MoleculeRef::Inline(spec) => spec.clone(),
            MoleculeRef::File { file } => {
                let path = base_dir.join(file);
                load_molecule_file(&path)?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a molecule spec file (JSON object with the MoleculeSpec fields).
pub fn load_molecule_file(path: &Path) -> Result<MoleculeSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let spec: MoleculeSpec = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b0_tesla: f64,
}

/// Protocol section; `n_blocks` defaults to three T2 of blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub tau_s: f64,
    #[serde(default)]
    pub mu_s: f64,
    #[serde(default)]
    pub rabi_hz: f64,
    #[serde(default)]
    pub nutation_error: f64,
    #[serde(default)]
    pub n_blocks: Option<usize>,
}

impl ProtocolConfig {
    pub fn to_params(&self, t2_s: f64) -> Result<ProtocolParams> {
        let params = ProtocolParams {
            kind: self.kind,
            tau_s: self.tau_s,
            mu_s: self.mu_s,
            rabi_hz: self.rabi_hz,
            nutation_error: self.nutation_error,
            n_blocks: self
                .n_blocks
                .unwrap_or_else(|| ProtocolParams::default_n_blocks(t2_s, self.tau_s, self.mu_s)),
            record_trajectory: false,
        };
        params.validate()?;
        Ok(params)
    }
}

fn default_zero_fill() -> usize {
    4
}

fn default_threshold() -> f64 {
    0.05
}

fn default_axis() -> AxisConvention {
    AxisConvention::FreeTime
}

/// Spectral-analysis options.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectrumOptions {
    #[serde(default = "default_axis")]
    pub axis: AxisConvention,
    #[serde(default = "default_zero_fill")]
    pub zero_fill_factor: usize,
    /// Relative peak-picking threshold in (0, 1).
    #[serde(default = "default_threshold")]
    pub peak_threshold: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            axis: default_axis(),
            zero_fill_factor: default_zero_fill(),
            peak_threshold: default_threshold(),
        }
    }
}

fn default_tolerance() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Reference run compared against the main run for `match_report` outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Protocol of the reference run; defaults to a conventional acquisition
    /// with the same tau.
    #[serde(default)]
    pub protocol: Option<ProtocolConfig>,
    /// Bias-field multiplier for the reference run; defaults to
    /// `tau/(tau+mu)` of the main protocol (the rescaling law).
    #[serde(default)]
    pub field_scale: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance_hz: f64,
    /// Scale the reference peak axis by the carrier ratio before matching
    /// (ppm-frame comparison); on by default.
    #[serde(default = "default_true")]
    pub align_carriers: bool,
}

/// What to write after a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Timeseries,
    Spectrum,
    Peaks,
    MatchReport,
    Trajectory,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSpec {
    pub kind: OutputKind,
    pub path: String,
    /// Sub-steps per segment for trajectory outputs.
    #[serde(default)]
    pub samples_per_segment: Option<usize>,
}

/// One simulation experiment: molecule + field + protocol + outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub molecule: MoleculeRef,
    pub field: FieldConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    pub outputs: Vec<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })?;
        config.validate(path)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                path: path.into(),
                reason: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        if !(self.field.b0_tesla > 0.0) {
            return Err(Error::Config {
                path: path.into(),
                reason: "field.b0_tesla must be positive".into(),
            });
        }
        if !(self.spectrum.peak_threshold > 0.0 && self.spectrum.peak_threshold < 1.0) {
            return Err(Error::Config {
                path: path.into(),
                reason: "spectrum.peak_threshold must lie in (0, 1)".into(),
            });
        }
        if self.spectrum.zero_fill_factor == 0 {
            return Err(Error::Config {
                path: path.into(),
                reason: "spectrum.zero_fill_factor must be at least 1".into(),
            });
        }
        for out in &self.outputs {
            if out.path.is_empty() {
                return Err(Error::Config {
                    path: path.into(),
                    reason: "output path must not be empty".into(),
                });
            }
            if out.kind == OutputKind::MatchReport && self.compare.is_none() {
                return Err(Error::Config {
                    path: path.into(),
                    reason: "match_report output requires a compare section".into(),
                });
            }
        }
        Ok(())
    }

    pub fn field_context(&self) -> Result<FieldContext> {
        FieldContext::new(self.field.b0_tesla)
    }
}

fn default_theta_grid() -> Vec<f64> {
    (0..=36).map(|k| 90.0 + 5.0 * k as f64).collect()
}

/// NV parameters section, all optional with the standard defaults.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
pub struct NvParamsConfig {
    pub signal_amplitude_t: Option<f64>,
    pub signal_freq_hz: Option<f64>,
    pub signal_phase_rad: Option<f64>,
    pub nv_gamma_hz_per_t: Option<f64>,
    pub t2_star_s: Option<f64>,
    pub n_field_samples: Option<usize>,
    pub rng_seed: Option<u64>,
}

impl NvParamsConfig {
    pub fn to_params(&self) -> NVRunParams {
        let d = NVRunParams::default();
        NVRunParams {
            signal_amplitude_t: self.signal_amplitude_t.unwrap_or(d.signal_amplitude_t),
            signal_freq_hz: self.signal_freq_hz.unwrap_or(d.signal_freq_hz),
            signal_phase_rad: self.signal_phase_rad.unwrap_or(d.signal_phase_rad),
            nv_gamma_hz_per_t: self.nv_gamma_hz_per_t.unwrap_or(d.nv_gamma_hz_per_t),
            t2_star_s: self.t2_star_s.unwrap_or(d.t2_star_s),
            n_field_samples: self.n_field_samples.unwrap_or(d.n_field_samples),
            pi_rotation_deg: d.pi_rotation_deg,
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
        }
    }
}

/// Pulse-error sweep over an NV decoupling sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NvSweepConfig {
    pub schema_version: u32,
    /// Built-in family; alternatively point `sequence_file` at a descriptor.
    #[serde(default)]
    pub family: Option<SequenceFamily>,
    #[serde(default)]
    pub sequence_file: Option<String>,
    #[serde(default)]
    pub n_cycles: Option<usize>,
    #[serde(default)]
    pub nv: NvParamsConfig,
    #[serde(default = "default_theta_grid")]
    pub theta_grid_deg: Vec<f64>,
    pub outputs: Vec<OutputSpec>,
}

impl NvSweepConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let config: NvSweepConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })?;
        config.validate(path)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                path: path.into(),
                reason: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        match (&self.family, &self.sequence_file) {
            (None, None) => {
                return Err(Error::Config {
                    path: path.into(),
                    reason: "either family or sequence_file must be given".into(),
                })
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config {
                    path: path.into(),
                    reason: "family and sequence_file are mutually exclusive".into(),
                })
            }
            (Some(_), None) if self.n_cycles.unwrap_or(0) == 0 => {
                return Err(Error::Config {
                    path: path.into(),
                    reason: "family sweeps need n_cycles >= 1".into(),
                })
            }
            _ => {}
        }
        if self.theta_grid_deg.is_empty() {
            return Err(Error::Config {
                path: path.into(),
                reason: "theta_grid_deg must not be empty".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "molecule": "three-singlets",
        "field": { "b0_tesla": 1.0 },
        "protocol": { "kind": "dracaeris", "tau_s": 800e-6, "mu_s": 40e-6,
                      "rabi_hz": 200e3, "nutation_error": 0.02 },
        "outputs": [ { "kind": "peaks", "path": "peaks.csv" } ]
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL, "test").unwrap();
        assert_eq!(cfg.spectrum.zero_fill_factor, 4);
        assert_eq!(cfg.spectrum.axis, AxisConvention::FreeTime);
        let spec = cfg.molecule.resolve(Path::new(".")).unwrap();
        let params = cfg.protocol.to_params(spec.t2_s).unwrap();
        assert_eq!(params.n_blocks, 3572);
    }

    #[test]
    fn missing_field_names_the_field() {
        let bad = r#"{
            "schema_version": 1,
            "molecule": { "name": "m", "spins": [{"label": "a", "hz": 25.0}],
                          "j_couplings_hz": [[0.0]] },
            "field": { "b0_tesla": 1.0 },
            "protocol": { "kind": "conventional", "tau_s": 1e-3 },
            "outputs": []
        }"#;
        let err = ExperimentConfig::from_json(bad, "test").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t2_s") || msg.contains("line"), "got: {msg}");
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(ExperimentConfig::from_json(&bad, "test").is_err());
    }

    #[test]
    fn match_report_requires_compare_section() {
        let bad = MINIMAL.replace(
            r#"{ "kind": "peaks", "path": "peaks.csv" }"#,
            r#"{ "kind": "match_report", "path": "report.json" }"#,
        );
        assert!(ExperimentConfig::from_json(&bad, "test").is_err());
    }

    #[test]
    fn inline_molecule_resolves() {
        let cfg = r#"{
            "schema_version": 1,
            "molecule": { "name": "custom", "t2_s": 0.5,
                          "spins": [{"label": "a", "ppm": 1.0}],
                          "j_couplings_hz": [[0.0]] },
            "field": { "b0_tesla": 1.0 },
            "protocol": { "kind": "conventional", "tau_s": 1e-3 },
            "outputs": [ { "kind": "spectrum", "path": "s.csv" } ]
        }"#;
        let cfg = ExperimentConfig::from_json(cfg, "test").unwrap();
        let spec = cfg.molecule.resolve(Path::new(".")).unwrap();
        assert_eq!(spec.name, "custom");
        assert_eq!(spec.t2_s, 0.5);
    }

    #[test]
    fn molecule_file_reference_resolves_relative_to_base_dir() {
        let dir = std::env::temp_dir().join(format!("longspin-molfile-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("mol.json"),
            r#"{ "name": "from-file", "t2_s": 2.0,
                 "spins": [{"label": "a", "ppm": 1.0}],
                 "j_couplings_hz": [[0.0]] }"#,
        )
        .unwrap();
        let cfg = MINIMAL.replace("\"three-singlets\"", r#"{ "file": "mol.json" }"#);
        let cfg = ExperimentConfig::from_json(&cfg, "test").unwrap();
        let spec = cfg.molecule.resolve(&dir).unwrap();
        assert_eq!(spec.name, "from-file");
        assert_eq!(spec.t2_s, 2.0);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn nv_sweep_config_validates_family_or_file() {
        let good = r#"{
            "schema_version": 1,
            "family": "xy8",
            "n_cycles": 2,
            "outputs": [ { "kind": "timeseries", "path": "sweep.csv" } ]
        }"#;
        let cfg = NvSweepConfig::from_json(good, "test").unwrap();
        assert_eq!(cfg.theta_grid_deg.len(), 37);
        let neither = good.replace("\"family\": \"xy8\",", "");
        assert!(NvSweepConfig::from_json(&neither, "test").is_err());
    }

    #[test]
    fn nv_params_defaults_match_standard_values() {
        let p = NvParamsConfig::default().to_params();
        assert_eq!(p.signal_amplitude_t, 50e-12);
        assert_eq!(p.signal_freq_hz, 1e6);
        assert_eq!(p.t2_star_s, 100e-9);
        assert_eq!(p.n_field_samples, 100);
    }
}
