//! Run configuration: a TOML file whose sections mirror the library's
//! parameter types, plus command-line overrides.

use std::path::{Path, PathBuf};

use bcv_core::conflict::{AdjustMode, AdjustmentStrategy, FrameWindow};
use bcv_core::ingest::IngestSchema;
use bcv_core::smt::{BoxBounds, DEFAULT_VEHICLE_LENGTH};
use bcv_core::solver::{GridBounds, SolverConfig};
use bcv_core::BarrierParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SOLVER_ENV: &str = "BCV_SOLVER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Instantaneous,
    DecelLimited,
}

/// Strategy section; unset numbers fall back to the barrier parameters
/// (`t_target`, `a_min`) and to one frame at the ingest frame rate (`dt`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    pub t_target: Option<f64>,
    pub a_min: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySection {
    pub bounds: BoxBounds,
    pub vehicle_length: f64,
}

impl Default for QuerySection {
    fn default() -> Self {
        Self {
            bounds: BoxBounds::default(),
            vehicle_length: DEFAULT_VEHICLE_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub barrier: BarrierParams,
    pub solver: SolverConfig,
    pub grid: GridBounds,
    pub query: QuerySection,
    pub ingest: IngestSchema,
    pub strategy: StrategySection,
    pub mode: AdjustMode,
    /// `all`, a frame count, or an inclusive `start..end` range.
    pub window: Option<String>,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(solver) = std::env::var_os(SOLVER_ENV).filter(|s| !s.is_empty()) {
            config.solver.executable_path = PathBuf::from(solver);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.barrier.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ingest.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.solver.timeout.is_nan() || self.solver.timeout <= 0.0 {
            return Err(CliError::Config(format!(
                "solver timeout must be positive, got {}",
                self.solver.timeout
            )));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("at least one output format is required".into()));
        }
        self.frame_window()?;
        self.adjustment_strategy()?;
        Ok(())
    }

    pub fn frame_window(&self) -> Result<FrameWindow, CliError> {
        match &self.window {
            None => Ok(FrameWindow::All),
            Some(w) => w.parse().map_err(CliError::Config),
        }
    }

    pub fn adjustment_strategy(&self) -> Result<AdjustmentStrategy, CliError> {
        let s = &self.strategy;
        let t_target = s.t_target.unwrap_or(self.barrier.t_target);
        let strategy = match s.kind {
            StrategyKind::Instantaneous => AdjustmentStrategy::Instantaneous { t_target },
            StrategyKind::DecelLimited => AdjustmentStrategy::DecelLimited {
                t_target,
                a_min: s.a_min.unwrap_or(self.barrier.a_min),
                dt: s.dt.unwrap_or(1.0 / self.ingest.frame_rate),
            },
        };
        strategy
            .validate(&self.barrier)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(strategy)
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    /// SHA-256 of the configuration as JSON, with the output directory
    /// left out so relocating a run does not change its artifacts.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        canonical.output.formats.sort();
        canonical.output.formats.dedup();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c: RunConfig = toml::from_str(
            r#"
            window = "300"
            mode = "propagated"
            [barrier]
            t_safe = 2.5
            t_target = 2.5
            [strategy]
            kind = "decel_limited"
            dt = 0.1
            [ingest]
            frame_rate = 30.0
            position_reference = "front_bumper"
            [ingest.columns]
            lane = "lane"
            [grid]
            resolution = 10
            [output]
            formats = ["csv"]
            "#,
        )
        .unwrap();
        assert_eq!(c.barrier.t_safe, 2.5);
        assert_eq!(c.frame_window().unwrap(), FrameWindow::First(300));
        assert_eq!(c.mode, AdjustMode::Propagated);
        assert_eq!(
            c.adjustment_strategy().unwrap(),
            AdjustmentStrategy::DecelLimited {
                t_target: 2.5,
                a_min: -6.0,
                dt: 0.1
            }
        );
        assert_eq!(c.ingest.columns.lane, "lane");
        assert_eq!(c.grid.resolution, 10);
        assert!(c.wants(Format::Csv) && !c.wants(Format::Json));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[barrier]\ntsafe = 3.0\n").is_err());
    }

    #[test]
    fn decel_default_step_is_one_frame() {
        let c = RunConfig {
            strategy: StrategySection {
                kind: StrategyKind::DecelLimited,
                ..Default::default()
            },
            ..Default::default()
        };
        let AdjustmentStrategy::DecelLimited { dt, .. } = c.adjustment_strategy().unwrap() else {
            panic!()
        };
        assert_eq!(dt, 0.04);
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.barrier.t_safe = 4.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn invalid_settings() {
        let mut c = RunConfig::default();
        c.output.formats.clear();
        assert!(c.validate().is_err());
        let c = RunConfig {
            window: Some("soon".into()),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.strategy.t_target = Some(1.0);
        assert!(c.validate().is_err());
    }
}
