//! Single entry point combining the stationary chains and the peak-age
//! analysis for one configuration.

use serde::Serialize;

use crate::aoi::{avg_peak_aoi, AoiResult};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::markov::{analyze_stationary, StationaryResult};
use crate::tables::ConditionalTables;

#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub config: SystemConfig,
    pub stationary: StationaryResult,
    /// `None` when γ = 0 (no deliveries, peak age undefined).
    pub aoi: Option<AoiResult>,
}

impl Analysis {
    pub fn throughput(&self) -> f64 {
        self.stationary.throughput
    }

    pub fn peak_aoi(&self) -> f64 {
        self.aoi.as_ref().map_or(f64::NAN, |a| a.peak_aoi)
    }

    pub fn mean_active(&self) -> f64 {
        self.stationary.mean_active
    }
}

pub fn analyze_with(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<Analysis> {
    let stationary = analyze_stationary(cfg, tables)?;
    let aoi = if cfg.gen_prob() > 0.0 {
        Some(avg_peak_aoi(cfg, tables)?)
    } else {
        None
    };
    Ok(Analysis {
        config: *cfg,
        stationary,
        aoi,
    })
}

/// Builds the conditional tables and runs the full analysis.
pub fn analyze(cfg: &SystemConfig) -> Result<Analysis> {
    analyze_with(cfg, &ConditionalTables::build(cfg)?)
}
