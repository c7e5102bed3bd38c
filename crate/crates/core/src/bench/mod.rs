//! Experiment drivers: the Wainwright–Jordan spin benchmark, GP-in-a-box,
//! quantized GP regression, and one-shot correction of a model file.

mod gp;
mod io;
mod selftest;
mod wj;

pub use gp::{
    linspace, run_gp_box, run_gp_box_sweep, run_gp_quantized, GpBoxConfig, GpBoxRow, GpQuantizedConfig, HyperGrid,
    PredictiveReport, PredictiveRow,
};
pub use io::{correct_model_file, load_config, write_rows, CorrectReport, ModelFile, OutputFormat, SiteSpec};
pub use selftest::{selftest, SelftestLine};
pub use wj::{
    generate_instance, run_wainwright_jordan, table_presets, Coupling, Graph, Method, ResultRow, SummaryRow, WjConfig,
    WjReport,
};

use serde::{Deserialize, Serialize};

use crate::ep::{EpConfig, Schedule};
use crate::error::{invalid, Result};

/// Average absolute deviation of spin marginals, (1/2N) Σ |m_i − m_i^est|.
pub fn aad(truth: &[f64], est: &[f64]) -> Result<f64> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(invalid(format!("aad needs equal nonempty lengths, got {} and {}", truth.len(), est.len())));
    }
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b).abs()).sum::<f64>() / (2.0 * truth.len() as f64))
}

/// Solver settings as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpSettings {
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Random sweep order with this seed; sequential when absent.
    pub shuffle_seed: Option<u64>,
}

impl EpSettings {
    pub fn ising() -> Self {
        EpSettings::from(EpConfig::ising())
    }

    pub fn gp() -> Self {
        EpSettings::from(EpConfig::gp())
    }

    pub fn to_config(self) -> EpConfig {
        let base = EpConfig::gp();
        EpConfig {
            damping: self.damping,
            max_sweeps: self.max_sweeps,
            tol: self.tol,
            schedule: match self.shuffle_seed {
                Some(seed) => Schedule::RandomPermutation { seed },
                None => Schedule::Sequential,
            },
            min_cavity_variance: base.min_cavity_variance,
        }
    }
}

impl From<EpConfig> for EpSettings {
    fn from(c: EpConfig) -> Self {
        EpSettings {
            damping: c.damping,
            max_sweeps: c.max_sweeps,
            tol: c.tol,
            shuffle_seed: match c.schedule {
                Schedule::RandomPermutation { seed } => Some(seed),
                Schedule::Sequential => None,
            },
        }
    }
}

impl Default for EpSettings {
    fn default() -> Self {
        Self::ising()
    }
}
