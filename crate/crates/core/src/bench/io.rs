use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::EpSettings;
use crate::correct::{self, Diagnostics, PairContribution, DEFAULT_ORDERS};
use crate::ep::{self, ep_solve, log_z_ep};
use crate::error::{invalid, Error, Result};
use crate::model::{Model, QuadraticBase, Site, SiteKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(invalid(format!("unknown format {s:?}; expected csv or json"))),
        }
    }
}

/// Read a config file: JSON when the extension is `.json`, TOML otherwise.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Rows as CSV (one column per field, header first) or as a pretty JSON array.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], format: OutputFormat, out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// f_0 = exp(½xᵀJx + θᵀx)
    Coupling,
    /// f_0 = N(x; 0, K)
    Kernel,
}

/// One site in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    #[serde(flatten)]
    pub kind: SiteKind,
    #[serde(default = "unit_power")]
    pub power: f64,
    /// Variable the site acts on; defaults to the site's position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<usize>,
}

fn unit_power() -> f64 {
    1.0
}

/// Model file for the one-shot `correct` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mode: ModelMode,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    pub sites: Vec<SiteSpec>,
}

fn square(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{name} must be a square array of rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))
    }

    pub fn to_model(&self) -> Result<Model> {
        let base = match self.mode {
            ModelMode::Coupling => {
                if self.k.is_some() {
                    return Err(invalid("coupling mode takes J and theta, not K"));
                }
                let j = square(self.j.as_deref().ok_or_else(|| invalid("coupling mode needs J"))?, "J")?;
                let theta = match &self.theta {
                    Some(t) => DVector::from_column_slice(t),
                    None => DVector::zeros(j.nrows()),
                };
                QuadraticBase::coupling(j, theta)?
            }
            ModelMode::Kernel => {
                if self.j.is_some() || self.theta.is_some() {
                    return Err(invalid("kernel mode takes K, not J or theta"));
                }
                QuadraticBase::kernel(square(self.k.as_deref().ok_or_else(|| invalid("kernel mode needs K"))?, "K")?)?
            }
        };
        let sites =
            self.sites.iter().enumerate().map(|(i, s)| Site::with_power(s.kind, s.var.unwrap_or(i), s.power)).collect();
        Model::with_sites(base, sites)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectReport {
    pub converged: bool,
    pub sweeps: usize,
    pub residual: f64,
    pub orders: Vec<usize>,
    pub log_z_ep: f64,
    pub log_r: f64,
    pub log_z_corrected: f64,
    pub by_order: BTreeMap<usize, f64>,
    pub top_pairs: Vec<PairContribution>,
    pub diagnostics: Diagnostics,
    pub means_ep: Vec<f64>,
    /// Present for models with one unit-power site per variable.
    pub means_corrected: Option<Vec<f64>>,
}

/// Solve EP for a model, then apply the factorized second-order correction.
pub fn correct_model(model: &Model, orders: &[usize], ep: &EpSettings) -> Result<CorrectReport> {
    let state = ep_solve(model, &ep.to_config())?;
    if !state.converged {
        return Err(Error::InvalidState(format!(
            "EP did not converge in {} sweeps (residual {:e})",
            state.sweeps, state.residual
        )));
    }
    let log_z_ep = log_z_ep(&state, model)?;
    let rep = correct::factorized_correction(&state, model, orders)?;
    // the order-l mean term needs c_{l+1}
    let top = ep::site_cumulants(&state, model)?.iter().map(|t| t.max_order()).min().unwrap_or(0);
    let mean_orders: Vec<usize> = orders.iter().copied().filter(|&l| l < top).collect();
    let means_corrected = if model.is_plain() && !mean_orders.is_empty() {
        Some(correct::corrected_means(&state, model, &mean_orders)?.iter().copied().collect())
    } else {
        None
    };
    Ok(CorrectReport {
        converged: state.converged,
        sweeps: state.sweeps,
        residual: state.residual,
        orders: orders.to_vec(),
        log_z_ep,
        log_r: rep.log_r,
        log_z_corrected: log_z_ep + rep.log_r,
        by_order: rep.by_order,
        top_pairs: rep.top_pairs,
        diagnostics: rep.diagnostics,
        means_ep: state.mu.iter().copied().collect(),
        means_corrected,
    })
}

/// Read a JSON model file and correct it; `orders` defaults to {3, 4} and the
/// solver settings follow the model type.
pub fn correct_model_file(path: &Path, orders: Option<&[usize]>) -> Result<CorrectReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let model = ModelFile::from_json(&text)?.to_model()?;
    let ep = if model.is_ising() { EpSettings::ising() } else { EpSettings::gp() };
    correct_model(&model, orders.unwrap_or(&DEFAULT_ORDERS), &ep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"{
        "mode": "coupling",
        "J": [[0.0, 0.3], [0.3, 0.0]],
        "theta": [0.1, -0.2],
        "sites": [{"kind": "ising"}, {"kind": "ising", "power": 1.0}]
    }"#;

    #[test]
    fn parses_coupling_file() {
        let m = ModelFile::from_json(PAIR).unwrap().to_model().unwrap();
        assert!(m.is_ising() && m.is_plain());
        assert_eq!(m.couplings().unwrap().0[(0, 1)], 0.3);
    }

    #[test]
    fn parses_kernel_file_with_params() {
        let text = r#"{
            "mode": "kernel",
            "K": [[1.0, 0.5], [0.5, 1.0]],
            "sites": [
                {"kind": "box_observed", "params": {"y": 0.2, "a": 0.5}},
                {"kind": "probit", "params": {"y": 1.0}, "power": 0.5, "var": 1},
                {"kind": "probit", "params": {"y": 1.0}, "power": 0.5, "var": 1}
            ]
        }"#;
        let m = ModelFile::from_json(text).unwrap().to_model().unwrap();
        assert_eq!(m.sites.len(), 3);
        assert_eq!(m.sites[2].var, 1);
        assert_eq!(m.sites[1].kind, SiteKind::Probit { y: 1.0, m: 0.0, v: 1.0 });
        assert!(!m.is_plain());
    }

    #[test]
    fn rejects_mixed_modes() {
        let bad = PAIR.replace("\"mode\": \"coupling\"", "\"mode\": \"kernel\"");
        assert!(ModelFile::from_json(&bad).unwrap().to_model().is_err());
        assert!(ModelFile::from_json(r#"{"mode":"coupling","sites":[]}"#).unwrap().to_model().is_err());
    }

    #[test]
    fn correct_pair_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, PAIR).unwrap();
        let rep = correct_model_file(&p, None).unwrap();
        assert!(rep.converged);
        assert!(rep.log_r.abs() > 0.0);
        assert_eq!(rep.means_corrected.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn probit_file_corrects_means_at_order_three() {
        let text = r#"{
            "mode": "kernel",
            "K": [[1.0, 0.6], [0.6, 1.0]],
            "sites": [{"kind": "probit", "params": {"y": 1.0}}, {"kind": "probit", "params": {"y": -1.0}}]
        }"#;
        let model = ModelFile::from_json(text).unwrap().to_model().unwrap();
        let rep = correct_model(&model, &[3, 4], &EpSettings::gp()).unwrap();
        assert_eq!(rep.means_corrected.unwrap().len(), 2);
    }

    #[derive(Serialize)]
    struct Row {
        a: usize,
        b: f64,
    }

    #[test]
    fn csv_and_json_rows() {
        let rows = vec![Row { a: 1, b: 0.5 }, Row { a: 2, b: f64::NAN }];
        let mut buf = Vec::new();
        write_rows(&rows, OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,0.5\n2,NaN\n");
        let mut buf = Vec::new();
        write_rows(&rows[..1], OutputFormat::Json, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("\"b\": 0.5"));
    }
}
