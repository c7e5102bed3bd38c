use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aad, EpSettings};
use crate::correct::{self, DEFAULT_ORDERS};
use crate::ep::{ep_solve, log_z_ep};
use crate::error::{invalid, Result};
use crate::model::Model;
use crate::oracle::ising_exhaustive;
use crate::tree::{build_spanning_tree, ep_tree_solve, log_z_ep_tree};

pub const N_SPINS: usize = 16;
const SIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Graph {
    Full,
    Grid4x4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Repulsive,
    Mixed,
    Attractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// factorized EC
    Ec,
    /// factorized EC with cumulant corrections to log Z and means
    EcC,
    /// factorized EC with the ε-expansion of log Z
    EcEps,
    /// tree EC
    EcT,
    /// tree EC with the cumulant correction to log Z
    EcTc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ec, Method::EcC, Method::EcEps, Method::EcT, Method::EcTc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ec => "ec",
            Method::EcC => "ec_c",
            Method::EcEps => "ec_eps",
            Method::EcT => "ec_t",
            Method::EcTc => "ec_tc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown method {s:?}; expected one of ec, ec_c, ec_eps, ec_t, ec_tc")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WjConfig {
    pub graph: Graph,
    /// Wrap the grid into a torus.
    pub periodic: bool,
    pub coupling: Coupling,
    pub d_coup: f64,
    pub d_obs: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Cumulant orders in the corrections.
    pub orders: Vec<usize>,
    pub ep: EpSettings,
    /// Record wall-clock time per method; off by default so output is reproducible.
    pub timing: bool,
}

impl Default for WjConfig {
    fn default() -> Self {
        WjConfig {
            graph: Graph::Grid4x4,
            periodic: false,
            coupling: Coupling::Mixed,
            d_coup: 1.0,
            d_obs: 0.25,
            trials: 100,
            seed: 0,
            methods: Method::ALL.to_vec(),
            orders: DEFAULT_ORDERS.to_vec(),
            ep: EpSettings::ising(),
            timing: false,
        }
    }
}

impl WjConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_coup > 0.0) || !(self.d_obs >= 0.0) {
            return Err(invalid("d_coup must be positive and d_obs nonnegative"));
        }
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        self.ep.to_config().validate()
    }
}

/// The twelve (graph, coupling, d_coup) settings of the standard benchmark tables.
pub fn table_presets() -> Vec<(Graph, Coupling, f64)> {
    use Coupling::*;
    use Graph::*;
    vec![
        (Full, Repulsive, 0.25),
        (Full, Repulsive, 0.5),
        (Full, Mixed, 0.25),
        (Full, Mixed, 0.5),
        (Full, Attractive, 0.06),
        (Full, Attractive, 0.12),
        (Grid4x4, Repulsive, 1.0),
        (Grid4x4, Repulsive, 2.0),
        (Grid4x4, Mixed, 1.0),
        (Grid4x4, Mixed, 2.0),
        (Grid4x4, Attractive, 1.0),
        (Grid4x4, Attractive, 2.0),
    ]
}

fn edges(graph: Graph, periodic: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match graph {
        Graph::Full => {
            for a in 0..N_SPINS {
                for b in (a + 1)..N_SPINS {
                    out.push((a, b));
                }
            }
        }
        Graph::Grid4x4 => {
            let id = |r: usize, c: usize| r * SIDE + c;
            for r in 0..SIDE {
                for c in 0..SIDE {
                    if c + 1 < SIDE || periodic {
                        let o = id(r, (c + 1) % SIDE);
                        out.push((id(r, c).min(o), id(r, c).max(o)));
                    }
                    if r + 1 < SIDE || periodic {
                        let o = id((r + 1) % SIDE, c);
                        out.push((id(r, c).min(o), id(r, c).max(o)));
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
        }
    }
    out
}

/// Couplings and fields of one trial. Each trial has its own ChaCha20 stream.
pub fn generate_instance(config: &WjConfig, trial: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let d = config.d_obs;
    let theta = DVector::from_fn(N_SPINS, |_, _| if d > 0.0 { rng.gen_range(-d..=d) } else { 0.0 });
    let (lo, hi) = match config.coupling {
        Coupling::Repulsive => (-2.0 * config.d_coup, 0.0),
        Coupling::Mixed => (-config.d_coup, config.d_coup),
        Coupling::Attractive => (0.0, 2.0 * config.d_coup),
    };
    let mut j = DMatrix::zeros(N_SPINS, N_SPINS);
    for (a, b) in edges(config.graph, config.periodic) {
        let v = rng.gen_range(lo..=hi);
        j[(a, b)] = v;
        j[(b, a)] = v;
    }
    (j, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub method: Method,
    /// NaN where the method gives no marginals of its own.
    pub aad: f64,
    pub abs_dlogz: f64,
    pub logz_true: f64,
    pub logz_est: f64,
    pub converged: bool,
    pub residual: f64,
    pub max_gamma: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub mean_aad: f64,
    pub mean_abs_dlogz: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WjReport {
    pub config: WjConfig,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

struct Outcome {
    means: Option<Vec<f64>>,
    logz: f64,
    converged: bool,
    residual: f64,
    max_gamma: f64,
}

impl Outcome {
    fn failed(residual: f64) -> Self {
        Outcome { means: None, logz: f64::NAN, converged: false, residual, max_gamma: f64::NAN }
    }
}

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if !on {
        return (f(), 0.0);
    }
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64() * 1e3)
}

fn run_trial(config: &WjConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let (j, theta) = generate_instance(config, trial);
    let exact = ising_exhaustive(&j, &theta)?;
    let model = Model::ising(j.clone(), theta)?;
    let ep_cfg = config.ep.to_config();
    let wants = |m: Method| config.methods.contains(&m);
    let tree_orders: Vec<usize> = config.orders.iter().copied().filter(|&l| l <= 4).collect();
    let mut outcomes: Vec<(Method, Outcome, f64)> = Vec::new();

    if wants(Method::Ec) || wants(Method::EcC) || wants(Method::EcEps) {
        let (solved, t_ep) = timed(config.timing, || ep_solve(&model, &ep_cfg));
        let state = solved.ok().filter(|s| s.converged);
        let residual = state.as_ref().map_or(f64::NAN, |s| s.residual);
        let base = state.as_ref().and_then(|s| log_z_ep(s, &model).ok());
        let gamma = state.as_ref().map_or(f64::NAN, |s| {
            correct::convergence_diagnostics(&s.sigma).eigenvalues.last().copied().unwrap_or(f64::NAN)
        });
        for method in [Method::Ec, Method::EcC, Method::EcEps] {
            if !wants(method) {
                continue;
            }
            let (Some(st), Some(lz)) = (state.as_ref(), base) else {
                outcomes.push((method, Outcome::failed(residual), t_ep));
                continue;
            };
            let (out, t) = timed(config.timing, || -> Result<Outcome> {
                let (means, logz) = match method {
                    Method::Ec => (Some(st.mu.iter().copied().collect()), lz),
                    Method::EcC => {
                        let rep = correct::factorized_correction(st, &model, &config.orders)?;
                        let m = correct::corrected_means(st, &model, &config.orders)?;
                        (Some(m.iter().copied().collect()), lz + rep.log_r)
                    }
                    _ => (None, lz + correct::epsilon_expansion_log_r(st, &model)?),
                };
                Ok(Outcome { means, logz, converged: true, residual, max_gamma: gamma })
            });
            outcomes.push((method, out.unwrap_or_else(|_| Outcome::failed(residual)), t_ep + t));
        }
    }

    if wants(Method::EcT) || wants(Method::EcTc) {
        let fact = build_spanning_tree(&j);
        let (solved, t_tree) = timed(config.timing, || ep_tree_solve(&model, &fact, &ep_cfg));
        let ts = solved.ok().filter(|t| t.state.converged);
        let residual = ts.as_ref().map_or(f64::NAN, |t| t.state.residual);
        let base = ts.as_ref().and_then(|t| log_z_ep_tree(t, &model, &fact).ok());
        let gamma = ts.as_ref().map_or(f64::NAN, |t| {
            correct::convergence_diagnostics(&t.state.sigma).eigenvalues.last().copied().unwrap_or(f64::NAN)
        });
        for method in [Method::EcT, Method::EcTc] {
            if !wants(method) {
                continue;
            }
            let (Some(t), Some(lz)) = (ts.as_ref(), base) else {
                outcomes.push((method, Outcome::failed(residual), t_tree));
                continue;
            };
            let (out, dt) = timed(config.timing, || -> Result<Outcome> {
                let (means, logz) = match method {
                    Method::EcT => (Some(t.state.mu.iter().copied().collect()), lz),
                    _ => (None, lz + correct::log_r_tree(t, &model, &fact, &tree_orders)?.log_r),
                };
                Ok(Outcome { means, logz, converged: true, residual, max_gamma: gamma })
            });
            outcomes.push((method, out.unwrap_or_else(|_| Outcome::failed(residual)), t_tree + dt));
        }
    }

    let truth: Vec<f64> = exact.means.iter().copied().collect();
    outcomes.sort_by_key(|o| o.0);
    outcomes
        .into_iter()
        .map(|(method, o, ms)| {
            Ok(ResultRow {
                trial,
                method,
                aad: match &o.means {
                    Some(m) if o.converged => aad(&truth, m)?,
                    _ => f64::NAN,
                },
                abs_dlogz: (o.logz - exact.log_z).abs(),
                logz_true: exact.log_z,
                logz_est: o.logz,
                converged: o.converged,
                residual: o.residual,
                max_gamma: o.max_gamma,
                runtime_ms: ms,
            })
        })
        .collect()
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Run all trials (in parallel, output ordered by trial) and summarize per method
/// over the converged rows.
pub fn run_wainwright_jordan(config: &WjConfig) -> Result<WjReport> {
    config.validate()?;
    let per_trial: Vec<Vec<ResultRow>> =
        (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = per_trial.into_iter().flatten().collect();
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let summary = methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
            let used: Vec<&&ResultRow> = mine.iter().filter(|r| r.converged).collect();
            SummaryRow {
                method,
                mean_aad: mean_of(used.iter().map(|r| r.aad)),
                mean_abs_dlogz: mean_of(used.iter().map(|r| r.abs_dlogz)),
                used: used.len(),
                excluded: mine.len() - used.len(),
            }
        })
        .collect();
    Ok(WjReport { config: config.clone(), rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_24_edges() {
        assert_eq!(edges(Graph::Grid4x4, false).len(), 24);
        assert_eq!(edges(Graph::Grid4x4, true).len(), 32);
        assert_eq!(edges(Graph::Full, false).len(), 120);
    }

    #[test]
    fn instances_are_reproducible_and_in_range() {
        let c = WjConfig { coupling: Coupling::Attractive, d_coup: 0.5, ..Default::default() };
        let (j1, t1) = generate_instance(&c, 3);
        let (j2, t2) = generate_instance(&c, 3);
        assert_eq!((j1.clone(), t1.clone()), (j2, t2));
        assert!(j1.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(t1.iter().all(|&v| v.abs() <= 0.25));
        assert_ne!(generate_instance(&c, 4).0, j1);
    }

    #[test]
    fn weak_coupling_errors_vanish() {
        let c = WjConfig { d_coup: 1e-3, trials: 2, ..Default::default() };
        let rep = run_wainwright_jordan(&c).unwrap();
        for r in &rep.rows {
            assert!(r.converged);
            assert!(r.abs_dlogz < 1e-6, "{r:?}");
            assert!(r.aad.is_nan() || r.aad < 1e-5);
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lbp".parse::<Method>().is_err());
    }
}
