use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EpSettings;
use crate::correct::{self, cov_correction_for, mean_correction_for};
use crate::ep::{ep_solve, log_z_ep, site_cumulants, GaussianState};
use crate::error::{invalid, Error, Result};
use crate::model::{Kernel, Model, QuadraticBase, SiteKind};
use crate::oracle::{gp_box_mc, gp_model_mc_with_proposal};

/// Evenly spaced points on [lo, hi]; a single point sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

// ---------------------------------------------------------------------------
// GP in a box

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpBoxConfig {
    /// Ornstein–Uhlenbeck lengthscale.
    pub lengthscale: f64,
    /// Box half-width for the N sweep.
    pub a: f64,
    pub n_list: Vec<usize>,
    /// Orders of the `log_r` column; the `log_r_c4` column always uses order 4 alone.
    pub orders: Vec<usize>,
    /// Prior draws for the Monte Carlo truth; 0 disables it.
    pub mc_samples: usize,
    pub seed: u64,
    /// Half-widths of the a-sweep.
    pub a_list: Vec<f64>,
    /// Sizes used in the a-sweep.
    pub sweep_n: Vec<usize>,
    pub ep: EpSettings,
}

impl Default for GpBoxConfig {
    fn default() -> Self {
        GpBoxConfig {
            lengthscale: 1.0,
            a: 1.0,
            n_list: vec![8, 16, 32, 64, 128],
            orders: vec![4, 6],
            mc_samples: 100_000,
            seed: 0,
            a_list: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0],
            sweep_n: vec![50, 100],
            ep: EpSettings::gp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpBoxRow {
    pub n: usize,
    pub a: f64,
    pub logz_ep: f64,
    pub log_r_c4: f64,
    pub log_r: f64,
    pub logz_mc: f64,
    pub mc_se: f64,
    /// False when the Monte Carlo estimate is undefined or disabled.
    pub mc_ok: bool,
    pub converged: bool,
    pub max_gamma: f64,
    pub within_radius: bool,
}

fn box_model(lengthscale: f64, a: f64, n: usize) -> Result<Model> {
    let k = Kernel::ornstein_uhlenbeck(lengthscale)?.matrix_1d(&linspace(0.0, 1.0, n))?;
    Model::new(QuadraticBase::kernel(k)?, vec![SiteKind::BoxCentered { a }; n])
}

fn box_row(config: &GpBoxConfig, n: usize, a: f64) -> Result<GpBoxRow> {
    if n == 0 || n > 256 {
        return Err(invalid(format!("N must lie in 1..=256, got {n}")));
    }
    if !(a > 0.0) {
        return Err(invalid("box half-width must be positive"));
    }
    let model = box_model(config.lengthscale, a, n)?;
    let state = ep_solve(&model, &config.ep.to_config())?;
    let mut row = GpBoxRow {
        n,
        a,
        logz_ep: f64::NAN,
        log_r_c4: f64::NAN,
        log_r: f64::NAN,
        logz_mc: f64::NAN,
        mc_se: f64::NAN,
        mc_ok: false,
        converged: state.converged,
        max_gamma: f64::NAN,
        within_radius: false,
    };
    if state.converged {
        row.logz_ep = log_z_ep(&state, &model)?;
        let c4 = correct::factorized_correction(&state, &model, &[4])?;
        row.log_r_c4 = c4.log_r;
        row.max_gamma = c4.diagnostics.eigenvalues.last().copied().unwrap_or(f64::NAN);
        row.within_radius = c4.diagnostics.within_radius;
        row.log_r = correct::factorized_correction(&state, &model, &config.orders)?.log_r;
    }
    if config.mc_samples > 0 {
        let QuadraticBase::Kernel { k, .. } = &model.base else { unreachable!() };
        match gp_box_mc(k, a, config.mc_samples, config.seed) {
            Ok((lz, se)) => {
                row.logz_mc = lz;
                row.mc_se = se;
                row.mc_ok = true;
            }
            Err(Error::EstimateUndefined { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(row)
}

/// One row per N in `n_list`, at the configured `a`.
pub fn run_gp_box(config: &GpBoxConfig) -> Result<Vec<GpBoxRow>> {
    if config.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_list must be strictly ascending"));
    }
    config.n_list.iter().map(|&n| box_row(config, n, config.a)).collect()
}

/// One row per (N, a) over `sweep_n` × `a_list`.
pub fn run_gp_box_sweep(config: &GpBoxConfig) -> Result<Vec<GpBoxRow>> {
    let mut rows = Vec::new();
    for &n in &config.sweep_n {
        for &a in &config.a_list {
            rows.push(box_row(config, n, a)?);
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// quantized regression

/// Candidate values for the grid search over kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub amplitudes: Vec<f64>,
    pub lengthscales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpQuantizedConfig {
    /// Training inputs; when empty, `n_train` evenly spaced inputs on [input_lo, input_hi].
    pub inputs: Vec<f64>,
    /// Observations; when empty, a latent function is drawn from the
    /// `data_kernel` prior and rounded to the nearest multiple of 2a.
    pub observations: Vec<f64>,
    pub n_train: usize,
    pub input_lo: f64,
    pub input_hi: f64,
    pub data_kernel: Kernel,
    /// Box half-width of the uniform noise.
    pub a: f64,
    /// Prior used for prediction unless `search` is given.
    pub kernel: Kernel,
    /// Pick the kernel with the largest log Z_EP over this grid (squared exponential).
    pub search: Option<HyperGrid>,
    /// Prediction inputs; when empty, 101 points spanning the inputs with a margin of 1.
    pub grid: Vec<f64>,
    pub mean_orders: Vec<usize>,
    pub var_first_orders: Vec<usize>,
    pub var_second_orders: Vec<usize>,
    /// Importance samples for the Monte Carlo predictive check; 0 disables it.
    pub mc_samples: usize,
    pub seed: u64,
    pub ep: EpSettings,
}

impl Default for GpQuantizedConfig {
    fn default() -> Self {
        GpQuantizedConfig {
            inputs: Vec::new(),
            observations: Vec::new(),
            n_train: 20,
            input_lo: -3.0,
            input_hi: 3.0,
            data_kernel: Kernel::SquaredExponential { amplitude: 1.0, lengthscale: 1.0 },
            a: 0.5,
            kernel: Kernel::SquaredExponential { amplitude: 4.0, lengthscale: 3.0 },
            search: None,
            grid: Vec::new(),
            mean_orders: vec![3, 4],
            var_first_orders: vec![3],
            var_second_orders: vec![3, 4],
            mc_samples: 0,
            seed: 0,
            ep: EpSettings::gp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRow {
    pub s: f64,
    pub mean_ep: f64,
    pub var_ep: f64,
    pub mean_corrected: f64,
    pub var_corrected: f64,
    /// NaN unless the Monte Carlo check ran.
    pub mean_mc: f64,
    pub var_mc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub amplitude: f64,
    pub lengthscale: f64,
    /// NaN when EP failed for this candidate.
    pub logz_ep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveReport {
    pub kernel: Kernel,
    pub inputs: Vec<f64>,
    pub observations: Vec<f64>,
    pub a: f64,
    pub logz_ep: f64,
    pub log_r: f64,
    pub logz_mc: f64,
    pub search: Vec<SearchRow>,
    pub rows: Vec<PredictiveRow>,
}

/// Training data: explicit, or drawn from the data kernel's prior and quantized.
pub fn quantized_data(config: &GpQuantizedConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let inputs = if config.inputs.is_empty() {
        linspace(config.input_lo, config.input_hi, config.n_train)
    } else {
        config.inputs.clone()
    };
    if inputs.is_empty() {
        return Err(invalid("no training inputs"));
    }
    if !config.observations.is_empty() {
        if config.observations.len() != inputs.len() {
            return Err(invalid("observations and inputs differ in length"));
        }
        return Ok((inputs, config.observations.clone()));
    }
    let k = config.data_kernel.matrix_1d(&inputs)?;
    let n = inputs.len();
    let l = (&k + DMatrix::identity(n, n) * 1e-9)
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("data kernel not positive definite".into()))?
        .l();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = 2.0 * config.a;
    let y = (l * z).iter().map(|x| step * (x / step).round() + 0.0).collect();
    Ok((inputs, y))
}

fn quantized_model(kernel: &Kernel, inputs: &[f64], y: &[f64], a: f64) -> Result<Model> {
    let k = kernel.matrix_1d(inputs)?;
    Model::new(QuadraticBase::kernel(k)?, y.iter().map(|&y| SiteKind::BoxObserved { y, a }).collect())
}

/// EP predictive quantities at one test input: covariance with the training
/// latents, mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub cov_row: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

/// Joint q(x, x_*) for a test input with cross-covariances `k_star` and
/// prior variance `kappa`. With T = diag(site precisions) and h the site
/// linear terms: Σ_{·*} = (I + KT)⁻¹k_*, μ_* = k_*ᵀ(I + TK)⁻¹h and
/// σ_*² = κ_* − k_*ᵀ(I + TK)⁻¹T k_*. If `duplicate_of` names a training
/// input at the same location, q's own row is returned.
pub fn predictive(
    state: &GaussianState,
    k: &DMatrix<f64>,
    k_star: &DVector<f64>,
    kappa: f64,
    duplicate_of: Option<usize>,
) -> Result<Predictive> {
    let n = state.dim();
    if let Some(i) = duplicate_of {
        return Ok(Predictive {
            cov_row: state.sigma.row(i).iter().copied().collect(),
            mean: state.mu[i],
            var: state.sigma[(i, i)],
        });
    }
    let t = DMatrix::from_diagonal(&DVector::from_column_slice(&state.site_lambda));
    let h = DVector::from_column_slice(&state.site_gamma);
    let eye = DMatrix::<f64>::identity(n, n);
    let a_lu = (&eye + k * &t).lu();
    let b_lu = (&eye + &t * k).lu();
    let singular = || Error::LinearAlgebra("I + KT is singular".into());
    let cov_row = a_lu.solve(k_star).ok_or_else(singular)?;
    let mean = k_star.dot(&b_lu.solve(&h).ok_or_else(singular)?);
    let var = kappa - k_star.dot(&b_lu.solve(&(&t * k_star)).ok_or_else(singular)?);
    Ok(Predictive { cov_row: cov_row.iter().copied().collect(), mean, var })
}

fn search_kernel(
    grid: &HyperGrid,
    inputs: &[f64],
    y: &[f64],
    a: f64,
    ep: &EpSettings,
) -> Result<(Kernel, Vec<SearchRow>)> {
    let mut rows = Vec::new();
    let mut best: Option<(f64, Kernel)> = None;
    for &amp in &grid.amplitudes {
        for &ls in &grid.lengthscales {
            let kernel = Kernel::squared_exponential(amp, ls)?;
            let lz = quantized_model(&kernel, inputs, y, a)
                .and_then(|m| {
                    let st = ep_solve(&m, &ep.to_config())?;
                    if !st.converged {
                        return Err(Error::InvalidState("EP did not converge".into()));
                    }
                    log_z_ep(&st, &m)
                })
                .unwrap_or(f64::NAN);
            if lz.is_finite() && best.as_ref().is_none_or(|b| lz > b.0) {
                best = Some((lz, kernel));
            }
            rows.push(SearchRow { amplitude: amp, lengthscale: ls, logz_ep: lz });
        }
    }
    let (_, kernel) = best.ok_or_else(|| Error::InvalidState("EP failed for every hyperparameter candidate".into()))?;
    Ok((kernel, rows))
}

/// EP predictive mean and variance on the prediction grid with their
/// second-order corrections, optionally checked by importance sampling.
pub fn run_gp_quantized(config: &GpQuantizedConfig) -> Result<PredictiveReport> {
    if !(config.a > 0.0) {
        return Err(invalid("a must be positive"));
    }
    let (inputs, y) = quantized_data(config)?;
    if y.iter().chain(&inputs).any(|v| !v.is_finite()) {
        return Err(invalid("inputs and observations must be finite"));
    }
    let (kernel, search) = match &config.search {
        Some(grid) => search_kernel(grid, &inputs, &y, config.a, &config.ep)?,
        None => (config.kernel, Vec::new()),
    };
    let model = quantized_model(&kernel, &inputs, &y, config.a)?;
    let state = ep_solve(&model, &config.ep.to_config())?;
    if !state.converged {
        return Err(Error::InvalidState(format!("EP did not converge (residual {:e})", state.residual)));
    }
    let logz_ep = log_z_ep(&state, &model)?;
    let log_r = correct::factorized_correction(&state, &model, &config.mean_orders)?.log_r;
    let tables = site_cumulants(&state, &model)?;
    let QuadraticBase::Kernel { k, .. } = &model.base else { unreachable!() };

    let grid = if config.grid.is_empty() {
        let lo = inputs.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        linspace(lo, hi, 101)
    } else {
        config.grid.clone()
    };

    let mc = if config.mc_samples > 0 {
        let proposal_cov = &state.sigma * 1.5;
        let est = gp_model_mc_with_proposal(&model, &state.mu, &proposal_cov, config.mc_samples, config.seed)?;
        let chol = k.clone().cholesky().ok_or_else(|| Error::LinearAlgebra("kernel Cholesky failed".into()))?;
        Some((est, chol))
    } else {
        None
    };

    let pts: Vec<Vec<f64>> = inputs.iter().map(|&s| vec![s]).collect();
    let mut rows = Vec::with_capacity(grid.len());
    for &s in &grid {
        let (k_star, kappa) = kernel.cross(&pts, &[s]);
        let dup = inputs.iter().position(|&x| x == s);
        let p = predictive(&state, k, &k_star, kappa, dup)?;
        let dm = mean_correction_for(&p.cov_row, &state.sigma, &tables, &config.mean_orders)?;
        let dv = cov_correction_for(
            &p.cov_row,
            &p.cov_row,
            &state.sigma,
            &tables,
            &config.var_first_orders,
            &config.var_second_orders,
        )?;
        // E[x_*|x] = k_*ᵀK⁻¹x, so predictive moments follow from the latent moments.
        let (mean_mc, var_mc) = match &mc {
            Some((est, chol)) => {
                let w = chol.solve(&k_star);
                let cond = kappa - k_star.dot(&w);
                (w.dot(&est.means), cond + w.dot(&(&est.cov * &w)))
            }
            None => (f64::NAN, f64::NAN),
        };
        rows.push(PredictiveRow {
            s,
            mean_ep: p.mean,
            var_ep: p.var,
            mean_corrected: p.mean + dm,
            var_corrected: p.var + dv,
            mean_mc,
            var_mc,
        });
    }
    Ok(PredictiveReport {
        kernel,
        inputs,
        observations: y,
        a: config.a,
        logz_ep,
        log_r,
        logz_mc: mc.as_ref().map_or(f64::NAN, |m| m.0.log_z),
        search,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> GpQuantizedConfig {
        GpQuantizedConfig {
            n_train: 8,
            grid: vec![-20.0, -1.0, 0.3, 2.0],
            kernel: Kernel::SquaredExponential { amplitude: 1.0, lengthscale: 1.0 },
            ..Default::default()
        }
    }

    #[test]
    fn predictive_matches_augmented_inverse() {
        let cfg = small_config();
        let (x, y) = quantized_data(&cfg).unwrap();
        let model = quantized_model(&cfg.kernel, &x, &y, cfg.a).unwrap();
        let st = ep_solve(&model, &cfg.ep.to_config()).unwrap();
        let mut all = x.clone();
        all.push(0.37);
        let kfull = cfg.kernel.matrix_1d(&all).unwrap();
        let n = x.len();
        let mut prec = kfull.clone().try_inverse().unwrap();
        let mut lin = DVector::zeros(n + 1);
        for i in 0..n {
            prec[(i, i)] += st.site_lambda[i];
            lin[i] = st.site_gamma[i];
        }
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * lin;
        let kk = kfull.view((0, 0), (n, n)).into_owned();
        let ks = DVector::from_fn(n, |i, _| kfull[(i, n)]);
        let p = predictive(&st, &kk, &ks, kfull[(n, n)], None).unwrap();
        assert_relative_eq!(p.mean, mean[n], epsilon = 1e-8);
        assert_relative_eq!(p.var, cov[(n, n)], epsilon = 1e-8);
        for i in 0..n {
            assert_relative_eq!(p.cov_row[i], cov[(i, n)], epsilon = 1e-8);
        }
    }

    #[test]
    fn duplicate_input_matches_general_path() {
        let cfg = small_config();
        let (x, y) = quantized_data(&cfg).unwrap();
        let model = quantized_model(&cfg.kernel, &x, &y, cfg.a).unwrap();
        let st = ep_solve(&model, &cfg.ep.to_config()).unwrap();
        let QuadraticBase::Kernel { k, .. } = &model.base else { unreachable!() };
        let pts: Vec<Vec<f64>> = x.iter().map(|&s| vec![s]).collect();
        let (ks, kappa) = cfg.kernel.cross(&pts, &[x[3]]);
        let a = predictive(&st, k, &ks, kappa, Some(3)).unwrap();
        let b = predictive(&st, k, &ks, kappa, None).unwrap();
        assert_relative_eq!(a.mean, b.mean, epsilon = 1e-8);
        assert_relative_eq!(a.var, b.var, epsilon = 1e-8);
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let rep = run_gp_quantized(&small_config()).unwrap();
        let far = &rep.rows[0];
        assert!(far.mean_ep.abs() < 1e-12);
        assert_relative_eq!(far.var_ep, 1.0, epsilon = 1e-12);
        assert!((far.mean_corrected - far.mean_ep).abs() < 1e-12);
        assert!((far.var_corrected - far.var_ep).abs() < 1e-12);
    }

    #[test]
    fn observations_respect_quantization() {
        let cfg = GpQuantizedConfig { a: 0.25, ..small_config() };
        let (_, y) = quantized_data(&cfg).unwrap();
        for v in y {
            let q = v / 0.5;
            assert!((q - q.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn box_sweep_shapes() {
        let cfg = GpBoxConfig {
            n_list: vec![4, 8],
            mc_samples: 0,
            a_list: vec![1.0],
            sweep_n: vec![6],
            ..Default::default()
        };
        let rows = run_gp_box(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.converged && r.log_r_c4 > 0.0 && !r.mc_ok));
        assert_eq!(run_gp_box_sweep(&cfg).unwrap().len(), 1);
        let bad = GpBoxConfig { n_list: vec![8, 4], ..cfg };
        assert!(run_gp_box(&bad).is_err());
    }
}
