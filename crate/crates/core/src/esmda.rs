//! Ensemble smoother with multiple data assimilation on latent vectors.
//!
//! Members are rows of an `N_e × n_params` matrix. In joint mode the six
//! scalar parameters are appended after the latent columns; inside the
//! update they are z-scored against their uniform prior ranges and reflected
//! back into the prior support after every iteration.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datavec::{NormStats, ObservationSet, SelectionIndex};
use crate::error::{check_len, invalid, Error, Result};
use crate::geostat::{PriorRanges, ScalarParams};
use crate::latentparam::Parameterizer;
use crate::rng::{stream_rng, streams, substream};

/// Largest deviation of `Σ 1/α_k` from one accepted in strict mode.
pub const INFLATION_TOLERANCE: f64 = 1e-6;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsmdaConfig {
    pub n_ensemble: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub normalize_inflation: bool,
}

impl Default for EsmdaConfig {
    /// `N_e = 400`, `N_a = 4`, `α = {9.33, 7, 7, 2}` auto-normalized.
    fn default() -> Self {
        Self {
            n_ensemble: 400,
            alphas: vec![9.33, 7.0, 7.0, 2.0],
            seed: 0,
            normalize_inflation: true,
        }
    }
}

impl EsmdaConfig {
    pub fn n_assimilations(&self) -> usize {
        self.alphas.len()
    }

    /// Inflation schedule actually used by the smoother.
    pub fn schedule(&self) -> Result<Vec<f64>> {
        if self.n_ensemble < 2 {
            return invalid("ESMDA needs at least two members");
        }
        validate_inflation(&self.alphas, self.normalize_inflation)
    }
}

pub fn inflation_reciprocal_sum(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| 1.0 / a).sum()
}

/// Checks `Σ 1/α_k = 1`; with `normalize` the schedule is rescaled to satisfy it.
pub fn validate_inflation(alphas: &[f64], normalize: bool) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return invalid("inflation schedule is empty");
    }
    if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return invalid("inflation factors must be positive and finite");
    }
    let sum = inflation_reciprocal_sum(alphas);
    if normalize {
        Ok(alphas.iter().map(|a| a * sum).collect())
    } else if (sum - 1.0).abs() > INFLATION_TOLERANCE {
        invalid(format!("sum of reciprocal inflation factors is {sum}, not 1"))
    } else {
        Ok(alphas.to_vec())
    }
}

/// Ensemble of latent vectors, optionally with appended scalar columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEnsemble {
    /// `N_e × (n_latent + n_scalars)`, one member per row.
    pub values: DMatrix<f64>,
    pub n_latent: usize,
    pub labels: Vec<String>,
}

impl LatentEnsemble {
    pub fn new(values: DMatrix<f64>, n_latent: usize, joint: bool) -> Result<Self> {
        let expected = n_latent + if joint { ScalarParams::LABELS.len() } else { 0 };
        check_len("ensemble columns", expected, values.ncols())?;
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("ensemble contains non-finite entries");
        }
        let mut labels: Vec<String> = (0..n_latent).map(|i| format!("xi{i}")).collect();
        if joint {
            labels.extend(ScalarParams::LABELS.iter().map(|s| s.to_string()));
        }
        Ok(Self {
            values,
            n_latent,
            labels,
        })
    }

    pub fn n_members(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_joint(&self) -> bool {
        self.values.ncols() > self.n_latent
    }

    pub fn latent(&self, member: usize) -> Vec<f64> {
        self.values.view((member, 0), (1, self.n_latent)).iter().copied().collect()
    }

    /// Scalar columns of one member, if any.
    pub fn scalars(&self, member: usize) -> Option<ScalarParams> {
        if !self.is_joint() {
            return None;
        }
        let mut a = [0.0; 6];
        for (k, v) in a.iter_mut().enumerate() {
            *v = self.values[(member, self.n_latent + k)];
        }
        Some(ScalarParams::from_array(a))
    }
}

/// Decodes every member and gathers its monitored entries in physical units.
pub fn predicted_obs(
    ensemble: &LatentEnsemble,
    param: &dyn Parameterizer,
    sel: &SelectionIndex,
    norm: &NormStats,
) -> Result<DMatrix<f64>> {
    check_len("latent dimension", param.latent_dim(), ensemble.n_latent)?;
    let idx = sel.flat();
    let rows: Vec<Vec<f64>> = (0..ensemble.n_members())
        .into_par_iter()
        .map(|j| {
            param
                .decode_at(&ensemble.latent(j), &idx)
                .map(|z| norm.denormalize_at(&idx, &z))
                .map_err(|e| Error::Member {
                    member: j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), idx.len(), |r, c| rows[r][c]))
}

fn anomalies(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.row_mean();
    let mut a = m.clone();
    for mut row in a.row_iter_mut() {
        row -= &mean;
    }
    a
}

/// Cholesky factor of `s`, adding diagonal jitter from 1e−10 up to 1e−6 of
/// the mean diagonal when the plain factorization fails.
pub(crate) fn factor_with_jitter(s: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(s.clone()) {
        return Ok(c);
    }
    let n = s.nrows();
    let scale = s.trace() / n as f64;
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-12) {
        let mut t = s.clone();
        for i in 0..n {
            t[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(t) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(
        "data covariance plus inflated noise is not positive definite".into(),
    ))
}

/// One smoother step with caller-supplied standard-normal perturbations
/// `noise` (`N_e × N_obs`):
/// `m_j ← m_j + C_md (C_d + α C_D)⁻¹ (d_obs + √α C_D^{1/2} z_j − d_j)`.
pub fn esmda_update_with_noise(
    ensemble: &DMatrix<f64>,
    pred_obs: &DMatrix<f64>,
    d_obs: &[f64],
    cd_diag: &[f64],
    alpha: f64,
    noise: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let ne = ensemble.nrows();
    let m = d_obs.len();
    if ne < 2 {
        return invalid("ESMDA needs at least two members");
    }
    check_len("predicted members", ne, pred_obs.nrows())?;
    check_len("predicted observations", m, pred_obs.ncols())?;
    check_len("noise variances", m, cd_diag.len())?;
    if noise.shape() != (ne, m) {
        return invalid("perturbation matrix shape does not match the ensemble");
    }
    if !(alpha > 0.0) {
        return invalid("inflation factor must be positive");
    }
    if cd_diag.iter().any(|&v| !(v > 0.0)) {
        return invalid("observation variances must be positive");
    }
    if m == 0 {
        return Ok(ensemble.clone());
    }
    let scale = 1.0 / (ne as f64 - 1.0);
    let a = anomalies(ensemble);
    let b = anomalies(pred_obs);
    let c_md = a.transpose() * &b * scale;
    let mut s = b.transpose() * &b * scale;
    for (i, &v) in cd_diag.iter().enumerate() {
        s[(i, i)] += alpha * v;
    }
    let chol = factor_with_jitter(s)?;
    let sqrt_a = alpha.sqrt();
    let resid = DMatrix::from_fn(m, ne, |i, j| {
        d_obs[i] + sqrt_a * cd_diag[i].sqrt() * noise[(j, i)] - pred_obs[(j, i)]
    });
    let x = chol.solve(&resid);
    Ok(ensemble + (c_md * x).transpose())
}

/// Perturbations for one iteration, drawn member by member.
fn draw_noise(ne: usize, m: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, stream);
    let mut z = DMatrix::zeros(ne, m);
    for j in 0..ne {
        for i in 0..m {
            z[(j, i)] = rng.sample(StandardNormal);
        }
    }
    z
}

/// One smoother step with perturbations drawn from the ESMDA stream of `seed`.
pub fn esmda_update(
    ensemble: &DMatrix<f64>,
    pred_obs: &DMatrix<f64>,
    d_obs: &[f64],
    cd_diag: &[f64],
    alpha: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let noise = draw_noise(ensemble.nrows(), d_obs.len(), seed, streams::ESMDA);
    esmda_update_with_noise(ensemble, pred_obs, d_obs, cd_diag, alpha, &noise)
}

/// Data mismatch summary after each assimilation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub alpha: f64,
    /// Mean over members and observations of `(d_j − d_obs)² / C_D`, before the update.
    pub mean_sq_mismatch: f64,
}

fn mean_sq_mismatch(pred: &DMatrix<f64>, d_obs: &[f64], cd: &[f64]) -> f64 {
    let n = pred.nrows() * pred.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for j in 0..pred.nrows() {
        for i in 0..pred.ncols() {
            s += (pred[(j, i)] - d_obs[i]).powi(2) / cd[i];
        }
    }
    s / n as f64
}

/// Generic ESMDA loop for a forward map over the whole ensemble.
///
/// `project` is applied to the ensemble after every update (e.g. to enforce
/// bounds); iteration `k` draws perturbations from its own stream.
pub fn run_esmda<F, P>(
    prior: DMatrix<f64>,
    forward: F,
    d_obs: &[f64],
    cd_diag: &[f64],
    config: &EsmdaConfig,
    mut project: P,
) -> Result<(DMatrix<f64>, Vec<IterationStats>)>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    P: FnMut(&mut DMatrix<f64>),
{
    let alphas = config.schedule()?;
    let mut ens = prior;
    let mut stats = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let pred = forward(&ens)?;
        stats.push(IterationStats {
            alpha,
            mean_sq_mismatch: mean_sq_mismatch(&pred, d_obs, cd_diag),
        });
        let noise = draw_noise(ens.nrows(), d_obs.len(), config.seed, substream(streams::ESMDA, k as u64));
        ens = esmda_update_with_noise(&ens, &pred, d_obs, cd_diag, alpha, &noise)?;
        project(&mut ens);
    }
    Ok((ens, stats))
}

/// Prior matrix of the six scalars, one member per row, in `ScalarParams` order.
pub fn scalar_matrix(scalars: &[ScalarParams]) -> DMatrix<f64> {
    DMatrix::from_fn(scalars.len(), 6, |r, c| scalars[r].to_array()[c])
}

/// Output of a DSI run.
#[derive(Debug, Clone, PartialEq)]
pub struct DsiResult {
    pub posterior: LatentEnsemble,
    /// Posterior scalars in physical units (joint mode only).
    pub posterior_scalars: Option<Vec<ScalarParams>>,
    /// Decoded and denormalized posterior `d_full` vectors.
    pub posterior_data: Vec<Vec<f64>>,
    pub iterations: Vec<IterationStats>,
}

/// Data-space inversion: ESMDA on latent vectors with optional joint scalars.
///
/// `prior_latents` is `N_e × N_l`; `joint` holds `N_e` prior scalar sets and
/// their ranges. Scalars enter the update z-scored against the uniform prior
/// mean and standard deviation and are reflected into the prior support.
pub fn run_dsi(
    prior_latents: &DMatrix<f64>,
    param: &dyn Parameterizer,
    obs: &ObservationSet,
    norm: &NormStats,
    config: &EsmdaConfig,
    joint: Option<(&[ScalarParams], &PriorRanges)>,
) -> Result<DsiResult> {
    obs.validate()?;
    let ne = prior_latents.nrows();
    let nl = param.latent_dim();
    check_len("latent columns", nl, prior_latents.ncols())?;
    if ne != config.n_ensemble {
        return invalid(format!(
            "prior ensemble has {ne} members, configuration asks for {}",
            config.n_ensemble
        ));
    }
    let (centers, scales, intervals) = match joint {
        Some((_, ranges)) => {
            ranges.validate()?;
            let iv = ranges.as_array();
            (
                iv.map(|i| i.midpoint()).to_vec(),
                iv.map(|i| i.uniform_std()).to_vec(),
                iv.to_vec(),
            )
        }
        None => (Vec::new(), Vec::new(), Vec::new()),
    };
    let n_s = centers.len();
    let mut prior = DMatrix::zeros(ne, nl + n_s);
    prior.view_mut((0, 0), (ne, nl)).copy_from(prior_latents);
    if let Some((scalars, ranges)) = joint {
        check_len("prior scalar sets", ne, scalars.len())?;
        for (j, s) in scalars.iter().enumerate() {
            if !s.within(ranges) {
                return invalid(format!("prior scalars of member {j} lie outside the prior ranges"));
            }
            for (k, v) in s.to_array().iter().enumerate() {
                prior[(j, nl + k)] = (v - centers[k]) / scales[k];
            }
        }
    }

    let sel = &obs.selection;
    let forward = |ens: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let latent = LatentEnsemble::new(ens.columns(0, nl).into_owned(), nl, false)?;
        predicted_obs(&latent, param, sel, norm)
    };
    let project = |ens: &mut DMatrix<f64>| {
        for j in 0..ens.nrows() {
            for k in 0..n_s {
                let v = ens[(j, nl + k)] * scales[k] + centers[k];
                ens[(j, nl + k)] = (intervals[k].reflect(v) - centers[k]) / scales[k];
            }
        }
    };
    let (post, iterations) = run_esmda(prior, forward, &obs.d_obs, &obs.cd_diag, config, project)?;

    let mut physical = post.clone();
    let posterior_scalars = if n_s > 0 {
        let mut out = Vec::with_capacity(ne);
        for j in 0..ne {
            let mut a = [0.0; 6];
            for k in 0..n_s {
                a[k] = post[(j, nl + k)] * scales[k] + centers[k];
                physical[(j, nl + k)] = a[k];
            }
            out.push(ScalarParams::from_array(a));
        }
        Some(out)
    } else {
        None
    };
    let posterior = LatentEnsemble::new(physical, nl, n_s > 0)?;
    let posterior_data = decode_ensemble(&posterior, param, norm)?;
    Ok(DsiResult {
        posterior,
        posterior_scalars,
        posterior_data,
        iterations,
    })
}

/// Decoded, denormalized `d_full` of every member, in member order.
pub fn decode_ensemble(
    ensemble: &LatentEnsemble,
    param: &dyn Parameterizer,
    norm: &NormStats,
) -> Result<Vec<Vec<f64>>> {
    (0..ensemble.n_members())
        .into_par_iter()
        .map(|j| {
            param
                .decode(&ensemble.latent(j))
                .and_then(|z| norm.denormalize(&z))
                .map_err(|e| Error::Member {
                    member: j,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Encodes each normalized vector (mode encoding) into an `N × N_l` matrix.
pub fn encode_ensemble(param: &dyn Parameterizer, normalized: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = normalized
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            param.encode(x).map_err(|e| Error::Member {
                member: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let nl = param.latent_dim();
    Ok(DMatrix::from_fn(rows.len(), nl, |r, c| rows[r][c]))
}

/// Prior latents drawn from `N(0, I)`.
pub fn sample_prior_latents(n: usize, n_latent: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, substream(streams::ESMDA, u32::MAX as u64));
    DMatrix::from_fn(n, n_latent, |_, _| rng.sample(StandardNormal))
}
