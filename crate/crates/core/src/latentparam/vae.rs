use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pca::PcaModel;
use super::Parameterizer;
use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{stream_rng, streams};

pub const LEAKY_SLOPE: f64 = 0.2;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Reconstruction weight `ω` over epochs `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaStage {
    pub start: usize,
    pub end: usize,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub omega_schedule: Vec<OmegaStage>,
    pub seed: u64,
    /// Fold an affine whitening of the training-set mode encodings into the
    /// network after training.
    #[serde(default = "default_true")]
    pub whiten_latent: bool,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// 600 epochs, batch 8, learning rate 7.5e-4 and the three-stage schedule
    /// 1e5 → 1e3 → 100.
    pub fn with_latent_dim(latent_dim: usize, seed: u64) -> Self {
        Self {
            latent_dim,
            hidden: vec![256, 128],
            epochs: 600,
            batch_size: 8,
            learning_rate: 7.5e-4,
            omega_schedule: vec![
                OmegaStage {
                    start: 0,
                    end: 100,
                    omega: 1e5,
                },
                OmegaStage {
                    start: 100,
                    end: 400,
                    omega: 1e3,
                },
                OmegaStage {
                    start: 400,
                    end: 600,
                    omega: 100.0,
                },
            ],
            seed,
            whiten_latent: true,
        }
    }

    /// Same schedule shape compressed or stretched to `epochs`, stage
    /// boundaries scaled proportionally.
    pub fn rescaled(&self, epochs: usize) -> Self {
        let total = self.epochs.max(1);
        let mut stages = Vec::with_capacity(self.omega_schedule.len());
        let mut start = 0;
        for s in &self.omega_schedule {
            let end = (s.end * epochs + total / 2) / total;
            if end > start {
                stages.push(OmegaStage {
                    start,
                    end,
                    omega: s.omega,
                });
                start = end;
            }
        }
        if let Some(last) = stages.last_mut() {
            last.end = epochs;
        }
        Self {
            epochs,
            omega_schedule: stages,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return invalid("latent dimension, epochs and batch size must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return invalid("hidden layer widths must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        let mut next = 0;
        for s in &self.omega_schedule {
            if s.start != next || s.end <= s.start || !(s.omega > 0.0) {
                return invalid("omega schedule must tile [0, epochs) with positive weights");
            }
            next = s.end;
        }
        if next != self.epochs {
            return invalid("omega schedule must end at the last epoch");
        }
        Ok(())
    }

    pub fn omega_at(&self, epoch: usize) -> f64 {
        self.omega_schedule
            .iter()
            .find(|s| (s.start..s.end).contains(&epoch))
            .map_or(self.omega_schedule.last().map_or(1.0, |s| s.omega), |s| s.omega)
    }
}

/// Fully connected layer `z = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    fn init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Self {
        let sd = gain / (cols as f64).sqrt();
        Self {
            w: DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal)),
            b: DVector::zeros(rows),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: DVector::zeros(self.b.len()),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w * x;
        for mut col in z.column_iter_mut() {
            col += &self.b;
        }
        z
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

fn leaky(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

fn leaky_back(z: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    z.zip_map(g, |v, d| if v > 0.0 { d } else { LEAKY_SLOPE * d })
}

/// Encoder/decoder weights acting on front-end coordinates.
///
/// Layers are stored as `[encoder hidden…, μ head, log σ² head, decoder
/// hidden…, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeNet {
    pub layers: Vec<Dense>,
    pub n_hidden: usize,
}

/// Gradients with the same layout as [`VaeNet::layers`].
#[derive(Debug, Clone)]
pub struct VaeGradients {
    pub layers: Vec<Dense>,
}

/// Batch-mean loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// KL divergence of `N(μ, diag σ²)` from `N(0, I)`.
pub fn kl_divergence(mu: &[f64], sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .map(|(&m, &s)| -0.5 * (1.0 + 2.0 * s.ln() - m * m - s * s))
        .sum()
}

struct Cache {
    enc_z: Vec<DMatrix<f64>>,
    enc_h: Vec<DMatrix<f64>>,
    mu: DMatrix<f64>,
    logvar: DMatrix<f64>,
    xi: DMatrix<f64>,
    dec_z: Vec<DMatrix<f64>>,
    dec_h: Vec<DMatrix<f64>>,
    y: DMatrix<f64>,
}

impl VaeNet {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], latent: usize, rng: &mut R) -> Self {
        let hidden_gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let mut layers = Vec::new();
        let mut prev = input;
        for &h in hidden {
            layers.push(Dense::init(h, prev, hidden_gain, rng));
            prev = h;
        }
        layers.push(Dense::init(latent, prev, 1.0, rng));
        layers.push(Dense::init(latent, prev, 0.1, rng));
        prev = latent;
        for &h in hidden.iter().rev() {
            layers.push(Dense::init(h, prev, hidden_gain, rng));
            prev = h;
        }
        layers.push(Dense::init(input, prev, 1.0, rng));
        Self {
            layers,
            n_hidden: hidden.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.n_hidden].w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    fn mu_layer(&self) -> &Dense {
        &self.layers[self.n_hidden]
    }

    fn logvar_layer(&self) -> &Dense {
        &self.layers[self.n_hidden + 1]
    }

    fn decoder_layers(&self) -> &[Dense] {
        &self.layers[self.n_hidden + 2..]
    }

    /// Re-expresses the latent space so that the mode encodings `mu` (one
    /// column per vector) have zero mean and identity covariance. The μ head
    /// and the first decoder layer absorb the affine map exactly, so
    /// `decode(encode(x))` is unchanged. The log-variance bias is shifted so
    /// that the average posterior variance transforms consistently.
    pub fn whiten_latent(&mut self, mu: &DMatrix<f64>, logvar: &DMatrix<f64>) -> Result<()> {
        let l = self.latent_dim();
        let n = mu.ncols();
        if mu.nrows() != l || logvar.shape() != mu.shape() {
            return invalid("latent samples do not match the latent dimension");
        }
        if n < 2 {
            return invalid("whitening needs at least two encodings");
        }
        let mean = mu.column_mean();
        let centered = mu - &mean * DMatrix::from_element(1, n, 1.0);
        let cov = &centered * centered.transpose() / (n as f64 - 1.0);
        let eig = cov.symmetric_eigen();
        let top = eig.eigenvalues.max();
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::Factorization("latent encodings have no spread".into()));
        }
        let floor = top * 1e-12;
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let v = &eig.eigenvectors;
        let w = v * DMatrix::from_diagonal(&vals.map(|e| 1.0 / e.sqrt())) * v.transpose();
        let w_inv = v * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * v.transpose();

        let mean_var = logvar.map(f64::exp).column_mean();
        let h = self.n_hidden;
        {
            let head = &mut self.layers[h];
            head.w = &w * &head.w;
            head.b = &w * (&head.b - &mean);
        }
        {
            let head = &mut self.layers[h + 1];
            for k in 0..l {
                let mapped: f64 = (0..l).map(|j| w[(k, j)] * w[(k, j)] * mean_var[j]).sum();
                head.b[k] += (mapped / mean_var[k]).ln();
            }
        }
        {
            let first = &mut self.layers[h + 2];
            first.b += &first.w * &mean;
            first.w = &first.w * &w_inv;
        }
        Ok(())
    }

    /// Mode encodings `(μ, log σ²)` of the columns of `a`.
    pub fn encode_batch(&self, a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut h = a.clone();
        for layer in &self.layers[..self.n_hidden] {
            h = leaky(&layer.apply(&h));
        }
        (self.mu_layer().apply(&h), self.logvar_layer().apply(&h))
    }

    pub fn decode_batch(&self, xi: &DMatrix<f64>) -> DMatrix<f64> {
        let dec = self.decoder_layers();
        let mut g = xi.clone();
        for layer in &dec[..dec.len() - 1] {
            g = leaky(&layer.apply(&g));
        }
        dec[dec.len() - 1].apply(&g)
    }

    fn forward(&self, a: &DMatrix<f64>, eta: &DMatrix<f64>) -> Cache {
        let mut enc_z = Vec::with_capacity(self.n_hidden);
        let mut enc_h = Vec::with_capacity(self.n_hidden);
        let mut h = a.clone();
        for layer in &self.layers[..self.n_hidden] {
            let z = layer.apply(&h);
            h = leaky(&z);
            enc_z.push(z);
            enc_h.push(h.clone());
        }
        let mu = self.mu_layer().apply(&h);
        let logvar = self.logvar_layer().apply(&h);
        let xi = mu.zip_zip_map(&logvar, eta, |m, lv, e| m + (0.5 * lv).exp() * e);
        let dec = self.decoder_layers();
        let mut dec_z = Vec::with_capacity(dec.len() - 1);
        let mut dec_h = Vec::with_capacity(dec.len() - 1);
        let mut g = xi.clone();
        for layer in &dec[..dec.len() - 1] {
            let z = layer.apply(&g);
            g = leaky(&z);
            dec_z.push(z);
            dec_h.push(g.clone());
        }
        let y = dec[dec.len() - 1].apply(&g);
        Cache {
            enc_z,
            enc_h,
            mu,
            logvar,
            xi,
            dec_z,
            dec_h,
            y,
        }
    }

    fn loss_from_cache(
        cache: &Cache,
        a: &DMatrix<f64>,
        weights: &DVector<f64>,
        resid_sq: &[f64],
        omega: f64,
    ) -> LossParts {
        let batch = a.ncols() as f64;
        let mut recon = resid_sq.iter().sum::<f64>();
        for (c, col) in cache.y.column_iter().enumerate() {
            for r in 0..col.len() {
                let e = a[(r, c)] - col[r];
                recon += weights[r] * e * e;
            }
        }
        recon /= batch;
        let mut kl = 0.0;
        for (m, lv) in cache.mu.iter().zip(cache.logvar.iter()) {
            kl += -0.5 * (1.0 + lv - m * m - lv.exp());
        }
        kl /= batch;
        LossParts {
            recon,
            kl,
            total: omega * recon + kl,
        }
    }

    /// Batch loss for inputs `a` (columns), per-coordinate reconstruction
    /// weights, per-sample out-of-model residuals and reparameterization noise.
    pub fn loss(
        &self,
        a: &DMatrix<f64>,
        weights: &DVector<f64>,
        resid_sq: &[f64],
        eta: &DMatrix<f64>,
        omega: f64,
    ) -> LossParts {
        Self::loss_from_cache(&self.forward(a, eta), a, weights, resid_sq, omega)
    }

    pub fn loss_and_grad(
        &self,
        a: &DMatrix<f64>,
        weights: &DVector<f64>,
        resid_sq: &[f64],
        eta: &DMatrix<f64>,
        omega: f64,
    ) -> (LossParts, VaeGradients) {
        let cache = self.forward(a, eta);
        let parts = Self::loss_from_cache(&cache, a, weights, resid_sq, omega);
        let batch = a.ncols() as f64;
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();

        let mut dy = &cache.y - a;
        for (r, mut row) in dy.row_iter_mut().enumerate() {
            row *= 2.0 * omega * weights[r] / batch;
        }

        // Decoder.
        let dec_start = self.n_hidden + 2;
        let n_dec = self.layers.len() - dec_start;
        let mut upstream = dy;
        for l in (0..n_dec).rev() {
            let layer = &self.layers[dec_start + l];
            let input = if l == 0 { &cache.xi } else { &cache.dec_h[l - 1] };
            let g = &mut grads[dec_start + l];
            g.w = &upstream * input.transpose();
            g.b = upstream.column_sum();
            let down = layer.w.transpose() * &upstream;
            upstream = if l == 0 {
                down
            } else {
                leaky_back(&cache.dec_z[l - 1], &down)
            };
        }
        let dxi = upstream;

        // Latent heads.
        // ξ − μ = σ ⊙ η, and ∂ξ/∂(log σ²) = σ ⊙ η / 2.
        let noise = &cache.xi - &cache.mu;
        let dmu = &dxi + &cache.mu / batch;
        let dlv = dxi.zip_zip_map(&noise, &cache.logvar, |d, n, lv| {
            0.5 * d * n + 0.5 * (lv.exp() - 1.0) / batch
        });
        let h_top = if self.n_hidden == 0 {
            a
        } else {
            &cache.enc_h[self.n_hidden - 1]
        };
        grads[self.n_hidden].w = &dmu * h_top.transpose();
        grads[self.n_hidden].b = dmu.column_sum();
        grads[self.n_hidden + 1].w = &dlv * h_top.transpose();
        grads[self.n_hidden + 1].b = dlv.column_sum();
        let mut upstream = self.mu_layer().w.transpose() * &dmu + self.logvar_layer().w.transpose() * &dlv;

        // Encoder.
        for l in (0..self.n_hidden).rev() {
            let dz = leaky_back(&cache.enc_z[l], &upstream);
            let input = if l == 0 { a } else { &cache.enc_h[l - 1] };
            grads[l].w = &dz * input.transpose();
            grads[l].b = dz.column_sum();
            if l > 0 {
                upstream = self.layers[l].w.transpose() * &dz;
            }
        }
        (parts, VaeGradients { layers: grads })
    }
}

/// Linear map between data space and the coordinates the network sees.
#[derive(Debug, Clone, PartialEq)]
pub enum FrontEnd {
    /// The network sees the normalized data vector itself.
    Identity { dim: usize },
    /// The network sees orthonormal PCA coefficients of the training span,
    /// divided by one common scale. The map is an isometry up to that scale,
    /// so low-variance directions stay small instead of being inflated to
    /// unit variance. Reconstruction loss is still measured in data space:
    /// the part of a vector outside the span enters as a constant residual.
    Pca(PcaModel),
}

impl FrontEnd {
    pub fn data_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Pca(p) => p.data_dim(),
        }
    }

    pub fn net_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Pca(p) => p.n_components,
        }
    }

    /// Data-space squared error per unit squared error in each net coordinate.
    pub fn weights(&self) -> DVector<f64> {
        match self {
            Self::Identity { dim } => DVector::from_element(*dim, 1.0),
            Self::Pca(p) => DVector::from_element(p.n_components, p.rms_scale().powi(2)),
        }
    }

    /// Net coordinates and squared norm of the part the front-end cannot represent.
    pub fn to_net(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_len("front-end input", self.data_dim(), x.len())?;
        match self {
            Self::Identity { .. } => Ok((x.to_vec(), 0.0)),
            Self::Pca(p) => {
                let a = p.project(x)?;
                let back = p.reconstruct(&a)?;
                let resid = x.iter().zip(&back).map(|(u, v)| (u - v) * (u - v)).sum();
                let c = p.rms_scale();
                Ok((a.iter().map(|v| v / c).collect(), resid))
            }
        }
    }

    pub fn from_net(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Identity { dim } => {
                check_len("front-end output", *dim, y.len())?;
                Ok(y.to_vec())
            }
            Self::Pca(p) => p.reconstruct(&Self::unscale(p, y)?),
        }
    }

    pub fn from_net_at(&self, y: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        match self {
            Self::Identity { dim } => {
                check_len("front-end output", *dim, y.len())?;
                idx.iter()
                    .map(|&i| {
                        y.get(i)
                            .copied()
                            .ok_or_else(|| Error::InvalidInput(format!("index {i} outside output")))
                    })
                    .collect()
            }
            Self::Pca(p) => p.reconstruct_at(&Self::unscale(p, y)?, idx),
        }
    }

    fn unscale(p: &PcaModel, y: &[f64]) -> Result<Vec<f64>> {
        check_len("front-end output", p.n_components, y.len())?;
        let c = p.rms_scale();
        Ok(y.iter().map(|v| v * c).collect())
    }
}

/// Trained VAE with its front-end.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub net: VaeNet,
    pub front: FrontEnd,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub train_recon: Vec<f64>,
    pub train_kl: Vec<f64>,
    pub omega: Vec<f64>,
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(net: &VaeNet) -> Self {
        Self {
            m: net.layers.iter().map(Dense::zeros_like).collect(),
            v: net.layers.iter().map(Dense::zeros_like).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut VaeNet, grads: &VaeGradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            };
            update(p.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice());
            update(p.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice());
        }
    }
}

fn columns(rows: usize, cols: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

impl VaeModel {
    /// Train on normalized vectors; `validation` may be empty.
    pub fn train(
        training: &[Vec<f64>],
        validation: &[Vec<f64>],
        front: FrontEnd,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        config.validate()?;
        if training.is_empty() {
            return invalid("VAE training needs at least one vector");
        }
        let m = front.net_dim();
        let weights = front.weights();
        let prep = |set: &[Vec<f64>]| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
            let mut a = Vec::with_capacity(set.len());
            let mut r = Vec::with_capacity(set.len());
            for x in set {
                let (c, res) = front.to_net(x)?;
                a.push(c);
                r.push(res);
            }
            Ok((a, r))
        };
        let (train_a, train_r) = prep(training)?;
        let (val_a, val_r) = prep(validation)?;

        let mut init_rng = stream_rng(config.seed, streams::VAE_INIT);
        let mut net = VaeNet::new(m, &config.hidden, config.latent_dim, &mut init_rng);
        let mut adam = Adam::new(&net);
        let mut shuffle_rng = stream_rng(config.seed, streams::VAE_SHUFFLE);
        let mut noise_rng = stream_rng(config.seed, streams::VAE_NOISE);
        let mut report = TrainReport::default();
        let mut order: Vec<usize> = (0..train_a.len()).collect();
        let val_cols: Vec<&[f64]> = val_a.iter().map(|v| &v[..]).collect();
        let val_mat = columns(m, &val_cols);

        for epoch in 0..config.epochs {
            let omega = config.omega_at(epoch);
            order.shuffle(&mut shuffle_rng);
            let (mut tot, mut rec, mut kl) = (0.0, 0.0, 0.0);
            for chunk in order.chunks(config.batch_size) {
                let cols: Vec<&[f64]> = chunk.iter().map(|&i| &train_a[i][..]).collect();
                let a = columns(m, &cols);
                let resid: Vec<f64> = chunk.iter().map(|&i| train_r[i]).collect();
                let eta = DMatrix::from_fn(config.latent_dim, chunk.len(), |_, _| {
                    noise_rng.sample::<f64, _>(StandardNormal)
                });
                let (parts, grads) = net.loss_and_grad(&a, &weights, &resid, &eta, omega);
                if !parts.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: format!("recon {}, kl {}", parts.recon, parts.kl),
                    });
                }
                adam.step(&mut net, &grads, config.learning_rate);
                let w = chunk.len() as f64;
                tot += parts.total * w;
                rec += parts.recon * w;
                kl += parts.kl * w;
            }
            let n = train_a.len() as f64;
            report.train_loss.push(tot / n);
            report.train_recon.push(rec / n);
            report.train_kl.push(kl / n);
            report.omega.push(omega);
            if !val_a.is_empty() {
                let eta = DMatrix::zeros(config.latent_dim, val_a.len());
                report.val_loss.push(net.loss(&val_mat, &weights, &val_r, &eta, omega).total);
            }
        }
        if config.whiten_latent && train_a.len() >= 2 {
            let cols: Vec<&[f64]> = train_a.iter().map(|v| &v[..]).collect();
            let (mu, lv) = net.encode_batch(&columns(m, &cols));
            net.whiten_latent(&mu, &lv)?;
        }
        Ok((Self { net, front }, report))
    }

    /// Mode encodings `(μ, σ)` of one normalized vector.
    pub fn encode_distribution(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, _) = self.front.to_net(x)?;
        let (mu, lv) = self.net.encode_batch(&DMatrix::from_column_slice(a.len(), 1, &a));
        Ok((
            mu.iter().copied().collect(),
            lv.iter().map(|v| (0.5 * v).exp()).collect(),
        ))
    }

    /// Reparameterized sample `μ + σ ⊙ η`.
    pub fn encode_sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let (mu, sigma) = self.encode_distribution(x)?;
        Ok(mu
            .iter()
            .zip(&sigma)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    fn decode_net(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("latent vector", self.net.latent_dim(), xi.len())?;
        let y = self.net.decode_batch(&DMatrix::from_column_slice(xi.len(), 1, xi));
        Ok(y.iter().copied().collect())
    }

    /// Loss of a set of normalized vectors with mode encoding.
    pub fn evaluate(&self, set: &[Vec<f64>], omega: f64) -> Result<LossParts> {
        let mut cols = Vec::with_capacity(set.len());
        let mut resid = Vec::with_capacity(set.len());
        for x in set {
            let (a, r) = self.front.to_net(x)?;
            cols.push(a);
            resid.push(r);
        }
        let refs: Vec<&[f64]> = cols.iter().map(|c| &c[..]).collect();
        let a = columns(self.front.net_dim(), &refs);
        let eta = DMatrix::zeros(self.net.latent_dim(), set.len());
        Ok(self.net.loss(&a, &self.front.weights(), &resid, &eta, omega))
    }
}

impl Parameterizer for VaeModel {
    fn latent_dim(&self) -> usize {
        self.net.latent_dim()
    }

    fn data_dim(&self) -> usize {
        self.front.data_dim()
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_distribution(x)?.0)
    }

    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.front.from_net(&self.decode_net(xi)?)
    }

    fn decode_at(&self, xi: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        self.front.from_net_at(&self.decode_net(xi)?, idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_divergence(&[0.0; 5], &[1.0; 5]), 0.0);
        assert_eq!(kl_divergence(&[1.0], &[1.0]), 0.5);
        assert!(kl_divergence(&[0.3, -1.0], &[0.5, 2.0]) > 0.0);
    }

    #[test]
    fn schedule_lookup() {
        let c = TrainConfig::with_latent_dim(8, 0);
        c.validate().unwrap();
        assert_eq!(c.omega_at(0), 1e5);
        assert_eq!(c.omega_at(99), 1e5);
        assert_eq!(c.omega_at(100), 1e3);
        assert_eq!(c.omega_at(599), 100.0);
        let mut bad = c.clone();
        bad.omega_schedule.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn perfect_reconstruction_has_zero_recon_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = VaeNet::new(4, &[3], 2, &mut rng);
        let xi = DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = net.decode_batch(&xi);
        // Feed the decoded vectors back as targets with η chosen so ξ is reused.
        let (mu, lv) = net.encode_batch(&y);
        let eta = (&xi - &mu).zip_map(&lv, |d, l| d / (0.5 * l).exp());
        let parts = net.loss(&y, &DVector::from_element(4, 1.0), &[0.0; 3], &eta, 10.0);
        assert!(parts.recon.abs() < 1e-20);
    }
}
