use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Parameterizer;
use crate::error::{check_len, invalid, Error, Result};

/// Relative singular-value threshold below which a direction counts as absent.
const RANK_TOLERANCE: f64 = 1e-10;

/// Truncated PCA with whitened coefficients:
/// `ξ_i = √(N−1)/s_i · u_iᵀ (x − mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Column-major `data_dim × n_components` basis.
    pub basis: Vec<f64>,
    pub n_components: usize,
    /// All singular values of the centered training matrix, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_train: usize,
}

/// Truncated SVD of the centered training matrix.
pub fn fit_pca(training: &[Vec<f64>], n_components: usize) -> Result<PcaModel> {
    let n = training.len();
    if n < 2 {
        return invalid("PCA needs at least two training vectors");
    }
    let d = training[0].len();
    for x in training {
        check_len("training vector", d, x.len())?;
    }
    if n_components == 0 || n_components > (n - 1).min(d) {
        return invalid(format!(
            "latent dimension {n_components} must lie in 1..={}",
            (n - 1).min(d)
        ));
    }
    let mut mean = vec![0.0; d];
    for x in training {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(d, n, |r, c| training[c][r] - mean[r]);

    let (u, s) = if d > n {
        // Thin QR first so the SVD only sees an n × n factor.
        let qr = centered.qr();
        let q = qr.q();
        let svd = qr.r().svd(true, false);
        let u_r = svd.u.expect("requested");
        (q * u_r, svd.singular_values)
    } else {
        let svd = centered.svd(true, false);
        (svd.u.expect("requested"), svd.singular_values)
    };

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let s_max = singular_values[0];
    let significant = singular_values
        .iter()
        .filter(|&&v| v > RANK_TOLERANCE * s_max.max(f64::MIN_POSITIVE))
        .count();
    if significant < n_components {
        return Err(Error::RankDeficient {
            requested: n_components,
            available: significant,
        });
    }
    let mut basis = Vec::with_capacity(d * n_components);
    for &i in &order[..n_components] {
        basis.extend(u.column(i).iter().copied());
    }
    Ok(PcaModel {
        mean,
        basis,
        n_components,
        singular_values,
        n_train: n,
    })
}

impl PcaModel {
    pub fn data_dim(&self) -> usize {
        self.mean.len()
    }

    fn column(&self, j: usize) -> &[f64] {
        let d = self.data_dim();
        &self.basis[j * d..(j + 1) * d]
    }

    /// Standard deviation of each whitened coefficient in data units.
    pub fn scales(&self) -> Vec<f64> {
        let f = ((self.n_train - 1) as f64).sqrt();
        self.singular_values[..self.n_components].iter().map(|s| s / f).collect()
    }

    /// Root-mean-square of [`Self::scales`]; 1 when every scale is zero.
    pub fn rms_scale(&self) -> f64 {
        let s = self.scales();
        let ms = s.iter().map(|v| v * v).sum::<f64>() / s.len().max(1) as f64;
        if ms > 0.0 {
            ms.sqrt()
        } else {
            1.0
        }
    }

    pub fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.data_dim(), self.n_components, &self.basis)
    }

    /// Fraction of total variance captured by the first `k` components.
    pub fn explained_variance(&self, k: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let kept: f64 = self.singular_values[..k.min(self.singular_values.len())]
            .iter()
            .map(|s| s * s)
            .sum();
        if total > 0.0 {
            kept / total
        } else {
            1.0
        }
    }

    /// Unwhitened projection coefficients `Uᵀ(x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("PCA input", self.data_dim(), x.len())?;
        Ok((0..self.n_components)
            .map(|j| {
                self.column(j)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(u, (v, m))| u * (v - m))
                    .sum()
            })
            .collect())
    }

    /// `mean + U a` for unwhitened coefficients `a`.
    pub fn reconstruct(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("PCA coefficients", self.n_components, a.len())?;
        let mut out = self.mean.clone();
        for (j, &c) in a.iter().enumerate() {
            if c != 0.0 {
                for (o, u) in out.iter_mut().zip(self.column(j)) {
                    *o += c * u;
                }
            }
        }
        Ok(out)
    }

    /// Entries `idx` of `mean + U a`.
    pub fn reconstruct_at(&self, a: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        check_len("PCA coefficients", self.n_components, a.len())?;
        let d = self.data_dim();
        if let Some(&bad) = idx.iter().find(|&&i| i >= d) {
            return invalid(format!("index {bad} outside data dimension {d}"));
        }
        Ok(idx
            .iter()
            .map(|&i| {
                self.mean[i]
                    + a.iter()
                        .enumerate()
                        .map(|(j, c)| c * self.basis[j * d + i])
                        .sum::<f64>()
            })
            .collect())
    }
}

impl Parameterizer for PcaModel {
    fn latent_dim(&self) -> usize {
        self.n_components
    }

    fn data_dim(&self) -> usize {
        self.mean.len()
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.project(x)?;
        Ok(a.iter().zip(self.scales()).map(|(c, s)| c / s).collect())
    }

    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("latent vector", self.n_components, xi.len())?;
        let a: Vec<f64> = xi.iter().zip(self.scales()).map(|(z, s)| z * s).collect();
        self.reconstruct(&a)
    }

    fn decode_at(&self, xi: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        check_len("latent vector", self.n_components, xi.len())?;
        let a: Vec<f64> = xi.iter().zip(self.scales()).map(|(z, s)| z * s).collect();
        self.reconstruct_at(&a, idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_direction_has_one_singular_value() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let data: Vec<Vec<f64>> = (0..6)
            .map(|i| v.iter().map(|x| 7.0 + (i as f64 - 2.0) * x).collect())
            .collect();
        let m = fit_pca(&data, 1).unwrap();
        assert!(m.singular_values[0] > 1.0);
        assert!(m.singular_values[1..].iter().all(|&s| s < 1e-10 * m.singular_values[0]));
        assert!(matches!(fit_pca(&data, 2), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn full_rank_round_trip() {
        let data: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..30).map(|j| ((i * 31 + j * 17) % 23) as f64 * 0.1 + (i * j) as f64 * 0.01).collect())
            .collect();
        let m = fit_pca(&data, 7).unwrap();
        for x in &data {
            let back = m.decode(&m.encode(x).unwrap()).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8);
        }
        let idx = [0, 5, 29];
        let xi = m.encode(&data[3]).unwrap();
        let full = m.decode(&xi).unwrap();
        let part = m.decode_at(&xi, &idx).unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert!((part[k] - full[i]).abs() < 1e-12);
        }
    }
}
