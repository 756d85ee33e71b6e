//! Statistical checks on generated aquifer fields.
//!
//! The fields are spatially correlated, so the standard error of a sample
//! mean is computed from the covariance model itself rather than from the
//! iid formula, and statistics are pooled over several realizations.

use dsi_core::geostat::{AnisotropicExponential, FieldGenerator, VariogramSpec};
use dsi_core::grid::GridDims;
use dsi_core::rng::stream_rng;

const NX: usize = 50;
const NY: usize = 50;
const NZ: usize = 20;
const REALIZATIONS: usize = 16;

/// Cell sizes chosen so the Table 1 ranges are exactly 10 cells.
fn spec() -> VariogramSpec {
    VariogramSpec::aquifer_default([750.0, 675.0, 0.75])
}

/// Exact variance of the spatial mean of one unit-variance realization.
fn mean_variance(cov: &AnisotropicExponential, cell: [f64; 3]) -> f64 {
    let n = (NX * NY * NZ) as f64;
    let mut acc = 0.0;
    for dz in -(NZ as i64 - 1)..NZ as i64 {
        for dy in -(NY as i64 - 1)..NY as i64 {
            for dx in -(NX as i64 - 1)..NX as i64 {
                let count = (NX as i64 - dx.abs()) * (NY as i64 - dy.abs()) * (NZ as i64 - dz.abs());
                let lag = [dx as f64 * cell[0], dy as f64 * cell[1], dz as f64 * cell[2]];
                acc += count as f64 * cov.correlation(lag);
            }
        }
    }
    acc / (n * n)
}

fn standard_fields() -> Vec<Vec<f64>> {
    let s = spec();
    let dims = GridDims::new(NX, NY, NZ).unwrap();
    let generator = FieldGenerator::new(&s.covariance(), dims, s.cell_size).unwrap();
    assert!(generator.clipped_fraction <= 1e-3);
    let mut rng = stream_rng(2024, 1);
    let mut out = Vec::new();
    while out.len() < REALIZATIONS {
        let (a, b) = generator.standard_pair(&mut rng);
        out.push(a);
        out.push(b);
    }
    out
}

#[test]
fn mean_within_correlated_standard_error() {
    let s = spec();
    let fields = standard_fields();
    let se = (mean_variance(&s.covariance(), s.cell_size) / fields.len() as f64).sqrt() * s.std_logk;
    let n = (NX * NY * NZ * fields.len()) as f64;
    let mean: f64 = fields.iter().flatten().map(|z| s.mean_logk + s.std_logk * z).sum::<f64>() / n;
    assert!((mean - s.mean_logk).abs() < 3.0 * se, "mean {mean}, 3se {}", 3.0 * se);
}

#[test]
fn variance_within_fifteen_percent() {
    let s = spec();
    let fields = standard_fields();
    let n = (NX * NY * NZ * fields.len()) as f64;
    let var: f64 = fields.iter().flatten().map(|z| (s.std_logk * z).powi(2)).sum::<f64>() / n;
    let target = s.std_logk * s.std_logk;
    assert!((var / target - 1.0).abs() < 0.15, "variance {var} vs {target}");
    let sd = var.sqrt();
    assert!((sd / s.std_logk - 1.0).abs() < 0.10);
}

#[test]
fn lag_correlation_matches_model() {
    let s = spec();
    let cov = s.covariance();
    let fields = standard_fields();
    let dims = GridDims::new(NX, NY, NZ).unwrap();
    let lag = 10;
    for axis in 0..3 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for f in &fields {
            for k in 0..NZ {
                for j in 0..NY {
                    for i in 0..NX {
                        let (i2, j2, k2) = match axis {
                            0 => (i + lag, j, k),
                            1 => (i, j + lag, k),
                            _ => (i, j, k + lag),
                        };
                        if i2 >= NX || j2 >= NY || k2 >= NZ {
                            continue;
                        }
                        acc += f[dims.index(i, j, k)] * f[dims.index(i2, j2, k2)];
                        count += 1;
                    }
                }
            }
        }
        let empirical = acc / count as f64;
        let mut shift = [0.0; 3];
        shift[axis] = lag as f64 * s.cell_size[axis];
        let model = cov.correlation(shift);
        assert!(
            (empirical - model).abs() < 0.1,
            "axis {axis}: empirical {empirical}, model {model}"
        );
    }
}
