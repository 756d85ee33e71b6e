//! Greedy placement of monitoring well columns.
//!
//! Each candidate column contributes a block of observations (pressure and
//! vertical strain in every layer at the history-matching times). Under a
//! linear-Gaussian model fitted to the prior ensemble, the residual variance
//! of the target quantities after observing a set `S` is
//! `tr(C_qq − C_qS (C_SS + C_D)⁻¹ C_Sq)`. Wells are added one at a time,
//! each time picking the candidate that lowers this the most.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datavec::{FieldKind, PRESSURE_NOISE_STD, STRAIN_NOISE_FLOOR, STRAIN_NOISE_FRACTION};
use crate::error::{check_len, invalid, Result};
use crate::esmda::factor_with_jitter;
use crate::faultgeom::average_fst_from;
use crate::forward::SimResult;
use crate::grid::Grid;

pub const DEFAULT_MONITOR_WELLS: usize = 4;
pub const MIN_PRIOR_MEMBERS: usize = 50;

/// Chosen monitoring columns and what they record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorPlan {
    pub columns: Vec<(usize, usize)>,
    pub layers: Vec<usize>,
    pub fields: Vec<FieldKind>,
    pub times: Vec<f64>,
    /// Residual target variance before any well and after each added well.
    pub residual_variance: Vec<f64>,
}

impl MonitorPlan {
    /// Cells of each monitoring column, one per layer.
    pub fn well_cells(&self, grid: &Grid) -> Vec<Vec<usize>> {
        let dims = grid.dims();
        self.columns
            .iter()
            .map(|&(i, j)| self.layers.iter().map(|&k| dims.index(i, j, k)).collect())
            .collect()
    }
}

/// Candidate observation blocks and target quantities over a prior ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementProblem {
    /// Per candidate: `N × m_c` predicted observations.
    pub features: Vec<DMatrix<f64>>,
    /// Per candidate: observation noise variances (length `m_c`).
    pub noise: Vec<Vec<f64>>,
    /// `N × q` target quantities.
    pub target: DMatrix<f64>,
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.row_mean();
    let mut a = m.clone();
    for mut row in a.row_iter_mut() {
        row -= &mean;
    }
    a
}

impl PlacementProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.target.nrows();
        check_len("candidate noise blocks", self.features.len(), self.noise.len())?;
        for (f, v) in self.features.iter().zip(&self.noise) {
            check_len("candidate members", n, f.nrows())?;
            check_len("candidate noise", f.ncols(), v.len())?;
            if v.iter().any(|&x| !(x > 0.0)) {
                return invalid("observation noise variances must be positive");
            }
        }
        if n < 2 {
            return invalid("placement needs at least two ensemble members");
        }
        Ok(())
    }

    /// Trace of the target covariance after conditioning on candidates `set`.
    pub fn residual_variance(&self, set: &[usize]) -> Result<f64> {
        let n = self.target.nrows();
        let scale = 1.0 / (n as f64 - 1.0);
        let q = centered(&self.target);
        let prior = (q.transpose() * &q * scale).trace();
        let m: usize = set.iter().map(|&c| self.features[c].ncols()).sum();
        if m == 0 {
            return Ok(prior);
        }
        let mut d = DMatrix::zeros(n, m);
        let mut noise = Vec::with_capacity(m);
        let mut col = 0;
        for &c in set {
            let f = &self.features[c];
            d.columns_mut(col, f.ncols()).copy_from(f);
            noise.extend_from_slice(&self.noise[c]);
            col += f.ncols();
        }
        let d = centered(&d);
        let mut s = d.transpose() * &d * scale;
        for (i, v) in noise.iter().enumerate() {
            s[(i, i)] += v;
        }
        let c_dq = d.transpose() * &q * scale;
        let chol = factor_with_jitter(s)?;
        let x = chol.solve(&c_dq);
        let explained = (c_dq.transpose() * x).trace();
        Ok((prior - explained).max(0.0))
    }

    /// Greedy forward selection; ties go to the lowest candidate index.
    /// Returns the chosen candidates and the residual variance trail.
    pub fn greedy(&self, n_wells: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        self.validate()?;
        if n_wells > self.features.len() {
            return invalid(format!(
                "{n_wells} wells requested but only {} candidates",
                self.features.len()
            ));
        }
        let mut chosen = Vec::with_capacity(n_wells);
        let mut trail = vec![self.residual_variance(&[])?];
        for _ in 0..n_wells {
            let scores: Vec<(usize, f64)> = (0..self.features.len())
                .into_par_iter()
                .filter(|c| !chosen.contains(c))
                .map(|c| {
                    let mut set = chosen.clone();
                    set.push(c);
                    self.residual_variance(&set).map(|v| (c, v))
                })
                .collect::<Result<_>>()?;
            let best = scores
                .iter()
                .copied()
                .fold(None, |acc: Option<(usize, f64)>, (c, v)| match acc {
                    Some((_, bv)) if bv <= v => acc,
                    _ => Some((c, v)),
                })
                .expect("at least one candidate left");
            chosen.push(best.0);
            // Conditioning on more data cannot raise the variance; clamp
            // round-off so the trail is monotone.
            trail.push(best.1.min(*trail.last().expect("non-empty")));
        }
        Ok((chosen, trail))
    }
}

/// What the placement optimizes and which data a well records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Fault-cell lists; the target is each fault's average slip tendency.
    pub fault_cells: Vec<Vec<usize>>,
    /// Report time of the target (year 50 by default).
    pub target_time: f64,
    /// Times at which monitoring wells record.
    pub hm_times: Vec<f64>,
    pub layers: Vec<usize>,
}

fn time_index(sim: &SimResult, t: f64) -> Result<usize> {
    sim.times
        .iter()
        .position(|&s| (s - t).abs() < 1e-9)
        .ok_or_else(|| crate::Error::InvalidInput(format!("simulation has no report at year {t}")))
}

/// Greedy monitor placement from prior simulations.
///
/// `candidates` are `(i, j)` columns; columns listed in `exclude` (injectors)
/// are rejected. Members whose target average FST is undefined are dropped.
pub fn place_monitors(
    sims: &[SimResult],
    grid: &Grid,
    candidates: &[(usize, usize)],
    exclude: &[(usize, usize)],
    n_wells: usize,
    spec: &TargetSpec,
) -> Result<MonitorPlan> {
    let fields = vec![FieldKind::Pressure, FieldKind::Strain];
    let empty_plan = |trail: Vec<f64>| MonitorPlan {
        columns: Vec::new(),
        layers: spec.layers.clone(),
        fields: fields.clone(),
        times: spec.hm_times.clone(),
        residual_variance: trail,
    };
    if n_wells == 0 {
        return Ok(empty_plan(Vec::new()));
    }
    if sims.len() < MIN_PRIOR_MEMBERS {
        return invalid(format!(
            "monitor placement needs at least {MIN_PRIOR_MEMBERS} prior members, got {}",
            sims.len()
        ));
    }
    let dims = grid.dims();
    for (a, &c) in candidates.iter().enumerate() {
        if c.0 >= dims.nx || c.1 >= dims.ny {
            return invalid(format!("candidate column {c:?} outside the grid"));
        }
        if exclude.contains(&c) {
            return invalid(format!("candidate column {c:?} coincides with an injector"));
        }
        if candidates[..a].contains(&c) {
            return invalid(format!("candidate column {c:?} listed twice"));
        }
    }
    if spec.layers.iter().any(|&k| k >= dims.nz) || spec.layers.is_empty() {
        return invalid("monitor layers must be a non-empty subset of the grid layers");
    }

    // Targets; drop members with an undefined average.
    let mut keep = Vec::new();
    let mut targets = Vec::new();
    for (m, sim) in sims.iter().enumerate() {
        let t = time_index(sim, spec.target_time)?;
        let vals: Option<Vec<f64>> = spec
            .fault_cells
            .iter()
            .map(|cells| {
                let sn: Vec<f64> = cells.iter().map(|&c| sim.sigma_n_eff[t][c]).collect();
                let tau: Vec<f64> = cells.iter().map(|&c| sim.tau[t][c]).collect();
                average_fst_from(&sn, &tau)
            })
            .collect();
        if let Some(v) = vals {
            keep.push(m);
            targets.push(v);
        }
    }
    let n = keep.len();
    if n < 2 {
        return invalid("fewer than two members have a defined target");
    }
    let q = spec.fault_cells.len();
    let target = DMatrix::from_fn(n, q, |r, c| targets[r][c]);
    let hm_idx: Vec<usize> = spec
        .hm_times
        .iter()
        .map(|&t| time_index(&sims[0], t))
        .collect::<Result<_>>()?;

    let mut features = Vec::with_capacity(candidates.len());
    let mut is_strain = Vec::new();
    for &(i, j) in candidates {
        let cells: Vec<usize> = spec.layers.iter().map(|&k| dims.index(i, j, k)).collect();
        let m = hm_idx.len() * fields.len() * cells.len();
        let mut f = DMatrix::zeros(n, m);
        is_strain.clear();
        for (r, &member) in keep.iter().enumerate() {
            let sim = &sims[member];
            let mut col = 0;
            for &t in &hm_idx {
                for field in &fields {
                    for &c in &cells {
                        f[(r, col)] = match field {
                            FieldKind::Pressure => sim.pressure[t][c],
                            _ => sim.strain_zz[t][c],
                        };
                        if r == 0 {
                            is_strain.push(*field == FieldKind::Strain);
                        }
                        col += 1;
                    }
                }
            }
        }
        features.push(f);
    }
    // Strain noise: 10 % of the mean absolute candidate strain.
    let (mut sum, mut count) = (0.0, 0usize);
    for f in &features {
        for (col, &s) in is_strain.iter().enumerate() {
            if s {
                sum += f.column(col).iter().map(|v| v.abs()).sum::<f64>();
                count += n;
            }
        }
    }
    let strain_std = (STRAIN_NOISE_FRACTION * sum / count.max(1) as f64).max(STRAIN_NOISE_FLOOR);
    let block_noise: Vec<f64> = is_strain
        .iter()
        .map(|&s| if s { strain_std * strain_std } else { PRESSURE_NOISE_STD * PRESSURE_NOISE_STD })
        .collect();
    let problem = PlacementProblem {
        noise: vec![block_noise; features.len()],
        features,
        target,
    };
    let (chosen, trail) = problem.greedy(n_wells)?;
    let mut plan = empty_plan(trail);
    plan.columns = chosen.iter().map(|&c| candidates[c]).collect();
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> PlacementProblem {
        // Candidate 0 independent of the target, candidate 1 equal to it.
        let target = DMatrix::from_fn(n, 1, |r, _| ((r * 37 % 11) as f64 - 5.0) * 0.3);
        let indep = DMatrix::from_fn(n, 1, |r, _| if r % 2 == 0 { 1.0 } else { -1.0 });
        PlacementProblem {
            features: vec![indep, target.clone()],
            noise: vec![vec![1e-6], vec![1e-6]],
            target,
        }
    }

    #[test]
    fn zero_and_single_candidate() {
        let p = toy(20);
        assert!(p.greedy(0).unwrap().0.is_empty());
        let single = PlacementProblem {
            features: vec![p.features[0].clone()],
            noise: vec![vec![1e-6]],
            target: p.target.clone(),
        };
        assert_eq!(single.greedy(1).unwrap().0, vec![0]);
        assert!(single.greedy(2).is_err());
    }

    #[test]
    fn correlated_candidate_first() {
        let (chosen, trail) = toy(22).greedy(2).unwrap();
        assert_eq!(chosen[0], 1);
        assert!(trail[1] < 1e-4 * trail[0]);
    }
}
