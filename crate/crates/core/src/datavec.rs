//! Flattened spatio-temporal data vectors, monitor selection, observation
//! noise and per-field normalization.
//!
//! A data vector holds the historical segment followed by the prediction
//! segment. Within a segment entries are ordered by time, then field
//! (pressure, strain, effective normal stress, shear stress), then cell.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::forward::SimResult;
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Pressure,
    Strain,
    SigmaNEff,
    Tau,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [Self::Pressure, Self::Strain, Self::SigmaNEff, Self::Tau];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Pressure => "pressure",
            Self::Strain => "strain_zz",
            Self::SigmaNEff => "sigma_n_eff",
            Self::Tau => "tau",
        }
    }

    /// Stress fields are defined on fault cells only.
    pub fn is_fault_field(self) -> bool {
        matches!(self, Self::SigmaNEff | Self::Tau)
    }
}

pub const N_FIELDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataLayout {
    pub n_cells: usize,
    pub hm_times: Vec<f64>,
    pub pred_times: Vec<f64>,
}

impl DataLayout {
    pub fn new(n_cells: usize, hm_times: Vec<f64>, pred_times: Vec<f64>) -> Result<Self> {
        if n_cells == 0 {
            return invalid("layout needs at least one cell");
        }
        let all: Vec<f64> = hm_times.iter().chain(&pred_times).copied().collect();
        if all.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("layout times must be strictly increasing across both segments");
        }
        Ok(Self {
            n_cells,
            hm_times,
            pred_times,
        })
    }

    pub fn n_times(&self) -> usize {
        self.hm_times.len() + self.pred_times.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.hm_times.iter().chain(&self.pred_times).copied().collect()
    }

    pub fn n_hm(&self) -> usize {
        N_FIELDS * self.n_cells * self.hm_times.len()
    }

    pub fn n_pred(&self) -> usize {
        N_FIELDS * self.n_cells * self.pred_times.len()
    }

    pub fn n_full(&self) -> usize {
        N_FIELDS * self.n_cells * self.n_times()
    }

    /// Flat index of `(time, field, cell)`; `time` counts hm times first.
    pub fn index(&self, time: usize, field: FieldKind, cell: usize) -> usize {
        (time * N_FIELDS + field.index()) * self.n_cells + cell
    }

    pub fn locate(&self, idx: usize) -> (usize, FieldKind, usize) {
        let cell = idx % self.n_cells;
        let tf = idx / self.n_cells;
        (tf / N_FIELDS, FieldKind::ALL[tf % N_FIELDS], cell)
    }

    /// Contiguous slice range of one field at one time.
    pub fn block(&self, time: usize, field: FieldKind) -> std::ops::Range<usize> {
        let start = self.index(time, field, 0);
        start..start + self.n_cells
    }

    /// Vector size when each field is stored only on its own support, e.g.
    /// stresses on fault cells.
    pub fn effective_size(cells_per_field: [usize; N_FIELDS], n_times: usize) -> usize {
        cells_per_field.iter().sum::<usize>() * n_times
    }

    fn sim_time_indices(&self, sim: &SimResult) -> Result<Vec<usize>> {
        self.times()
            .iter()
            .map(|t| {
                sim.times
                    .iter()
                    .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                    .ok_or_else(|| crate::Error::InvalidInput(format!("simulation has no report at t = {t}")))
            })
            .collect()
    }

    /// Flatten a simulation into `d_full`.
    pub fn assemble(&self, sim: &SimResult) -> Result<Vec<f64>> {
        let idx = self.sim_time_indices(sim)?;
        let mut d = Vec::with_capacity(self.n_full());
        for &s in &idx {
            for field in [&sim.pressure, &sim.strain_zz, &sim.sigma_n_eff, &sim.tau] {
                check_len("simulation field", self.n_cells, field[s].len())?;
                d.extend_from_slice(&field[s]);
            }
        }
        Ok(d)
    }

    /// Inverse of [`assemble`](Self::assemble) for the layout's times.
    pub fn scatter(&self, d: &[f64]) -> Result<SimResult> {
        check_len("data vector", self.n_full(), d.len())?;
        let mut sim = SimResult {
            times: self.times(),
            ..SimResult::default()
        };
        for t in 0..self.n_times() {
            sim.pressure.push(d[self.block(t, FieldKind::Pressure)].to_vec());
            sim.strain_zz.push(d[self.block(t, FieldKind::Strain)].to_vec());
            sim.sigma_n_eff.push(d[self.block(t, FieldKind::SigmaNEff)].to_vec());
            sim.tau.push(d[self.block(t, FieldKind::Tau)].to_vec());
        }
        sim.injected_volume = vec![f64::NAN; self.n_times()];
        Ok(sim)
    }
}

/// One monitored entry of `d_full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub well: usize,
    pub field: FieldKind,
    pub cell: usize,
    pub time: usize,
    pub flat: usize,
}

/// The selection operator `H`, stored as gather indices into `d_full`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionIndex {
    pub entries: Vec<SelectionEntry>,
}

impl SelectionIndex {
    pub fn new(layout: &DataLayout, entries: Vec<SelectionEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if e.time >= layout.hm_times.len() || e.cell >= layout.n_cells {
                return invalid(format!("selection entry {e:?} outside the historical segment"));
            }
            if layout.index(e.time, e.field, e.cell) != e.flat {
                return invalid(format!("selection entry {e:?} has an inconsistent flat index"));
            }
            if !seen.insert(e.flat) {
                return invalid(format!("duplicate selection of flat index {}", e.flat));
            }
        }
        Ok(Self { entries })
    }

    /// Pressure and strain in every listed cell of each well at every hm time.
    ///
    /// `wells[w]` lists the cells (one per layer) of monitor well `w`.
    pub fn for_wells(layout: &DataLayout, wells: &[Vec<usize>], fields: &[FieldKind]) -> Result<Self> {
        let mut entries = Vec::new();
        for (w, cells) in wells.iter().enumerate() {
            for t in 0..layout.hm_times.len() {
                for &field in fields {
                    for &cell in cells {
                        entries.push(SelectionEntry {
                            well: w,
                            field,
                            cell,
                            time: t,
                            flat: layout.index(t, field, cell),
                        });
                    }
                }
            }
        }
        Self::new(layout, entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn flat(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.flat).collect()
    }

    /// `H d`.
    pub fn extract(&self, d: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = self.entries.iter().find(|e| e.flat >= d.len()) {
            return invalid(format!("selection index {} outside data vector", bad.flat));
        }
        Ok(self.entries.iter().map(|e| d[e.flat]).collect())
    }

    /// `Hᵀ u` into a zero vector of length `n_full`.
    pub fn adjoint(&self, u: &[f64], n_full: usize) -> Result<Vec<f64>> {
        check_len("selection adjoint input", self.len(), u.len())?;
        let mut out = vec![0.0; n_full];
        for (e, &v) in self.entries.iter().zip(u) {
            out[e.flat] += v;
        }
        Ok(out)
    }
}

pub const PRESSURE_NOISE_STD: f64 = 0.1;
pub const STRAIN_NOISE_FRACTION: f64 = 0.1;
pub const STRAIN_NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub cd_diag: Vec<f64>,
    pub strain_std: f64,
    /// Set when the mean monitored strain was too small and the floor was used.
    pub strain_floor_applied: bool,
}

/// Mean absolute strain over the monitored strain entries of an ensemble.
pub fn mean_monitored_strain(sel: &SelectionIndex, ensemble: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for d in ensemble {
        for e in sel.entries.iter().filter(|e| e.field == FieldKind::Strain) {
            sum += d[e.flat].abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Diagonal observation-error variances for the selected entries.
pub fn build_noise_cov(sel: &SelectionIndex, mean_strain: f64) -> Result<NoiseModel> {
    let mut strain_std = STRAIN_NOISE_FRACTION * mean_strain.abs();
    let floor = !(strain_std >= STRAIN_NOISE_FLOOR);
    if floor {
        strain_std = STRAIN_NOISE_FLOOR;
    }
    let cd_diag = sel
        .entries
        .iter()
        .map(|e| match e.field {
            FieldKind::Pressure => Ok(PRESSURE_NOISE_STD * PRESSURE_NOISE_STD),
            FieldKind::Strain => Ok(strain_std * strain_std),
            other => invalid(format!("no noise model for monitored {}", other.label())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseModel {
        cd_diag,
        strain_std,
        strain_floor_applied: floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub selection: SelectionIndex,
    pub d_obs: Vec<f64>,
    /// Noise-free monitored truth, kept for diagnostics.
    pub d_true: Vec<f64>,
    pub cd_diag: Vec<f64>,
    pub seed: u64,
    pub truth_id: String,
}

impl ObservationSet {
    pub fn validate(&self) -> Result<()> {
        check_len("observed values", self.selection.len(), self.d_obs.len())?;
        check_len("noise variances", self.selection.len(), self.cd_diag.len())?;
        if self.cd_diag.iter().any(|&v| !(v > 0.0)) {
            return invalid("observation variances must be positive");
        }
        Ok(())
    }
}

/// `d_obs = H d_true + ε`, `ε ~ N(0, diag(cd))`.
pub fn make_observations(
    d_true_full: &[f64],
    sel: &SelectionIndex,
    cd_diag: &[f64],
    seed: u64,
    truth_id: &str,
) -> Result<ObservationSet> {
    check_len("noise variances", sel.len(), cd_diag.len())?;
    if cd_diag.iter().any(|&v| !(v >= 0.0)) {
        return invalid("noise variances must be non-negative");
    }
    let d_true = sel.extract(d_true_full)?;
    let mut rng = stream_rng(seed, streams::OBS_NOISE);
    let d_obs = d_true
        .iter()
        .zip(cd_diag)
        .map(|(&d, &v)| {
            let z: f64 = rng.sample(StandardNormal);
            d + v.sqrt() * z
        })
        .collect();
    Ok(ObservationSet {
        selection: sel.clone(),
        d_obs,
        d_true,
        cd_diag: cd_diag.to_vec(),
        seed,
        truth_id: truth_id.to_string(),
    })
}

pub const MIN_NORM_STD: f64 = 1e-14;

/// Per-field z-score statistics fitted on the training ensemble.
///
/// Stress statistics use fault cells only; off-fault stress entries are
/// structural zeros and pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub layout: DataLayout,
    pub mean: [f64; N_FIELDS],
    pub std: [f64; N_FIELDS],
    pub fault_mask: Vec<bool>,
}

impl NormStats {
    pub fn fit(layout: &DataLayout, fault_mask: Vec<bool>, training: &[Vec<f64>]) -> Result<Self> {
        check_len("fault mask", layout.n_cells, fault_mask.len())?;
        if training.is_empty() {
            return invalid("normalization needs at least one training vector");
        }
        let mut sum = [0.0; N_FIELDS];
        let mut count = [0usize; N_FIELDS];
        for d in training {
            check_len("training vector", layout.n_full(), d.len())?;
            for t in 0..layout.n_times() {
                for f in FieldKind::ALL {
                    for (c, v) in d[layout.block(t, f)].iter().enumerate() {
                        if !f.is_fault_field() || fault_mask[c] {
                            sum[f.index()] += v;
                            count[f.index()] += 1;
                        }
                    }
                }
            }
        }
        if count.iter().any(|&c| c == 0) {
            return invalid("a field has no entries to normalize (no fault cells?)");
        }
        let mut mean = [0.0; N_FIELDS];
        for f in 0..N_FIELDS {
            mean[f] = sum[f] / count[f] as f64;
        }
        let mut ss = [0.0; N_FIELDS];
        for d in training {
            for t in 0..layout.n_times() {
                for f in FieldKind::ALL {
                    for (c, v) in d[layout.block(t, f)].iter().enumerate() {
                        if !f.is_fault_field() || fault_mask[c] {
                            ss[f.index()] += (v - mean[f.index()]).powi(2);
                        }
                    }
                }
            }
        }
        let mut std = [0.0; N_FIELDS];
        for f in 0..N_FIELDS {
            std[f] = (ss[f] / count[f] as f64).sqrt();
            if !(std[f] >= MIN_NORM_STD) {
                return invalid(format!("{} has (near) zero spread", FieldKind::ALL[f].label()));
            }
        }
        Ok(Self {
            layout: layout.clone(),
            mean,
            std,
            fault_mask,
        })
    }

    /// `(mean, std)` applying to flat index `idx`, or `None` for a structural zero.
    pub fn affine(&self, idx: usize) -> Option<(f64, f64)> {
        let (_, f, c) = self.layout.locate(idx);
        if f.is_fault_field() && !self.fault_mask[c] {
            None
        } else {
            Some((self.mean[f.index()], self.std[f.index()]))
        }
    }

    pub fn normalize(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len("data vector", self.layout.n_full(), d.len())?;
        Ok(d
            .iter()
            .enumerate()
            .map(|(i, &v)| self.affine(i).map_or(v, |(m, s)| (v - m) / s))
            .collect())
    }

    pub fn denormalize(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("data vector", self.layout.n_full(), z.len())?;
        Ok(z.iter()
            .enumerate()
            .map(|(i, &v)| self.affine(i).map_or(v, |(m, s)| v * s + m))
            .collect())
    }

    /// Denormalize values that sit at flat indices `idx`.
    pub fn denormalize_at(&self, idx: &[usize], z: &[f64]) -> Vec<f64> {
        idx.iter()
            .zip(z)
            .map(|(&i, &v)| self.affine(i).map_or(v, |(m, s)| v * s + m))
            .collect()
    }
}
