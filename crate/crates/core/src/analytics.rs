//! Ensemble statistics: percentile bands, relative field errors,
//! representative members and histograms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datavec::{DataLayout, FieldKind};
use crate::error::{check_len, invalid, Result};
use crate::faultgeom::{average_fst_from, DEFAULT_FRICTION};
use crate::forward::SimResult;
use crate::geostat::{PriorRanges, ScalarParams};
use crate::rng::{stream_rng, streams, substream};

/// Default number of histogram bins.
pub const HISTOGRAM_BINS: usize = 30;
/// Default number of representative members.
pub const DEFAULT_REPRESENTATIVES: usize = 4;
const KMEANS_MAX_ITER: usize = 100;
const KMEANS_RESEEDS: u64 = 10;

/// Linear-interpolation quantile of an ascending slice (`h = (n − 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return invalid("quantiles of an empty set");
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&s, p)).collect())
}

/// `P75 − P25`.
pub fn iqr(values: &[f64]) -> Result<f64> {
    let q = quantiles(values, &[0.25, 0.75])?;
    Ok(q[1] - q[0])
}

/// Per-location P10/P50/P90.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBand {
    pub p10: Vec<f64>,
    pub p50: Vec<f64>,
    pub p90: Vec<f64>,
}

impl PercentileBand {
    pub fn len(&self) -> usize {
        self.p50.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p50.is_empty()
    }

    /// Mean of `P90 − P10` over locations.
    pub fn mean_width(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.p90.iter().zip(&self.p10).map(|(h, l)| h - l).sum::<f64>() / self.len() as f64
    }

    /// Fraction of locations whose `truth` lies inside `[P10, P90]`.
    pub fn coverage(&self, truth: &[f64]) -> Result<f64> {
        check_len("truth values", self.len(), truth.len())?;
        if self.is_empty() {
            return Ok(1.0);
        }
        let inside = truth
            .iter()
            .enumerate()
            .filter(|&(i, &t)| self.p10[i] <= t && t <= self.p90[i])
            .count();
        Ok(inside as f64 / self.len() as f64)
    }
}

/// Bands over members (outer) for every location (inner index).
pub fn percentile_band(members: &[Vec<f64>]) -> Result<PercentileBand> {
    if members.len() < 2 {
        return invalid("percentile band needs at least two members");
    }
    let n = members[0].len();
    for m in members {
        check_len("member length", n, m.len())?;
    }
    let mut band = PercentileBand {
        p10: Vec::with_capacity(n),
        p50: Vec::with_capacity(n),
        p90: Vec::with_capacity(n),
    };
    let mut col = vec![0.0; members.len()];
    for i in 0..n {
        for (c, m) in col.iter_mut().zip(members) {
            *c = m[i];
        }
        col.sort_by(f64::total_cmp);
        band.p10.push(quantile_sorted(&col, 0.1));
        band.p50.push(quantile_sorted(&col, 0.5));
        band.p90.push(quantile_sorted(&col, 0.9));
    }
    Ok(band)
}

/// P10/P25/P50/P75/P90 of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl BoxSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        let q = quantiles(values, &[0.1, 0.25, 0.5, 0.75, 0.9])?;
        Ok(Self {
            p10: q[0],
            p25: q[1],
            p50: q[2],
            p75: q[3],
            p90: q[4],
        })
    }
}

/// Relative errors of one reconstructed case, one value per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub pressure: f64,
    pub strain: f64,
    pub sigma_n_eff: f64,
    pub tau: f64,
    /// Stress errors normalized by the magnitude of the reference values.
    pub sigma_n_eff_by_value: f64,
    pub tau_by_value: f64,
    /// `(field, time)` pairs skipped because the reference range was zero.
    pub skipped: Vec<(FieldKind, usize)>,
}

impl FieldErrors {
    pub fn get(&self, f: FieldKind) -> f64 {
        match f {
            FieldKind::Pressure => self.pressure,
            FieldKind::Strain => self.strain,
            FieldKind::SigmaNEff => self.sigma_n_eff,
            FieldKind::Tau => self.tau,
        }
    }
}

/// Range-normalized mean absolute error of `recon` against `reference`:
/// for every time, `mean_c |x̂ − x| / (max_c x − min_c x)`, then averaged over
/// times. Pressure and strain use all cells, stresses the fault cells.
pub fn relative_errors(
    layout: &DataLayout,
    recon: &[f64],
    reference: &[f64],
    fault_cells: &[usize],
) -> Result<FieldErrors> {
    check_len("reconstruction", layout.n_full(), recon.len())?;
    check_len("reference", layout.n_full(), reference.len())?;
    if let Some(&c) = fault_cells.iter().find(|&&c| c >= layout.n_cells) {
        return invalid(format!("fault cell {c} outside the grid"));
    }
    if fault_cells.is_empty() {
        return invalid("stress errors need at least one fault cell");
    }
    let all: Vec<usize> = (0..layout.n_cells).collect();
    let mut skipped = Vec::new();
    let mut by_range = [0.0; 4];
    let mut by_value = [0.0; 4];
    for f in FieldKind::ALL {
        let cells = if f.is_fault_field() { fault_cells } else { &all[..] };
        let (mut sum, mut used) = (0.0, 0);
        let (mut vsum, mut vcount) = (0.0, 0);
        for t in 0..layout.n_times() {
            let block = layout.block(t, f);
            let x = &reference[block.clone()];
            let y = &recon[block];
            let (lo, hi) = cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                (lo.min(x[c]), hi.max(x[c]))
            });
            let mae = cells.iter().map(|&c| (y[c] - x[c]).abs()).sum::<f64>() / cells.len() as f64;
            if hi > lo {
                sum += mae / (hi - lo);
                used += 1;
            } else {
                skipped.push((f, t));
            }
            for &c in cells {
                if x[c] != 0.0 {
                    vsum += ((y[c] - x[c]) / x[c]).abs();
                    vcount += 1;
                }
            }
        }
        by_range[f.index()] = if used > 0 { sum / used as f64 } else { 0.0 };
        by_value[f.index()] = if vcount > 0 { vsum / vcount as f64 } else { 0.0 };
    }
    Ok(FieldErrors {
        pressure: by_range[0],
        strain: by_range[1],
        sigma_n_eff: by_range[2],
        tau: by_range[3],
        sigma_n_eff_by_value: by_value[2],
        tau_by_value: by_value[3],
        skipped,
    })
}

/// [`relative_errors`] for two simulation results with matching times.
pub fn relative_errors_sim(recon: &SimResult, reference: &SimResult, fault_cells: &[usize]) -> Result<FieldErrors> {
    if recon.times != reference.times || reference.n_times() == 0 {
        return invalid("simulation results must share the same non-empty report times");
    }
    let n_cells = reference.pressure[0].len();
    let layout = DataLayout::new(n_cells, reference.times.clone(), Vec::new())?;
    relative_errors(&layout, &layout.assemble(recon)?, &layout.assemble(reference)?, fault_cells)
}

/// Box summaries of the per-case errors of a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub cases: Vec<FieldErrors>,
    pub pressure: BoxSummary,
    pub strain: BoxSummary,
    pub sigma_n_eff: BoxSummary,
    pub tau: BoxSummary,
}

impl ErrorReport {
    pub fn new(cases: Vec<FieldErrors>) -> Result<Self> {
        let col = |f: FieldKind| -> Result<BoxSummary> {
            BoxSummary::of(&cases.iter().map(|c| c.get(f)).collect::<Vec<_>>())
        };
        Ok(Self {
            pressure: col(FieldKind::Pressure)?,
            strain: col(FieldKind::Strain)?,
            sigma_n_eff: col(FieldKind::SigmaNEff)?,
            tau: col(FieldKind::Tau)?,
            cases,
        })
    }

    pub fn median(&self, f: FieldKind) -> f64 {
        match f {
            FieldKind::Pressure => self.pressure.p50,
            FieldKind::Strain => self.strain.p50,
            FieldKind::SigmaNEff => self.sigma_n_eff.p50,
            FieldKind::Tau => self.tau.p50,
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clustering of an ensemble and the medoid of each cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representatives {
    /// Medoid member index per cluster, clusters ordered by medoid index.
    pub medoids: Vec<usize>,
    /// Cluster of every member, indexing into `medoids`.
    pub assignment: Vec<usize>,
}

/// Member of `members` minimizing the summed Euclidean distance to the others
/// (ties go to the lowest index).
pub fn medoid(points: &[Vec<f64>], members: &[usize]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in members {
        let cost: f64 = members.iter().map(|&j| dist2(&points[i], &points[j]).sqrt()).sum();
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, i));
        }
    }
    best.map(|(_, i)| i)
}

/// k-means++ seeding followed by Lloyd iterations.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, attempt: u64) -> Option<Vec<usize>> {
    let n = points.len();
    let mut rng = stream_rng(seed, substream(streams::KMEANS, attempt));
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, centers.last().expect("pushed")));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, ctr) in centers.iter().enumerate() {
                let d = dist2(p, ctr);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for ((c, s), &cnt) in centers.iter_mut().zip(sums).zip(&counts) {
            *c = s.into_iter().map(|v| v / cnt as f64).collect();
        }
        if !changed {
            break;
        }
    }
    Some(assign)
}

/// Representative members: k-means clusters on Euclidean distance, then the
/// medoid of each cluster. Empty clusters trigger up to 10 re-seeded attempts.
pub fn k_representatives(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Representatives> {
    let n = points.len();
    if k == 0 || k > n {
        return invalid(format!("cannot pick {k} representatives from {n} members"));
    }
    let dim = points[0].len();
    for p in points {
        check_len("member length", dim, p.len())?;
    }
    for attempt in 0..KMEANS_RESEEDS {
        let Some(assign) = kmeans(points, k, seed, attempt) else {
            continue;
        };
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
                (medoid(points, &members).expect("non-empty cluster"), members)
            })
            .collect();
        clusters.sort_by_key(|c| c.0);
        let mut assignment = vec![0; n];
        for (ci, (_, members)) in clusters.iter().enumerate() {
            for &i in members {
                assignment[i] = ci;
            }
        }
        return Ok(Representatives {
            medoids: clusters.iter().map(|c| c.0).collect(),
            assignment,
        });
    }
    invalid(format!("k-means left a cluster empty in {KMEANS_RESEEDS} attempts"))
}

/// Uniform-bin histogram over `[lo, hi]`; values outside are not counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return invalid("histogram needs bins > 0 and a finite range with hi > lo");
        }
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if (lo..=hi).contains(&v) {
                let b = (((v - lo) / w) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Range covering every value, padded when all values coincide.
fn pooled_range(sets: &[&[f64]]) -> Option<(f64, f64)> {
    let (lo, hi) = sets
        .iter()
        .flat_map(|s| s.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi > lo {
        Some((lo, hi))
    } else {
        let pad = 1e-6 * lo.abs().max(1.0);
        Some((lo - pad, hi + pad))
    }
}

/// Prior and posterior distributions of one fault's average slip tendency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FstHistogram {
    pub fault: String,
    pub prior: Histogram,
    pub posterior: Histogram,
    pub truth: Option<f64>,
    pub threshold: f64,
    pub prior_iqr: f64,
    pub posterior_iqr: f64,
    pub prior_above_threshold: f64,
    pub posterior_above_threshold: f64,
    /// Members without a defined average (tensile effective normal stress).
    pub prior_excluded: usize,
    pub posterior_excluded: usize,
}

fn defined(values: &[Option<f64>]) -> (Vec<f64>, usize) {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    let excluded = values.len() - v.len();
    (v, excluded)
}

fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
}

/// Histograms of average FST with 30 bins over the pooled prior/posterior range.
pub fn fst_histograms(
    fault: &str,
    prior: &[Option<f64>],
    posterior: &[Option<f64>],
    truth: Option<f64>,
) -> Result<FstHistogram> {
    let (pv, pe) = defined(prior);
    let (qv, qe) = defined(posterior);
    if pv.is_empty() || qv.is_empty() {
        return invalid(format!("fault {fault}: no member has a defined average slip tendency"));
    }
    let (lo, hi) = pooled_range(&[&pv, &qv]).expect("non-empty");
    Ok(FstHistogram {
        fault: fault.to_string(),
        prior: Histogram::new(&pv, lo, hi, HISTOGRAM_BINS)?,
        posterior: Histogram::new(&qv, lo, hi, HISTOGRAM_BINS)?,
        truth,
        threshold: DEFAULT_FRICTION,
        prior_iqr: iqr(&pv)?,
        posterior_iqr: iqr(&qv)?,
        prior_above_threshold: fraction_above(&pv, DEFAULT_FRICTION),
        posterior_above_threshold: fraction_above(&qv, DEFAULT_FRICTION),
        prior_excluded: pe,
        posterior_excluded: qe,
    })
}

/// Average slip tendency over `cells` at report time `time` of a `d_full` vector.
pub fn fault_average_fst(layout: &DataLayout, d: &[f64], cells: &[usize], time: usize) -> Option<f64> {
    if d.len() != layout.n_full() || time >= layout.n_times() {
        return None;
    }
    let sn = &d[layout.block(time, FieldKind::SigmaNEff)];
    let tau = &d[layout.block(time, FieldKind::Tau)];
    let s: Vec<f64> = cells.iter().map(|&c| sn[c]).collect();
    let t: Vec<f64> = cells.iter().map(|&c| tau[c]).collect();
    average_fst_from(&s, &t)
}

/// Prior and posterior histograms of one scalar parameter over its prior support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterHistogram {
    pub name: String,
    pub prior: Histogram,
    pub posterior: Histogram,
    pub truth: Option<f64>,
    pub prior_iqr: f64,
    pub posterior_iqr: f64,
    /// Posterior members outside the prior support.
    pub outside_support: usize,
}

impl ParameterHistogram {
    /// `1 − posterior IQR / prior IQR`.
    pub fn iqr_reduction(&self) -> f64 {
        if self.prior_iqr > 0.0 {
            1.0 - self.posterior_iqr / self.prior_iqr
        } else {
            0.0
        }
    }
}

pub fn parameter_histograms(
    prior: &[ScalarParams],
    posterior: &[ScalarParams],
    truth: Option<&ScalarParams>,
    ranges: &PriorRanges,
) -> Result<Vec<ParameterHistogram>> {
    if prior.is_empty() || posterior.is_empty() {
        return invalid("parameter histograms need non-empty ensembles");
    }
    let intervals = ranges.as_array();
    (0..6)
        .map(|k| {
            let pv: Vec<f64> = prior.iter().map(|s| s.to_array()[k]).collect();
            let qv: Vec<f64> = posterior.iter().map(|s| s.to_array()[k]).collect();
            let iv = intervals[k];
            Ok(ParameterHistogram {
                name: ScalarParams::LABELS[k].to_string(),
                prior: Histogram::new(&pv, iv.lo, iv.hi, HISTOGRAM_BINS)?,
                posterior: Histogram::new(&qv, iv.lo, iv.hi, HISTOGRAM_BINS)?,
                truth: truth.map(|t| t.to_array()[k]),
                prior_iqr: iqr(&pv)?,
                posterior_iqr: iqr(&qv)?,
                outside_support: qv.iter().filter(|&&v| !iv.contains(v)).count(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_cases() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantiles(&v, &[0.5]).unwrap(), vec![50.5]);
        let band = percentile_band(&[vec![2.0, -1.0], vec![2.0, -1.0], vec![2.0, -1.0]]).unwrap();
        assert_eq!(band.p10, vec![2.0, -1.0]);
        assert_eq!(band.p90, vec![2.0, -1.0]);
        assert!(percentile_band(&[vec![1.0]]).is_err());
        assert!(quantiles(&[], &[0.5]).is_err());
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let layout = DataLayout::new(3, vec![1.0], vec![2.0]).unwrap();
        let d: Vec<f64> = (0..layout.n_full()).map(|i| (i * i % 7) as f64).collect();
        let e = relative_errors(&layout, &d, &d, &[0, 2]).unwrap();
        assert_eq!([e.pressure, e.strain, e.sigma_n_eff, e.tau], [0.0; 4]);
    }

    #[test]
    fn constant_offset_over_range() {
        let layout = DataLayout::new(4, vec![1.0], vec![]).unwrap();
        let reference: Vec<f64> = (0..layout.n_full()).map(|i| (i % 4) as f64 * 2.5).collect();
        let recon: Vec<f64> = reference.iter().map(|v| v + 0.3).collect();
        let e = relative_errors(&layout, &recon, &reference, &[0, 1, 2, 3]).unwrap();
        for v in [e.pressure, e.strain, e.sigma_n_eff, e.tau] {
            assert!((v - 0.3 / 7.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_range_time_is_skipped() {
        let layout = DataLayout::new(2, vec![1.0], vec![]).unwrap();
        let reference = vec![1.0; layout.n_full()];
        let e = relative_errors(&layout, &reference, &reference, &[0]).unwrap();
        assert_eq!(e.skipped.len(), 4);
    }

    #[test]
    fn histogram_mass_and_degenerate_case() {
        let h = Histogram::new(&[0.0, 0.5, 1.0, 2.0], 0.0, 1.0, 4).unwrap();
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
        let f = fst_histograms("f", &[Some(0.3), Some(0.5), None], &[Some(0.4); 3], None).unwrap();
        assert_eq!(f.prior.total(), 2);
        assert_eq!(f.prior_excluded, 1);
        assert_eq!(f.posterior.occupied_bins(), 1);
        assert_eq!(f.posterior_iqr, 0.0);
    }
}
