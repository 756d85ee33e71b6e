//! Prior geomodel generation.
//!
//! Log-permeability and porosity are stationary Gaussian fields with an
//! anisotropic exponential covariance, synthesised by circulant embedding on a
//! periodic grid at least twice the size of the target grid. One complex FFT
//! yields two independent fields; the second one supplies the part of porosity
//! that is not explained by log-permeability.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, GridDims};
use crate::rng::{stream_rng, streams, substream};

/// Variogram and scaling parameters of the storage-aquifer fields.
///
/// `corr_len` is expressed in the same length unit as `cell_size`; with the
/// default unit cell size it is in grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramSpec {
    pub corr_len: [f64; 3],
    pub azimuth_deg: f64,
    pub dip_deg: f64,
    pub mean_logk: f64,
    pub std_logk: f64,
    pub mean_poro: f64,
    pub std_poro: f64,
    pub kz_over_kx: f64,
    #[serde(default = "default_poro_corr")]
    pub poro_logk_corr: f64,
    #[serde(default = "unit_cell")]
    pub cell_size: [f64; 3],
}

fn default_poro_corr() -> f64 {
    0.7
}

fn unit_cell() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl VariogramSpec {
    /// Aquifer statistics with correlation lengths given in metres on a grid
    /// with the given cell size.
    pub fn aquifer_default(cell_size: [f64; 3]) -> Self {
        Self {
            corr_len: [7500.0, 6750.0, 7.5],
            azimuth_deg: 45.0,
            dip_deg: 45.0,
            mean_logk: 3.0,
            std_logk: 1.5,
            mean_poro: 0.12,
            std_poro: 0.05,
            kz_over_kx: 0.1,
            poro_logk_corr: 0.7,
            cell_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.corr_len.iter().any(|&l| !(l > 0.0)) {
            return invalid("correlation lengths must be positive");
        }
        if self.cell_size.iter().any(|&l| !(l > 0.0)) {
            return invalid("cell sizes must be positive");
        }
        if !(self.std_logk >= 0.0) || !(self.std_poro >= 0.0) {
            return invalid("standard deviations must be non-negative");
        }
        if !(self.mean_poro > 0.0 && self.mean_poro < 1.0) {
            return invalid("mean porosity must lie in (0, 1)");
        }
        if !(self.kz_over_kx > 0.0 && self.kz_over_kx <= 1.0) {
            return invalid("kz/kx must lie in (0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.poro_logk_corr) {
            return invalid("porosity/log-permeability correlation must lie in [-1, 1]");
        }
        Ok(())
    }

    pub fn covariance(&self) -> AnisotropicExponential {
        AnisotropicExponential::new(self.corr_len, self.azimuth_deg, self.dip_deg)
    }
}

/// Exponential correlation `exp(-3 h)` where `h` is the lag measured in units
/// of the (practical) range along the rotated principal axes.
///
/// The major axis points along `azimuth` (counter-clockwise from +x in the x-y
/// plane) tilted downward by `dip`.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropicExponential {
    ranges: [f64; 3],
    axes: [[f64; 3]; 3],
}

impl AnisotropicExponential {
    pub fn new(ranges: [f64; 3], azimuth_deg: f64, dip_deg: f64) -> Self {
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let (sd, cd) = dip_deg.to_radians().sin_cos();
        // z points down in the grid, so a downward tilt has positive z.
        let major = [ca * cd, sa * cd, sd];
        let minor = [-sa, ca, 0.0];
        let third = [
            major[1] * minor[2] - major[2] * minor[1],
            major[2] * minor[0] - major[0] * minor[2],
            major[0] * minor[1] - major[1] * minor[0],
        ];
        Self {
            ranges,
            axes: [major, minor, third],
        }
    }

    pub fn correlation(&self, lag: [f64; 3]) -> f64 {
        let mut h2 = 0.0;
        for (axis, range) in self.axes.iter().zip(self.ranges) {
            let proj = axis[0] * lag[0] + axis[1] * lag[1] + axis[2] * lag[2];
            h2 += (proj / range).powi(2);
        }
        (-3.0 * h2.sqrt()).exp()
    }
}

/// Circulant-embedding generator of standard-normal fields on a fixed grid.
pub struct FieldGenerator {
    dims: GridDims,
    embed: [usize; 3],
    sqrt_eig: Vec<f64>,
    /// Fraction of the embedding spectrum that was negative and clipped.
    pub clipped_fraction: f64,
}

impl std::fmt::Debug for FieldGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldGenerator")
            .field("dims", &self.dims)
            .field("embed", &self.embed)
            .field("clipped_fraction", &self.clipped_fraction)
            .finish()
    }
}

const MAX_EMBED_GROWTH: usize = 3;
const CLIP_TOLERANCE: f64 = 1e-3;

impl FieldGenerator {
    pub fn new(cov: &AnisotropicExponential, dims: GridDims, cell_size: [f64; 3]) -> Result<Self> {
        GridDims::new(dims.nx, dims.ny, dims.nz)?;
        let n = dims.as_array();
        let mut embed = [0; 3];
        for d in 0..3 {
            embed[d] = if n[d] == 1 { 1 } else { 2 * n[d] };
        }
        let mut planner = FftPlanner::new();
        let mut growth = 0;
        loop {
            let (eig, clipped) = embedding_spectrum(cov, embed, cell_size, &mut planner);
            if clipped <= CLIP_TOLERANCE || growth == MAX_EMBED_GROWTH {
                let m = (embed[0] * embed[1] * embed[2]) as f64;
                let sqrt_eig = eig.iter().map(|&l| (l.max(0.0) / m).sqrt()).collect();
                return Ok(Self {
                    dims,
                    embed,
                    sqrt_eig,
                    clipped_fraction: clipped,
                });
            }
            for d in 0..3 {
                if n[d] > 1 {
                    embed[d] *= 2;
                }
            }
            growth += 1;
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// Two independent standard-normal fields with the embedded covariance.
    pub fn standard_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = self
            .sqrt_eig
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        let mut planner = FftPlanner::new();
        fft3(&mut buf, self.embed, &mut planner);
        let [m0, m1, _] = self.embed;
        let n = self.dims.n_cells();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for k in 0..self.dims.nz {
            for j in 0..self.dims.ny {
                for i in 0..self.dims.nx {
                    let z = buf[i + m0 * (j + m1 * k)];
                    a.push(z.re);
                    b.push(z.im);
                }
            }
        }
        (a, b)
    }
}

fn signed_lag(m: usize, size: usize) -> f64 {
    if m <= size / 2 {
        m as f64
    } else {
        m as f64 - size as f64
    }
}

fn embedding_spectrum(
    cov: &AnisotropicExponential,
    embed: [usize; 3],
    cell_size: [f64; 3],
    planner: &mut FftPlanner<f64>,
) -> (Vec<f64>, f64) {
    let [m0, m1, m2] = embed;
    let mut buf = Vec::with_capacity(m0 * m1 * m2);
    for c in 0..m2 {
        for b in 0..m1 {
            for a in 0..m0 {
                let lag = [
                    signed_lag(a, m0) * cell_size[0],
                    signed_lag(b, m1) * cell_size[1],
                    signed_lag(c, m2) * cell_size[2],
                ];
                buf.push(Complex64::new(cov.correlation(lag), 0.0));
            }
        }
    }
    fft3(&mut buf, embed, planner);
    let eig: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let total: f64 = eig.iter().map(|l| l.abs()).sum();
    let negative: f64 = eig.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    (eig, if total > 0.0 { negative / total } else { 0.0 })
}

/// In-place forward 3D FFT of a buffer laid out with axis 0 fastest.
fn fft3(buf: &mut [Complex64], dims: [usize; 3], planner: &mut FftPlanner<f64>) {
    let [m0, m1, m2] = dims;
    if m0 > 1 {
        planner.plan_fft_forward(m0).process(buf);
    }
    let mut line = Vec::new();
    if m1 > 1 {
        let fft = planner.plan_fft_forward(m1);
        line.resize(m1, Complex64::default());
        for c in 0..m2 {
            for a in 0..m0 {
                for b in 0..m1 {
                    line[b] = buf[a + m0 * (b + m1 * c)];
                }
                fft.process(&mut line);
                for b in 0..m1 {
                    buf[a + m0 * (b + m1 * c)] = line[b];
                }
            }
        }
    }
    if m2 > 1 {
        let fft = planner.plan_fft_forward(m2);
        line.resize(m2, Complex64::default());
        for b in 0..m1 {
            for a in 0..m0 {
                for c in 0..m2 {
                    line[c] = buf[a + m0 * (b + m1 * c)];
                }
                fft.process(&mut line);
                for c in 0..m2 {
                    buf[a + m0 * (b + m1 * c)] = line[c];
                }
            }
        }
    }
}

/// Log-permeability field with the spec's mean and standard deviation.
pub fn generate_gaussian_field(spec: &VariogramSpec, dims: GridDims, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let generator = FieldGenerator::new(&spec.covariance(), dims, spec.cell_size)?;
    let mut rng = stream_rng(seed, streams::PRIOR_FIELDS);
    let (z, _) = generator.standard_pair(&mut rng);
    Ok(z.into_iter().map(|v| spec.mean_logk + spec.std_logk * v).collect())
}

/// Scalar interval with optional open ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub open_lo: bool,
    #[serde(default)]
    pub open_hi: bool,
}

impl Interval {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            open_lo: false,
            open_hi: false,
        }
    }

    pub const fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            open_lo: false,
            open_hi: true,
        }
    }

    pub const fn open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            open_lo: true,
            open_hi: true,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return invalid(format!("interval {name} must satisfy lo <= hi"));
        }
        if self.lo == self.hi && (self.open_lo || self.open_hi) {
            return invalid(format!("open interval {name} is empty"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.open_lo { x > self.lo } else { x >= self.lo };
        let below = if self.open_hi { x < self.hi } else { x <= self.hi };
        above && below
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Standard deviation of the uniform distribution on the interval.
    pub fn uniform_std(&self) -> f64 {
        self.width() / 12f64.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        loop {
            let u: f64 = rng.random();
            let x = self.lo + (self.hi - self.lo) * u;
            if self.contains(x) {
                return x;
            }
        }
    }

    /// Map `x` back into the interval by reflecting at the bounds.
    pub fn reflect(&self, x: f64) -> f64 {
        if self.lo == self.hi || !x.is_finite() {
            return self.midpoint();
        }
        let w = self.width();
        let mut y = (x - self.lo).rem_euclid(2.0 * w);
        if y > w {
            y = 2.0 * w - y;
        }
        let mut v = self.lo + y;
        // keep strictly inside open ends
        let eps = 1e-12 * w;
        if self.open_lo && v <= self.lo {
            v = self.lo + eps;
        }
        if self.open_hi && v >= self.hi {
            v = self.hi - eps;
        }
        v
    }
}

/// Uniform prior ranges for the uncertain scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorRanges {
    pub young_gpa: Interval,
    pub poisson: Interval,
    pub biot: Interval,
    pub gamma: Interval,
    pub logmult1: Interval,
    pub logmult2: Interval,
}

impl Default for PriorRanges {
    fn default() -> Self {
        Self {
            young_gpa: Interval::closed(10.0, 20.0),
            poisson: Interval::closed(0.25, 0.30),
            biot: Interval::closed(0.8, 1.0),
            gamma: Interval::open(0.0, 1.0),
            logmult1: Interval::half_open(-3.0, 0.0),
            logmult2: Interval::half_open(-3.0, 0.0),
        }
    }
}

impl PriorRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in ScalarParams::LABELS.iter().zip(self.as_array()) {
            iv.validate(name)?;
        }
        if self.poisson.hi >= 0.5 {
            return invalid("Poisson ratio range must stay below 0.5");
        }
        Ok(())
    }

    /// Intervals in joint-vector order (see [`ScalarParams::LABELS`]).
    pub fn as_array(&self) -> [Interval; 6] {
        [
            self.logmult1,
            self.logmult2,
            self.young_gpa,
            self.poisson,
            self.biot,
            self.gamma,
        ]
    }
}

/// The six uncertain scalars of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarParams {
    pub logmult1: f64,
    pub logmult2: f64,
    pub young_gpa: f64,
    pub poisson: f64,
    pub biot: f64,
    pub gamma: f64,
}

impl ScalarParams {
    /// Ordering used when scalars are appended to latent vectors.
    pub const LABELS: [&'static str; 6] = ["logmult1", "logmult2", "young_gpa", "poisson", "biot", "gamma"];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.logmult1,
            self.logmult2,
            self.young_gpa,
            self.poisson,
            self.biot,
            self.gamma,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            logmult1: a[0],
            logmult2: a[1],
            young_gpa: a[2],
            poisson: a[3],
            biot: a[4],
            gamma: a[5],
        }
    }

    pub fn within(&self, ranges: &PriorRanges) -> bool {
        self.to_array()
            .iter()
            .zip(ranges.as_array())
            .all(|(&x, iv)| iv.contains(x))
    }
}

/// Draw each scalar independently and uniformly from its interval.
pub fn sample_prior_scalars<R: Rng + ?Sized>(ranges: &PriorRanges, rng: &mut R) -> Result<ScalarParams> {
    ranges.validate()?;
    let a = ranges.as_array();
    let mut out = [0.0; 6];
    for (o, iv) in out.iter_mut().zip(a) {
        *o = iv.sample(rng);
    }
    Ok(ScalarParams::from_array(out))
}

pub fn sample_prior_scalars_seeded(ranges: &PriorRanges, seed: u64) -> Result<ScalarParams> {
    let mut rng = stream_rng(seed, streams::PRIOR_SCALARS);
    sample_prior_scalars(ranges, &mut rng)
}

pub const MIN_PORO: f64 = 0.01;
pub const MAX_PORO: f64 = 0.40;

/// One prior realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoModel {
    pub dims: GridDims,
    /// Natural log of permeability in mD.
    pub logk: Vec<f64>,
    pub poro: Vec<f64>,
    pub scalars: ScalarParams,
}

impl GeoModel {
    pub fn validate(&self, ranges: &PriorRanges) -> Result<()> {
        let n = self.dims.n_cells();
        crate::error::check_len("logk field", n, self.logk.len())?;
        crate::error::check_len("porosity field", n, self.poro.len())?;
        if self.poro.iter().any(|&p| !(MIN_PORO..=MAX_PORO).contains(&p)) {
            return invalid("porosity outside clamping bounds");
        }
        if !self.scalars.within(ranges) {
            return invalid("scalar parameters outside prior ranges");
        }
        Ok(())
    }

    pub fn permeability_md(&self) -> Vec<f64> {
        self.logk.iter().map(|v| v.exp()).collect()
    }
}

/// Generates realizations on one grid, reusing the embedding spectrum.
#[derive(Debug)]
pub struct PriorGenerator {
    spec: VariogramSpec,
    ranges: PriorRanges,
    generator: FieldGenerator,
}

impl PriorGenerator {
    pub fn new(spec: &VariogramSpec, ranges: &PriorRanges, dims: GridDims) -> Result<Self> {
        spec.validate()?;
        ranges.validate()?;
        let generator = FieldGenerator::new(&spec.covariance(), dims, spec.cell_size)?;
        Ok(Self {
            spec: spec.clone(),
            ranges: *ranges,
            generator,
        })
    }

    /// Realization `index` of the ensemble identified by `seed`.
    pub fn realization(&self, seed: u64, index: u64) -> Result<GeoModel> {
        let mut rng = stream_rng(seed, substream(streams::PRIOR_FIELDS, index));
        let (z1, z2) = self.generator.standard_pair(&mut rng);
        let rho = self.spec.poro_logk_corr;
        let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
        let logk = z1
            .iter()
            .map(|&z| self.spec.mean_logk + self.spec.std_logk * z)
            .collect();
        let poro = z1
            .iter()
            .zip(&z2)
            .map(|(&a, &b)| {
                let p = self.spec.mean_poro + self.spec.std_poro * (rho * a + rho_c * b);
                p.clamp(MIN_PORO, MAX_PORO)
            })
            .collect();
        let mut srng = stream_rng(seed, substream(streams::PRIOR_SCALARS, index));
        let scalars = sample_prior_scalars(&self.ranges, &mut srng)?;
        Ok(GeoModel {
            dims: self.generator.dims(),
            logk,
            poro,
            scalars,
        })
    }
}

/// Permeability (mD) after applying the fault log10 multipliers.
pub fn apply_fault_multipliers(model: &GeoModel, fault1: &[usize], fault2: &[usize]) -> Result<Vec<f64>> {
    let n = model.dims.n_cells();
    let mut tag = vec![0u8; n];
    for (&c, t) in fault1.iter().map(|c| (c, 1u8)).chain(fault2.iter().map(|c| (c, 2u8))) {
        if c >= n {
            return invalid(format!("fault cell {c} outside grid of {n} cells"));
        }
        if tag[c] != 0 && tag[c] != t {
            return invalid(format!("cell {c} belongs to both faults"));
        }
        tag[c] = t;
    }
    let m1 = 10f64.powf(model.scalars.logmult1);
    let m2 = 10f64.powf(model.scalars.logmult2);
    Ok(model
        .logk
        .iter()
        .zip(&tag)
        .map(|(&lk, &t)| {
            let k = lk.exp();
            match t {
                1 => k * m1,
                2 => k * m2,
                _ => k,
            }
        })
        .collect())
}

/// Effective principal stresses (MPa, compression positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalStress {
    pub zz: f64,
    pub xx: f64,
    pub yy: f64,
}

impl PrincipalStress {
    pub fn is_normal_regime(&self) -> bool {
        self.zz > self.xx && self.xx > self.yy && self.yy > 0.0
    }
}

/// Initial effective stress in one layer from the vertical effective stress.
pub fn initial_stress_state(nu: f64, gamma: f64, sigma_zz_eff: f64) -> Result<PrincipalStress> {
    if !(nu > 0.0 && nu < 0.5) {
        return invalid(format!("Poisson ratio {nu} outside (0, 0.5)"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return invalid(format!("stress coefficient {gamma} outside [0, 1]"));
    }
    if !(sigma_zz_eff > 0.0) {
        return invalid("vertical effective stress must be positive");
    }
    let yy = nu / (1.0 - nu) * sigma_zz_eff;
    let xx = gamma * yy + (1.0 - gamma) * sigma_zz_eff;
    Ok(PrincipalStress {
        zz: sigma_zz_eff,
        xx,
        yy,
    })
}

/// Overburden and hydrostatic gradients used to set the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overburden {
    /// kg/m3
    pub bulk_density: f64,
    /// kg/m3
    pub brine_density: f64,
    pub gravity: f64,
    pub datum_depth: f64,
    /// MPa
    pub datum_pressure: f64,
}

impl Default for Overburden {
    fn default() -> Self {
        Self {
            bulk_density: 2300.0,
            brine_density: 1050.0,
            gravity: 9.80665,
            datum_depth: 1630.0,
            datum_pressure: 17.0,
        }
    }
}

impl Overburden {
    pub fn hydrostatic_pressure(&self, depth: f64) -> f64 {
        self.datum_pressure + self.brine_density * self.gravity * (depth - self.datum_depth) * 1e-6
    }

    pub fn total_vertical_stress(&self, depth: f64) -> f64 {
        self.bulk_density * self.gravity * depth * 1e-6
    }

    pub fn vertical_effective_stress(&self, depth: f64, biot: f64) -> f64 {
        self.total_vertical_stress(depth) - biot * self.hydrostatic_pressure(depth)
    }
}

/// Per-layer initial effective stresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressState {
    pub layers: Vec<PrincipalStress>,
}

impl StressState {
    pub fn for_grid(grid: &Grid, overburden: &Overburden, scalars: &ScalarParams) -> Result<Self> {
        let layers = (0..grid.nz)
            .map(|k| {
                let szz = overburden.vertical_effective_stress(grid.layer_depth(k), scalars.biot);
                initial_stress_state(scalars.poisson, scalars.gamma, szz)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_cells(len: [f64; 3]) -> VariogramSpec {
        VariogramSpec {
            corr_len: len,
            ..VariogramSpec::aquifer_default([1.0, 1.0, 1.0])
        }
    }

    #[test]
    fn zero_std_gives_constant_field() {
        let mut spec = spec_cells([4.0, 4.0, 2.0]);
        spec.std_logk = 0.0;
        let f = generate_gaussian_field(&spec, GridDims::new(6, 5, 3).unwrap(), 9).unwrap();
        assert!(f.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn same_seed_identical_field() {
        let spec = spec_cells([4.0, 3.0, 2.0]);
        let dims = GridDims::new(8, 7, 3).unwrap();
        let a = generate_gaussian_field(&spec, dims, 5).unwrap();
        let b = generate_gaussian_field(&spec, dims, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_gaussian_field(&spec, dims, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = spec_cells([0.0, 3.0, 2.0]);
        assert!(generate_gaussian_field(&spec, GridDims { nx: 4, ny: 4, nz: 1 }, 1).is_err());
        let spec = spec_cells([1.0, 3.0, 2.0]);
        assert!(generate_gaussian_field(&spec, GridDims { nx: 0, ny: 4, nz: 1 }, 1).is_err());
    }

    #[test]
    fn degenerate_interval_returns_bound() {
        let mut rng = stream_rng(1, 1);
        assert_eq!(Interval::closed(0.3, 0.3).sample(&mut rng), 0.3);
    }

    #[test]
    fn poisson_samples_respect_range() {
        let ranges = PriorRanges::default();
        let mut rng = stream_rng(11, 0);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_prior_scalars(&ranges, &mut rng).unwrap().poisson)
            .collect();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(min >= 0.25 && max <= 0.30);
        assert!((mean - 0.275).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn gamma_matches_uniform_cdf() {
        // Kolmogorov-Smirnov distance against the analytic U(0, 1) CDF.
        let ranges = PriorRanges::default();
        let mut rng = stream_rng(12, 0);
        let mut xs: Vec<f64> = (0..10_000)
            .map(|_| sample_prior_scalars(&ranges, &mut rng).unwrap().gamma)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
        assert!(xs.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    fn model_with(logk: Vec<f64>, logmult1: f64) -> GeoModel {
        let n = logk.len();
        GeoModel {
            dims: GridDims::new(n, 1, 1).unwrap(),
            poro: vec![0.1; n],
            logk,
            scalars: ScalarParams {
                logmult1,
                logmult2: -1.0,
                young_gpa: 15.0,
                poisson: 0.27,
                biot: 0.9,
                gamma: 0.5,
            },
        }
    }

    #[test]
    fn fault_multiplier_arithmetic() {
        let m = model_with(vec![100f64.ln(); 4], -3.0);
        let k = apply_fault_multipliers(&m, &[0], &[1]).unwrap();
        assert!((k[0] - 0.1).abs() < 1e-12);
        assert!((k[1] - 10.0).abs() < 1e-12);
        assert_eq!(k[2], 100f64.ln().exp());

        let m = model_with(vec![100f64.ln(); 4], 0.0);
        let k = apply_fault_multipliers(&m, &[0], &[1]).unwrap();
        assert_eq!(k[0], 100f64.ln().exp());
    }

    #[test]
    fn overlapping_faults_rejected() {
        let m = model_with(vec![1.0; 4], -1.0);
        assert!(apply_fault_multipliers(&m, &[0, 2], &[2]).is_err());
        assert!(apply_fault_multipliers(&m, &[9], &[]).is_err());
    }

    #[test]
    fn stress_state_algebra() {
        let s = initial_stress_state(0.25, 0.5, 30.0).unwrap();
        assert_eq!(s.yy, 10.0);
        assert_eq!(s.xx, 20.0);
        let s = initial_stress_state(0.25, 1.0, 30.0).unwrap();
        assert_eq!(s.xx, s.yy);
        assert!(initial_stress_state(0.5, 0.5, 30.0).is_err());
        assert!(initial_stress_state(0.6, 0.5, 30.0).is_err());
    }

    #[test]
    fn reflection_stays_inside() {
        let iv = Interval::closed(0.8, 1.0);
        assert!((iv.reflect(1.05) - 0.95).abs() < 1e-12);
        assert!((iv.reflect(0.7) - 0.9).abs() < 1e-12);
        let open = Interval::half_open(-3.0, 0.0);
        assert!(open.contains(open.reflect(0.0)));
    }
}
