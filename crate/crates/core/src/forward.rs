//! Desk-scale flow and geomechanics surrogate.
//!
//! Single-phase slightly compressible flow is solved for the overpressure
//! `Δp` above the hydrostatic initial state with backward Euler, two-point
//! harmonic transmissibilities and no-flow boundaries. The linear systems are
//! symmetric positive definite and solved with conjugate gradients
//! preconditioned by a zero-fill incomplete Cholesky factor. Strain and
//! stress follow from a uniaxial-strain poroelastic closure, and fault stresses
//! are resolved onto each fault's plane cell by cell.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::faultgeom::{FaultSpec, FaultState, StressTensor};
use crate::geostat::{apply_fault_multipliers, GeoModel, Overburden, StressState};
use crate::grid::{Grid, GridDims};

pub const MD_TO_M2: f64 = 9.869_233e-16;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: f64 = 365.25;
pub const SECONDS_PER_YEAR: f64 = SECONDS_PER_DAY * DAYS_PER_YEAR;
pub const CO2_DENSITY: f64 = 520.0;

/// Default report times in years.
pub const DEFAULT_TIMES: [f64; 7] = [2.0, 4.0, 6.0, 8.0, 20.0, 36.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowProps {
    /// Total compressibility, 1/MPa.
    pub total_compressibility: f64,
    /// Viscosity, mPa·s.
    pub viscosity: f64,
}

impl Default for FlowProps {
    fn default() -> Self {
        Self {
            total_compressibility: 5e-4,
            viscosity: 0.5,
        }
    }
}

/// Sub-stepping and linear-solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stepping {
    /// Sub-steps between consecutive breakpoints.
    pub substeps: usize,
    /// Ratio between consecutive sub-step lengths.
    pub growth: f64,
    /// Relative residual target of the linear solver.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for Stepping {
    fn default() -> Self {
        Self {
            substeps: 8,
            growth: 1.5,
            tolerance: 1e-13,
            max_iterations: 2000,
        }
    }
}

/// Vertical injector. `layers` empty means fully perforated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub name: String,
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub layers: Vec<usize>,
    /// Reservoir-condition volume rate, m³/day.
    pub rate_m3_per_day: f64,
    pub start_year: f64,
    pub stop_year: f64,
}

impl WellSpec {
    /// m³/day for a CO2 mass rate in Mt/year at the given density (kg/m³).
    pub fn volume_rate(mt_per_year: f64, density: f64) -> f64 {
        mt_per_year * 1e9 / density / DAYS_PER_YEAR
    }

    pub fn perforations(&self, nz: usize) -> Vec<usize> {
        if self.layers.is_empty() {
            (0..nz).collect()
        } else {
            self.layers.clone()
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        if self.i >= grid.nx || self.j >= grid.ny {
            return invalid(format!("well {} outside grid", self.name));
        }
        if self.layers.iter().any(|&k| k >= grid.nz) {
            return invalid(format!("well {} perforates a layer outside the grid", self.name));
        }
        if !(self.rate_m3_per_day >= 0.0) || !(self.stop_year > self.start_year) || self.start_year < 0.0 {
            return invalid(format!("well {} has an invalid rate or schedule", self.name));
        }
        Ok(())
    }

    fn active(&self, t0: f64, t1: f64) -> bool {
        self.start_year <= t0 && t1 <= self.stop_year
    }
}

/// Everything the forward model needs besides the geomodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: Grid,
    pub wells: Vec<WellSpec>,
    /// At most two faults; fault `f` uses log multiplier `f + 1`.
    pub faults: Vec<FaultSpec>,
    pub kz_over_kx: f64,
    pub flow: FlowProps,
    pub overburden: Overburden,
    pub stepping: Stepping,
    pub times: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for w in &self.wells {
            w.validate(&self.grid)?;
        }
        if self.faults.len() > 2 {
            return invalid("at most two faults are supported");
        }
        let n = self.grid.n_cells();
        for f in &self.faults {
            f.validate()?;
            if f.cells.iter().any(|&c| c >= n) {
                return invalid(format!("fault {} has cells outside the grid", f.name));
            }
        }
        if !(self.kz_over_kx > 0.0 && self.kz_over_kx <= 1.0) {
            return invalid("kz/kx must lie in (0, 1]");
        }
        if !(self.flow.total_compressibility > 0.0 && self.flow.viscosity > 0.0) {
            return invalid("compressibility and viscosity must be positive");
        }
        if self.stepping.substeps == 0 || !(self.stepping.growth >= 1.0) || !(self.stepping.tolerance > 0.0) {
            return invalid("invalid stepping controls");
        }
        if self.times.is_empty() || self.times[0] <= 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("report times must be positive and strictly increasing");
        }
        Ok(())
    }

    /// Horizontal permeability in mD with fault multipliers applied.
    pub fn permeability(&self, model: &GeoModel) -> Result<Vec<f64>> {
        let empty: &[usize] = &[];
        let f1 = self.faults.first().map_or(empty, |f| &f.cells[..]);
        let f2 = self.faults.get(1).map_or(empty, |f| &f.cells[..]);
        apply_fault_multipliers(model, f1, f2)
    }

    pub fn initial_pressure(&self) -> Vec<f64> {
        (0..self.grid.n_cells())
            .map(|c| self.overburden.hydrostatic_pressure(self.grid.cell_center(c)[2]))
            .collect()
    }

    /// Per-cell injection rate (m³/s) over `[t0, t1]` years.
    pub fn rates(&self, perm_md: &[f64], t0: f64, t1: f64) -> Vec<f64> {
        let dims = self.grid.dims();
        let mut q = vec![0.0; self.grid.n_cells()];
        for w in self.wells.iter().filter(|w| w.active(t0, t1)) {
            let cells: Vec<usize> = w
                .perforations(self.grid.nz)
                .into_iter()
                .map(|k| dims.index(w.i, w.j, k))
                .collect();
            let total: f64 = cells.iter().map(|&c| perm_md[c] * self.grid.dz).sum();
            let rate = w.rate_m3_per_day / SECONDS_PER_DAY;
            for &c in &cells {
                q[c] += rate * perm_md[c] * self.grid.dz / total;
            }
        }
        q
    }

    /// Times where forcing may change: report times and well switches.
    fn breakpoints(&self) -> Vec<f64> {
        let end = *self.times.last().expect("validated");
        let mut b: Vec<f64> = self.times.clone();
        for w in &self.wells {
            for t in [w.start_year, w.stop_year] {
                if t > 0.0 && t < end {
                    b.push(t);
                }
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn simulate(&self, model: &GeoModel) -> Result<SimResult> {
        self.validate()?;
        check_len("geomodel cells", self.grid.n_cells(), model.dims.n_cells())?;
        if model.dims != self.grid.dims() {
            return invalid("geomodel dims differ from scenario grid");
        }
        let perm = self.permeability(model)?;
        let system = PressureSystem::new(&self.grid, &perm, &model.poro, self.kz_over_kx, &self.flow)?;
        let p0 = self.initial_pressure();
        let stress = StressState::for_grid(&self.grid, &self.overburden, &model.scalars)?;
        let s = &model.scalars;

        let mut dp = vec![0.0; self.grid.n_cells()];
        let mut injected = 0.0;
        let mut out = SimResult::with_capacity(self.times.len());
        let mut t = 0.0;
        let mut report = 0;
        for &b in &self.breakpoints() {
            let q = self.rates(&perm, t, b);
            let q_total: f64 = q.iter().sum();
            for dt_years in ramp(b - t, self.stepping.substeps, self.stepping.growth) {
                let dt = dt_years * SECONDS_PER_YEAR;
                dp = solve_pressure_step(&system, &dp, &q, dt, &self.stepping)?;
                injected += q_total * dt;
            }
            t = b;
            if report < self.times.len() && b == self.times[report] {
                let pressure: Vec<f64> = p0.iter().zip(&dp).map(|(a, d)| a + d).collect();
                let (strain, dsh) = poroelastic_response(&dp, s.young_gpa, s.poisson, s.biot)?;
                let (sn, tau) =
                    fault_stress_fields(&self.grid, &self.faults, &stress, &pressure, &dsh, s.biot)?;
                out.times.push(b);
                out.pressure.push(pressure);
                out.strain_zz.push(strain);
                out.sigma_n_eff.push(sn);
                out.tau.push(tau);
                out.injected_volume.push(injected);
                report += 1;
            }
        }
        Ok(out)
    }
}

/// Sub-step lengths growing geometrically and summing to `span`.
pub fn ramp(span: f64, n: usize, growth: f64) -> Vec<f64> {
    if (growth - 1.0).abs() < 1e-12 {
        return vec![span / n as f64; n];
    }
    let first = span * (growth - 1.0) / (growth.powi(n as i32) - 1.0);
    let mut steps: Vec<f64> = (0..n).map(|i| first * growth.powi(i as i32)).collect();
    let head: f64 = steps[..n - 1].iter().sum();
    steps[n - 1] = span - head;
    steps
}

/// Forward-model output at the report times.
///
/// Every field is indexed `[time][cell]`; fault stresses are zero off-fault.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// MPa
    pub pressure: Vec<Vec<f64>>,
    pub strain_zz: Vec<Vec<f64>>,
    /// MPa
    pub sigma_n_eff: Vec<Vec<f64>>,
    /// MPa
    pub tau: Vec<Vec<f64>>,
    /// Cumulative injected reservoir volume, m³.
    pub injected_volume: Vec<f64>,
}

impl SimResult {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            pressure: Vec::with_capacity(n),
            strain_zz: Vec::with_capacity(n),
            sigma_n_eff: Vec::with_capacity(n),
            tau: Vec::with_capacity(n),
            injected_volume: Vec::with_capacity(n),
        }
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Fault states of the given cells at report `t`.
    pub fn fault_states(&self, t: usize, cells: &[usize]) -> Vec<FaultState> {
        cells
            .iter()
            .map(|&c| FaultState::new(self.sigma_n_eff[t][c], self.tau[t][c]))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        [&self.pressure, &self.strain_zz, &self.sigma_n_eff, &self.tau]
            .iter()
            .all(|f| f.iter().flatten().all(|v| v.is_finite()))
    }
}

/// Storage and transmissibilities of the overpressure equation.
///
/// Storage is in m³/MPa, transmissibilities in m³/(s·MPa). `tx[c]` couples
/// cell `c` to its `+x` neighbour and is zero on the boundary.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    dims: GridDims,
    pub storage: Vec<f64>,
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
    pub tz: Vec<f64>,
}

fn harmonic(area: f64, half: f64, k1: f64, k2: f64) -> f64 {
    area / (half / k1 + half / k2)
}

impl PressureSystem {
    pub fn new(grid: &Grid, perm_md: &[f64], poro: &[f64], kz_over_kx: f64, flow: &FlowProps) -> Result<Self> {
        let n = grid.n_cells();
        check_len("permeability", n, perm_md.len())?;
        check_len("porosity", n, poro.len())?;
        if perm_md.iter().any(|&k| !(k > 0.0)) || poro.iter().any(|&p| !(p > 0.0)) {
            return invalid("permeability and porosity must be positive");
        }
        let dims = grid.dims();
        // k [m²] / μ [Pa·s] gives m²/(Pa·s); 1e6 converts the pressure unit to MPa.
        let mobility = 1e6 / (flow.viscosity * 1e-3);
        let kh: Vec<f64> = perm_md.iter().map(|k| k * MD_TO_M2).collect();
        let storage = poro
            .iter()
            .map(|p| p * flow.total_compressibility * grid.cell_volume())
            .collect();
        let mut tx = vec![0.0; n];
        let mut ty = vec![0.0; n];
        let mut tz = vec![0.0; n];
        for c in 0..n {
            let (i, j, k) = dims.ijk(c);
            if i + 1 < grid.nx {
                let d = c + 1;
                tx[c] = mobility * harmonic(grid.dy * grid.dz, 0.5 * grid.dx, kh[c], kh[d]);
            }
            if j + 1 < grid.ny {
                let d = c + grid.nx;
                ty[c] = mobility * harmonic(grid.dx * grid.dz, 0.5 * grid.dy, kh[c], kh[d]);
            }
            if k + 1 < grid.nz {
                let d = c + grid.nx * grid.ny;
                tz[c] = mobility
                    * harmonic(grid.dx * grid.dy, 0.5 * grid.dz, kz_over_kx * kh[c], kz_over_kx * kh[d]);
            }
        }
        Ok(Self {
            dims,
            storage,
            tx,
            ty,
            tz,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.storage.len()
    }

    fn strides(&self) -> [usize; 3] {
        [1, self.dims.nx, self.dims.nx * self.dims.ny]
    }

    fn links(&self) -> [&[f64]; 3] {
        [&self.tx, &self.ty, &self.tz]
    }

    /// `y = L x` for the transmissibility Laplacian `L`.
    pub fn apply_laplacian(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (t, s) in self.links().into_iter().zip(self.strides()) {
            for c in 0..x.len() {
                let tc = t[c];
                if tc != 0.0 {
                    let f = tc * (x[c] - x[c + s]);
                    y[c] += f;
                    y[c + s] -= f;
                }
            }
        }
    }

    /// `y = (S/dt + L) x`.
    fn apply(&self, dt: f64, x: &[f64], y: &mut [f64]) {
        self.apply_laplacian(x, y);
        for c in 0..x.len() {
            y[c] += self.storage[c] / dt * x[c];
        }
    }

    fn diagonal(&self, dt: f64) -> Vec<f64> {
        let mut d: Vec<f64> = self.storage.iter().map(|s| s / dt).collect();
        for (t, s) in self.links().into_iter().zip(self.strides()) {
            for c in 0..d.len() {
                if t[c] != 0.0 {
                    d[c] += t[c];
                    d[c + s] += t[c];
                }
            }
        }
        d
    }
}

/// Zero-fill incomplete Cholesky factor of the seven-point operator, stored
/// as the pivots of `M = (D + L) D⁻¹ (D + U)`.
struct IncompleteCholesky<'a> {
    system: &'a PressureSystem,
    pivots: Vec<f64>,
}

impl<'a> IncompleteCholesky<'a> {
    fn new(system: &'a PressureSystem, dt: f64) -> Result<Self> {
        let diag = system.diagonal(dt);
        let mut pivots = diag;
        let strides = system.strides();
        let links = system.links();
        for c in 0..pivots.len() {
            for (t, s) in links.iter().zip(strides) {
                if c >= s && t[c - s] != 0.0 {
                    pivots[c] -= t[c - s] * t[c - s] / pivots[c - s];
                }
            }
            if !(pivots[c] > 0.0) {
                return Err(Error::Factorization(format!("non-positive pivot at cell {c}")));
            }
        }
        Ok(Self { system, pivots })
    }

    fn solve(&self, r: &[f64], z: &mut [f64]) {
        let strides = self.system.strides();
        let links = self.system.links();
        let n = r.len();
        for c in 0..n {
            let mut acc = r[c];
            for (t, s) in links.iter().zip(strides) {
                if c >= s {
                    acc += t[c - s] * z[c - s];
                }
            }
            z[c] = acc / self.pivots[c];
        }
        for c in (0..n).rev() {
            let mut acc = 0.0;
            for (t, s) in links.iter().zip(strides) {
                if c + s < n {
                    acc += t[c] * z[c + s];
                }
            }
            z[c] += acc / self.pivots[c];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for `(S/dt + L) x = b`.
pub fn solve_spd(system: &PressureSystem, dt: f64, b: &[f64], stepping: &Stepping) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let pre = IncompleteCholesky::new(system, dt)?;
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    pre.solve(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for _ in 0..stepping.max_iterations {
        system.apply(dt, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= stepping.tolerance {
            return Ok(x);
        }
        pre.solve(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
    }
    Err(Error::SolverDiverged {
        iterations: stepping.max_iterations,
        residual: res,
    })
}

/// One backward-Euler step of the overpressure `dp` (MPa) with sources `q`
/// (m³/s) over `dt` seconds.
///
/// The increment is solved for directly, so the solver tolerance bounds the
/// volume imbalance relative to the step's net flux.
pub fn solve_pressure_step(
    system: &PressureSystem,
    dp: &[f64],
    q: &[f64],
    dt: f64,
    stepping: &Stepping,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return invalid("time step must be positive");
    }
    check_len("pressure state", system.n_cells(), dp.len())?;
    check_len("source vector", system.n_cells(), q.len())?;
    let mut rhs = vec![0.0; dp.len()];
    system.apply_laplacian(dp, &mut rhs);
    for c in 0..rhs.len() {
        rhs[c] = q[c] - rhs[c];
    }
    let delta = solve_spd(system, dt, &rhs, stepping)?;
    Ok(dp.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// Uniaxial-strain compaction coefficient in 1/MPa.
pub fn compaction_coefficient(young_gpa: f64, nu: f64, biot: f64) -> f64 {
    let e = young_gpa * 1e3;
    biot * (1.0 + nu) * (1.0 - 2.0 * nu) / (e * (1.0 - nu))
}

/// Change of effective horizontal stress per MPa of overpressure.
pub fn horizontal_stress_coefficient(nu: f64, biot: f64) -> f64 {
    -biot * (1.0 - 2.0 * nu) / (1.0 - nu)
}

/// Vertical strain and effective horizontal stress change for `dp` (MPa).
pub fn poroelastic_response(dp: &[f64], young_gpa: f64, nu: f64, biot: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(nu >= 0.0 && nu < 0.5) {
        return invalid(format!("Poisson ratio {nu} outside [0, 0.5)"));
    }
    if !(young_gpa > 0.0) || !(biot >= 0.0) {
        return invalid("Young's modulus must be positive and Biot non-negative");
    }
    let cm = compaction_coefficient(young_gpa, nu, biot);
    let ch = horizontal_stress_coefficient(nu, biot);
    Ok((dp.iter().map(|d| cm * d).collect(), dp.iter().map(|d| ch * d).collect()))
}

/// Effective stress tensor of a cell in layer `k`.
pub fn cell_stress(initial: &StressState, k: usize, dsh: f64) -> StressTensor {
    let s = initial.layers[k];
    StressTensor::diag(s.xx + dsh, s.yy + dsh, s.zz)
}

/// Effective normal and shear stress on every fault cell for one report time.
pub fn fault_stress_fields(
    grid: &Grid,
    faults: &[FaultSpec],
    initial: &StressState,
    pressure: &[f64],
    dsh: &[f64],
    biot: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.n_cells();
    check_len("pressure field", n, pressure.len())?;
    check_len("stress change field", n, dsh.len())?;
    let dims = grid.dims();
    let mut sn = vec![0.0; n];
    let mut tau = vec![0.0; n];
    for f in faults {
        let normal = f.normal();
        for &c in &f.cells {
            let (_, _, k) = dims.ijk(c);
            let st = FaultState::resolve(&cell_stress(initial, k, dsh[c]), normal, pressure[c], biot)?;
            sn[c] = st.sigma_n_eff;
            tau[c] = st.tau;
        }
    }
    Ok((sn, tau))
}

/// Per-time fault states of one fault from a finished simulation.
pub fn fault_stress_history(sim: &SimResult, fault: &FaultSpec) -> Vec<Vec<FaultState>> {
    (0..sim.n_times()).map(|t| sim.fault_states(t, &fault.cells)).collect()
}
