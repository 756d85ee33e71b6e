//! Fault planes, traction resolution and slip tendency.
//!
//! Stresses are compression positive. Vectors use `(x, y, z)` with `z`
//! pointing up, so the fault normal has a non-negative vertical component.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Grid;

pub const DEFAULT_FRICTION: f64 = 0.6;

/// Unit-length tolerance accepted by [`traction`].
pub const UNIT_TOLERANCE: f64 = 1e-8;

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Unit normal of a plane with the given strike (from the x axis) and dip.
pub fn fault_normal(strike_deg: f64, dip_deg: f64) -> Vec3 {
    let (st, ct) = strike_deg.to_radians().sin_cos();
    let (sd, cd) = dip_deg.to_radians().sin_cos();
    [-st * sd, ct * sd, cd]
}

/// Symmetric 3x3 stress tensor stored by its six unique components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StressTensor {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl StressTensor {
    pub fn diag(xx: f64, yy: f64, zz: f64) -> Self {
        Self {
            xx,
            yy,
            zz,
            ..Self::default()
        }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    /// Symmetric part of `m`.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self {
            xx: m[0][0],
            yy: m[1][1],
            zz: m[2][2],
            xy: 0.5 * (m[0][1] + m[1][0]),
            xz: 0.5 * (m[0][2] + m[2][0]),
            yz: 0.5 * (m[1][2] + m[2][1]),
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        [
            self.xx * v[0] + self.xy * v[1] + self.xz * v[2],
            self.xy * v[0] + self.yy * v[1] + self.yz * v[2],
            self.xz * v[0] + self.yz * v[1] + self.zz * v[2],
        ]
    }

    /// `R σ Rᵀ` for a rotation matrix `R`.
    pub fn rotated(&self, r: [[f64; 3]; 3]) -> Self {
        let s = self.to_matrix();
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        acc += r[i][a] * s[a][b] * r[j][b];
                    }
                }
                *o = acc;
            }
        }
        Self::from_matrix(out)
    }

    /// Adds `c` to the diagonal.
    pub fn plus_isotropic(&self, c: f64) -> Self {
        Self {
            xx: self.xx + c,
            yy: self.yy + c,
            zz: self.zz + c,
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Traction `σ·n` on a plane with unit normal `n`.
pub fn traction(sigma: &StressTensor, n: Vec3) -> Result<Vec3> {
    let len = norm(n);
    if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
        return invalid(format!("plane normal has length {len}, expected 1"));
    }
    Ok(sigma.mul_vec(n))
}

/// Normal and shear components of a traction vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub sigma_n: f64,
    pub sigma_n_eff: f64,
    pub tau: f64,
}

impl Decomposition {
    /// Opening (non-positive effective normal stress) leaves slip tendency undefined.
    pub fn is_tensile(&self) -> bool {
        !(self.sigma_n_eff > 0.0)
    }
}

/// Split a traction into effective normal stress and shear magnitude.
pub fn decompose_traction(t: Vec3, n: Vec3, p: f64, biot: f64) -> Decomposition {
    let sigma_n = dot(n, t);
    let tau = (dot(t, t) - sigma_n * sigma_n).max(0.0).sqrt();
    Decomposition {
        sigma_n,
        sigma_n_eff: sigma_n - biot * p,
        tau,
    }
}

/// Slip tendency of one cell; `value` is `None` when `σ'n ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipTendency {
    pub value: Option<f64>,
    pub slip: bool,
}

pub fn slip_tendency(tau: f64, sigma_n_eff: f64, friction: f64) -> SlipTendency {
    if !(sigma_n_eff > 0.0) {
        return SlipTendency {
            value: None,
            slip: false,
        };
    }
    let ts = tau / sigma_n_eff;
    SlipTendency {
        value: Some(ts),
        slip: ts > friction,
    }
}

/// Resolved state in one fault cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultState {
    pub sigma_n_eff: f64,
    pub tau: f64,
    pub ts: Option<f64>,
}

impl FaultState {
    pub fn new(sigma_n_eff: f64, tau: f64) -> Self {
        let ts = slip_tendency(tau, sigma_n_eff, DEFAULT_FRICTION).value;
        Self { sigma_n_eff, tau, ts }
    }

    /// State of a cell under effective stress `sigma_eff` and pore pressure `p`.
    pub fn resolve(sigma_eff: &StressTensor, n: Vec3, p: f64, biot: f64) -> Result<Self> {
        let total = sigma_eff.plus_isotropic(biot * p);
        let t = traction(&total, n)?;
        let d = decompose_traction(t, n, p, biot);
        Ok(Self::new(d.sigma_n_eff, d.tau))
    }
}

/// Mean slip tendency over fault cells; `None` if empty or any cell undefined.
pub fn average_fst(states: &[FaultState]) -> Option<f64> {
    if states.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for s in states {
        sum += s.ts?;
    }
    Some(sum / states.len() as f64)
}

/// Same as [`average_fst`] over raw stress pairs.
pub fn average_fst_from(sigma_n_eff: &[f64], tau: &[f64]) -> Option<f64> {
    if sigma_n_eff.is_empty() || sigma_n_eff.len() != tau.len() {
        return None;
    }
    let mut sum = 0.0;
    for (&s, &t) in sigma_n_eff.iter().zip(tau) {
        sum += slip_tendency(t, s, DEFAULT_FRICTION).value?;
    }
    Some(sum / sigma_n_eff.len() as f64)
}

/// Planar fault zone in the run configuration.
///
/// Cells whose centre lies within `thickness / 2` of the plane through
/// `anchor` are tagged. `anchor` is `(x, y, depth)` in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlane {
    pub name: String,
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub anchor: [f64; 3],
    pub thickness: f64,
    #[serde(default = "default_friction")]
    pub friction_coeff: f64,
}

fn default_friction() -> f64 {
    DEFAULT_FRICTION
}

impl FaultPlane {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..180.0).contains(&self.strike_deg) {
            return invalid(format!("fault {}: strike must lie in [0, 180)", self.name));
        }
        if !(self.dip_deg > 0.0 && self.dip_deg <= 90.0) {
            return invalid(format!("fault {}: dip must lie in (0, 90]", self.name));
        }
        if !(self.thickness > 0.0) || !(self.friction_coeff > 0.0) {
            return invalid(format!("fault {}: thickness and friction must be positive", self.name));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3 {
        fault_normal(self.strike_deg, self.dip_deg)
    }

    pub fn select_cells(&self, grid: &Grid) -> Vec<usize> {
        let n = self.normal();
        let a = [self.anchor[0], self.anchor[1], -self.anchor[2]];
        (0..grid.n_cells())
            .filter(|&idx| {
                let c = grid.cell_center(idx);
                let d = [c[0] - a[0], c[1] - a[1], -c[2] - a[2]];
                dot(n, d).abs() <= 0.5 * self.thickness
            })
            .collect()
    }

    pub fn to_spec(&self, grid: &Grid) -> Result<FaultSpec> {
        self.validate()?;
        let spec = FaultSpec {
            name: self.name.clone(),
            strike_deg: self.strike_deg,
            dip_deg: self.dip_deg,
            cells: self.select_cells(grid),
            friction_coeff: self.friction_coeff,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A fault resolved onto a grid: one normal, a set of tagged cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub name: String,
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub cells: Vec<usize>,
    pub friction_coeff: f64,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..180.0).contains(&self.strike_deg) || !(self.dip_deg > 0.0 && self.dip_deg <= 90.0) {
            return invalid(format!("fault {}: orientation out of range", self.name));
        }
        if self.cells.is_empty() {
            return invalid(format!("fault {} selects no cells", self.name));
        }
        if !(self.friction_coeff > 0.0) {
            return invalid(format!("fault {}: friction must be positive", self.name));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3 {
        fault_normal(self.strike_deg, self.dip_deg)
    }
}
