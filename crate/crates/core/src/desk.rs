//! Desk-scale analog of the faulted storage aquifer.
//!
//! A 25 km × 25 km × 60 m aquifer on a 25 × 25 × 5 grid, two dipping faults
//! on either side of three injectors. The closed box has no surrounding
//! formation to bleed pressure into, so the default injection rate is far
//! below the field-scale 1 Mt/year per well.

use crate::faultgeom::{FaultPlane, DEFAULT_FRICTION};
use crate::forward::{FlowProps, Scenario, Stepping, WellSpec, CO2_DENSITY, DEFAULT_TIMES};
use crate::geostat::{Overburden, VariogramSpec};
use crate::grid::Grid;
use crate::error::Result;

pub const DESK_RATE_MT_PER_YEAR: f64 = 0.025;

pub fn grid() -> Grid {
    Grid {
        nx: 25,
        ny: 25,
        nz: 5,
        dx: 1000.0,
        dy: 1000.0,
        dz: 12.0,
        top_depth: 1600.0,
    }
}

pub fn variogram() -> VariogramSpec {
    let g = grid();
    VariogramSpec::aquifer_default(g.cell_size())
}

pub fn fault_planes() -> Vec<FaultPlane> {
    vec![
        FaultPlane {
            name: "fault1".into(),
            strike_deg: 10.0,
            dip_deg: 60.0,
            anchor: [12_500.0, 6_500.0, 1630.0],
            thickness: 1000.0,
            friction_coeff: DEFAULT_FRICTION,
        },
        FaultPlane {
            name: "fault2".into(),
            strike_deg: 20.0,
            dip_deg: 60.0,
            anchor: [12_500.0, 18_500.0, 1630.0],
            thickness: 1000.0,
            friction_coeff: DEFAULT_FRICTION,
        },
    ]
}

pub fn wells(mt_per_year: f64) -> Vec<WellSpec> {
    let rate = WellSpec::volume_rate(mt_per_year, CO2_DENSITY);
    [(7, 11), (12, 12), (17, 13)]
        .into_iter()
        .enumerate()
        .map(|(n, (i, j))| WellSpec {
            name: format!("I{}", n + 1),
            i,
            j,
            layers: Vec::new(),
            rate_m3_per_day: rate,
            start_year: 0.0,
            stop_year: 50.0,
        })
        .collect()
}

pub fn scenario() -> Result<Scenario> {
    let g = grid();
    let faults = fault_planes()
        .iter()
        .map(|p| p.to_spec(&g))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario {
        grid: g,
        wells: wells(DESK_RATE_MT_PER_YEAR),
        faults,
        kz_over_kx: variogram().kz_over_kx,
        flow: FlowProps::default(),
        overburden: Overburden::default(),
        stepping: Stepping::default(),
        times: DEFAULT_TIMES.to_vec(),
    })
}
