use dsi_core::desk;
use dsi_core::faultgeom::{average_fst, FaultState, StressTensor};
use dsi_core::forward::{fault_stress_history, Scenario, WellSpec, SECONDS_PER_YEAR};
use dsi_core::geostat::{GeoModel, PriorGenerator, PriorRanges, ScalarParams};
use dsi_core::grid::Grid;

fn priors() -> PriorGenerator {
    let sc = desk::scenario().unwrap();
    PriorGenerator::new(&desk::variogram(), &PriorRanges::default(), sc.grid.dims()).unwrap()
}

/// Injected volume from the well schedule alone.
fn scheduled_volume(wells: &[WellSpec], t: f64) -> f64 {
    wells
        .iter()
        .map(|w| {
            let active = (t.min(w.stop_year) - w.start_year).max(0.0);
            w.rate_m3_per_day / 86_400.0 * active * SECONDS_PER_YEAR
        })
        .sum()
}

fn storage_change(sc: &Scenario, model: &GeoModel, pressure: &[f64]) -> f64 {
    let p0 = sc.initial_pressure();
    let v = sc.grid.cell_volume();
    pressure
        .iter()
        .zip(&p0)
        .zip(&model.poro)
        .map(|((p, a), phi)| sc.flow.total_compressibility * v * phi * (p - a))
        .sum()
}

#[test]
fn mass_balance_for_random_priors() {
    let sc = desk::scenario().unwrap();
    let gen = priors();
    for r in 0..20 {
        let m = gen.realization(77, r).unwrap();
        let sim = sc.simulate(&m).unwrap();
        for (t, p) in sim.times.iter().zip(&sim.pressure) {
            let injected = scheduled_volume(&sc.wells, *t);
            let stored = storage_change(&sc, &m, p);
            let err = (injected - stored).abs() / injected;
            assert!(err < 1e-8, "realization {r}, t = {t}: relative error {err:e}");
        }
    }
}

fn homogeneous(grid: &Grid) -> GeoModel {
    let n = grid.n_cells();
    GeoModel {
        dims: grid.dims(),
        logk: vec![3.0; n],
        poro: vec![0.12; n],
        scalars: ScalarParams {
            logmult1: 0.0,
            logmult2: 0.0,
            young_gpa: 15.0,
            poisson: 0.27,
            biot: 0.9,
            gamma: 0.5,
        },
    }
}

fn centred_scenario(rate: f64) -> Scenario {
    let mut sc = desk::scenario().unwrap();
    sc.grid.nx = 11;
    sc.grid.ny = 11;
    sc.grid.nz = 3;
    sc.faults.clear();
    sc.wells = vec![WellSpec {
        name: "c".into(),
        i: 5,
        j: 5,
        layers: Vec::new(),
        rate_m3_per_day: rate,
        start_year: 0.0,
        stop_year: 50.0,
    }];
    sc
}

#[test]
fn centred_injector_is_symmetric() {
    let sc = centred_scenario(200.0);
    let sim = sc.simulate(&homogeneous(&sc.grid)).unwrap();
    let d = sc.grid.dims();
    let p0 = sc.initial_pressure();
    for p in &sim.pressure {
        let scale = p.iter().zip(&p0).map(|(a, b)| a - b).fold(0.0, f64::max);
        for k in 0..d.nz {
            for j in 0..d.ny {
                for i in 0..d.nx {
                    let a = p[d.index(i, j, k)] - p0[d.index(i, j, k)];
                    let b = p[d.index(j, i, k)] - p0[d.index(j, i, k)];
                    assert!((a - b).abs() <= 1e-8 * scale);
                }
            }
        }
    }
}

#[test]
fn injection_never_lowers_pressure() {
    let sc = desk::scenario().unwrap();
    let m = priors().realization(3, 0).unwrap();
    let sim = sc.simulate(&m).unwrap();
    let p0 = sc.initial_pressure();
    for p in &sim.pressure {
        for (a, b) in p.iter().zip(&p0) {
            assert!(*a >= *b - 1e-9);
        }
    }
}

#[test]
fn zero_rate_leaves_initial_state() {
    let mut sc = desk::scenario().unwrap();
    for w in &mut sc.wells {
        w.rate_m3_per_day = 0.0;
    }
    let m = priors().realization(5, 2).unwrap();
    let sim = sc.simulate(&m).unwrap();
    let p0 = sc.initial_pressure();
    for t in 0..sim.n_times() {
        assert_eq!(sim.pressure[t], p0);
        assert!(sim.strain_zz[t].iter().all(|&e| e == 0.0));
        assert_eq!(sim.sigma_n_eff[t], sim.sigma_n_eff[0]);
        assert_eq!(sim.tau[t], sim.tau[0]);
    }
    // The initial resolved state comes from geometry and the initial stresses alone.
    let stress = dsi_core::geostat::StressState::for_grid(&sc.grid, &sc.overburden, &m.scalars).unwrap();
    let f = &sc.faults[0];
    for &c in &f.cells {
        let (_, _, k) = sc.grid.dims().ijk(c);
        let s = stress.layers[k];
        let st = FaultState::resolve(&StressTensor::diag(s.xx, s.yy, s.zz), f.normal(), p0[c], m.scalars.biot)
            .unwrap();
        assert!((st.sigma_n_eff - sim.sigma_n_eff[0][c]).abs() < 1e-12);
        assert!((st.tau - sim.tau[0][c]).abs() < 1e-12);
    }
}

#[test]
fn doubling_permeability_lowers_peak_pressure() {
    let sc = centred_scenario(200.0);
    let base = homogeneous(&sc.grid);
    let mut doubled = base.clone();
    doubled.logk.iter_mut().for_each(|v| *v += 2f64.ln());
    let p0 = sc.initial_pressure();
    let peak = |m: &GeoModel, t: usize| {
        let sim = sc.simulate(m).unwrap();
        sim.pressure[t].iter().zip(&p0).map(|(a, b)| a - b).fold(0.0, f64::max)
    };
    for t in [0, 3, 6] {
        assert!(peak(&doubled, t) < peak(&base, t));
    }
}

#[test]
fn simulation_is_deterministic() {
    let sc = desk::scenario().unwrap();
    let m = priors().realization(11, 4).unwrap();
    assert_eq!(sc.simulate(&m).unwrap(), sc.simulate(&m).unwrap());
}

#[test]
fn pore_pressure_raises_slip_tendency_at_fixed_total_stress() {
    let total = StressTensor::diag(28.0, 24.0, 37.0);
    let n = dsi_core::faultgeom::fault_normal(10.0, 60.0);
    let biot = 0.9;
    let at = |p: f64| FaultState::resolve(&total.plus_isotropic(-biot * p), n, p, biot).unwrap();
    let (a, b) = (at(17.0), at(19.0));
    assert!(b.sigma_n_eff < a.sigma_n_eff);
    assert!(b.ts.unwrap() > a.ts.unwrap());
    let decoupled = |p: f64| FaultState::resolve(&total, n, p, 0.0).unwrap();
    assert_eq!(decoupled(10.0).sigma_n_eff, decoupled(20.0).sigma_n_eff);
}

#[test]
fn desk_prior_slip_tendency_rises_with_injection() {
    let sc = desk::scenario().unwrap();
    let m = priors().realization(9, 1).unwrap();
    let sim = sc.simulate(&m).unwrap();
    for f in &sc.faults {
        let h = fault_stress_history(&sim, f);
        let first = average_fst(&h[0]).unwrap();
        let last = average_fst(&h[h.len() - 1]).unwrap();
        assert!(last > first);
    }
}
