//! Reading and writing prior models and simulation results.

use std::path::{Path, PathBuf};

use dsi_core::forward::SimResult;
use dsi_core::geostat::{GeoModel, ScalarParams};
use dsi_core::grid::GridDims;

use crate::arrayfile::ArrayFile;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MODEL_FILES: [&str; 3] = ["logk.fdsi", "poro.fdsi", "scalars.fdsi"];
pub const SIM_FILES: [&str; 6] = [
    "times.fdsi",
    "pressure.fdsi",
    "strain_zz.fdsi",
    "sigma_n_eff.fdsi",
    "tau.fdsi",
    "injected_volume.fdsi",
];

pub fn model_rel(index: usize) -> String {
    format!("priors/model_{index:04}")
}

pub fn sim_rel(index: usize) -> String {
    format!("sims/model_{index:04}")
}

pub const TRUTH_MODEL_REL: &str = "truth/model";
pub const TRUTH_SIM_REL: &str = "truth/sim";

fn field_dims(dims: GridDims) -> Vec<usize> {
    vec![dims.nz, dims.ny, dims.nx]
}

pub fn write_model(dir: &Path, model: &GeoModel) -> CliResult<()> {
    let fd = field_dims(model.dims);
    ArrayFile::new(fd.clone(), model.logk.clone())?.write(&dir.join(MODEL_FILES[0]))?;
    ArrayFile::new(fd, model.poro.clone())?.write(&dir.join(MODEL_FILES[1]))?;
    ArrayFile::vector(model.scalars.to_array().to_vec()).write(&dir.join(MODEL_FILES[2]))
}

pub fn read_model(dir: &Path, dims: GridDims) -> CliResult<GeoModel> {
    let logk = ArrayFile::read(&dir.join(MODEL_FILES[0]))?;
    let poro = ArrayFile::read(&dir.join(MODEL_FILES[1]))?;
    let scal = ArrayFile::read(&dir.join(MODEL_FILES[2]))?;
    let fd = field_dims(dims);
    if logk.dims != fd || poro.dims != fd || scal.dims != [6] {
        return Err(CliError::Corrupt {
            path: dir.display().to_string(),
            detail: "model arrays do not match the configured grid".into(),
        });
    }
    let mut a = [0.0; 6];
    a.copy_from_slice(&scal.data);
    Ok(GeoModel {
        dims,
        logk: logk.data,
        poro: poro.data,
        scalars: ScalarParams::from_array(a),
    })
}

pub fn write_sim(dir: &Path, sim: &SimResult) -> CliResult<()> {
    ArrayFile::vector(sim.times.clone()).write(&dir.join(SIM_FILES[0]))?;
    for (name, field) in SIM_FILES[1..5]
        .iter()
        .zip([&sim.pressure, &sim.strain_zz, &sim.sigma_n_eff, &sim.tau])
    {
        ArrayFile::from_rows(field)?.write(&dir.join(name))?;
    }
    ArrayFile::vector(sim.injected_volume.clone()).write(&dir.join(SIM_FILES[5]))
}

pub fn read_sim(dir: &Path) -> CliResult<SimResult> {
    let times = ArrayFile::read(&dir.join(SIM_FILES[0]))?.data;
    let mut fields = Vec::with_capacity(4);
    for name in &SIM_FILES[1..5] {
        let rows = ArrayFile::read(&dir.join(name))?.to_rows()?;
        if rows.len() != times.len() {
            return Err(CliError::Corrupt {
                path: dir.join(name).display().to_string(),
                detail: "row count differs from the report times".into(),
            });
        }
        fields.push(rows);
    }
    let injected_volume = ArrayFile::read(&dir.join(SIM_FILES[5]))?.data;
    let tau = fields.pop().expect("four fields");
    let sigma_n_eff = fields.pop().expect("four fields");
    let strain_zz = fields.pop().expect("four fields");
    let pressure = fields.pop().expect("four fields");
    Ok(SimResult {
        times,
        pressure,
        strain_zz,
        sigma_n_eff,
        tau,
        injected_volume,
    })
}

/// Relative paths of every file in a model or simulation directory.
pub fn listed(rel_dir: &str, files: &[&str]) -> Vec<String> {
    files.iter().map(|f| format!("{rel_dir}/{f}")).collect()
}

pub fn abs(cfg: &RunConfig, rel: &str) -> PathBuf {
    cfg.output_dir.join(rel)
}
