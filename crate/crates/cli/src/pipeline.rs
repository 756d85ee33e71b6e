//! Workflow stages. Each stage reads its upstream artifacts, writes its own
//! directory under the output root and finishes with a manifest. A stage
//! whose manifest matches the current configuration, upstream manifests and
//! file hashes is skipped unless forced.

use std::collections::BTreeMap;
use std::path::Path;

use dsi_core::analytics::{
    fault_average_fst, fst_histograms, k_representatives, parameter_histograms, percentile_band, relative_errors,
    ErrorReport, FieldErrors, FstHistogram, ParameterHistogram, PercentileBand, Representatives,
};
use dsi_core::datavec::{
    build_noise_cov, make_observations, mean_monitored_strain, DataLayout, FieldKind, NormStats, SelectionIndex,
};
use dsi_core::esmda::{encode_ensemble, run_dsi, IterationStats};
use dsi_core::forward::{Scenario, SimResult};
use dsi_core::geostat::{GeoModel, PriorGenerator, ScalarParams};
use dsi_core::latentparam::{fit_pca, FrontEnd, TrainReport, VaeModel};
use dsi_core::monitors::{place_monitors, MonitorPlan, TargetSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arrayfile::{write_bytes, ArrayFile};
use crate::config::{MonitorConfig, ParamKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_bytes, sha256_file, Manifest};
use crate::params::{read_trained, write_trained, Trained};
use crate::store;

pub const PRIORS_MANIFEST: &str = "priors/manifest.json";
pub const SIMS_MANIFEST: &str = "sims/manifest.json";
pub const TRAIN_MANIFEST: &str = "train/manifest.json";
pub const DSI_MANIFEST: &str = "dsi/manifest.json";

/// Whether a stage ran or was found up to date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

fn stage_key(cfg: &RunConfig, stage: &str) -> String {
    let s = &cfg.seeds;
    let v = match stage {
        "priors" => json!({
            "grid": cfg.grid, "variogram": cfg.variogram, "prior_ranges": cfg.prior_ranges,
            "n_realizations": cfg.n_realizations, "truth": cfg.truth,
            "seeds": [s.prior, s.truth],
        }),
        "sims" => json!({
            "wells": cfg.wells, "faults": cfg.faults, "flow": cfg.flow, "overburden": cfg.overburden,
            "stepping": cfg.stepping, "hm_times": cfg.hm_times, "pred_times": cfg.pred_times,
        }),
        "train" => json!({
            "split": cfg.split, "parameterizer": cfg.parameterizer, "seeds": [s.training],
        }),
        "dsi" => json!({
            "monitors": cfg.monitors, "esmda": cfg.esmda, "joint_inversion": cfg.joint_inversion,
            "n_representatives": cfg.n_representatives, "prior_ranges": cfg.prior_ranges,
            "seeds": [s.observation, s.esmda, s.kmeans],
        }),
        other => unreachable!("unknown stage {other}"),
    };
    sha256_bytes(format!("{stage}:{v}").as_bytes())
}

fn upstream(root: &Path, rels: &[&str]) -> CliResult<BTreeMap<String, String>> {
    rels.iter()
        .map(|r| {
            let p = root.join(r);
            if !p.exists() {
                return Err(CliError::Validation(format!(
                    "{r} is missing; run the upstream stage first"
                )));
            }
            Ok((r.to_string(), sha256_file(&p)?))
        })
        .collect()
}

fn is_current(root: &Path, manifest_rel: &str, key: &str, inputs: &BTreeMap<String, String>) -> bool {
    match Manifest::read(&root.join(manifest_rel)) {
        Ok(m) => m.config_sha256 == key && &m.inputs == inputs && m.verify(root).is_ok(),
        Err(_) => false,
    }
}

/// Per-item resume marker: items written under the same key may be reused
/// after an interrupted run.
fn progress_matches(root: &Path, dir: &str, key: &str) -> bool {
    std::fs::read_to_string(root.join(dir).join("progress.key")).is_ok_and(|k| k == key)
}

fn mark_progress(root: &Path, dir: &str, key: &str) -> CliResult<()> {
    write_bytes(&root.join(dir).join("progress.key"), key.as_bytes())
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_bytes(path, pretty(value).as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("csv {}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_bytes(path, &bytes)
}

fn finish(root: &Path, cfg: &RunConfig, stage: &str, key: &str, inputs: BTreeMap<String, String>, files: &[String]) -> CliResult<()> {
    let mut m = Manifest::new(stage, key, &cfg.seeds);
    m.inputs = inputs;
    for f in files {
        m.add(root, f)?;
    }
    m.write(&root.join(format!("{stage}/manifest.json")))
}

fn truth_model(cfg: &RunConfig, gen: &PriorGenerator) -> CliResult<GeoModel> {
    let mut m = gen.realization(cfg.seeds.truth, 0)?;
    if let Some(s) = cfg.truth.scalars {
        m.scalars = s;
    }
    Ok(m)
}

/// Prior realizations and the synthetic truth.
pub fn cmd_gen_prior(cfg: &RunConfig, force: bool) -> CliResult<Outcome> {
    let root = &cfg.output_dir;
    let key = stage_key(cfg, "priors");
    let inputs = BTreeMap::new();
    if !force && is_current(root, PRIORS_MANIFEST, &key, &inputs) {
        return Ok(Outcome::UpToDate);
    }
    let gen = PriorGenerator::new(&cfg.variogram, &cfg.prior_ranges, cfg.grid.dims())?;
    let reuse = !force && progress_matches(root, "priors", &key);
    mark_progress(root, "priors", &key)?;
    (0..cfg.n_realizations).into_par_iter().try_for_each(|i| -> CliResult<()> {
        let dir = root.join(store::model_rel(i));
        if reuse && store::read_model(&dir, cfg.grid.dims()).is_ok() {
            return Ok(());
        }
        store::write_model(&dir, &gen.realization(cfg.seeds.prior, i as u64)?)
    })?;
    store::write_model(&root.join(store::TRUTH_MODEL_REL), &truth_model(cfg, &gen)?)?;
    let mut files: Vec<String> = (0..cfg.n_realizations)
        .flat_map(|i| store::listed(&store::model_rel(i), &store::MODEL_FILES))
        .collect();
    files.extend(store::listed(store::TRUTH_MODEL_REL, &store::MODEL_FILES));
    finish(root, cfg, "priors", &key, inputs, &files)?;
    Ok(Outcome::Ran)
}

/// Forward simulation of every prior realization and the truth.
pub fn cmd_simulate(cfg: &RunConfig, force: bool) -> CliResult<Outcome> {
    let root = &cfg.output_dir;
    let key = stage_key(cfg, "sims");
    let inputs = upstream(root, &[PRIORS_MANIFEST])?;
    if !force && is_current(root, SIMS_MANIFEST, &key, &inputs) {
        return Ok(Outcome::UpToDate);
    }
    let sc = cfg.scenario()?;
    let dims = cfg.grid.dims();
    let tag = format!("{key}:{}", inputs[PRIORS_MANIFEST]);
    let reuse = !force && progress_matches(root, "sims", &tag);
    mark_progress(root, "sims", &tag)?;
    let run = |model_rel: &str, sim_rel: &str| -> CliResult<()> {
        let dir = root.join(sim_rel);
        if reuse && store::read_sim(&dir).is_ok() {
            return Ok(());
        }
        let model = store::read_model(&root.join(model_rel), dims)?;
        store::write_sim(&dir, &sc.simulate(&model)?)
    };
    (0..cfg.n_realizations)
        .into_par_iter()
        .try_for_each(|i| run(&store::model_rel(i), &store::sim_rel(i)))?;
    run(store::TRUTH_MODEL_REL, store::TRUTH_SIM_REL)?;
    let mut files: Vec<String> = (0..cfg.n_realizations)
        .flat_map(|i| store::listed(&store::sim_rel(i), &store::SIM_FILES))
        .collect();
    files.extend(store::listed(store::TRUTH_SIM_REL, &store::SIM_FILES));
    finish(root, cfg, "sims", &key, inputs, &files)?;
    Ok(Outcome::Ran)
}

/// Layout of `d_full` for the configured report times.
pub fn layout(cfg: &RunConfig) -> CliResult<DataLayout> {
    Ok(DataLayout::new(
        cfg.grid.dims().n_cells(),
        cfg.hm_times.clone(),
        cfg.pred_times.clone(),
    )?)
}

/// Sorted union of all fault cells.
pub fn fault_cells(sc: &Scenario) -> Vec<usize> {
    let mut cells: Vec<usize> = sc.faults.iter().flat_map(|f| f.cells.iter().copied()).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

fn read_data(cfg: &RunConfig, layout: &DataLayout, indices: &[usize]) -> CliResult<Vec<Vec<f64>>> {
    indices
        .par_iter()
        .map(|&i| {
            let sim = store::read_sim(&cfg.output_dir.join(store::sim_rel(i)))?;
            Ok(layout.assemble(&sim)?)
        })
        .collect()
}

fn normalize_all(norm: &NormStats, set: &[Vec<f64>]) -> CliResult<Vec<Vec<f64>>> {
    set.par_iter().map(|d| Ok(norm.normalize(d)?)).collect()
}

/// Reconstruction errors of held-out vectors after an encode/decode round trip.
pub fn heldout_errors(
    model: &Trained,
    norm: &NormStats,
    layout: &DataLayout,
    test: &[Vec<f64>],
    fault_cells: &[usize],
) -> CliResult<Vec<FieldErrors>> {
    let p = model.as_dyn();
    test.par_iter()
        .map(|d| {
            let z = norm.normalize(d)?;
            let rec = norm.denormalize(&p.decode(&p.encode(&z)?)?)?;
            Ok(relative_errors(layout, &rec, d, fault_cells)?)
        })
        .collect()
}

/// Normalization statistics, parameterizer training and held-out errors.
pub fn cmd_train(cfg: &RunConfig, force: bool) -> CliResult<Outcome> {
    let root = &cfg.output_dir;
    cfg.validate_inversion()?;
    let key = stage_key(cfg, "train");
    let inputs = upstream(root, &[SIMS_MANIFEST])?;
    if !force && is_current(root, TRAIN_MANIFEST, &key, &inputs) {
        return Ok(Outcome::UpToDate);
    }
    let sc = cfg.scenario()?;
    let layout = layout(cfg)?;
    let faults = fault_cells(&sc);
    let mut mask = vec![false; layout.n_cells];
    for &c in &faults {
        mask[c] = true;
    }
    let (tr, va, te) = cfg.split_indices();
    let train_d = read_data(cfg, &layout, &tr)?;
    let norm = NormStats::fit(&layout, mask, &train_d)?;
    let train_z = normalize_all(&norm, &train_d)?;
    drop(train_d);
    let val_z = normalize_all(&norm, &read_data(cfg, &layout, &va)?)?;
    let p = &cfg.parameterizer;
    let train_cfg = p.train_config(cfg.seeds.training);
    let (model, report) = match p.kind {
        ParamKind::Pca => (Trained::Pca(fit_pca(&train_z, p.latent_dim)?), None),
        ParamKind::Vae => {
            let k = p.front_components.unwrap_or(tr.len() - 1);
            let front = FrontEnd::Pca(fit_pca(&train_z, k)?);
            let (m, r) = VaeModel::train(&train_z, &val_z, front, &train_cfg)?;
            (Trained::Vae(m), Some(r))
        }
    };
    drop(train_z);
    drop(val_z);

    let dir = root.join("train");
    let mut files: Vec<String> = write_trained(&dir, &model, (p.kind == ParamKind::Vae).then_some(&train_cfg))?
        .into_iter()
        .map(|f| format!("train/{f}"))
        .collect();
    write_json(&dir.join("norm.json"), &norm)?;
    files.push("train/norm.json".into());
    if let Some(r) = &report {
        write_json(&dir.join("train_report.json"), r)?;
        write_csv(&dir.join("loss.csv"), &["epoch", "omega", "train_loss", "train_recon", "train_kl", "val_loss"], &loss_rows(r))?;
        files.push("train/train_report.json".into());
        files.push("train/loss.csv".into());
    }
    let test_d = read_data(cfg, &layout, &te)?;
    let cases = heldout_errors(&model, &norm, &layout, &test_d, &faults)?;
    let rows: Vec<Vec<String>> = te
        .iter()
        .zip(&cases)
        .map(|(i, e)| {
            vec![
                i.to_string(),
                e.pressure.to_string(),
                e.strain.to_string(),
                e.sigma_n_eff.to_string(),
                e.tau.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("errors.csv"), &["realization", "pressure", "strain", "sigma_n_eff", "tau"], &rows)?;
    write_json(&dir.join("error_report.json"), &ErrorReport::new(cases)?)?;
    files.push("train/errors.csv".into());
    files.push("train/error_report.json".into());
    finish(root, cfg, "train", &key, inputs, &files)?;
    Ok(Outcome::Ran)
}

fn loss_rows(r: &TrainReport) -> Vec<Vec<String>> {
    (0..r.train_loss.len())
        .map(|e| {
            vec![
                e.to_string(),
                r.omega[e].to_string(),
                r.train_loss[e].to_string(),
                r.train_recon[e].to_string(),
                r.train_kl[e].to_string(),
                r.val_loss.get(e).map_or(String::new(), |v| v.to_string()),
            ]
        })
        .collect()
}

/// Monitor wells from the configuration, placing them when asked to.
fn monitor_plan(cfg: &RunConfig, sims: &[SimResult], sc: &Scenario) -> CliResult<MonitorPlan> {
    let fields = vec![FieldKind::Pressure, FieldKind::Strain];
    match &cfg.monitors {
        MonitorConfig::Columns { columns, layers } => Ok(MonitorPlan {
            columns: columns.clone(),
            layers: layers.clone(),
            fields,
            times: cfg.hm_times.clone(),
            residual_variance: Vec::new(),
        }),
        MonitorConfig::Place { n_wells, layers, stride } => {
            let injectors: Vec<(usize, usize)> = cfg.wells.iter().map(|w| (w.i, w.j)).collect();
            let mut candidates = Vec::new();
            for j in (0..cfg.grid.ny).step_by(*stride) {
                for i in (0..cfg.grid.nx).step_by(*stride) {
                    if !injectors.contains(&(i, j)) {
                        candidates.push((i, j));
                    }
                }
            }
            let spec = TargetSpec {
                fault_cells: sc.faults.iter().map(|f| f.cells.clone()).collect(),
                target_time: *cfg.pred_times.last().unwrap_or(cfg.hm_times.last().expect("validated")),
                hm_times: cfg.hm_times.clone(),
                layers: layers.clone(),
            };
            Ok(place_monitors(sims, &cfg.grid, &candidates, &injectors, *n_wells, &spec)?)
        }
    }
}

/// One monitored entry over the full report-time range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitoredPoint {
    pub well: usize,
    pub field: FieldKind,
    pub cell: usize,
    pub time: usize,
    pub flat: usize,
}

pub fn monitored_points(layout: &DataLayout, plan: &MonitorPlan, grid: &dsi_core::grid::Grid) -> Vec<MonitoredPoint> {
    let mut out = Vec::new();
    for (w, cells) in plan.well_cells(grid).iter().enumerate() {
        for t in 0..layout.n_times() {
            for &field in &plan.fields {
                for &cell in cells {
                    out.push(MonitoredPoint {
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
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FstSummary {
    pub fault: String,
    pub prior_iqr: f64,
    pub posterior_iqr: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub prior_iqr: f64,
    pub posterior_iqr: f64,
    pub iqr_reduction: f64,
    pub outside_support: usize,
}

/// Scalar results of an inversion, for reports and the acceptance gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiMetrics {
    pub n_ensemble: usize,
    pub n_observations: usize,
    pub n_monitored_points: usize,
    pub strain_noise_std: f64,
    pub prior_band_width: f64,
    pub posterior_band_width: f64,
    /// Prior over posterior mean P10–P90 width.
    pub width_ratio: f64,
    /// Fraction of monitored points whose noise-free truth lies in the posterior band.
    pub coverage: f64,
    pub coverage_history: f64,
    pub coverage_prediction: f64,
    pub prior_coverage: f64,
    pub fst: Vec<FstSummary>,
    pub parameters: Vec<ParamSummary>,
    pub iterations: Vec<IterationStats>,
}

fn sub(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

fn matrix_nan(rows: &[Vec<Option<f64>>]) -> CliResult<ArrayFile> {
    let r: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    ArrayFile::from_rows(&r)
}

fn scalar_rows(s: &[ScalarParams]) -> Vec<Vec<f64>> {
    s.iter().map(|p| p.to_array().to_vec()).collect()
}

/// Monitor placement, synthetic observations, ESMDA in latent space and
/// posterior analytics.
pub fn cmd_run_dsi(cfg: &RunConfig, force: bool) -> CliResult<Outcome> {
    let root = &cfg.output_dir;
    cfg.validate_inversion()?;
    let key = stage_key(cfg, "dsi");
    let inputs = upstream(root, &[PRIORS_MANIFEST, SIMS_MANIFEST, TRAIN_MANIFEST])?;
    if !force && is_current(root, DSI_MANIFEST, &key, &inputs) {
        return Ok(Outcome::UpToDate);
    }
    let sc = cfg.scenario()?;
    let layout = layout(cfg)?;
    let norm: NormStats = read_json(&root.join("train/norm.json"))?;
    if norm.layout != layout {
        return Err(CliError::Validation("trained normalization does not match the report times".into()));
    }
    let model = read_trained(&root.join("train"))?;
    let param = model.as_dyn();
    let esmda = cfg.esmda_config();
    let ne = esmda.n_ensemble;
    let members: Vec<usize> = (0..ne).collect();

    let sims: Vec<SimResult> = members
        .par_iter()
        .map(|&i| store::read_sim(&root.join(store::sim_rel(i))))
        .collect::<CliResult<_>>()?;
    let prior_full: Vec<Vec<f64>> = sims.iter().map(|s| layout.assemble(s)).collect::<dsi_core::Result<_>>()?;
    let truth_sim = store::read_sim(&root.join(store::TRUTH_SIM_REL))?;
    let truth_full = layout.assemble(&truth_sim)?;
    let truth_model = store::read_model(&root.join(store::TRUTH_MODEL_REL), cfg.grid.dims())?;

    let plan = monitor_plan(cfg, &sims, &sc)?;
    drop(sims);
    let sel = SelectionIndex::for_wells(&layout, &plan.well_cells(&cfg.grid), &plan.fields)?;
    let noise = build_noise_cov(&sel, mean_monitored_strain(&sel, &prior_full))?;
    let obs = make_observations(&truth_full, &sel, &noise.cd_diag, cfg.seeds.observation, "truth")?;

    let prior_latents = encode_ensemble(param, &normalize_all(&norm, &prior_full)?)?;
    let prior_scalars: Vec<ScalarParams> = members
        .iter()
        .map(|&i| Ok(store::read_model(&root.join(store::model_rel(i)), cfg.grid.dims())?.scalars))
        .collect::<CliResult<_>>()?;
    let joint = cfg.joint_inversion.then_some((&prior_scalars[..], &cfg.prior_ranges));
    let result = run_dsi(&prior_latents, param, &obs, &norm, &esmda, joint)?;

    // Bands at monitored cells over every report time.
    let points = monitored_points(&layout, &plan, &cfg.grid);
    let flat: Vec<usize> = points.iter().map(|p| p.flat).collect();
    let prior_mon: Vec<Vec<f64>> = prior_full.iter().map(|d| sub(d, &flat)).collect();
    let post_mon: Vec<Vec<f64>> = result.posterior_data.iter().map(|d| sub(d, &flat)).collect();
    let truth_mon = sub(&truth_full, &flat);
    let prior_band = percentile_band(&prior_mon)?;
    let post_band = percentile_band(&post_mon)?;
    let n_hm = layout.hm_times.len();
    let split = |pred: bool| -> Vec<usize> { (0..points.len()).filter(|&i| (points[i].time >= n_hm) == pred).collect() };
    let coverage_of = |idx: &[usize]| -> CliResult<f64> {
        if idx.is_empty() {
            return Ok(f64::NAN);
        }
        let b = PercentileBand {
            p10: sub(&post_band.p10, idx),
            p50: sub(&post_band.p50, idx),
            p90: sub(&post_band.p90, idx),
        };
        Ok(b.coverage(&sub(&truth_mon, idx))?)
    };

    // Average slip tendency at the last report time.
    let last = layout.n_times() - 1;
    let fst_of = |d: &Vec<f64>| -> Vec<Option<f64>> {
        sc.faults.iter().map(|f| fault_average_fst(&layout, d, &f.cells, last)).collect()
    };
    let prior_fst: Vec<Vec<Option<f64>>> = prior_full.iter().map(fst_of).collect();
    let post_fst: Vec<Vec<Option<f64>>> = result.posterior_data.iter().map(fst_of).collect();
    let truth_fst = fst_of(&truth_full);
    let fst_hists: Vec<FstHistogram> = sc
        .faults
        .iter()
        .enumerate()
        .map(|(f, fault)| {
            let col = |rows: &[Vec<Option<f64>>]| -> Vec<Option<f64>> { rows.iter().map(|r| r[f]).collect() };
            Ok(fst_histograms(&fault.name, &col(&prior_fst), &col(&post_fst), truth_fst[f])?)
        })
        .collect::<CliResult<_>>()?;

    let param_hists: Vec<ParameterHistogram> = match &result.posterior_scalars {
        Some(post) => parameter_histograms(&prior_scalars, post, Some(&truth_model.scalars), &cfg.prior_ranges)?,
        None => Vec::new(),
    };

    let latent_points: Vec<Vec<f64>> = (0..ne).map(|j| result.posterior.latent(j)).collect();
    let reps: Representatives = k_representatives(&latent_points, cfg.n_representatives, cfg.seeds.kmeans)?;
    let p_block = layout.block(last, FieldKind::Pressure);
    let rep_maps: Vec<Vec<f64>> = reps
        .medoids
        .iter()
        .map(|&m| result.posterior_data[m][p_block.clone()].to_vec())
        .collect();

    let metrics = DsiMetrics {
        n_ensemble: ne,
        n_observations: sel.len(),
        n_monitored_points: points.len(),
        strain_noise_std: noise.strain_std,
        prior_band_width: prior_band.mean_width(),
        posterior_band_width: post_band.mean_width(),
        width_ratio: prior_band.mean_width() / post_band.mean_width(),
        coverage: post_band.coverage(&truth_mon)?,
        coverage_history: coverage_of(&split(false))?,
        coverage_prediction: coverage_of(&split(true))?,
        prior_coverage: prior_band.coverage(&truth_mon)?,
        fst: fst_hists
            .iter()
            .map(|h| FstSummary {
                fault: h.fault.clone(),
                prior_iqr: h.prior_iqr,
                posterior_iqr: h.posterior_iqr,
                truth: h.truth,
            })
            .collect(),
        parameters: param_hists
            .iter()
            .map(|h| ParamSummary {
                name: h.name.clone(),
                prior_iqr: h.prior_iqr,
                posterior_iqr: h.posterior_iqr,
                iqr_reduction: h.iqr_reduction(),
                outside_support: h.outside_support,
            })
            .collect(),
        iterations: result.iterations.clone(),
    };

    let dir = root.join("dsi");
    let mut files = Vec::new();
    let mut arr = |name: &str, a: ArrayFile| -> CliResult<()> {
        a.write(&dir.join(name))?;
        files.push(format!("dsi/{name}"));
        Ok(())
    };
    arr("prior_latents.fdsi", ArrayFile::from_matrix(&prior_latents))?;
    arr("posterior_ensemble.fdsi", ArrayFile::from_matrix(&result.posterior.values))?;
    arr("observations.fdsi", ArrayFile::vector(obs.d_obs.clone()))?;
    arr("observations_true.fdsi", ArrayFile::vector(obs.d_true.clone()))?;
    arr("noise_variance.fdsi", ArrayFile::vector(obs.cd_diag.clone()))?;
    arr("prior_monitored.fdsi", ArrayFile::from_rows(&prior_mon)?)?;
    arr("posterior_monitored.fdsi", ArrayFile::from_rows(&post_mon)?)?;
    arr("truth_monitored.fdsi", ArrayFile::vector(truth_mon.clone()))?;
    arr("prior_fst.fdsi", matrix_nan(&prior_fst)?)?;
    arr("posterior_fst.fdsi", matrix_nan(&post_fst)?)?;
    arr("truth_fst.fdsi", matrix_nan(&[truth_fst])?)?;
    arr("prior_scalars.fdsi", ArrayFile::from_rows(&scalar_rows(&prior_scalars))?)?;
    if let Some(post) = &result.posterior_scalars {
        arr("posterior_scalars.fdsi", ArrayFile::from_rows(&scalar_rows(post))?)?;
    }
    arr("representative_pressure.fdsi", ArrayFile::from_rows(&rep_maps)?)?;
    arr(
        "truth_pressure.fdsi",
        ArrayFile::vector(truth_full[p_block.clone()].to_vec()),
    )?;

    let mut js = |name: &str, text: String| -> CliResult<()> {
        write_bytes(&dir.join(name), text.as_bytes())?;
        files.push(format!("dsi/{name}"));
        Ok(())
    };
    js("monitors.json", pretty(&plan))?;
    js("monitored_points.json", pretty(&points))?;
    js("selection.json", pretty(&obs.selection))?;
    js("representatives.json", pretty(&reps))?;
    js("fst_histograms.json", pretty(&fst_hists))?;
    js("parameter_histograms.json", pretty(&param_hists))?;
    js("metrics.json", pretty(&metrics))?;

    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                p.well.to_string(),
                p.field.label().to_string(),
                p.cell.to_string(),
                layout.times()[p.time].to_string(),
                prior_band.p10[i].to_string(),
                prior_band.p50[i].to_string(),
                prior_band.p90[i].to_string(),
                post_band.p10[i].to_string(),
                post_band.p50[i].to_string(),
                post_band.p90[i].to_string(),
                truth_mon[i].to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("bands.csv"),
        &["well", "field", "cell", "year", "prior_p10", "prior_p50", "prior_p90", "post_p10", "post_p50", "post_p90", "truth"],
        &rows,
    )?;
    files.push("dsi/bands.csv".into());
    finish(root, cfg, "dsi", &key, inputs, &files)?;
    Ok(Outcome::Ran)
}

/// All stages in order.
pub fn cmd_all(cfg: &RunConfig, force: bool) -> CliResult<Vec<Outcome>> {
    Ok(vec![
        cmd_gen_prior(cfg, force)?,
        cmd_simulate(cfg, force)?,
        cmd_train(cfg, force)?,
        cmd_run_dsi(cfg, force)?,
    ])
}

/// Loads the posterior ensemble matrix written by `cmd_run_dsi`.
pub fn read_posterior(root: &Path) -> CliResult<DMatrix<f64>> {
    ArrayFile::read(&root.join("dsi/posterior_ensemble.fdsi"))?.to_matrix()
}
