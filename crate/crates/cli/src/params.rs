//! Persistence of trained parameterizers.

use std::path::Path;

use dsi_core::latentparam::{Dense, FrontEnd, Parameterizer, PcaModel, TrainConfig, VaeModel, VaeNet};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::arrayfile::{write_bytes, ArrayFile};
use crate::config::ParamKind;
use crate::error::{CliError, CliResult};
use crate::manifest::sha256_bytes;

#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Pca(PcaModel),
    Vae(VaeModel),
}

impl Trained {
    pub fn as_dyn(&self) -> &dyn Parameterizer {
        match self {
            Self::Pca(p) => p,
            Self::Vae(v) => v,
        }
    }
}

/// Sidecar describing how to rebuild a saved parameterizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ParamKind,
    pub latent_dim: usize,
    pub data_dim: usize,
    /// PCA components (the model itself, or the VAE front-end).
    pub pca_components: Option<usize>,
    pub pca_n_train: Option<usize>,
    pub vae_n_hidden: Option<usize>,
    pub vae_layer_shapes: Vec<(usize, usize)>,
    pub activation: String,
    pub train_config_sha256: Option<String>,
}

/// Files written for a model, relative to `dir`.
pub fn write_trained(dir: &Path, model: &Trained, train_cfg: Option<&TrainConfig>) -> CliResult<Vec<String>> {
    let mut files = Vec::new();
    let mut put = |name: String, a: ArrayFile| -> CliResult<()> {
        a.write(&dir.join(&name))?;
        files.push(name);
        Ok(())
    };
    let mut meta = ModelMeta {
        kind: ParamKind::Pca,
        latent_dim: model.as_dyn().latent_dim(),
        data_dim: model.as_dyn().data_dim(),
        pca_components: None,
        pca_n_train: None,
        vae_n_hidden: None,
        vae_layer_shapes: Vec::new(),
        activation: "leaky_relu(0.2) hidden, linear output".into(),
        train_config_sha256: train_cfg.map(|c| sha256_bytes(serde_json::to_string(c).expect("serializes").as_bytes())),
    };
    let pca = match model {
        Trained::Pca(p) => Some(p),
        Trained::Vae(v) => match &v.front {
            FrontEnd::Pca(p) => Some(p),
            FrontEnd::Identity { .. } => None,
        },
    };
    if let Some(p) = pca {
        meta.pca_components = Some(p.n_components);
        meta.pca_n_train = Some(p.n_train);
        put("pca_mean.fdsi".into(), ArrayFile::vector(p.mean.clone()))?;
        put(
            "pca_basis.fdsi".into(),
            ArrayFile::new(vec![p.n_components, p.data_dim()], p.basis.clone())?,
        )?;
        put("pca_singular.fdsi".into(), ArrayFile::vector(p.singular_values.clone()))?;
    }
    if let Trained::Vae(v) = model {
        meta.kind = ParamKind::Vae;
        meta.vae_n_hidden = Some(v.net.n_hidden);
        for (l, layer) in v.net.layers.iter().enumerate() {
            meta.vae_layer_shapes.push((layer.w.nrows(), layer.w.ncols()));
            put(format!("vae_layer{l:02}_w.fdsi"), ArrayFile::from_matrix(&layer.w))?;
            put(format!("vae_layer{l:02}_b.fdsi"), ArrayFile::vector(layer.b.as_slice().to_vec()))?;
        }
    }
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_bytes(&dir.join("model.json"), text.as_bytes())?;
    files.push("model.json".into());
    Ok(files)
}

pub fn read_trained(dir: &Path) -> CliResult<Trained> {
    let meta_path = dir.join("model.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(format!("reading {}", meta_path.display()), e))?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
        path: meta_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let pca = match meta.pca_components {
        Some(k) => {
            let mean = ArrayFile::read(&dir.join("pca_mean.fdsi"))?.data;
            let basis = ArrayFile::read(&dir.join("pca_basis.fdsi"))?;
            if basis.dims != [k, mean.len()] {
                return Err(CliError::Corrupt {
                    path: dir.display().to_string(),
                    detail: "PCA basis shape mismatch".into(),
                });
            }
            Some(PcaModel {
                mean,
                basis: basis.data,
                n_components: k,
                singular_values: ArrayFile::read(&dir.join("pca_singular.fdsi"))?.data,
                n_train: meta.pca_n_train.unwrap_or(0),
            })
        }
        None => None,
    };
    match meta.kind {
        ParamKind::Pca => pca.map(Trained::Pca).ok_or_else(|| CliError::Corrupt {
            path: meta_path.display().to_string(),
            detail: "PCA model without components".into(),
        }),
        ParamKind::Vae => {
            let mut layers = Vec::with_capacity(meta.vae_layer_shapes.len());
            for (l, &(r, c)) in meta.vae_layer_shapes.iter().enumerate() {
                let w = ArrayFile::read(&dir.join(format!("vae_layer{l:02}_w.fdsi")))?;
                let b = ArrayFile::read(&dir.join(format!("vae_layer{l:02}_b.fdsi")))?;
                if w.dims != [r, c] || b.dims != [r] {
                    return Err(CliError::Corrupt {
                        path: dir.display().to_string(),
                        detail: format!("layer {l} shape mismatch"),
                    });
                }
                layers.push(Dense {
                    w: w.to_matrix()?,
                    b: DVector::from_vec(b.data),
                });
            }
            let front = match pca {
                Some(p) => FrontEnd::Pca(p),
                None => FrontEnd::Identity { dim: meta.data_dim },
            };
            Ok(Trained::Vae(VaeModel {
                net: VaeNet {
                    layers,
                    n_hidden: meta.vae_n_hidden.unwrap_or(0),
                },
                front,
            }))
        }
    }
}
