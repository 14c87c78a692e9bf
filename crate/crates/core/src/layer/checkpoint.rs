//! Layer checkpoints: one matrix file per parameter plus `manifest.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelHead, LConvLayer, Trainable};
use crate::error::{Error, Result};
use crate::groups::{Generator, GeneratorRepr};
use crate::numerics::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEntry {
    pub label: String,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub d: Option<usize>,
    pub m_in: usize,
    pub m_out: usize,
    pub n_generators: usize,
    pub scalar_eps: bool,
    pub residual: bool,
    pub head: bool,
    pub trainable: Trainable,
    pub init_seed: Option<u64>,
    pub generators: Vec<GeneratorEntry>,
}

pub fn save_layer(layer: &LConvLayer, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    io::ensure_dir(dir)?;
    io::write_matrix(dir.join("W0.mat"), &layer.w0)?;
    for (i, e) in layer.eps.iter().enumerate() {
        io::write_matrix(dir.join(format!("eps_{i}.mat")), e)?;
    }
    let mut entries = Vec::with_capacity(layer.generators.len());
    for (i, g) in layer.generators.iter().enumerate() {
        match &g.repr {
            GeneratorRepr::Dense(m) => {
                io::write_matrix(dir.join(format!("gen_{i}.mat")), m)?;
                entries.push(GeneratorEntry {
                    label: g.label.clone(),
                    rank: None,
                });
            }
            GeneratorRepr::LowRank { u, v } => {
                io::write_matrix(dir.join(format!("gen_{i}_U.mat")), u)?;
                io::write_matrix(dir.join(format!("gen_{i}_V.mat")), v)?;
                entries.push(GeneratorEntry {
                    label: g.label.clone(),
                    rank: Some(u.cols()),
                });
            }
        }
    }
    if let Some(h) = &layer.head {
        io::write_matrix(dir.join("head_scale.mat"), &h.scale)?;
        io::write_matrix(dir.join("head_bias.mat"), &h.bias)?;
    }
    let manifest = LayerManifest {
        d: layer.d(),
        m_in: layer.m_in(),
        m_out: layer.m_out(),
        n_generators: layer.n_generators(),
        scalar_eps: layer.scalar_eps,
        residual: layer.residual,
        head: layer.head.is_some(),
        trainable: layer.trainable,
        init_seed: layer.init_seed,
        generators: entries,
    };
    io::write_json(dir.join("manifest.json"), &manifest)
}

pub fn load_layer(dir: impl AsRef<Path>) -> Result<LConvLayer> {
    let dir = dir.as_ref();
    let manifest: LayerManifest = io::read_json(dir.join("manifest.json"))?;
    if manifest.generators.len() != manifest.n_generators {
        return Err(Error::dim(
            "manifest generator entries",
            manifest.n_generators,
            manifest.generators.len(),
        ));
    }
    let w0 = io::read_matrix(dir.join("W0.mat"))?;
    let eps = (0..manifest.n_generators)
        .map(|i| io::read_matrix(dir.join(format!("eps_{i}.mat"))))
        .collect::<Result<Vec<_>>>()?;
    let mut generators = Vec::with_capacity(manifest.n_generators);
    for (i, entry) in manifest.generators.iter().enumerate() {
        let g = match entry.rank {
            None => Generator::dense(io::read_matrix(dir.join(format!("gen_{i}.mat")))?, entry.label.clone())?,
            Some(_) => Generator::low_rank(
                io::read_matrix(dir.join(format!("gen_{i}_U.mat")))?,
                io::read_matrix(dir.join(format!("gen_{i}_V.mat")))?,
                entry.label.clone(),
            )?,
        };
        generators.push(g);
    }
    let head = if manifest.head {
        Some(ChannelHead {
            scale: io::read_matrix(dir.join("head_scale.mat"))?,
            bias: io::read_matrix(dir.join("head_bias.mat"))?,
        })
    } else {
        None
    };
    let layer = LConvLayer {
        w0,
        eps,
        generators,
        scalar_eps: manifest.scalar_eps,
        residual: manifest.residual,
        head,
        trainable: manifest.trainable,
        init_seed: manifest.init_seed,
    };
    layer.validate()?;
    if layer.m_in() != manifest.m_in || layer.m_out() != manifest.m_out || layer.d() != manifest.d {
        return Err(Error::dim(
            "checkpoint shapes vs manifest",
            format!("{}x{} d={:?}", manifest.m_out, manifest.m_in, manifest.d),
            format!("{}x{} d={:?}", layer.m_out(), layer.m_in(), layer.d()),
        ));
    }
    Ok(layer)
}
