use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{NetworkKind, Normalization, WindowSet};
use super::network::{network_forward, NetworkSpec, Weights};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "aeolus-weights";
const FORMAT_VERSION: u32 = 1;

/// A network with its trained parameters and frozen scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: NetworkKind,
    pub spec: NetworkSpec,
    pub weights: Weights,
    pub normalization: Normalization,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    name: String,
    params: std::collections::BTreeMap<String, ParamFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    format: String,
    version: u32,
    network: NetworkKind,
    fingerprint: String,
    spec: NetworkSpec,
    layers: Vec<LayerFile>,
    normalization: Normalization,
}

impl Model {
    pub fn new(kind: NetworkKind, spec: NetworkSpec, weights: Weights, normalization: Normalization) -> Result<Self> {
        spec.validate()?;
        weights.validate(&spec)?;
        normalization.validate(spec.input_channels, spec.output_units())?;
        Ok(Self {
            kind,
            spec,
            weights,
            normalization,
        })
    }

    /// Denormalised predictions `(B, K)` for normalised windows.
    pub fn predict_normalized(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = network_forward(&self.spec, &self.weights, x)?;
        self.normalization.denormalize_output(y.data_mut());
        Ok(y)
    }

    /// Predictions for windows `idx` of a window set, evaluated in chunks.
    pub fn predict_windows(&self, set: &WindowSet, idx: &[usize], chunk: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(idx.len() * self.spec.output_units());
        for part in idx.chunks(chunk.max(1)) {
            let x = set.inputs(part, &self.normalization);
            out.extend_from_slice(self.predict_normalized(&x)?.data());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{} network produced a non-finite output", self.kind.name())));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .weights
            .layers
            .iter()
            .enumerate()
            .map(|(i, params)| LayerFile {
                name: format!("layer_{i}"),
                params: params
                    .iter()
                    .map(|p| {
                        (
                            p.name.clone(),
                            ParamFile {
                                shape: p.shape.clone(),
                                data: p.data.clone(),
                            },
                        )
                    })
                    .collect(),
            })
            .collect();
        let file = WeightsFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            network: self.kind,
            fingerprint: self.spec.fingerprint(),
            spec: self.spec.clone(),
            layers,
            normalization: self.normalization.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.format != FORMAT || file.version != FORMAT_VERSION {
            return Err(Error::Dataset(format!(
                "unsupported weights format {} v{}",
                file.format, file.version
            )));
        }
        if file.fingerprint != file.spec.fingerprint() {
            return Err(Error::Dataset("weights fingerprint does not match the embedded network layout".into()));
        }
        let template = Weights::zeros(&file.spec);
        if template.layers.len() != file.layers.len() {
            return Err(Error::Shape("weights file layer count differs from its layout".into()));
        }
        let mut weights = template;
        for (i, (dst, src)) in weights.layers.iter_mut().zip(file.layers).enumerate() {
            let mut src = src.params;
            for p in dst.iter_mut() {
                let Some(pf) = src.remove(&p.name) else {
                    return Err(Error::Shape(format!("layer {i} is missing parameter {}", p.name)));
                };
                if pf.shape != p.shape || pf.data.len() != p.data.len() {
                    return Err(Error::Shape(format!(
                        "layer {i} parameter {} has shape {:?}, expected {:?}",
                        p.name, pf.shape, p.shape
                    )));
                }
                p.data = pf.data;
            }
            if let Some(extra) = src.keys().next() {
                return Err(Error::Shape(format!("layer {i} has unexpected parameter {extra}")));
            }
        }
        Model::new(file.network, file.spec, weights, file.normalization)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Load and check that the file holds the expected network.
    pub fn load_kind(path: &Path, kind: NetworkKind) -> Result<Self> {
        let m = Self::load(path)?;
        if m.kind != kind || m.spec != kind.spec() {
            return Err(Error::Dataset(format!(
                "{} holds a {} network, expected {}",
                path.display(),
                m.kind.name(),
                kind.name()
            )));
        }
        Ok(m)
    }
}
