//! JSON model files: configuration, every trainable tensor by name, and the
//! fixed RFF buffers. Doubles are written in shortest round-trip form and
//! parsed with correct rounding, so save/load is bitwise exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{Kafnet, ModelConfig, ModelParams};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl TensorEntry {
    fn new(name: String, t: &Tensor) -> Self {
        Self {
            name,
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        }
    }

    fn tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.values.clone())
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", self.name)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub config: ModelConfig,
    /// Number of variates the model was trained on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_variates: Option<usize>,
    /// Seed the RFF buffers were drawn from.
    pub rff_seed: u64,
    pub parameters: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &Kafnet, n_variates: Option<usize>) -> Self {
        let params = model.params();
        let parameters = params
            .named()
            .into_iter()
            .map(|(n, t)| TensorEntry::new(n, &t))
            .collect();
        let buffers = params
            .rff_buffers()
            .into_iter()
            .enumerate()
            .flat_map(|(b, (omega, phase))| {
                [
                    TensorEntry::new(format!("blocks.{b}.rff_omega"), omega),
                    TensorEntry::new(format!("blocks.{b}.rff_phase"), phase),
                ]
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT,
            config: model.config().clone(),
            n_variates,
            rff_seed: model.config().init_seed,
            parameters,
            buffers,
        }
    }

    /// Rebuilds the model; names, order and shapes must match the
    /// configuration exactly.
    pub fn into_model(self) -> Result<Kafnet> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format {}",
                self.format
            )));
        }
        let mut params = ModelParams::init(&self.config)?;
        let names = params.names();
        if names.len() != self.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                names.len(),
                self.parameters.len()
            )));
        }
        for ((slot, want), entry) in params
            .leaves_mut()
            .into_iter()
            .zip(&names)
            .zip(&self.parameters)
        {
            if &entry.name != want {
                return Err(Error::Checkpoint(format!(
                    "expected {want}, found {}",
                    entry.name
                )));
            }
            let t = entry.tensor()?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "{want}: shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        let mut buffers = self.buffers.iter();
        for (b, (omega, phase)) in params.rff_buffers_mut().into_iter().enumerate() {
            for (slot, kind) in [(omega, "rff_omega"), (phase, "rff_phase")] {
                let want = format!("blocks.{b}.{kind}");
                let entry = buffers
                    .next()
                    .ok_or_else(|| Error::Checkpoint(format!("missing buffer {want}")))?;
                if entry.name != want {
                    return Err(Error::Checkpoint(format!(
                        "expected {want}, found {}",
                        entry.name
                    )));
                }
                let t = entry.tensor()?;
                if t.shape() != slot.shape() {
                    return Err(Error::Checkpoint(format!("{want}: shape {:?}", t.shape())));
                }
                *slot = t;
            }
        }
        if buffers.next().is_some() {
            return Err(Error::Checkpoint("unexpected extra buffers".into()));
        }
        Kafnet::from_parts(self.config, params)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save(model: &Kafnet, n_variates: Option<usize>, path: &Path) -> Result<()> {
    let text = Checkpoint::from_model(model, n_variates).to_json()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a model file; also returns the recorded variate count.
pub fn load(path: &Path) -> Result<(Kafnet, Option<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::from_json(&text)?;
    let n = ck.n_variates;
    Ok((ck.into_model()?, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn awkward_model() -> Kafnet {
        let mut m = Kafnet::new(ModelConfig {
            hidden: 8,
            heads: 2,
            rff_dim: 8,
            blocks: 2,
            init_seed: 9,
            ..ModelConfig::default()
        })
        .unwrap();
        // Values without short decimal forms.
        for (i, t) in m.params_mut().leaves_mut().into_iter().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v = (i as f64 + 1.0) / 3.0 + (j as f64) * 1e-17 + f64::EPSILON * j as f64;
            }
        }
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = awkward_model();
        let text = Checkpoint::from_model(&m, Some(4)).to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.n_variates, Some(4));
        let m2 = back.into_model().unwrap();
        for ((_, a), (_, b)) in m.params().named().iter().zip(m2.params().named().iter()) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(m, m2);
        assert_eq!(
            Checkpoint::from_model(&m2, Some(4)).to_json().unwrap(),
            text
        );
    }

    #[test]
    fn shape_and_name_mismatches_rejected() {
        let m = awkward_model();
        let mut ck = Checkpoint::from_model(&m, None);
        ck.parameters[0].shape = vec![1, 1];
        ck.parameters[0].values = vec![0.0];
        assert!(ck.into_model().is_err());
        let mut ck = Checkpoint::from_model(&m, None);
        ck.parameters.swap(0, 1);
        assert!(ck.into_model().is_err());
        let mut ck = Checkpoint::from_model(&m, None);
        ck.buffers.pop();
        assert!(ck.into_model().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let m = awkward_model();
        let text = Checkpoint::from_model(&m, None).to_json().unwrap();
        let tampered = text.replacen("\"format\"", "\"extra\": 1,\n  \"format\"", 1);
        assert!(Checkpoint::from_json(&tampered).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/model.json");
        let m = awkward_model();
        save(&m, Some(3), &path).unwrap();
        let (back, n) = load(&path).unwrap();
        assert_eq!(n, Some(3));
        assert_eq!(back, m);
        assert!(load(&dir.path().join("missing.json")).is_err());
    }
}
