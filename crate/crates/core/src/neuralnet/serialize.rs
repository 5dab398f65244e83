//! Versioned JSON persistence for trained networks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::LstmNetwork;
use super::search::HyperParams;
use crate::error::{Error, Result};

pub const FORMAT: &str = "volcast-lstm";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedNetwork {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<HyperParams>,
    pub network: LstmNetwork,
}

pub fn to_json(net: &LstmNetwork, hyperparams: Option<&HyperParams>) -> Result<String> {
    let doc = SavedNetwork {
        format: FORMAT.into(),
        version: VERSION,
        hyperparams: hyperparams.cloned(),
        network: net.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses and validates a saved network; shapes are checked before use.
pub fn from_json(text: &str) -> Result<SavedNetwork> {
    let doc: SavedNetwork = serde_json::from_str(text)?;
    if doc.format != FORMAT {
        return Err(Error::Malformed {
            line: 0,
            message: format!("unexpected format {:?}", doc.format),
        });
    }
    if doc.version != VERSION {
        return Err(Error::Malformed {
            line: 0,
            message: format!("unsupported version {}", doc.version),
        });
    }
    doc.network.validate()?;
    if !doc.network.is_finite() {
        return Err(Error::Malformed {
            line: 0,
            message: "non-finite weight".into(),
        });
    }
    Ok(doc)
}

pub fn save(path: &Path, net: &LstmNetwork, hyperparams: Option<&HyperParams>) -> Result<()> {
    std::fs::write(path, to_json(net, hyperparams)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SavedNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::loss::LossKind;
    use crate::neuralnet::matrix::Matrix;
    use crate::neuralnet::network::{Activation, DenseSpec, LstmSpec};
    use crate::seed::rng_from;

    fn net() -> LstmNetwork {
        let lstm = [LstmSpec {
            units: 3,
            activation: Activation::Tanh,
            recurrent_dropout: 0.1,
        }];
        let dense = [DenseSpec {
            units: 2,
            activation: Activation::Relu,
        }];
        LstmNetwork::new(2, &lstm, &dense, LossKind::Mae, 0.05, &mut rng_from(1)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let a = net();
        let text = to_json(&a, None).unwrap();
        let b = from_json(&text).unwrap();
        assert_eq!(b.network, a);
        let x = Matrix::from_rows(&[vec![0.1, -0.3], vec![0.7, 0.2]]).unwrap();
        assert_eq!(a.forward(&x).unwrap().to_bits(), b.network.forward(&x).unwrap().to_bits());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save(&path, &a, None).unwrap();
        assert_eq!(load(&path).unwrap().network, a);
    }

    #[test]
    fn rejects_bad_documents() {
        let a = net();
        let good: serde_json::Value = serde_json::from_str(&to_json(&a, None).unwrap()).unwrap();

        let mut v = good.clone();
        v["version"] = 2.into();
        assert!(from_json(&v.to_string()).is_err());

        let mut v = good.clone();
        v["format"] = "other".into();
        assert!(from_json(&v.to_string()).is_err());

        let mut v = good.clone();
        v["network"]["head"]["weights"]["shape"][1] = 7.into();
        assert!(from_json(&v.to_string()).is_err());

        assert!(from_json("{").is_err());
    }
}
