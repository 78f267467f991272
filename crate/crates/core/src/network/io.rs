//! Model documents.
//!
//! ```json
//! {"version":1,"shape":[1,1],"layers":[{"edges":[
//!   {"w_b":0,"w_s":0,"grid":{"a":-1,"b":1,"G":3,"k":3},"coeffs":[0,0,0,0,0,0],
//!    "lock":{"name":"x","a":1,"b":0,"c":1,"d":0}}]}]}
//! ```
//!
//! Edges of a layer are listed output-major: edge `(i, j)` sits at position
//! `j * n_in + i`. Every float is written with 17 significant digits. The
//! optional `knots` array carries non-uniform grids exactly; without it the
//! grid is rebuilt uniformly from `a`, `b`, `G`, `k`.

use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::{ActivationEdge, KanLayer, KanNetwork, SymbolicLock};
use crate::error::{KanError, Result};
use crate::spline::{Grid, SplineCurve};
use crate::symbolic::SymbolicFn;

pub const MODEL_VERSION: u32 = 1;

fn format17(v: f64) -> std::result::Result<String, String> {
    if !v.is_finite() {
        return Err(format!("cannot serialize non-finite value {v}"));
    }
    Ok(format!("{v:.16e}"))
}

fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let text = format17(*v).map_err(S::Error::custom)?;
    RawValue::from_string(text).map_err(S::Error::custom)?.serialize(s)
}

fn ser_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut text = String::with_capacity(v.len() * 24 + 2);
    text.push('[');
    for (n, x) in v.iter().enumerate() {
        if n > 0 {
            text.push(',');
        }
        text.push_str(&format17(*x).map_err(S::Error::custom)?);
    }
    text.push(']');
    RawValue::from_string(text).map_err(S::Error::custom)?.serialize(s)
}

fn ser_opt_vec<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_vec(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    #[serde(serialize_with = "ser_f64")]
    pub a: f64,
    #[serde(serialize_with = "ser_f64")]
    pub b: f64,
    #[serde(rename = "G")]
    pub intervals: usize,
    #[serde(rename = "k")]
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ser_opt_vec")]
    pub knots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockDocument {
    pub name: String,
    #[serde(serialize_with = "ser_f64")]
    pub a: f64,
    #[serde(serialize_with = "ser_f64")]
    pub b: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c: f64,
    #[serde(serialize_with = "ser_f64")]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    #[serde(serialize_with = "ser_f64")]
    pub w_b: f64,
    #[serde(serialize_with = "ser_f64")]
    pub w_s: f64,
    pub grid: GridDocument,
    #[serde(serialize_with = "ser_vec")]
    pub coeffs: Vec<f64>,
    pub lock: Option<LockDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub edges: Vec<EdgeDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub shape: Vec<usize>,
    pub layers: Vec<LayerDocument>,
}

impl From<&KanNetwork> for ModelDocument {
    fn from(net: &KanNetwork) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| LayerDocument {
                edges: layer.edges().iter().map(edge_document).collect(),
            })
            .collect();
        Self {
            version: MODEL_VERSION,
            shape: net.shape().to_vec(),
            layers,
        }
    }
}

fn edge_document(e: &ActivationEdge) -> EdgeDocument {
    let grid = e.curve.grid();
    EdgeDocument {
        w_b: e.w_b,
        w_s: e.w_s,
        grid: GridDocument {
            a: grid.a(),
            b: grid.b(),
            intervals: grid.intervals(),
            order: grid.order(),
            knots: (!grid.is_uniform()).then(|| grid.knots().to_vec()),
        },
        coeffs: e.curve.coeffs().to_vec(),
        lock: e.lock.map(|l| LockDocument {
            name: l.function.name().to_string(),
            a: l.a,
            b: l.b,
            c: l.c,
            d: l.d,
        }),
    }
}

impl TryFrom<&ModelDocument> for KanNetwork {
    type Error = KanError;

    fn try_from(doc: &ModelDocument) -> Result<Self> {
        if doc.version != MODEL_VERSION {
            return Err(KanError::Version {
                found: doc.version,
                expected: MODEL_VERSION,
            });
        }
        if doc.shape.len() < 2 {
            return Err(KanError::InvalidShape("shape needs ≥ 2 layers".into()));
        }
        if doc.layers.len() != doc.shape.len() - 1 {
            return Err(KanError::InvalidShape(format!(
                "shape {:?} implies {} layers, document has {}",
                doc.shape,
                doc.shape.len() - 1,
                doc.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, ld) in doc.layers.iter().enumerate() {
            let edges = ld
                .edges
                .iter()
                .map(edge_from_document)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| KanError::Malformed(format!("layer {l}: {e}")))?;
            layers.push(KanLayer::new(doc.shape[l], doc.shape[l + 1], edges)?);
        }
        KanNetwork::from_layers(layers)
    }
}

fn edge_from_document(d: &EdgeDocument) -> Result<ActivationEdge> {
    let g = &d.grid;
    let grid = match &g.knots {
        Some(knots) => {
            let grid = Grid::from_knots(knots.clone(), g.intervals, g.order)?;
            if grid.a() != g.a || grid.b() != g.b {
                return Err(KanError::Malformed("grid bounds disagree with knots".into()));
            }
            grid
        }
        None => Grid::uniform(g.a, g.b, g.intervals, g.order)?,
    };
    let curve = SplineCurve::new(grid, d.coeffs.clone())?;
    let lock = match &d.lock {
        Some(l) => Some(SymbolicLock::new(SymbolicFn::from_name(&l.name)?, l.a, l.b, l.c, l.d)),
        None => None,
    };
    for v in [d.w_b, d.w_s].iter().chain(&d.coeffs) {
        if !v.is_finite() {
            return Err(KanError::NonFinite("edge parameter".into()));
        }
    }
    Ok(ActivationEdge {
        w_b: d.w_b,
        w_s: d.w_s,
        curve,
        lock,
    })
}

/// Serialize a network to a model JSON document.
pub fn to_json(net: &KanNetwork) -> Result<String> {
    serde_json::to_string(&ModelDocument::from(net)).map_err(|e| KanError::NonFinite(e.to_string()))
}

/// Parse a model JSON document.
pub fn from_json(text: &str) -> Result<KanNetwork> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| KanError::Malformed(e.to_string()))?;
    KanNetwork::try_from(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::matrix::Matrix;
    use crate::network::init_network;

    #[test]
    fn minimal_identity_document() {
        let text = r#"{"version":1,"shape":[1,1],"layers":[{"edges":[
            {"w_b":0,"w_s":0,"grid":{"a":-1,"b":1,"G":3,"k":3},"coeffs":[0,0,0,0,0,0],
             "lock":{"name":"x","a":1,"b":0,"c":1,"d":0}}]}]}"#;
        let net = from_json(text).unwrap();
        let y = net
            .predict(&Matrix::from_rows(&[vec![0.7]]).unwrap(), Execution::Sequential)
            .unwrap();
        assert_eq!(y.get(0, 0), 0.7);
    }

    #[test]
    fn seventeen_digits() {
        let net = init_network(&[1, 1], 3, 3, 0, 0.1).unwrap();
        let text = to_json(&net).unwrap();
        assert!(text.contains(&format!("{:.16e}", net.edge(0, 0, 0).unwrap().w_b)));
    }

    #[test]
    fn version_and_shape_errors() {
        let net = init_network(&[2, 1], 3, 3, 0, 0.1).unwrap();
        let mut doc = ModelDocument::from(&net);
        doc.version = 7;
        assert!(matches!(KanNetwork::try_from(&doc), Err(KanError::Version { .. })));
        let mut doc = ModelDocument::from(&net);
        doc.shape = vec![3, 1];
        assert!(KanNetwork::try_from(&doc).is_err());
        let mut doc = ModelDocument::from(&net);
        doc.shape = vec![2, 1, 1];
        assert!(matches!(KanNetwork::try_from(&doc), Err(KanError::InvalidShape(_))));
        assert!(matches!(from_json("{\"version\":1"), Err(KanError::Malformed(_))));
    }
}
