//! Named parameter collections and their JSON checkpoint format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Plain (non-graph) parameter values keyed by name. Iteration order is by
/// name, which fixes the order of every reduction over parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> BTreeMap<String, Shape> {
        self.tensors.iter().map(|(k, v)| (k.clone(), v.shape())).collect()
    }

    /// Flattened values in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Euclidean norm over every parameter.
    pub fn norm(&self) -> f64 {
        self.tensors.values().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Fresh differentiable leaves holding copies of these values.
    pub fn to_vars(&self) -> ParamVars {
        ParamVars { vars: self.tensors.iter().map(|(k, v)| (k.clone(), Var::param(v.clone()))).collect() }
    }

    /// Constant nodes; for evaluation where no gradient is needed.
    pub fn to_constants(&self) -> ParamVars {
        ParamVars { vars: self.tensors.iter().map(|(k, v)| (k.clone(), Var::constant(v.clone()))).collect() }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let stored: BTreeMap<&str, StoredTensor> = self
            .tensors
            .iter()
            .map(|(k, v)| (k.as_str(), StoredTensor { shape: v.shape().dims().to_vec(), data: v.data().to_vec() }))
            .collect();
        serde_json::to_value(stored).expect("tensor map serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let stored: BTreeMap<String, StoredTensor> = serde_json::from_value(value.clone())?;
        let mut out = ParamSet::new();
        for (name, st) in stored {
            let shape = match st.shape.as_slice() {
                [r, c] => Shape::new(*r, *c),
                other => return Err(Error::Shape(format!("parameter `{name}` has rank {} shape", other.len()))),
            };
            out.insert(name, Tensor::new(shape, st.data)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_json())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ParamSet::from_json(&serde_json::from_str(&text)?)
    }

    /// Checks that names and shapes agree exactly with `expected`.
    pub fn check_shapes(&self, expected: &BTreeMap<String, Shape>) -> Result<()> {
        for (name, shape) in expected {
            let got = self.get(name)?.shape();
            if got != *shape {
                return Err(Error::Shape(format!("parameter `{name}`: expected {shape}, found {got}")));
            }
        }
        if let Some(extra) = self.names().find(|n| !expected.contains_key(*n)) {
            return Err(Error::UnknownParameter(extra.to_string()));
        }
        Ok(())
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamSet { tensors: iter.into_iter().collect() }
    }
}

/// Parameters as graph nodes, keyed by name.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<&Var> {
        self.vars.get(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Current values, detached from the graph.
    pub fn values(&self) -> ParamSet {
        self.vars.iter().map(|(k, v)| (k.clone(), v.value().clone())).collect()
    }

    /// Gradient of `loss` with respect to every parameter in the set.
    pub fn grad(&self, loss: &Var, create_graph: bool) -> Result<GradientMap> {
        let wrt: Vec<Var> = self.vars.values().cloned().collect();
        let grads = autodiff::grad(loss, &wrt, create_graph)?;
        Ok(GradientMap { grads: self.vars.keys().cloned().zip(grads).collect() })
    }
}

impl FromIterator<(String, Var)> for ParamVars {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        ParamVars { vars: iter.into_iter().collect() }
    }
}

/// One gradient node per parameter, same shape as the parameter.
#[derive(Clone, Debug)]
pub struct GradientMap {
    grads: BTreeMap<String, Var>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Result<&Var> {
        self.grads.get(name).ok_or_else(|| Error::MissingGradient(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn values(&self) -> ParamSet {
        self.grads.iter().map(|(k, v)| (k.clone(), v.value().clone())).collect()
    }
}

impl FromIterator<(String, Var)> for GradientMap {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        GradientMap { grads: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::row(vec![0.5, -1.25]));
        p.insert("a", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        p
    }

    #[test]
    fn json_roundtrip_and_layout() {
        let p = sample();
        let json = p.to_json();
        assert_eq!(json["a"]["shape"], serde_json::json!([2, 2]));
        assert_eq!(json["b"]["data"], serde_json::json!([0.5, -1.25]));
        assert_eq!(ParamSet::from_json(&json).unwrap(), p);
    }

    #[test]
    fn shape_validation() {
        let p = sample();
        let mut expected = p.shapes();
        assert!(p.check_shapes(&expected).is_ok());
        expected.insert("b".into(), Shape::new(2, 1));
        assert!(p.check_shapes(&expected).is_err());
        let bad = serde_json::json!({"a": {"shape": [3], "data": [1.0, 2.0, 3.0]}});
        assert!(ParamSet::from_json(&bad).is_err());
        let bad = serde_json::json!({"a": {"shape": [2, 2], "data": [1.0]}});
        assert!(ParamSet::from_json(&bad).is_err());
    }

    #[test]
    fn flatten_is_name_ordered() {
        assert_eq!(sample().flatten(), vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.25]);
    }

    #[test]
    fn grad_covers_every_parameter() {
        let p = sample();
        let vars = p.to_vars();
        let loss = vars.get("b").unwrap().sum();
        let g = vars.grad(&loss, false).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get("a").unwrap().shape(), Shape::new(2, 2));
        assert_eq!(g.get("a").unwrap().value().sum(), 0.0);
        assert_eq!(g.get("b").unwrap().value().data(), &[1.0, 1.0]);
    }
}
