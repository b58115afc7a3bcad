use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Tool parameters as a JSON object with stable key order.
pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Int,
    Float,
    String,
    Bool,
    StringList,
    IntList,
    Map,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ParamSpec {
    pub fn new(ty: ParamType) -> Self {
        Self { ty, default: None, min: None, max: None, choices: None, required: false, description: String::new() }
    }

    pub fn default_value(mut self, v: impl Into<Value>) -> Self {
        self.default = Some(v.into());
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn bounds(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }

    pub fn choices(mut self, c: &[&str]) -> Self {
        self.choices = Some(c.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn describe(mut self, d: &str) -> Self {
        self.description = d.to_string();
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("unknown parameter '{0}'")]
    Unknown(String),
    #[error("missing required parameter '{0}'")]
    MissingRequired(String),
    #[error("parameter '{name}' must be of type {expected:?}")]
    WrongType { name: String, expected: ParamType },
    #[error("parameter '{name}' = {value} is outside [{min:?}, {max:?}]")]
    OutOfBounds { name: String, value: f64, min: Option<f64>, max: Option<f64> },
    #[error("parameter '{name}' must be one of {choices:?}")]
    NotAChoice { name: String, choices: Vec<String> },
}

fn type_matches(ty: ParamType, v: &Value) -> bool {
    match ty {
        ParamType::Int => v.as_i64().is_some() || v.as_u64().is_some(),
        ParamType::Float => v.is_number(),
        ParamType::String => v.is_string(),
        ParamType::Bool => v.is_boolean(),
        ParamType::StringList => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
        ParamType::IntList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_u64().is_some())),
        ParamType::Map => v.is_object(),
        ParamType::Any => true,
    }
}

/// Checks `params` against `schema` and fills defaults. `null` values are
/// treated as absent.
pub fn validate_params(schema: &BTreeMap<String, ParamSpec>, params: &Params) -> Result<Params, ParamError> {
    for k in params.keys() {
        if !schema.contains_key(k) {
            return Err(ParamError::Unknown(k.clone()));
        }
    }
    let mut out = Params::new();
    for (name, spec) in schema {
        let value = match params.get(name).filter(|v| !v.is_null()) {
            Some(v) => v.clone(),
            None => match &spec.default {
                Some(d) => d.clone(),
                None if spec.required => return Err(ParamError::MissingRequired(name.clone())),
                None => continue,
            },
        };
        if value.is_null() {
            continue;
        }
        if !type_matches(spec.ty, &value) {
            return Err(ParamError::WrongType { name: name.clone(), expected: spec.ty });
        }
        if let Some(x) = value.as_f64() {
            let below = spec.min.is_some_and(|m| x < m);
            let above = spec.max.is_some_and(|m| x > m);
            if below || above {
                return Err(ParamError::OutOfBounds { name: name.clone(), value: x, min: spec.min, max: spec.max });
            }
        }
        if let (Some(choices), Some(s)) = (&spec.choices, value.as_str()) {
            if !choices.iter().any(|c| c == s) {
                return Err(ParamError::NotAChoice { name: name.clone(), choices: choices.clone() });
            }
        }
        out.insert(name.clone(), value);
    }
    Ok(out)
}

/// Typed accessors over validated parameters.
pub trait ParamsExt {
    fn f64_or(&self, key: &str, default: f64) -> f64;
    fn usize_or(&self, key: &str, default: usize) -> usize;
    fn str_opt(&self, key: &str) -> Option<&str>;
    fn string_list(&self, key: &str) -> Vec<String>;
    fn index_list(&self, key: &str) -> Vec<usize>;
}

impl ParamsExt for Params {
    fn f64_or(&self, key: &str, default: f64) -> f64 {
        self.get(key).and_then(Value::as_f64).unwrap_or(default)
    }

    fn usize_or(&self, key: &str, default: usize) -> usize {
        self.get(key).and_then(Value::as_u64).map(|v| v as usize).unwrap_or(default)
    }

    fn str_opt(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }

    fn string_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default()
    }

    fn index_list(&self, key: &str) -> Vec<usize> {
        self.get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_u64().map(|x| x as usize)).collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> BTreeMap<String, ParamSpec> {
        let mut s = BTreeMap::new();
        s.insert("k".into(), ParamSpec::new(ParamType::Int).default_value(5).bounds(Some(1.0), Some(50.0)));
        s.insert("strategy".into(), ParamSpec::new(ParamType::String).default_value("mean").choices(&["mean", "mode", "knn"]));
        s.insert("column".into(), ParamSpec::new(ParamType::String).required());
        s
    }

    #[test]
    fn defaults_filled() {
        let p = validate_params(&schema(), &Params::from([("column".into(), json!("x"))])).unwrap();
        assert_eq!(p["k"], json!(5));
        assert_eq!(p["strategy"], json!("mean"));
    }

    #[test]
    fn violations() {
        let s = schema();
        let base = |k: &str, v: Value| Params::from([("column".into(), json!("x")), (k.to_string(), v)]);
        assert!(matches!(validate_params(&s, &base("k", json!(0))), Err(ParamError::OutOfBounds { .. })));
        assert!(matches!(validate_params(&s, &base("k", json!("a"))), Err(ParamError::WrongType { .. })));
        assert!(matches!(validate_params(&s, &base("strategy", json!("median"))), Err(ParamError::NotAChoice { .. })));
        assert!(matches!(validate_params(&s, &base("zzz", json!(1))), Err(ParamError::Unknown(_))));
        assert_eq!(validate_params(&s, &Params::new()), Err(ParamError::MissingRequired("column".into())));
    }
}
