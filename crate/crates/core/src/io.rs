//! JSON instance files with a canonical, byte-stable layout.
//!
//! Canonical output sorts object keys, indents by two spaces, writes
//! integers as integers and every float in scientific notation with 17
//! significant digits, which round-trips `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::generator::GeneratorSettings;
use crate::liquidation::LiquidationParams;
use crate::qcqp::QcqpInstance;

pub const SCHEMA_VERSION: &str = "1";

/// Generator inputs that reproduce an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub settings: GeneratorSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liquidation: Option<LiquidationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general: Option<QcqpInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl InstanceFile {
    pub fn from_liquidation(p: LiquidationParams, provenance: Option<Provenance>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            liquidation: Some(p),
            general: None,
            provenance,
        }
    }

    pub fn from_general(inst: QcqpInstance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            liquidation: None,
            general: Some(inst),
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {:?} (expected {SCHEMA_VERSION:?})",
                self.schema_version
            )));
        }
        match (&self.liquidation, &self.general) {
            (Some(p), None) => p.validate(),
            (None, Some(g)) => g.validate(),
            (Some(_), Some(_)) => Err(Error::Parse(
                "instance file has both `liquidation` and `general`; exactly one is allowed".into(),
            )),
            (None, None) => Err(Error::Parse(
                "instance file needs exactly one of `liquidation` or `general`".into(),
            )),
        }
    }

    /// The quadratic program described by the file.
    pub fn qcqp(&self) -> Result<QcqpInstance> {
        match (&self.liquidation, &self.general) {
            (Some(p), _) => crate::liquidation::build_qcqp(p),
            (None, Some(g)) => Ok(g.clone()),
            (None, None) => Err(Error::Parse("instance file carries no instance".into())),
        }
    }
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if let Some(i) = n.as_i64() {
        let _ = write!(out, "{i}");
    } else if let Some(u) = n.as_u64() {
        let _ = write!(out, "{u}");
    } else {
        let f = n.as_f64().unwrap_or(f64::NAN);
        let _ = write!(out, "{f:.16e}");
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, k: usize| out.extend(std::iter::repeat(' ').take(k));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, item, indent + 2);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], indent + 2);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Serializes any value in the canonical layout, with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// Parses and validates an instance file. Errors name the offending field
/// together with its line and column.
pub fn parse_instance(text: &str) -> Result<InstanceFile> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.validate()?;
    Ok(file)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<InstanceFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_instance(path: impl AsRef<Path>, file: &InstanceFile) -> Result<()> {
    file.validate()?;
    std::fs::write(path, to_canonical_json(file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_instance, GeneratorSettings};

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_canonical_json(&serde_json::json!({"b": 0.1, "a": 3})).unwrap();
        assert_eq!(s, "{\n  \"a\": 3,\n  \"b\": 1.0000000000000001e-1\n}\n");
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let settings = GeneratorSettings::new(2, 0.3, 0.8, 18.0, 18.0);
        let p = generate_instance(11, &settings).unwrap();
        let file = InstanceFile::from_liquidation(p, Some(Provenance { seed: 11, settings }));
        let text = to_canonical_json(&file).unwrap();
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(to_canonical_json(&back).unwrap(), text);
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"schema_version": "1", "liquidation": {"m": 1, "gamma": [1.0], "p0": [1.0],
            "x0": [1.0], "e0": 1.0, "l0": 30.0, "rho1": 18.0, "rho2": 18.0, "pi": 0.3, "delta": 0.0}}"#;
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("lambda"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn exactly_one_payload() {
        assert!(parse_instance(r#"{"schema_version": "1"}"#).is_err());
    }
}
