//! JSON reports with 17 significant digits per float.

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::exterior::codifferential_sign;
use crate::spectral::SIGN_CONVENTION;
use crate::verification::operator_sign;

/// Writes every finite float as `{:.16e}`; non-finite values are already mapped to `null`
/// by the serializer.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serialize with the report float format.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value.serialize(&mut ser).expect("report values serialize");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// Convert to a `Value`, mapping non-finite floats to `null`.
pub fn value_of<T: Serialize + ?Sized>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

/// Wall-clock phases, reported in seconds.
#[derive(Debug)]
pub struct Timings {
    start: Instant,
    last: Instant,
    phases: Vec<(String, f64)>,
}

impl Default for Timings {
    fn default() -> Self {
        let now = Instant::now();
        Timings { start: now, last: now, phases: vec![] }
    }
}

impl Timings {
    pub fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases.push((phase.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    fn to_value(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.phases {
            m.insert(k.clone(), json!(v));
        }
        m.insert("total".into(), json!(self.start.elapsed().as_secs_f64()));
        Value::Object(m)
    }
}

/// Report under construction. Required keys are always present.
#[derive(Debug)]
pub struct Report {
    pub command: String,
    pub spec_echo: Value,
    pub residuals: BTreeMap<String, f64>,
    pub boundary_residuals: Value,
    pub compatibility: Value,
    pub spectrum: Option<Value>,
    pub gaffney: Option<Value>,
    pub nullspace_dim: Option<usize>,
    /// Command-specific payload (errors, mesh counts, convergence tables).
    pub extra: Map<String, Value>,
    pub error: Option<Value>,
    pub timings: Timings,
}

impl Report {
    pub fn new(command: &str, spec_echo: Value) -> Self {
        Report {
            command: command.to_string(),
            spec_echo,
            residuals: BTreeMap::new(),
            boundary_residuals: json!({}),
            compatibility: json!({ "checks": [] }),
            spectrum: None,
            gaffney: None,
            nullspace_dim: None,
            extra: Map::new(),
            error: None,
            timings: Timings::default(),
        }
    }

    pub fn set_error(&mut self, e: &Error) {
        self.error = Some(json!({ "code": e.code(), "message": e.to_string(), "exit_code": e.exit_code() }));
    }

    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().and_then(|e| e["exit_code"].as_i64()).map_or(0, |c| c as i32)
    }

    pub fn to_value(&self) -> Value {
        let n = self.spec_echo.pointer("/dimension").and_then(Value::as_u64).unwrap_or(2) as usize;
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("spec_echo".into(), self.spec_echo.clone());
        m.insert("sign_convention".into(), sign_convention(n));
        m.insert("residuals".into(), value_of(&self.residuals));
        m.insert("boundary_residuals".into(), self.boundary_residuals.clone());
        m.insert("compatibility".into(), self.compatibility.clone());
        if let Some(s) = &self.spectrum {
            m.insert("spectrum".into(), s.clone());
        }
        if let Some(g) = &self.gaffney {
            m.insert("gaffney".into(), g.clone());
        }
        if let Some(d) = self.nullspace_dim {
            m.insert("nullspace_dim".into(), json!(d));
        }
        for (k, v) in &self.extra {
            m.insert(k.clone(), v.clone());
        }
        if let Some(e) = &self.error {
            m.insert("error".into(), e.clone());
        }
        m.insert("timings".into(), self.timings.to_value());
        Value::Object(m)
    }

    pub fn to_json(&self) -> String {
        to_json(&self.to_value())
    }
}

/// Conventions a reader needs to interpret signs in the report.
pub fn sign_convention(n: usize) -> Value {
    let c = codifferential_sign(n);
    json!({
        "eigenvalues": SIGN_CONVENTION,
        "codifferential": format!("delta = {c:+} * sum_p e_p interior d/dx_p in dimension {n}"),
        "codifferential_factor": c,
        "operator_sign": operator_sign(n),
    })
}

/// The report without timings, for reproducibility comparisons.
pub fn strip_timings(v: &Value) -> Value {
    let mut v = v.clone();
    if let Value::Object(m) = &mut v {
        m.remove("timings");
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_17_digits_and_nonfinite_is_null() {
        let v = json!({ "a": 0.1, "b": 1.0 / 3.0, "c": 7 });
        let s = to_json(&v);
        assert_eq!(s, r#"{"a":1.0000000000000001e-1,"b":3.3333333333333331e-1,"c":7}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"].as_f64().unwrap(), 1.0 / 3.0);
        let nan: BTreeMap<&str, f64> = [("x", f64::NAN), ("y", f64::INFINITY)].into_iter().collect();
        assert_eq!(to_json(&nan), r#"{"x":null,"y":null}"#);
    }

    #[test]
    fn required_keys_are_present() {
        let mut r = Report::new("solve", json!({}));
        r.set_error(&Error::DataIncompatible("x".into()));
        let v = r.to_value();
        for key in ["spec_echo", "sign_convention", "residuals", "boundary_residuals", "compatibility", "timings"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(r.exit_code(), 2);
        assert!(strip_timings(&v).get("timings").is_none());
    }
}
