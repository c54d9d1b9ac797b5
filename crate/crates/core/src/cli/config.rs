//! Line-based configuration: `[section]` headers and `key = value` lines.
//!
//! ```text
//! # comment
//! [problem]
//! kind = hodge_t
//! k = 1
//! lambda = 1
//!
//! [mesh]
//! generator = square
//! b = pi
//! m = 16
//!
//! [coefficients]
//! A[12][12] = "1 + 0.5*sin(x1)*sin(x2)"
//!
//! [data]
//! f[1] = "cos(x1)*sin(2*x2)"
//! f[2] = "sin(x1)*cos(x2)"
//! ```
//!
//! Values may be bare or double-quoted. Numeric values accept constant expressions
//! such as `pi/2`. Form components are indexed by increasing multi-indices written
//! as digit strings (`12` is `e¹∧e²`, the empty index `[]` is the 0-form component);
//! matrix entries take a row and a column index and default to the identity.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::expr::{eval_constant, parse_expression, Expression};
use crate::coefficients::OperatorField;
use crate::drivers::{ProblemKind, ProblemSpec};
use crate::error::{Error, Result};
use crate::exterior::{binomial, multiindex_basis};
use crate::fields::AnalyticField;
use crate::galerkin::BcKind;
use crate::mesh::{generate_mesh, load_mesh, MeshSpec, SimplicialMesh};
use crate::verification::{catalog_case, Domain, ManufacturedCase};

const SECTIONS: [&str; 6] = ["problem", "mesh", "coefficients", "data", "solver", "output"];
const PROBLEM_KEYS: [&str; 6] = ["kind", "case", "n", "k", "lambda", "bc"];
const MESH_KEYS: [&str; 8] = ["generator", "file", "a", "b", "r", "r0", "r1", "m"];
const SOLVER_KEYS: [&str; 2] = ["count", "levels"];
const OUTPUT_KEYS: [&str; 1] = ["dir"];
const COEFF_NAMES: [&str; 2] = ["A", "B"];
const DATA_NAMES: [&str; 7] = ["f", "F", "g", "omega0", "p0", "exact", "exact_pressure"];

/// Parsed configuration, kept as validated raw strings per section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn cfg_err<T>(line: usize, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Config(format!("line {line}: {msg}")))
}

/// Split `name[I][J]` into the name and its bracketed indices.
fn split_indexed(key: &str) -> Option<(&str, Vec<&str>)> {
    let open = key.find('[')?;
    let (name, mut rest) = key.split_at(open);
    let mut idx = Vec::new();
    while !rest.is_empty() {
        let inner = rest.strip_prefix('[')?;
        let close = inner.find(']')?;
        idx.push(&inner[..close]);
        rest = &inner[close + 1..];
    }
    Some((name, idx))
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str, line: usize) -> Result<String> {
    let v = v.trim();
    if let Some(inner) = v.strip_prefix('"') {
        match inner.strip_suffix('"') {
            Some(s) if !s.contains('"') => Ok(s.to_string()),
            _ => cfg_err(line, "unterminated or nested quotes"),
        }
    } else if v.contains('"') {
        cfg_err(line, "stray quote in value")
    } else {
        Ok(v.to_string())
    }
}

fn check_key(section: &str, key: &str, line: usize) -> Result<()> {
    let plain = |keys: &[&str]| -> Result<()> {
        if keys.contains(&key) {
            Ok(())
        } else {
            cfg_err(line, format!("unknown key `{key}` in [{section}] (allowed: {})", keys.join(", ")))
        }
    };
    match section {
        "problem" => plain(&PROBLEM_KEYS),
        "mesh" => plain(&MESH_KEYS),
        "solver" => plain(&SOLVER_KEYS),
        "output" => plain(&OUTPUT_KEYS),
        "coefficients" => match split_indexed(key) {
            Some((name, idx)) if COEFF_NAMES.contains(&name) && idx.len() == 2 && idx.iter().all(|i| valid_index(i)) => Ok(()),
            _ => cfg_err(line, format!("unknown key `{key}` in [coefficients] (expected A[I][J] or B[I][J])")),
        },
        "data" => match split_indexed(key) {
            Some((name, idx)) if DATA_NAMES.contains(&name) && idx.len() == 1 && valid_index(idx[0]) => Ok(()),
            _ => cfg_err(line, format!("unknown key `{key}` in [data] (expected one of {}, indexed as name[I])", DATA_NAMES.join(", "))),
        },
        _ => unreachable!("sections are checked first"),
    }
}

fn valid_index(i: &str) -> bool {
    i.chars().all(|c| c.is_ascii_digit() && c != '0') && i.as_bytes().windows(2).all(|w| w[0] < w[1])
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(inner) = body.strip_prefix('[') {
                let Some(name) = inner.strip_suffix(']') else {
                    return cfg_err(line, format!("malformed section header `{body}`"));
                };
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return cfg_err(line, format!("unknown section [{name}] (allowed: {})", SECTIONS.join(", ")));
                }
                cfg.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return cfg_err(line, format!("expected `key = value`, got `{body}`"));
            };
            let key = k.trim();
            let Some(sec) = &section else {
                return cfg_err(line, format!("key `{key}` appears before any [section]"));
            };
            check_key(sec, key, line)?;
            let value = unquote(v, line)?;
            if value.is_empty() {
                return cfg_err(line, format!("empty value for `{key}`"));
            }
            let entries = cfg.sections.entry(sec.clone()).or_default();
            if entries.insert(key.to_string(), value).is_some() {
                return cfg_err(line, format!("duplicate key `{key}` in [{sec}]"));
            }
        }
        cfg.check_values()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Config::parse(&text)
    }

    /// Typed checks that need no mesh.
    fn check_values(&self) -> Result<()> {
        if let Some(kind) = self.get("problem", "kind") {
            kind.parse::<ProblemKind>()?;
        }
        if let Some(case) = self.get("problem", "case") {
            if catalog_case(case).is_none() {
                return Err(Error::Config(format!("unknown manufactured case `{case}`")));
            }
        }
        if let Some(bc) = self.get("problem", "bc") {
            parse_bc(bc)?;
        }
        for key in ["n", "k"] {
            self.integer("problem", key)?;
        }
        self.number("problem", "lambda")?;
        for key in ["a", "b", "r", "r0", "r1"] {
            self.number("mesh", key)?;
        }
        self.integer("mesh", "m")?;
        if let Some(g) = self.get("mesh", "generator") {
            if !["square", "disk", "annulus", "cube"].contains(&g) {
                return Err(Error::Config(format!("unknown mesh generator `{g}` (square, disk, annulus, cube)")));
            }
        }
        for key in SOLVER_KEYS {
            self.integer("solver", key)?;
        }
        for sec in ["coefficients", "data"] {
            for (k, v) in self.section(sec) {
                parse_expression(v).map_err(|e| contextualize(e, k))?;
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|s| s.as_str())
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections.get(section).into_iter().flat_map(|s| s.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Set or replace a value, validating the key.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        if !SECTIONS.contains(&section) {
            return Err(Error::Config(format!("unknown section [{section}]")));
        }
        check_key(section, key, 0)?;
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.to_string());
        self.check_values()
    }

    pub fn number(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => eval_constant(v)
                .map(Some)
                .map_err(|e| Error::Config(format!("[{section}] {key} = {v}: expected a number ({e})"))),
        }
    }

    pub fn integer(&self, section: &str, key: &str) -> Result<Option<i64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.trim().parse::<i64>().map(Some).map_err(|_| Error::Config(format!("[{section}] {key} = {v}: expected an integer"))),
        }
    }

    fn positive(&self, section: &str, key: &str) -> Result<Option<usize>> {
        match self.integer(section, key)? {
            Some(v) if v <= 0 => Err(Error::Config(format!("[{section}] {key} must be positive"))),
            other => Ok(other.map(|v| v as usize)),
        }
    }

    pub fn kind(&self) -> Result<Option<ProblemKind>> {
        self.get("problem", "kind").map(str::parse).transpose()
    }

    pub fn case(&self) -> Option<ManufacturedCase> {
        self.get("problem", "case").and_then(catalog_case)
    }

    pub fn bc(&self) -> Result<BcKind> {
        self.get("problem", "bc").map_or(Ok(BcKind::Tangential), parse_bc)
    }

    pub fn count(&self) -> Result<Option<usize>> {
        self.positive("solver", "count")
    }

    pub fn levels(&self) -> Result<Option<usize>> {
        self.positive("solver", "levels")
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.get("output", "dir")
    }

    /// Canonical text; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sec in SECTIONS {
            if let Some(entries) = self.sections.get(sec) {
                out.push_str(&format!("[{sec}]\n"));
                for (k, v) in entries {
                    out.push_str(&format!("{k} = \"{v}\"\n"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Section → key → value map for reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(&self.sections).expect("string maps serialize")
    }

    pub fn from_echo(v: &serde_json::Value) -> Result<Config> {
        let sections: BTreeMap<String, BTreeMap<String, String>> =
            serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("malformed spec echo: {e}")))?;
        let mut text = String::new();
        for (s, entries) in &sections {
            text.push_str(&format!("[{s}]\n"));
            for (k, v) in entries {
                text.push_str(&format!("{k} = \"{v}\"\n"));
            }
        }
        Config::parse(&text)
    }

    /// Mesh from `override_path`, `[mesh] file`, the generator, or a manufactured case.
    pub fn mesh(&self, override_path: Option<&Path>) -> Result<(Arc<SimplicialMesh>, Option<Domain>)> {
        if let Some(p) = override_path {
            return Ok((Arc::new(load_mesh(p)?), None));
        }
        if let Some(file) = self.get("mesh", "file") {
            return Ok((Arc::new(load_mesh(Path::new(file))?), None));
        }
        let spec = self.mesh_spec(None)?;
        Ok((Arc::new(generate_mesh(&spec)?), Some(Domain::of(&spec))))
    }

    /// Generator description, with `m` replaced when given.
    pub fn mesh_spec(&self, m_override: Option<usize>) -> Result<MeshSpec> {
        let num = |k: &str, d: f64| -> Result<f64> { Ok(self.number("mesh", k)?.unwrap_or(d)) };
        let m = match m_override {
            Some(m) => m,
            None => self.positive("mesh", "m")?.unwrap_or(16),
        };
        if let Some(case) = self.case() {
            if self.get("mesh", "generator").is_some() {
                return Err(Error::Config("[mesh] generator conflicts with [problem] case, which fixes the domain".into()));
            }
            return case.domain.mesh_spec(m).ok_or_else(|| Error::Config("case has no meshable domain".into()));
        }
        let generator = self.get("mesh", "generator").ok_or_else(|| Error::Config("no mesh: give [mesh] generator or file, or --mesh".into()))?;
        Ok(match generator {
            "square" => MeshSpec::Square { a: num("a", 0.0)?, b: num("b", std::f64::consts::PI)?, m },
            "disk" => MeshSpec::Disk { r: num("r", 1.0)?, m },
            "annulus" => MeshSpec::Annulus { r0: num("r0", 0.5)?, r1: num("r1", 1.0)?, m },
            "cube" => MeshSpec::Cube { a: num("a", 1.0)?, m },
            other => return Err(Error::Config(format!("unknown mesh generator `{other}`"))),
        })
    }

    /// Degree `k`, required unless a manufactured case fixes it.
    pub fn degree(&self) -> Result<isize> {
        match (self.integer("problem", "k")?, self.case()) {
            (Some(k), _) => Ok(k as isize),
            (None, Some(c)) => Ok(c.k),
            (None, None) => Err(Error::Config("[problem] k is required".into())),
        }
    }

    fn check_dimension(&self, n: usize) -> Result<()> {
        match self.integer("problem", "n")? {
            Some(v) if v as usize != n => Err(Error::Config(format!("[problem] n = {v} but the mesh has dimension {n}"))),
            _ => Ok(()),
        }
    }

    /// Operator `A` or `B` of the given degree; identity unless entries are given.
    pub fn operator(&self, name: &str, n: usize, degree: isize, mesh: &SimplicialMesh) -> Result<OperatorField> {
        let basis: Vec<String> = multiindex_basis(n, degree).iter().map(|m| m.to_string()).collect();
        let d = binomial(n, degree);
        let mut entries: Vec<(usize, usize, Expression)> = Vec::new();
        for (key, v) in self.section("coefficients") {
            let Some((nm, idx)) = split_indexed(key) else { continue };
            if nm != name {
                continue;
            }
            let pos = |i: &str| {
                basis.iter().position(|b| b == i).ok_or_else(|| {
                    Error::Config(format!("{key}: index `{i}` is not a basis {degree}-form in dimension {n} (basis: {})", basis.join(" ")))
                })
            };
            let expr = parse_expression(v).map_err(|e| contextualize(e, key))?;
            validate_on_mesh(&expr, key, mesh)?;
            entries.push((pos(idx[0])?, pos(idx[1])?, expr));
        }
        if entries.is_empty() {
            return Ok(OperatorField::identity(n, degree));
        }
        if entries.iter().all(|e| e.2.is_constant()) {
            let mut m = DMatrix::identity(d, d);
            for (i, j, e) in &entries {
                m[(*i, *j)] = e.eval(&[])?;
            }
            return OperatorField::constant(n, degree, degree, m);
        }
        Ok(OperatorField::smooth(n, degree, degree, move |x| {
            let mut m = DMatrix::identity(d, d);
            for (i, j, e) in &entries {
                m[(*i, *j)] = e.eval_or_nan(x);
            }
            m
        }))
    }

    /// Data field `name` of the given degree, `None` when no component is given.
    pub fn field(&self, name: &str, n: usize, degree: isize, mesh: &SimplicialMesh) -> Result<Option<AnalyticField>> {
        let basis: Vec<String> = multiindex_basis(n, degree).iter().map(|m| m.to_string()).collect();
        let mut comps: Vec<(usize, Expression)> = Vec::new();
        let mut label = Vec::new();
        for (key, v) in self.section("data") {
            let Some((nm, idx)) = split_indexed(key) else { continue };
            if nm != name {
                continue;
            }
            let pos = basis.iter().position(|b| b == idx[0]).ok_or_else(|| {
                Error::Config(format!("{key}: `{}` is not a basis {degree}-form in dimension {n} (basis: [{}])", idx[0], basis.join("] [")))
            })?;
            let expr = parse_expression(v).map_err(|e| contextualize(e, key))?;
            validate_on_mesh(&expr, key, mesh)?;
            label.push(format!("{key} = {v}"));
            comps.push((pos, expr));
        }
        if comps.is_empty() {
            return Ok(None);
        }
        let d = basis.len();
        Ok(Some(AnalyticField::new(n, degree, label.join("; "), move |x| {
            let mut out = vec![0.0; d];
            for (i, e) in &comps {
                out[*i] = e.eval_or_nan(x);
            }
            out
        })))
    }

    /// Problem specification for the drivers.
    pub fn problem_spec(&self, override_mesh: Option<&Path>, default_kind: Option<ProblemKind>) -> Result<ProblemSpec> {
        if let Some(case) = self.case() {
            let has_data = self.section("data").next().is_some() || self.section("coefficients").next().is_some();
            if has_data {
                return Err(Error::Config("[problem] case supplies data and coefficients; remove [data] and [coefficients]".into()));
            }
            if let Some(kind) = self.kind()? {
                if kind != case.kind {
                    return Err(Error::Config(format!("case `{}` is a {} problem, not {kind}", case.name, case.kind)));
                }
            }
            let (mesh, _) = match override_mesh {
                Some(p) => (Arc::new(load_mesh(p)?), None::<Domain>),
                None => (Arc::new(generate_mesh(&self.mesh_spec(None)?)?), None),
            };
            self.check_dimension(mesh.dim())?;
            let mut spec = case.spec(mesh);
            if let Some(l) = self.number("problem", "lambda")? {
                spec.lambda = l;
            }
            return Ok(spec);
        }
        let kind = self.kind()?.or(default_kind).ok_or_else(|| Error::Config("[problem] kind is required".into()))?;
        let (mesh, _) = self.mesh(override_mesh)?;
        let n = mesh.dim();
        self.check_dimension(n)?;
        let k = self.degree()?;
        if k < 0 || k as usize > n {
            return Err(Error::Config(format!("k = {k} is out of range for dimension {n}")));
        }
        let mut spec = ProblemSpec::new(kind, mesh.clone(), k);
        spec.lambda = self.number("problem", "lambda")?.unwrap_or(0.0);
        spec.a = self.operator("A", n, spec.a_degree(), &mesh)?;
        spec.b = self.operator("B", n, k, &mesh)?;
        spec.f = self.field("f", n, spec.f_degree(), &mesh)?;
        spec.big_f = self.field("F", n, k + 1, &mesh)?;
        spec.g = self.field("g", n, k - 1, &mesh)?;
        spec.omega0 = self.field("omega0", n, k, &mesh)?;
        spec.p0 = self.field("p0", n, k - 1, &mesh)?;
        spec.exact = self.field("exact", n, k, &mesh)?;
        spec.exact_pressure = self.field("exact_pressure", n, k - 1, &mesh)?;
        Ok(spec)
    }
}

pub fn parse_bc(s: &str) -> Result<BcKind> {
    match s {
        "tangential" => Ok(BcKind::Tangential),
        "normal" => Ok(BcKind::Normal),
        other => Err(Error::Config(format!("unknown boundary condition `{other}` (tangential, normal)"))),
    }
}

fn contextualize(e: Error, key: &str) -> Error {
    match e {
        Error::Expression { start, end, msg } => Error::Expression { start, end, msg: format!("{key}: {msg}") },
        other => other,
    }
}

/// Evaluate at every vertex and cell centroid so that evaluation errors surface with spans.
fn validate_on_mesh(e: &Expression, key: &str, mesh: &SimplicialMesh) -> Result<()> {
    let n = mesh.dim();
    let bary = vec![1.0 / (n + 1) as f64; n + 1];
    let vertices = (0..mesh.num_vertices()).map(|v| mesh.vertex(v).to_vec());
    let centroids = (0..mesh.num_cells()).map(|c| mesh.cell_point(c, &bary));
    for x in vertices.chain(centroids) {
        match e.eval(&x) {
            Ok(v) if v.is_finite() => {}
            Ok(v) => {
                return Err(Error::Expression { start: 0, end: e.source().len(), msg: format!("{key}: value {v} at x = {x:?}") });
            }
            Err(Error::Expression { start, end, msg }) => {
                return Err(Error::Expression { start, end, msg: format!("{key}: {msg} at x = {x:?}") });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# a Hodge problem
[problem]
kind = hodge_t
k = 1
lambda = 1   # shift

[mesh]
generator = square
b = "pi"
m = 4

[coefficients]
A[12][12] = "1 + 0.5*sin(x1)*sin(x2)"

[data]
f[1] = "cos(x1)"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = Config::parse(SAMPLE).unwrap();
        assert_eq!(cfg.get("problem", "kind"), Some("hodge_t"));
        assert_eq!(cfg.number("mesh", "b").unwrap(), Some(std::f64::consts::PI));
        assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(Config::from_echo(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn builds_a_spec() {
        let spec = Config::parse(SAMPLE).unwrap().problem_spec(None, None).unwrap();
        assert_eq!(spec.kind, ProblemKind::HodgeT);
        assert!(!spec.a.is_constant());
        assert!(spec.b.is_identity());
        assert_eq!(spec.f.as_ref().unwrap().eval(&[0.0, 0.0]), vec![1.0, 0.0]);
        assert!(spec.g.is_none());
    }

    #[test]
    fn rejects_unknown_and_malformed_input() {
        let bad = [
            "[problem]\nkindd = hodge_t",
            "[problems]\nkind = hodge_t",
            "kind = hodge_t",
            "[problem]\nkind = hodge",
            "[coefficients]\nC[1][1] = 1",
            "[coefficients]\nA[1] = 1",
            "[data]\nf[21] = 1",
            "[data]\nh[1] = 1",
            "[problem]\nk = 1\nk = 2",
            "[problem]\nk = one",
            "[problem]\nlambda = \"1",
            "[mesh]\ngenerator = torus",
        ];
        for text in bad {
            assert!(matches!(Config::parse(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(Config::parse("[data]\nf[1] = \"x1 +\""), Err(Error::Expression { start: 4, .. })));
    }

    #[test]
    fn index_outside_the_basis_is_reported() {
        let cfg = Config::parse("[problem]\nkind = hodge_t\nk = 1\n[mesh]\ngenerator = square\nm = 2\n[data]\nf[3] = 1").unwrap();
        assert!(matches!(cfg.problem_spec(None, None), Err(Error::Config(_))));
    }

    #[test]
    fn evaluation_errors_surface_at_build_time() {
        let cfg = Config::parse("[problem]\nkind = hodge_t\nk = 1\n[mesh]\ngenerator = square\na = -1\nb = 1\nm = 2\n[data]\nf[1] = \"sqrt(x1)\"").unwrap();
        match cfg.problem_spec(None, None) {
            Err(Error::Expression { start, end, msg }) => {
                assert_eq!((start, end), (0, 8));
                assert!(msg.contains("f[1]"));
            }
            other => panic!("{other:?}"),
        }
    }
}
