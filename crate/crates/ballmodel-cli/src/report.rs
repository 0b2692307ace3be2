//! Machine-readable reports. All maps are ordered, so identical runs give
//! byte-identical output.

use std::collections::BTreeMap;

use ballmodel::Matrix;
use serde::Serialize;
use serde_json::Value;

use crate::io::matrix_json;

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub dims: BTreeMap<String, usize>,
    pub values: BTreeMap<String, Value>,
    pub witnesses: BTreeMap<String, Value>,
    pub passed: bool,
    /// Names the failed check when `passed` is false.
    pub status: String,
}

impl Report {
    pub fn new(command: &str, rank_tol: f64, residual_tol: f64) -> Self {
        let mut r = Report {
            command: command.to_string(),
            passed: true,
            status: "ok".into(),
            ..Default::default()
        };
        r.tolerances.insert("rank".into(), rank_tol);
        r.tolerances.insert("residual".into(), residual_tol);
        r
    }

    pub fn input(&mut self, key: &str, v: impl Serialize) {
        self.inputs.insert(key.into(), serde_json::to_value(v).expect("serializable input"));
    }

    pub fn residual(&mut self, key: &str, v: f64) {
        self.residuals.insert(key.into(), v);
    }

    pub fn flag(&mut self, key: &str, v: bool) {
        self.flags.insert(key.into(), v);
    }

    pub fn dim(&mut self, key: &str, v: usize) {
        self.dims.insert(key.into(), v);
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).expect("serializable value"));
    }

    pub fn matrix(&mut self, key: &str, m: &Matrix) {
        self.values.insert(key.into(), matrix_json(m));
    }

    pub fn witness(&mut self, key: &str, m: &Matrix) {
        self.witnesses.insert(key.into(), matrix_json(m));
    }

    /// Records a failure; the first one stays in `status`.
    pub fn fail(&mut self, why: impl Into<String>) {
        if self.passed {
            self.status = why.into();
        }
        self.passed = false;
    }

    /// Fails unless `residuals[key] < tol`.
    pub fn require_below(&mut self, key: &str, tol: f64) {
        let v = self.residuals[key];
        if !(v < tol) {
            self.fail(format!("residual {key} = {v:e} is not below {tol:e}"));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `path: value` lines, matrices and arrays on one line each.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        walk("", &v, &mut out);
        out
    }
}

fn is_matrix(m: &serde_json::Map<String, Value>) -> bool {
    m.len() == 3 && m.contains_key("rows") && m.contains_key("cols") && m.contains_key("data")
}

fn walk(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) if !is_matrix(m) && !m.is_empty() => {
            for (k, child) in m {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                walk(&path, child, out);
            }
        }
        Value::Object(m) if is_matrix(m) => {
            out.push_str(&format!("{prefix}: {}\n", render_matrix(m)));
        }
        _ => out.push_str(&format!("{prefix}: {v}\n")),
    }
}

fn render_matrix(m: &serde_json::Map<String, Value>) -> String {
    let cols = m["cols"].as_u64().unwrap_or(0) as usize;
    let data = m["data"].as_array().cloned().unwrap_or_default();
    let entries: Vec<String> = data
        .iter()
        .map(|e| {
            let re = e[0].as_f64().unwrap_or(f64::NAN);
            let im = e[1].as_f64().unwrap_or(f64::NAN);
            if im == 0.0 {
                format!("{re}")
            } else {
                format!("{re}{:+}i", im)
            }
        })
        .collect();
    if cols == 0 || entries.is_empty() {
        return format!("[] ({}x{})", m["rows"], m["cols"]);
    }
    let rows: Vec<String> = entries.chunks(cols).map(|r| format!("[{}]", r.join(", "))).collect();
    format!("[{}]", rows.join(", "))
}
