//! JSON input files and matrix (de)serialization.
//!
//! Matrices are `{rows, cols, data}` with `data` a row-major array of
//! `[re, im]` pairs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ballmodel::{Colligation, Matrix, RowContraction, C64};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Bad input: unreadable or malformed file, bad flag value. Exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub type InputResult<T> = Result<T, InputError>;

fn bad(msg: impl Into<String>) -> InputError {
    InputError(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// `at` names the location for error messages, e.g. `A[2]`.
    pub fn to_matrix(&self, at: &str) -> InputResult<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(bad(format!(
                "{at}: data has {} entries, expected rows*cols = {}",
                self.data.len(),
                self.rows * self.cols
            )));
        }
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (idx, [r, i]) in self.data.iter().enumerate() {
            let (row, col) = (idx / self.cols.max(1), idx % self.cols.max(1));
            if !r.is_finite() || !i.is_finite() {
                return Err(bad(format!("{at}: entry ({row}, {col}) is not finite")));
            }
            m[(row, col)] = C64::new(*r, *i);
        }
        Ok(m)
    }

    fn expect_shape(&self, at: &str, rows: usize, cols: usize) -> InputResult<Matrix> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(bad(format!(
                "{at}: shape {}x{}, expected {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        self.to_matrix(at)
    }
}

pub fn matrix_json(m: &Matrix) -> Value {
    serde_json::to_value(MatrixFile::from_matrix(m)).expect("plain data serializes")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColligationFile {
    pub d: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "A")]
    pub a: Vec<MatrixFile>,
    #[serde(rename = "B")]
    pub b: Vec<MatrixFile>,
    #[serde(rename = "C")]
    pub c: MatrixFile,
    #[serde(rename = "D")]
    pub dmat: MatrixFile,
}

impl ColligationFile {
    pub fn from_colligation(u: &Colligation) -> Self {
        ColligationFile {
            d: u.d(),
            n: u.n(),
            p: u.p(),
            q: u.q(),
            a: u.a_blocks().iter().map(MatrixFile::from_matrix).collect(),
            b: u.b_blocks().iter().map(MatrixFile::from_matrix).collect(),
            c: MatrixFile::from_matrix(u.c()),
            dmat: MatrixFile::from_matrix(u.dmat()),
        }
    }

    pub fn to_colligation(&self, path: &str) -> InputResult<Colligation> {
        let (d, n, p, q) = (self.d, self.n, self.p, self.q);
        if d == 0 {
            return Err(bad(format!("{path}: d must be at least 1")));
        }
        if self.a.len() != d || self.b.len() != d {
            return Err(bad(format!(
                "{path}: expected {d} blocks in A and B, found {} and {}",
                self.a.len(),
                self.b.len()
            )));
        }
        let a = (self.a.iter().enumerate())
            .map(|(k, m)| m.expect_shape(&format!("{path}: A[{k}]"), n, n))
            .collect::<InputResult<Vec<_>>>()?;
        let b = (self.b.iter().enumerate())
            .map(|(k, m)| m.expect_shape(&format!("{path}: B[{k}]"), n, p))
            .collect::<InputResult<Vec<_>>>()?;
        let c = self.c.expect_shape(&format!("{path}: C"), q, n)?;
        let dm = self.dmat.expect_shape(&format!("{path}: D"), q, p)?;
        Colligation::new(a, b, c, dm).map_err(|e| bad(format!("{path}: {e}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowContractionFile {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: Vec<MatrixFile>,
}

impl RowContractionFile {
    pub fn from_row(t: &RowContraction) -> Self {
        RowContractionFile {
            d: t.d(),
            n: t.n(),
            t: t.blocks().iter().map(MatrixFile::from_matrix).collect(),
        }
    }

    pub fn to_row(&self, path: &str, tol: f64) -> InputResult<RowContraction> {
        if self.d == 0 || self.t.len() != self.d {
            return Err(bad(format!(
                "{path}: expected d = {} >= 1 blocks in T, found {}",
                self.d,
                self.t.len()
            )));
        }
        let blocks = (self.t.iter().enumerate())
            .map(|(k, m)| m.expect_shape(&format!("{path}: T[{k}]"), self.n, self.n))
            .collect::<InputResult<Vec<_>>>()?;
        RowContraction::new(blocks, tol).map_err(|e| bad(format!("{path}: {e}")))
    }
}

/// Reads and parses a JSON file; parse errors carry line and column.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> InputResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

pub fn parse_complex(s: &str) -> InputResult<C64> {
    let z = C64::from_str(s.trim()).map_err(|_| bad(format!("cannot parse {s:?} as a complex number")))?;
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(bad(format!("{s:?} is not finite")));
    }
    Ok(z)
}

/// Comma-separated complex coordinates, e.g. `0.3,0.1-0.2i`.
pub fn parse_point(s: &str) -> InputResult<Vec<C64>> {
    s.split(',').map(parse_complex).collect()
}

/// Either a path to a JSON array of points (each an array of `[re, im]`
/// pairs) or inline points separated by `;`.
pub fn parse_points(arg: &str) -> InputResult<Vec<Vec<C64>>> {
    let path = Path::new(arg);
    if path.is_file() {
        let raw: Vec<Vec<[f64; 2]>> = read_json(path)?;
        return Ok(raw
            .into_iter()
            .map(|p| p.into_iter().map(|[r, i]| C64::new(r, i)).collect())
            .collect());
    }
    arg.split(';').filter(|s| !s.trim().is_empty()).map(parse_point).collect()
}

pub fn point_json(z: &[C64]) -> Value {
    json!(z.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>())
}
