//! JSON file formats.
//!
//! Matrices are row-major lists of rows, each entry a `[re, im]` pair.
//! Elements are lists of block matrices. Parse errors carry the JSON path of
//! the offending field, e.g. `densities[1][0][2]`.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::algebra::{AlgebraSpec, Element};
use crate::channel::{KrausMap, ModuleMapChoi};
use crate::functional::{Functional, HERMITIAN_LOAD_TOL};
use crate::numerics::{self, CMatrix, C64};
use crate::{Error, Result};

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse { path: if path.is_empty() { "$".into() } else { path.to_string() }, message: message.into() }
}

fn child(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(path, format!("expected an array, found {}", kind(v))))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| parse_err(path, format!("expected an object, found {}", kind(v))))
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| parse_err(path, format!("missing field \"{key}\"")))
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(parse_err(&child(path, k), format!("unknown field (expected one of {allowed:?})"))),
        None => Ok(()),
    }
}

fn number(v: &Value, path: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| parse_err(path, format!("expected a number, found {}", kind(v))))?;
    if !x.is_finite() {
        return Err(parse_err(path, "non-finite number"));
    }
    Ok(x)
}

pub fn parse_complex(v: &Value, path: &str) -> Result<C64> {
    let pair = as_array(v, path)?;
    if pair.len() != 2 {
        return Err(parse_err(path, format!("expected [re, im], found {} entries", pair.len())));
    }
    Ok(C64::new(number(&pair[0], &index(path, 0))?, number(&pair[1], &index(path, 1))?))
}

/// Parses a square matrix; `expected` fixes its size.
pub fn parse_matrix(v: &Value, path: &str, expected: Option<usize>) -> Result<CMatrix> {
    let rows = as_array(v, path)?;
    let n = rows.len();
    if let Some(e) = expected {
        if n != e {
            return Err(parse_err(path, format!("expected {e} rows, found {n}")));
        }
    }
    if n == 0 {
        return Err(parse_err(path, "empty matrix"));
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let rp = index(path, i);
        let entries = as_array(row, &rp)?;
        if entries.len() != n {
            return Err(parse_err(&rp, format!("expected {n} entries (square matrix), found {}", entries.len())));
        }
        for (j, z) in entries.iter().enumerate() {
            m[(i, j)] = parse_complex(z, &index(&rp, j))?;
        }
    }
    Ok(m)
}

pub fn matrix_to_value(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

pub fn parse_algebra(v: &Value, path: &str) -> Result<AlgebraSpec> {
    let obj = as_object(v, path)?;
    reject_unknown(obj, &["blocks"], path)?;
    let bp = child(path, "blocks");
    let dims = as_array(field(obj, "blocks", path)?, &bp)?
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.as_u64()
                .filter(|&n| n >= 1)
                .map(|n| n as usize)
                .ok_or_else(|| parse_err(&index(&bp, i), "block dimension must be a positive integer"))
        })
        .collect::<Result<Vec<_>>>()?;
    AlgebraSpec::new(dims).map_err(|e| parse_err(&bp, e.to_string()))
}

pub fn algebra_to_value(a: &AlgebraSpec) -> Value {
    json!({ "blocks": a.block_dims() })
}

fn parse_blocks(v: &Value, path: &str, dims: Option<&[usize]>) -> Result<Vec<CMatrix>> {
    let blocks = as_array(v, path)?;
    if let Some(d) = dims {
        if blocks.len() != d.len() {
            return Err(parse_err(path, format!("expected {} blocks, found {}", d.len(), blocks.len())));
        }
    }
    blocks.iter().enumerate().map(|(i, b)| parse_matrix(b, &index(path, i), dims.map(|d| d[i]))).collect()
}

/// An element as a list of block matrices; with `algebra`, block sizes are checked.
pub fn parse_element(v: &Value, path: &str, algebra: Option<&AlgebraSpec>) -> Result<Element> {
    let blocks = parse_blocks(v, path, algebra.map(AlgebraSpec::block_dims))?;
    let algebra = match algebra {
        Some(a) => a.clone(),
        None => {
            AlgebraSpec::new(blocks.iter().map(|b| b.nrows()).collect()).map_err(|e| parse_err(path, e.to_string()))?
        }
    };
    Element::new(&algebra, blocks).map_err(|e| parse_err(path, e.to_string()))
}

pub fn element_to_value(x: &Element) -> Value {
    Value::Array(x.blocks().iter().map(matrix_to_value).collect())
}

/// `{"algebra": {...}, "densities": [...]}` with hermitian densities.
pub fn parse_functional(v: &Value, path: &str) -> Result<Functional> {
    let obj = as_object(v, path)?;
    reject_unknown(obj, &["algebra", "densities"], path)?;
    let algebra = parse_algebra(field(obj, "algebra", path)?, &child(path, "algebra"))?;
    let dp = child(path, "densities");
    let densities = parse_blocks(field(obj, "densities", path)?, &dp, Some(algebra.block_dims()))?;
    for (i, d) in densities.iter().enumerate() {
        let residual = numerics::hermitian_residual(d);
        if residual > HERMITIAN_LOAD_TOL * numerics::max_abs(d).max(1.0) {
            return Err(parse_err(&index(&dp, i), format!("density is not hermitian (residual {residual:.3e})")));
        }
    }
    Functional::new(&algebra, densities).map_err(|e| parse_err(&dp, e.to_string()))
}

pub fn functional_to_value(f: &Functional) -> Value {
    json!({
        "algebra": algebra_to_value(f.algebra()),
        "densities": f.densities().iter().map(matrix_to_value).collect::<Vec<_>>(),
    })
}

/// A channel file holds either Kraus operators or per-block Choi matrices.
#[derive(Debug, Clone)]
pub enum ChannelFile {
    Kraus(KrausMap),
    Choi(ModuleMapChoi),
}

impl ChannelFile {
    pub fn algebra(&self) -> &AlgebraSpec {
        match self {
            ChannelFile::Kraus(k) => k.algebra(),
            ChannelFile::Choi(c) => c.algebra(),
        }
    }

    pub fn choi(&self) -> ModuleMapChoi {
        match self {
            ChannelFile::Kraus(k) => k.choi(),
            ChannelFile::Choi(c) => c.clone(),
        }
    }

    /// Kraus form; Choi input is factorized with eigenvalue cutoff `eps`.
    pub fn kraus(&self, eps: f64) -> Result<KrausMap> {
        match self {
            ChannelFile::Kraus(k) => Ok(k.clone()),
            ChannelFile::Choi(c) => c.to_kraus(eps),
        }
    }
}

/// `{"algebra"?: {...}, "kraus": [element, ...]}` or `{"algebra"?: {...}, "choi_blocks": [...]}`.
/// Without `algebra`, block sizes are read off the operators.
pub fn parse_channel(v: &Value, path: &str) -> Result<ChannelFile> {
    let obj = as_object(v, path)?;
    reject_unknown(obj, &["algebra", "kraus", "choi_blocks"], path)?;
    let algebra = obj.get("algebra").map(|a| parse_algebra(a, &child(path, "algebra"))).transpose()?;
    match (obj.get("kraus"), obj.get("choi_blocks")) {
        (Some(_), Some(_)) => Err(parse_err(path, "give either \"kraus\" or \"choi_blocks\", not both")),
        (None, None) => Err(parse_err(path, "missing field \"kraus\" or \"choi_blocks\"")),
        (Some(k), None) => {
            let kp = child(path, "kraus");
            let list = as_array(k, &kp)?;
            if list.is_empty() {
                return Err(parse_err(&kp, "at least one Kraus operator is required"));
            }
            let first = parse_element(&list[0], &index(&kp, 0), algebra.as_ref())?;
            let algebra = first.algebra().clone();
            let mut ops = vec![first];
            for (j, item) in list.iter().enumerate().skip(1) {
                ops.push(parse_element(item, &index(&kp, j), Some(&algebra))?);
            }
            Ok(ChannelFile::Kraus(KrausMap::new(&algebra, ops).map_err(|e| parse_err(&kp, e.to_string()))?))
        }
        (None, Some(c)) => {
            let cp = child(path, "choi_blocks");
            let sizes = algebra.as_ref().map(|a| a.block_dims().iter().map(|n| n * n).collect::<Vec<_>>());
            let blocks = parse_blocks(c, &cp, sizes.as_deref())?;
            let algebra = match algebra {
                Some(a) => a,
                None => {
                    let dims = blocks
                        .iter()
                        .enumerate()
                        .map(|(i, b)| {
                            let n = (b.nrows() as f64).sqrt().round() as usize;
                            if n * n == b.nrows() {
                                Ok(n)
                            } else {
                                Err(parse_err(&index(&cp, i), format!("Choi size {} is not a square", b.nrows())))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    AlgebraSpec::new(dims).map_err(|e| parse_err(&cp, e.to_string()))?
                }
            };
            Ok(ChannelFile::Choi(ModuleMapChoi::new(&algebra, blocks).map_err(|e| parse_err(&cp, e.to_string()))?))
        }
    }
}

pub fn kraus_to_value(k: &KrausMap) -> Value {
    json!({
        "algebra": algebra_to_value(k.algebra()),
        "kraus": k.kraus().iter().map(element_to_value).collect::<Vec<_>>(),
    })
}

pub fn choi_to_value(c: &ModuleMapChoi) -> Value {
    json!({
        "algebra": algebra_to_value(c.algebra()),
        "choi_blocks": c.choi_blocks().iter().map(matrix_to_value).collect::<Vec<_>>(),
    })
}

/// Reads and parses a JSON document; syntax errors report line and column.
pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: format!("invalid JSON at line {}, column {}: {e}", e.line(), e.column()),
    })
}

fn with_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { path: field, message } => Error::Parse { path: format!("{}: {field}", path.display()), message },
        other => other,
    }
}

pub fn load_algebra(path: &Path) -> Result<AlgebraSpec> {
    parse_algebra(&read_json(path)?, "").map_err(|e| with_file(path, e))
}

pub fn load_functional(path: &Path) -> Result<Functional> {
    parse_functional(&read_json(path)?, "").map_err(|e| with_file(path, e))
}

pub fn load_channel(path: &Path) -> Result<ChannelFile> {
    parse_channel(&read_json(path)?, "").map_err(|e| with_file(path, e))
}

/// Writes pretty-printed JSON through a temporary sibling file and a rename.
pub fn write_json_atomic(path: &Path, value: &Value) -> Result<()> {
    let io_err = |e: std::io::Error| Error::InvalidArgument(format!("cannot write {}: {e}", path.display()));
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    let name =
        path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, text).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}
