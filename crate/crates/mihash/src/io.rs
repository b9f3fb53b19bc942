//! Dataset and mapping serialization.
//!
//! Three formats, all little-endian:
//! - MIHF feature files: magic "MIHF", version u16, count u64, dim
//!   u32, label-flag u8, then count x dim f32 features row-major,
//!   then (if flagged) count i32 labels.
//! - MHSH mapping files: magic "MHSH", version u16, d u32, b u32,
//!   sharpness f64, then d*b f64 weights column-major.
//! - CSV: header `f0,..,f{d-1}[,label]`, one example per row.
//!
//! Features are quantized to f32 at ingest on every path, so a
//! dataset read from CSV and the same dataset read from MIHF are
//! identical, and re-exports are byte-stable.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hashing::HashMapping;
use crate::types::Example;

pub const MIHF_VERSION: u16 = 1;
pub const MHSH_VERSION: u16 = 1;

const MIHF_MAGIC: &[u8; 4] = b"MIHF";
const MHSH_MAGIC: &[u8; 4] = b"MHSH";

/// Hard ceiling on count * dim so a corrupt header cannot trigger an
/// enormous allocation.
const MAX_CELLS: u64 = 1 << 31;

/// An in-memory dataset: examples with ids 0..n-1, a uniform feature
/// width, and either labels on every example or on none.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
    labeled: bool,
}

impl Dataset {
    /// Validates shape uniformity: equal feature width everywhere,
    /// all-or-none labeling, unique ids.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::domain("a dataset needs at least one example".to_string()))?;
        let dim = first.dim();
        let labeled = first.label.is_some();
        let mut ids = std::collections::HashSet::with_capacity(examples.len());
        for x in &examples {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.dim() });
            }
            if x.label.is_some() != labeled {
                return Err(Error::domain(format!(
                    "example {} breaks uniform labeling (dataset labeled: {labeled})",
                    x.id
                )));
            }
            if !ids.insert(x.id) {
                return Err(Error::domain(format!("duplicate example id {}", x.id)));
            }
        }
        Ok(Dataset { examples, dim, labeled })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }
}

fn build_examples(
    features: Vec<Vec<f64>>,
    labels: Option<Vec<i32>>,
) -> Result<Dataset> {
    let examples = features
        .into_iter()
        .enumerate()
        .map(|(i, f)| Example::new(i as u64, f, labels.as_ref().map(|l| l[i])))
        .collect();
    Dataset::new(examples)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!(
                    "truncated: expected at least {} bytes, found {}",
                    self.offset + n,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Reads an MIHF feature file. Byte counts are checked exactly: both
/// truncation and trailing garbage are errors.
pub fn read_mihf(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, offset: 0, path };
    if r.take(4)? != MIHF_MAGIC {
        return Err(Error::format(path, "bad magic, expected MIHF".to_string()));
    }
    let version = r.u16()?;
    if version != MIHF_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}, expected {MIHF_VERSION}"),
        ));
    }
    let count = r.u64()?;
    let dim = r.u32()? as u64;
    let flag = r.u8()?;
    if flag > 1 {
        return Err(Error::format(path, format!("label flag must be 0 or 1, got {flag}")));
    }
    if count == 0 || dim == 0 {
        return Err(Error::format(
            path,
            format!("empty dataset (count {count}, dim {dim})"),
        ));
    }
    if count.checked_mul(dim).map_or(true, |c| c > MAX_CELLS) {
        return Err(Error::format(
            path,
            format!("implausible size: count {count} x dim {dim}"),
        ));
    }
    let expected = 19 + count * dim * 4 + u64::from(flag) * count * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut features = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            row.push(f64::from(r.f32()?));
        }
        features.push(row);
    }
    let labels = if flag == 1 {
        let mut l = Vec::with_capacity(count as usize);
        for _ in 0..count {
            l.push(r.i32()?);
        }
        Some(l)
    } else {
        None
    };
    build_examples(features, labels)
}

/// Writes a dataset as MIHF.
pub fn write_mihf(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let count = dataset.len() as u64;
    let dim = dataset.dim() as u64;
    let flag = u8::from(dataset.labeled());
    let total = 19 + count * dim * 4 + u64::from(flag) * count * 4;
    let mut out = Vec::with_capacity(total as usize);
    out.extend_from_slice(MIHF_MAGIC);
    out.extend_from_slice(&MIHF_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(dataset.dim() as u32).to_le_bytes());
    out.push(flag);
    for x in dataset.examples() {
        for f in &x.features {
            out.extend_from_slice(&(*f as f32).to_le_bytes());
        }
    }
    if dataset.labeled() {
        for x in dataset.examples() {
            out.extend_from_slice(&x.label.unwrap().to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an MHSH mapping file.
pub fn read_mapping(path: impl AsRef<Path>) -> Result<HashMapping> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, offset: 0, path };
    if r.take(4)? != MHSH_MAGIC {
        return Err(Error::format(path, "bad magic, expected MHSH".to_string()));
    }
    let version = r.u16()?;
    if version != MHSH_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}, expected {MHSH_VERSION}"),
        ));
    }
    let dim = r.u32()? as u64;
    let bits = r.u32()? as u64;
    let sharpness = r.f64()?;
    if dim.checked_mul(bits).map_or(true, |c| c > MAX_CELLS) {
        return Err(Error::format(path, format!("implausible size: {dim} x {bits}")));
    }
    let expected = 22 + dim * bits * 8;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut weights = Vec::with_capacity((dim * bits) as usize);
    for _ in 0..dim * bits {
        weights.push(r.f64()?);
    }
    HashMapping::new(dim as usize, bits as usize, sharpness, weights)
}

/// Writes a mapping as MHSH; `read_mapping` restores it bit-exactly.
pub fn write_mapping(path: impl AsRef<Path>, mapping: &HashMapping) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(22 + mapping.weights().len() * 8);
    out.extend_from_slice(MHSH_MAGIC);
    out.extend_from_slice(&MHSH_VERSION.to_le_bytes());
    out.extend_from_slice(&(mapping.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(mapping.bits() as u32).to_le_bytes());
    out.extend_from_slice(&mapping.sharpness().to_le_bytes());
    for w in mapping.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// How the last CSV column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    /// Labeled if the header ends in `label`, else if every row's
    /// last field is a bare integer.
    #[default]
    Infer,
    /// Last column is the label.
    Labeled,
    /// Every column is a feature.
    Unlabeled,
}

fn is_bare_integer(s: &str) -> bool {
    let t = s.strip_prefix('-').unwrap_or(s);
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

/// Reads a CSV dataset: one example per row, features first, optional
/// integer label last. An all-non-numeric first line is treated as a
/// header. Errors cite 1-based line and column.
pub fn read_csv(path: impl AsRef<Path>, labels: LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().peekable();

    let mut header: Option<Vec<&str>> = None;
    if let Some((_, first)) = lines.peek() {
        let cells: Vec<&str> = first.split(',').map(str::trim).collect();
        if !cells.is_empty() && cells.iter().all(|c| c.parse::<f64>().is_err()) {
            header = Some(cells);
            lines.next();
        }
    }

    let rows: Vec<(usize, Vec<&str>)> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect();
    if rows.is_empty() {
        return Err(Error::format(path, "no data rows".to_string()));
    }

    let width = header.as_ref().map_or(rows[0].1.len(), Vec::len);
    for (line, cells) in &rows {
        if cells.len() != width {
            return Err(Error::format(
                path,
                format!("line {line}: expected {width} fields, found {}", cells.len()),
            ));
        }
    }

    let labeled = match labels {
        LabelColumn::Labeled => true,
        LabelColumn::Unlabeled => false,
        LabelColumn::Infer => match &header {
            Some(h) => h.last().is_some_and(|c| c.eq_ignore_ascii_case("label")),
            None => rows.iter().all(|(_, cells)| is_bare_integer(cells[width - 1])),
        },
    };
    if labeled && width < 2 {
        return Err(Error::format(
            path,
            "labeled rows need at least one feature column".to_string(),
        ));
    }

    let n_features = if labeled { width - 1 } else { width };
    let mut features = Vec::with_capacity(rows.len());
    let mut label_col = labeled.then(|| Vec::with_capacity(rows.len()));
    for (line, cells) in &rows {
        let mut row = Vec::with_capacity(n_features);
        for (col, cell) in cells[..n_features].iter().enumerate() {
            let v: f32 = cell.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("line {line}, column {}: invalid number {cell:?}", col + 1),
                )
            })?;
            row.push(f64::from(v));
        }
        features.push(row);
        if let Some(label_col) = &mut label_col {
            let cell = cells[width - 1];
            let v: i32 = cell.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("line {line}, column {width}: invalid label {cell:?}"),
                )
            })?;
            label_col.push(v);
        }
    }
    build_examples(features, label_col)
}

/// Writes a dataset as CSV with an `f0..f{d-1}[,label]` header.
/// Features print in the shortest form that re-reads to the same f32.
pub fn write_csv(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..dataset.dim() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("f{i}"));
    }
    if dataset.labeled() {
        out.push_str(",label");
    }
    out.push('\n');
    for x in dataset.examples() {
        for (i, f) in x.features.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", *f as f32));
        }
        if let Some(l) = x.label {
            out.push_str(&format!(",{l}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a dataset by extension: `.mihf` binary, anything else CSV.
pub fn read_dataset(path: impl AsRef<Path>, labels: LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("mihf") => read_mihf(path),
        _ => read_csv(path, labels),
    }
}
