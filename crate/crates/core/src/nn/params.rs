use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Index of an array inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Named flat arrays of network weights. Shapes are fixed once built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    arrays: Vec<NamedArray>,
}

const HEADER: &str = "#futrl-params,v1";

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.arrays.push(NamedArray {
            name,
            rows: value.rows,
            cols: value.cols,
            values: value.data,
        });
        ParamId(self.arrays.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.arrays.iter().position(|a| a.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn array(&self, id: ParamId) -> &NamedArray {
        &self.arrays[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.arrays[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.arrays[id.0].values
    }

    pub fn matrix(&self, id: ParamId) -> Matrix {
        let a = &self.arrays[id.0];
        Matrix::from_vec(a.rows, a.cols, a.values.clone())
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().all(|a| a.values.iter().all(|v| v.is_finite()))
    }

    /// Zero-valued store with the same names and shapes.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            arrays: self
                .arrays
                .iter()
                .map(|a| NamedArray {
                    values: vec![0.0; a.values.len()],
                    ..a.clone()
                })
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.arrays.len() == other.arrays.len()
            && self
                .arrays
                .iter()
                .zip(&other.arrays)
                .all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols)
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &f64> {
        self.arrays.iter().flat_map(|a| a.values.iter())
    }

    pub fn iter_values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.arrays.iter_mut().flat_map(|a| a.values.iter_mut())
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter_values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_values_mut().for_each(|v| *v *= k);
    }

    /// Flat text form: a header line, then one line per array
    /// `name,rows,cols,v0,v1,...` with values in row-major order written in
    /// shortest round-trip decimal, so `load(save(p)) == p` bit for bit.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        for a in &self.arrays {
            write!(w, "{},{},{}", a.name, a.rows, a.cols)?;
            for v in &a.values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl std::io::Read) -> Result<ParamStore> {
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == HEADER => {}
            _ => return Err(Error::Format(format!("missing `{HEADER}` header"))),
        }
        let mut store = ParamStore::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("line {}: {what}", i + 2));
            let mut parts = line.split(',');
            let name = parts.next().ok_or_else(|| bad("missing name"))?.to_string();
            let rows: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad rows"))?;
            let cols: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad cols"))?;
            let values = parts
                .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != rows * cols {
                return Err(bad("value count does not match shape"));
            }
            if store.id(&name).is_some() {
                return Err(bad("duplicate name"));
            }
            store.push(name, Matrix::from_vec(rows, cols, values));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
        ParamStore::read_from(std::fs::File::open(path)?)
    }
}
