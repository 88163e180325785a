//! Categorical datasets and the flat parameter layout shared by every
//! per-(variable, category) tensor in the crate.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Offsets of each variable's categories inside a flattened `Σ_j L_j` row.
///
/// Every ragged `K × P × L_j` tensor is stored as `K` rows of `width()` entries;
/// entry `(k, j, l)` lives at `k * width + offset(j) + l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    cardinalities: Vec<usize>,
    offsets: Vec<usize>,
    width: usize,
}

impl Layout {
    pub fn new(cardinalities: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(cardinalities.len());
        let mut width = 0;
        for &l in &cardinalities {
            offsets.push(width);
            width += l;
        }
        Self {
            cardinalities,
            offsets,
            width,
        }
    }

    pub fn uniform(n_vars: usize, categories: usize) -> Self {
        Self::new(vec![categories; n_vars])
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    /// Total number of (variable, category) cells, `Σ_j L_j`.
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    #[inline]
    pub fn cardinality(&self, j: usize) -> usize {
        self.cardinalities[j]
    }

    #[inline]
    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    /// Range of flat cells belonging to variable `j`.
    #[inline]
    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j] + self.cardinalities[j]
    }

    pub fn is_binary(&self) -> bool {
        self.cardinalities.iter().all(|&l| l == 2)
    }

    /// Splits a flat row into per-variable category vectors.
    pub fn to_ragged<T: Copy>(&self, row: &[T]) -> Vec<Vec<T>> {
        (0..self.n_vars()).map(|j| row[self.range(j)].to_vec()).collect()
    }

    /// Flattens per-variable vectors, checking they match this layout.
    pub fn from_ragged<T: Copy>(&self, ragged: &[Vec<T>]) -> Result<Vec<T>> {
        if ragged.len() != self.n_vars() {
            return Err(Error::Schema(format!(
                "expected {} variables, found {}",
                self.n_vars(),
                ragged.len()
            )));
        }
        let mut out = Vec::with_capacity(self.width);
        for (j, cats) in ragged.iter().enumerate() {
            if cats.len() != self.cardinalities[j] {
                return Err(Error::Schema(format!(
                    "variable {j}: expected {} categories, found {}",
                    self.cardinalities[j],
                    cats.len()
                )));
            }
            out.extend_from_slice(cats);
        }
        Ok(out)
    }
}

/// N observations of P categorical variables, variable `j` taking values in `0..L_j`.
///
/// Values are stored pre-offset into the [`Layout`] (`offset(j) + x_nj`) so the
/// inner loops of the E and M steps are single gathers.
#[derive(Debug, Clone)]
pub struct CategoricalDataset {
    codes: Vec<u32>,
    layout: Arc<Layout>,
    n_rows: usize,
    var_names: Option<Vec<String>>,
}

impl CategoricalDataset {
    /// Builds a dataset from row-major values. All `L_j ≥ 2` and every value `< L_j`.
    pub fn from_rows(rows: &[Vec<usize>], cardinalities: Vec<usize>) -> Result<Self> {
        let p = cardinalities.len();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!(
                    "row {n} has {} values, expected {p}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(&flat, rows.len(), cardinalities)
    }

    pub fn from_flat(values: &[usize], n_rows: usize, cardinalities: Vec<usize>) -> Result<Self> {
        Self::with_layout(values, n_rows, Arc::new(Layout::new(cardinalities)))
    }

    pub fn with_layout(values: &[usize], n_rows: usize, layout: Arc<Layout>) -> Result<Self> {
        let p = layout.n_vars();
        if p == 0 {
            return Err(Error::Data("dataset has no variables".into()));
        }
        if values.len() != n_rows * p {
            return Err(Error::Data(format!(
                "expected {} values for {n_rows}x{p}, found {}",
                n_rows * p,
                values.len()
            )));
        }
        if let Some(j) = layout.cardinalities().iter().position(|&l| l < 2) {
            return Err(Error::Data(format!(
                "variable {j} has {} categories; at least 2 required",
                layout.cardinality(j)
            )));
        }
        let mut codes = Vec::with_capacity(values.len());
        for (idx, &v) in values.iter().enumerate() {
            let j = idx % p;
            if v >= layout.cardinality(j) {
                return Err(Error::Data(format!(
                    "row {}, variable {j}: value {v} outside 0..{}",
                    idx / p,
                    layout.cardinality(j)
                )));
            }
            codes.push((layout.offset(j) + v) as u32);
        }
        Ok(Self {
            codes,
            layout,
            n_rows,
            var_names: None,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    #[inline]
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<Layout> {
        Arc::clone(&self.layout)
    }

    pub fn cardinalities(&self) -> &[usize] {
        self.layout.cardinalities()
    }

    /// Flat layout cells hit by row `n`, one per variable.
    #[inline]
    pub fn row_codes(&self, n: usize) -> &[u32] {
        let p = self.n_vars();
        &self.codes[n * p..(n + 1) * p]
    }

    #[inline]
    pub fn value(&self, n: usize, j: usize) -> usize {
        self.codes[n * self.n_vars() + j] as usize - self.layout.offset(j)
    }

    pub fn row(&self, n: usize) -> Vec<usize> {
        (0..self.n_vars()).map(|j| self.value(n, j)).collect()
    }

    pub fn var_names(&self) -> Vec<String> {
        match &self.var_names {
            Some(names) => names.clone(),
            None => (0..self.n_vars()).map(|j| format!("V{}", j + 1)).collect(),
        }
    }

    pub fn set_var_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n_vars() {
            return Err(Error::Data(format!(
                "{} names for {} variables",
                names.len(),
                self.n_vars()
            )));
        }
        self.var_names = Some(names);
        Ok(())
    }

    /// Rows `indices` (in the given order) as a new dataset with the same layout.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let p = self.n_vars();
        let mut codes = Vec::with_capacity(indices.len() * p);
        for &n in indices {
            codes.extend_from_slice(self.row_codes(n));
        }
        Self {
            codes,
            layout: Arc::clone(&self.layout),
            n_rows: indices.len(),
            var_names: self.var_names.clone(),
        }
    }

    /// Row-wise concatenation; all parts must share one layout.
    pub fn concat(parts: &[&CategoricalDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero datasets".into()))?;
        let mut codes = Vec::new();
        let mut n_rows = 0;
        for part in parts {
            if part.layout() != first.layout() {
                return Err(Error::Schema("datasets have different layouts".into()));
            }
            codes.extend_from_slice(&part.codes);
            n_rows += part.n_rows;
        }
        Ok(Self {
            codes,
            layout: Arc::clone(&first.layout),
            n_rows,
            var_names: first.var_names.clone(),
        })
    }

    /// Reads a CSV with a header row and one integer category index per cell.
    ///
    /// When `cardinalities` is `None` each `L_j` is inferred as `max(2, max value + 1)`.
    /// Empty cells are rejected: missing data is not supported.
    pub fn read_csv<R: Read>(reader: R, cardinalities: Option<Vec<usize>>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let p = names.len();
        let mut values = Vec::new();
        let mut n_rows = 0;
        for (n, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != p {
                return Err(Error::Data(format!(
                    "row {n} has {} cells, expected {p}",
                    record.len()
                )));
            }
            for (j, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    return Err(Error::Data(format!("missing value at row {n}, column {j}")));
                }
                let v: usize = cell.parse().map_err(|_| {
                    Error::Data(format!("row {n}, column {j}: {cell:?} is not a category index"))
                })?;
                values.push(v);
            }
            n_rows += 1;
        }
        let cards = match cardinalities {
            Some(c) => {
                if c.len() != p {
                    return Err(Error::Schema(format!(
                        "{} cardinalities for {p} columns",
                        c.len()
                    )));
                }
                c
            }
            None => {
                let mut c = vec![2usize; p];
                for (idx, &v) in values.iter().enumerate() {
                    let j = idx % p;
                    c[j] = c[j].max(v + 1);
                }
                c
            }
        };
        let mut ds = Self::from_flat(&values, n_rows, cards)?;
        ds.var_names = Some(names);
        Ok(ds)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, cardinalities: Option<Vec<usize>>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), cardinalities)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.var_names())?;
        let mut buf = Vec::with_capacity(self.n_vars());
        for n in 0..self.n_rows {
            buf.clear();
            buf.extend((0..self.n_vars()).map(|j| self.value(n, j).to_string()));
            w.write_record(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Counts of each category per variable, flattened by the layout.
    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.layout.width()];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }
}
