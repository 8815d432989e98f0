//! Dense row-major matrices and labelled test sets.

use crate::error::{invalid, Error, Result};

/// Name of the CSV column holding targets when they live in the data file.
pub const TARGET_COLUMN: &str = "__target__";

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_binary_column(&self, j: usize) -> bool {
        (0..self.rows).all(|i| {
            let v = self.get(i, j);
            v == 0.0 || v == 1.0
        })
    }

    /// Appends a row, reusing the allocation. Used to build evaluation
    /// chunks.
    pub(crate) fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub(crate) fn clear_rows(&mut self) {
        self.data.clear();
        self.rows = 0;
    }

    pub(crate) fn with_capacity(rows: usize, cols: usize) -> Self {
        Matrix {
            rows: 0,
            cols,
            data: Vec::with_capacity(rows * cols),
        }
    }
}

/// Test instances the model is interrogated on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if x.rows() != y.len() {
            return Err(Error::Data(format!(
                "{} rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        Ok(Dataset {
            x,
            y,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.cols() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                names.len(),
                self.x.cols()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n_instances(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn column_name(&self, j: usize) -> String {
        self.column_names
            .as_ref()
            .and_then(|n| n.get(j).cloned())
            .unwrap_or_else(|| format!("x{j}"))
    }

    /// Reads a CSV with a header row. Targets come from the
    /// [`TARGET_COLUMN`] column, or from `targets` when given (which then
    /// takes precedence and the column, if present, is dropped).
    pub fn from_csv(text: &str, targets: Option<Vec<f64>>) -> Result<Self> {
        let (names, rows) = read_csv_table(text)?;
        let target_col = names.iter().position(|n| n == TARGET_COLUMN);
        let feature_cols: Vec<usize> = (0..names.len()).filter(|&j| Some(j) != target_col).collect();

        let mut data = Vec::with_capacity(rows.len() * feature_cols.len());
        let mut y = Vec::with_capacity(rows.len());
        for row in &rows {
            data.extend(feature_cols.iter().map(|&j| row[j]));
            if let Some(t) = target_col {
                y.push(row[t]);
            }
        }
        let y = match (targets, target_col) {
            (Some(t), _) => t,
            (None, Some(_)) => y,
            (None, None) => {
                return Err(Error::Data(format!(
                    "no `{TARGET_COLUMN}` column and no separate targets given"
                )))
            }
        };
        let x = Matrix::new(rows.len(), feature_cols.len(), data)?;
        let names = feature_cols.iter().map(|&j| names[j].clone()).collect();
        Dataset::new(x, y)?.with_column_names(names)
    }

    /// CSV with a header row and the targets in a trailing
    /// [`TARGET_COLUMN`].
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (0..self.n_features()).map(|j| self.column_name(j)).collect();
        header.push(TARGET_COLUMN.to_string());
        w.write_record(&header).expect("in-memory csv write");
        for (i, row) in self.x.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            rec.push(format_value(self.y[i]));
            w.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Header plus numeric rows of a CSV document.
pub fn read_csv_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Data(format!(
                "csv row {} has {} fields, header has {}",
                i + 1,
                rec.len(),
                names.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "csv row {}, column `{}`: `{s}` is not a finite number",
                            i + 1,
                            names[j]
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((names, rows))
}

/// One target per line; a leading non-numeric line is taken as a header.
pub fn read_targets(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    if let Some(first) = lines.peek() {
        if first.parse::<f64>().is_err() {
            lines.next();
        }
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("target line {}: `{l}` is not a number", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_target_column() {
        let d = Dataset::from_csv("a,b,__target__\n1,0,2.5\n0,1,-1\n", None).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.y, vec![2.5, -1.0]);
        assert_eq!(d.x.row(1), &[0.0, 1.0]);
        assert_eq!(d.column_name(1), "b");
        let back = Dataset::from_csv(&d.to_csv(), None).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn separate_targets_win() {
        let t = read_targets("y\n3\n4\n").unwrap();
        let d = Dataset::from_csv("a\n1\n2\n", Some(t)).unwrap();
        assert_eq!(d.y, vec![3.0, 4.0]);
    }

    #[test]
    fn data_errors() {
        assert!(Dataset::from_csv("a\n1\n", None).is_err());
        assert!(Dataset::from_csv("a,__target__\nx,1\n", None).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 1), vec![1.0]).is_err());
        assert!(Dataset::new(Matrix::zeros(0, 1), vec![]).is_err());
    }

    #[test]
    fn binary_column_check() {
        let m = Matrix::from_rows(&[[0.0, 0.5], [1.0, 1.0]]).unwrap();
        assert!(m.is_binary_column(0));
        assert!(!m.is_binary_column(1));
    }
}
