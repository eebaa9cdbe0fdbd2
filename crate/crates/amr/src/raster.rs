//! Regular outcome lattices and the ESRI ASCII grid format.
//!
//! The cell-center coordinate of cell `(r, c)` is
//! `(origin_x + (c + 0.5) * cell_size, origin_y + (r + 0.5) * cell_size)`,
//! where row 0 is the *southernmost* row (smallest y). The `.asc` format
//! stores rows north-to-south; loading and writing flip accordingly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{AmrError, Result};

/// A regular lattice of real outcome values with georeferencing.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    n_rows: usize,
    n_cols: usize,
    /// Row-major, row 0 = southernmost.
    values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if cell_size <= 0.0 || !cell_size.is_finite() {
            return Err(AmrError::InvalidInput(format!(
                "cell_size must be positive and finite, got {cell_size}"
            )));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(AmrError::InvalidInput(
                "raster must have at least one row and one column".into(),
            ));
        }
        if values.len() != n_rows * n_cols {
            return Err(AmrError::InvalidInput(format!(
                "expected {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(AmrError::NonFinite {
                path: "<memory>".into(),
                count: bad,
            });
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            n_rows,
            n_cols,
            values,
        })
    }

    /// Constant-value raster, mostly for tests and illustrations.
    pub fn constant(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_rows: usize,
        n_cols: usize,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            origin_x,
            origin_y,
            cell_size,
            n_rows,
            n_cols,
            vec![value; n_rows * n_cols],
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell-center coordinate of cell `(row, col)`; row 0 is southernmost.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Iterates `(x, y, value)` over all cell centers in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (0..self.n_cols).map(move |c| {
                let (x, y) = self.cell_center(r, c);
                (x, y, self.value(r, c))
            })
        })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parses an ESRI ASCII grid. NODATA anywhere is a load error.
    pub fn from_ascii_grid(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AmrError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_ascii_grid(&text, &path.display().to_string())
    }

    pub fn parse_ascii_grid(text: &str, path: &str) -> Result<Self> {
        let mut n_cols: Option<usize> = None;
        let mut n_rows: Option<usize> = None;
        let mut xll: Option<f64> = None;
        let mut yll: Option<f64> = None;
        let mut cell_size: Option<f64> = None;
        let mut nodata: Option<f64> = None;

        let parse_err = |line: usize, message: String| AmrError::Parse {
            path: path.to_string(),
            line,
            message,
        };

        let mut lines = text.lines().enumerate().peekable();
        while let Some(&(idx, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let key = match parts.next() {
                Some(k) => k,
                None => {
                    lines.next();
                    continue;
                }
            };
            let keyword = key.to_ascii_uppercase();
            let is_header = matches!(
                keyword.as_str(),
                "NCOLS" | "NROWS" | "XLLCORNER" | "YLLCORNER" | "CELLSIZE" | "NODATA_VALUE"
            );
            if !is_header {
                break;
            }
            let raw = parts
                .next()
                .ok_or_else(|| parse_err(idx + 1, format!("missing value for {key}")))?;
            let num: f64 = raw
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("cannot parse `{raw}` for {key}")))?;
            match keyword.as_str() {
                "NCOLS" => n_cols = Some(num as usize),
                "NROWS" => n_rows = Some(num as usize),
                "XLLCORNER" => xll = Some(num),
                "YLLCORNER" => yll = Some(num),
                "CELLSIZE" => cell_size = Some(num),
                "NODATA_VALUE" => nodata = Some(num),
                _ => unreachable!(),
            }
            lines.next();
        }

        let n_cols = n_cols.ok_or_else(|| parse_err(1, "missing NCOLS".into()))?;
        let n_rows = n_rows.ok_or_else(|| parse_err(1, "missing NROWS".into()))?;
        let xll = xll.ok_or_else(|| parse_err(1, "missing XLLCORNER".into()))?;
        let yll = yll.ok_or_else(|| parse_err(1, "missing YLLCORNER".into()))?;
        let cell_size = cell_size.ok_or_else(|| parse_err(1, "missing CELLSIZE".into()))?;
        if cell_size <= 0.0 {
            return Err(parse_err(1, format!("CELLSIZE must be > 0, got {cell_size}")));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(parse_err(1, "NROWS and NCOLS must be >= 1".into()));
        }

        // Data rows come north-to-south; store south-to-north.
        let mut values = vec![0.0f64; n_rows * n_cols];
        let mut filled = 0usize;
        let mut nodata_count = 0usize;
        for (idx, line) in lines {
            for tok in line.split_whitespace() {
                if filled >= n_rows * n_cols {
                    return Err(parse_err(idx + 1, "more data values than NROWS*NCOLS".into()));
                }
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(idx + 1, format!("cannot parse value `{tok}`")))?;
                if let Some(nd) = nodata {
                    if v == nd {
                        nodata_count += 1;
                    }
                }
                let file_row = filled / n_cols;
                let col = filled % n_cols;
                let row = n_rows - 1 - file_row;
                values[row * n_cols + col] = v;
                filled += 1;
            }
        }
        if filled != n_rows * n_cols {
            return Err(parse_err(
                text.lines().count(),
                format!("expected {} data values, got {filled}", n_rows * n_cols),
            ));
        }
        if nodata_count > 0 {
            return Err(AmrError::NodataPresent {
                path: path.to_string(),
                count: nodata_count,
            });
        }
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(AmrError::NonFinite {
                path: path.to_string(),
                count: bad,
            });
        }

        Ok(Self {
            origin_x: xll,
            origin_y: yll,
            cell_size,
            n_rows,
            n_cols,
            values,
        })
    }

    /// Serializes to ESRI ASCII with 17 significant digits, so a
    /// write-then-read round trip reproduces values exactly.
    pub fn to_ascii_grid(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NCOLS {}", self.n_cols);
        let _ = writeln!(out, "NROWS {}", self.n_rows);
        let _ = writeln!(out, "XLLCORNER {:.17e}", self.origin_x);
        let _ = writeln!(out, "YLLCORNER {:.17e}", self.origin_y);
        let _ = writeln!(out, "CELLSIZE {:.17e}", self.cell_size);
        for file_row in 0..self.n_rows {
            let row = self.n_rows - 1 - file_row;
            let line: Vec<String> = (0..self.n_cols)
                .map(|c| format!("{:.17e}", self.value(row, c)))
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn write_ascii_grid(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii_grid()).map_err(|source| AmrError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
