//! Categorical raster fields and their indicator representations.
//!
//! A [`CategoricalGrid`] is a row-major lattice of 1-based class labels with a
//! square cell size. Rows grow downward; a [`LagVector`] is an integer offset
//! `(drow, dcol)` between a tail cell and a head cell.
//!
//! Grid file format (UTF-8 text):
//!
//! ```text
//! nrows 2
//! ncols 2
//! cellsize 1.0
//! nclasses 2
//! 1 2
//! 1 1
//! ```

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A 2D lattice of class labels in `1..=nclasses`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalGrid {
    nrows: usize,
    ncols: usize,
    cellsize: f64,
    nclasses: usize,
    labels: Vec<u32>,
}

impl CategoricalGrid {
    pub fn new(
        nrows: usize,
        ncols: usize,
        cellsize: f64,
        nclasses: usize,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(Error::InvalidGrid("dimensions must be positive".into()));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(Error::InvalidGrid(format!("cellsize must be > 0, got {cellsize}")));
        }
        if nclasses < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 classes, got {nclasses}")));
        }
        if labels.len() != nrows * ncols {
            return Err(Error::InvalidGrid(format!(
                "expected {} labels, got {}",
                nrows * ncols,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l as usize > nclasses) {
            return Err(Error::InvalidGrid(format!(
                "label {bad} not in 1..={nclasses}"
            )));
        }
        Ok(Self {
            nrows,
            ncols,
            cellsize,
            nclasses,
            labels,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }

    pub fn nclasses(&self) -> usize {
        self.nclasses
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label at `(row, col)`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.ncols + col]
    }

    /// Total map area in squared map units.
    pub fn area(&self) -> f64 {
        (self.nrows * self.ncols) as f64 * self.cellsize * self.cellsize
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<()> {
        if class == 0 || class > self.nclasses {
            Err(Error::ClassOutOfRange {
                class,
                nclasses: self.nclasses,
            })
        } else {
            Ok(())
        }
    }

    /// Cell counts per class, index 0 holding class 1.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.nclasses];
        for &l in &self.labels {
            counts[l as usize - 1] += 1;
        }
        counts
    }

    /// Binary field that is 1 exactly where the label equals `class`.
    pub fn indicator(&self, class: usize) -> Result<IndicatorField> {
        self.check_class(class)?;
        let values = self
            .labels
            .iter()
            .map(|&l| u8::from(l as usize == class))
            .collect();
        Ok(IndicatorField {
            nrows: self.nrows,
            ncols: self.ncols,
            class,
            values,
        })
    }

    /// Class proportions π_k, index 0 holding class 1. Absent classes get 0.
    pub fn proportions(&self) -> Vec<f64> {
        let total = self.labels.len() as f64;
        self.class_counts()
            .into_iter()
            .map(|c| c as f64 / total)
            .collect()
    }

    /// Parse the plain-text grid format. Errors carry 1-based line numbers.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing header `{key}`"),
            })?;
            let line = line?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), None) if k == key => Ok((lineno, v.to_string())),
                _ => Err(Error::Parse {
                    line: lineno,
                    message: format!("malformed header, expected `{key} <value>`"),
                }),
            }
        };

        fn parse_num<T: std::str::FromStr>(lineno: usize, key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("malformed header value for `{key}`: {v:?}"),
            })
        }

        let (l, v) = header("nrows")?;
        let nrows: usize = parse_num(l, "nrows", &v)?;
        let (l, v) = header("ncols")?;
        let ncols: usize = parse_num(l, "ncols", &v)?;
        let (l, v) = header("cellsize")?;
        let cellsize: f64 = parse_num(l, "cellsize", &v)?;
        let (l, v) = header("nclasses")?;
        let nclasses: usize = parse_num(l, "nclasses", &v)?;

        if nrows == 0 || ncols == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "dimensions must be positive".into(),
            });
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(Error::Parse {
                line: 3,
                message: format!("cellsize must be > 0, got {cellsize}"),
            });
        }
        if nclasses < 2 {
            return Err(Error::Parse {
                line: 4,
                message: format!("need at least 2 classes, got {nclasses}"),
            });
        }

        let mut labels = Vec::with_capacity(nrows * ncols);
        let mut rows_read = 0usize;
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if rows_read == nrows {
                return Err(Error::Parse {
                    line: lineno,
                    message: "trailing content after last grid row".into(),
                });
            }
            let before = labels.len();
            for tok in line.split_whitespace() {
                let label: i64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("not an integer label: {tok:?}"),
                })?;
                if label < 1 || label > nclasses as i64 {
                    return Err(Error::LabelOutOfRange {
                        line: lineno,
                        label,
                        nclasses,
                    });
                }
                labels.push(label as u32);
            }
            let got = labels.len() - before;
            if got != ncols {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("row length mismatch: expected {ncols}, got {got}"),
                });
            }
            rows_read += 1;
        }
        if rows_read != nrows {
            return Err(Error::Parse {
                line: 4 + rows_read,
                message: format!("expected {nrows} rows, got {rows_read}"),
            });
        }
        Self::new(nrows, ncols, cellsize, nclasses, labels)
    }

    /// Write the plain-text grid format. `cellsize` uses the shortest
    /// representation that parses back to the same `f64`.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "cellsize {:?}", self.cellsize)?;
        writeln!(w, "nclasses {}", self.nclasses)?;
        let mut line = String::with_capacity(self.ncols * 3);
        for row in self.labels.chunks(self.ncols) {
            line.clear();
            for (i, l) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&l.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Indicator I_k of a single class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorField {
    pub nrows: usize,
    pub ncols: usize,
    pub class: usize,
    pub values: Vec<u8>,
}

/// Integer cell offset between tail and head cells, with its map-unit length
/// and direction angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagVector {
    pub drow: i64,
    pub dcol: i64,
    pub distance: f64,
    /// Angle in `[0, 2π)` measured from the column axis toward the row axis.
    pub direction: f64,
}

impl LagVector {
    pub fn new(drow: i64, dcol: i64, cellsize: f64) -> Self {
        let (r, c) = (drow as f64, dcol as f64);
        let distance = cellsize * r.hypot(c);
        let direction = if drow == 0 && dcol == 0 {
            0.0
        } else {
            r.atan2(c).rem_euclid(TAU)
        };
        Self {
            drow,
            dcol,
            distance,
            direction,
        }
    }

    pub fn zero() -> Self {
        Self::new(0, 0, 1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.drow == 0 && self.dcol == 0
    }

    pub fn scaled(&self, factor: i64, cellsize: f64) -> Self {
        Self::new(self.drow * factor, self.dcol * factor, cellsize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "nrows 2\nncols 2\ncellsize 1.0\nnclasses 2\n1 2\n1 1\n";

    fn fixture() -> CategoricalGrid {
        CategoricalGrid::load(FIXTURE.as_bytes()).unwrap()
    }

    #[test]
    fn loads_fixture() {
        let g = fixture();
        assert_eq!(g.labels(), &[1, 2, 1, 1]);
        assert_eq!((g.nrows(), g.ncols(), g.nclasses()), (2, 2, 2));
        assert_eq!(g.cellsize(), 1.0);
    }

    #[test]
    fn rejects_label_out_of_range() {
        let text = "nrows 2\nncols 2\ncellsize 1.0\nnclasses 2\n1 2\n1 3\n";
        match CategoricalGrid::load(text.as_bytes()) {
            Err(Error::LabelOutOfRange { line, label, .. }) => {
                assert_eq!((line, label), (6, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = CategoricalGrid::load(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn rejects_row_length_mismatch() {
        let text = "nrows 2\nncols 2\ncellsize 1.0\nnclasses 2\n1 2 1\n1 1\n";
        match CategoricalGrid::load(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("row length"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_header_and_trailing_garbage() {
        let bad_header = "nrows 2\nncolumns 2\ncellsize 1.0\nnclasses 2\n1 2\n1 1\n";
        assert!(matches!(
            CategoricalGrid::load(bad_header.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let trailing = format!("{FIXTURE}1 1\n");
        assert!(matches!(
            CategoricalGrid::load(trailing.as_bytes()),
            Err(Error::Parse { line: 7, .. })
        ));
        let junk = "nrows 2\nncols 2\ncellsize 1.0\nnclasses 2\n1 2\n1 x\n";
        assert!(matches!(
            CategoricalGrid::load(junk.as_bytes()),
            Err(Error::Parse { line: 6, .. })
        ));
        let short = "nrows 3\nncols 2\ncellsize 1.0\nnclasses 2\n1 2\n1 1\n";
        assert!(CategoricalGrid::load(short.as_bytes()).is_err());
        let k1 = "nrows 1\nncols 1\ncellsize 1.0\nnclasses 1\n1\n";
        assert!(CategoricalGrid::load(k1.as_bytes()).is_err());
        let c0 = "nrows 1\nncols 1\ncellsize 0\nnclasses 2\n1\n";
        assert!(CategoricalGrid::load(c0.as_bytes()).is_err());
    }

    #[test]
    fn save_is_bit_exact_for_fixture() {
        let mut out = Vec::new();
        fixture().save(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), FIXTURE);
    }

    #[test]
    fn indicator_definition() {
        let g = fixture();
        assert_eq!(g.indicator(1).unwrap().values, vec![1, 0, 1, 1]);
        assert_eq!(g.indicator(2).unwrap().values, vec![0, 1, 0, 0]);
        assert!(matches!(g.indicator(3), Err(Error::ClassOutOfRange { .. })));
        assert!(g.indicator(0).is_err());
    }

    #[test]
    fn proportions_examples() {
        assert_eq!(fixture().proportions(), vec![0.75, 0.25]);

        let uniform = CategoricalGrid::new(3, 3, 1.0, 3, vec![1; 9]).unwrap();
        assert_eq!(uniform.proportions(), vec![1.0, 0.0, 0.0]);

        let checker: Vec<u32> = (0..16).map(|i| 1 + ((i / 4 + i % 4) % 2) as u32).collect();
        let g = CategoricalGrid::new(4, 4, 1.0, 2, checker).unwrap();
        assert_eq!(g.proportions(), vec![0.5, 0.5]);
    }

    #[test]
    fn lag_vector_geometry() {
        let h = LagVector::new(3, 4, 0.5);
        assert_eq!(h.distance, 2.5);
        let e = LagVector::new(0, 1, 1.0);
        assert_eq!(e.direction, 0.0);
        let w = LagVector::new(0, -1, 1.0);
        assert!((w.direction - std::f64::consts::PI).abs() < 1e-15);
        let s = LagVector::new(1, 0, 1.0);
        assert!((s.direction - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(LagVector::zero().is_zero());
    }
}
