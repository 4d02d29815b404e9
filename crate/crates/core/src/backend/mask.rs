use std::fmt::Write as _;

use crate::error::{LeapError, Result};

/// Square boolean matrix over forward rows; `(q, k)` is true when row `q`
/// may attend to row `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    rows: usize,
    cells: Vec<bool>,
}

impl VisibilityMask {
    pub fn full(rows: usize) -> Self {
        Self { rows, cells: vec![true; rows * rows] }
    }

    pub fn empty(rows: usize) -> Self {
        Self { rows, cells: vec![false; rows * rows] }
    }

    pub fn from_fn(rows: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(rows);
        for q in 0..rows {
            for k in 0..rows {
                m.cells[q * rows + k] = f(q, k);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn get(&self, q: usize, k: usize) -> bool {
        self.cells[q * self.rows + k]
    }

    pub fn set(&mut self, q: usize, k: usize, visible: bool) {
        self.cells[q * self.rows + k] = visible;
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.cells[q * self.rows..(q + 1) * self.rows]
    }

    pub fn visible_count(&self, q: usize) -> usize {
        self.row(q).iter().filter(|&&v| v).count()
    }

    /// Every row must see at least one key.
    pub fn validate(&self) -> Result<()> {
        for q in 0..self.rows {
            if self.visible_count(q) == 0 {
                return Err(LeapError::invalid(format!("visibility row {q} has no visible keys")));
            }
        }
        Ok(())
    }

    /// Rows of `1`/`0`, one line per query row.
    pub fn to_grid(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.rows + 1));
        for q in 0..self.rows {
            for &v in self.row(q) {
                out.push(if v { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_grid(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let rows = lines.len();
        let mut m = Self::empty(rows);
        for (q, line) in lines.iter().enumerate() {
            let line = line.trim();
            if line.len() != rows {
                let mut msg = String::new();
                let _ = write!(msg, "grid row {q} has {} cells, expected {rows}", line.len());
                return Err(LeapError::format(msg));
            }
            for (k, c) in line.chars().enumerate() {
                match c {
                    '1' => m.set(q, k, true),
                    '0' => {}
                    other => return Err(LeapError::format(format!("bad grid cell `{other}`"))),
                }
            }
        }
        Ok(m)
    }

    /// Keeps the rows and columns listed in `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self::from_fn(keep.len(), |q, k| self.get(keep[q], keep[k]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let m = VisibilityMask::from_fn(3, |q, k| q >= k);
        assert_eq!(m.to_grid(), "100\n110\n111\n");
        assert_eq!(VisibilityMask::from_grid(&m.to_grid()).unwrap(), m);
    }

    #[test]
    fn empty_row_is_invalid() {
        let mut m = VisibilityMask::full(2);
        m.set(1, 0, false);
        m.set(1, 1, false);
        assert!(m.validate().is_err());
        assert!(VisibilityMask::full(2).validate().is_ok());
    }

    #[test]
    fn select_permutes_rows_and_columns() {
        let m = VisibilityMask::from_fn(3, |q, k| q >= k);
        let p = m.select(&[2, 0, 1]);
        assert_eq!(p.to_grid(), "111\n010\n011\n");
    }
}
