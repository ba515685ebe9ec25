use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 0/1 matrix used for the subchannel pairing matrices.
///
/// Serialized as nested arrays of `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

/// U2I/CU link x subchannel.
pub type PhiMatrix = BinaryMatrix;
/// U2U link x subchannel.
pub type PsiMatrix = BinaryMatrix;

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn row_sum(&self, r: usize) -> usize {
        (0..self.cols).filter(|&c| self.get(r, c)).count()
    }

    pub fn col_sum(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, c)).count()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Row indices set in column `c`.
    pub fn col_ones(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows).filter(move |&r| self.get(r, c))
    }

    pub fn row_ones(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |&c| self.get(r, c))
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            bits: rows.iter().flatten().copied().collect(),
        })
    }

    /// Same matrix with one more all-zero row appended at `at`.
    pub fn with_zero_row(&self, at: usize) -> Self {
        let mut out = Self::zeros(self.rows + 1, self.cols);
        for r in 0..self.rows {
            let dst = if r < at { r } else { r + 1 };
            for c in 0..self.cols {
                out.set(dst, c, self.get(r, c));
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) as u8).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for BinaryMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::ConstraintViolation {
                constraint: "binary",
                detail: "pairing entries must be 0 or 1".into(),
            });
        }
        let rows: Vec<Vec<bool>> = rows.into_iter().map(|r| r.into_iter().map(|v| v == 1).collect()).collect();
        Self::from_rows(&rows)
    }
}

impl From<BinaryMatrix> for Vec<Vec<u8>> {
    fn from(m: BinaryMatrix) -> Self {
        m.to_rows()
    }
}
