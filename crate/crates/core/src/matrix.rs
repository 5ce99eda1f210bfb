use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Dense `n x n` matrix stored row-major. Influence matrices are indexed
/// `(from, to)`: row `q`, column `p` is the effect of `q` on `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Off-diagonal entries set to `value`, diagonal zero.
    pub fn off_diagonal(n: usize, value: f64) -> Self {
        let mut m = Self::zeros(n);
        for q in 0..n {
            for p in 0..n {
                if q != p {
                    m[(q, p)] = value;
                }
            }
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for q in 0..n {
            for p in 0..n {
                m[(q, p)] = f(q, p);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.data[q * self.n..(q + 1) * self.n]
    }

    /// Column `p` copied out (incoming influence on `p`).
    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|q| self[(q, p)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn diagonal_is_zero(&self) -> bool {
        (0..self.n).all(|i| self[(i, i)] == 0.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|q| self.row(q).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.n + c]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.n + c]
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Error> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Data(format!("matrix is not square ({n} rows)")));
        }
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.to_rows()
    }
}
