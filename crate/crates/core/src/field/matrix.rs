use std::ops::{Index, IndexMut};

use super::{FieldError, PrimeField};

/// Dense row-major matrix over `F_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self, FieldError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(FieldError::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// `b[i][j] = ids[j]^i` for `i` in `0..degree_rows`.
    pub fn vandermonde(field: &PrimeField, ids: &[u64], degree_rows: usize) -> Self {
        let mut m = Self::zeros(degree_rows, ids.len());
        for (j, &id) in ids.iter().enumerate() {
            let mut pw = 1 % field.modulus();
            for i in 0..degree_rows {
                m[(i, j)] = pw;
                pw = field.mul_wide(pw, id);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self[(i, j)] == u64::from(i == j)))
    }

    pub fn mul(&self, other: &Matrix, field: &PrimeField) -> Result<Matrix, FieldError> {
        if self.cols != other.rows {
            return Err(FieldError::Shape(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let col = other.column(j);
                out[(i, j)] = field.dot(self.row(i), &col);
            }
        }
        Ok(out)
    }

    /// Gauss-Jordan inversion over `F_p`.
    pub fn inverse(&self, field: &PrimeField) -> Result<Matrix, FieldError> {
        if self.rows != self.cols {
            return Err(FieldError::Shape(format!(
                "cannot invert {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| a[(r, col)] != 0)
                .ok_or(FieldError::SingularMatrix)?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let scale = field.inv(a[(col, col)])?;
            a.scale_row(col, scale, field);
            inv.scale_row(col, scale, field);
            for r in 0..n {
                if r != col && a[(r, col)] != 0 {
                    let factor = a[(r, col)];
                    a.sub_scaled_row(r, col, factor, field);
                    inv.sub_scaled_row(r, col, factor, field);
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    fn scale_row(&mut self, i: usize, s: u64, field: &PrimeField) {
        for c in 0..self.cols {
            self[(i, c)] = field.mul_wide(self[(i, c)], s);
        }
    }

    // row[target] -= factor * row[src]
    fn sub_scaled_row(&mut self, target: usize, src: usize, factor: u64, field: &PrimeField) {
        for c in 0..self.cols {
            let v = field.mul_wide(self[(src, c)], factor);
            self[(target, c)] = field.sub(self[(target, c)], v);
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = u64;

    fn index(&self, (r, c): (usize, usize)) -> &u64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut u64 {
        &mut self.data[r * self.cols + c]
    }
}
