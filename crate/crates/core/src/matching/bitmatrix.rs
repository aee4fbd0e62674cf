use serde::{Deserialize, Serialize};

/// Dense boolean matrix stored one bit per entry, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        BitMatrix { rows, cols, words, data: vec![0; rows * words] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        BitMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.rows && j < self.cols);
        (self.data[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let w = &mut self.data[i * self.words + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    /// Packed words of row `i`; bit `j % 64` of word `j / 64` is entry `(i, j)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.words..(i + 1) * self.words]
    }

    pub fn transpose(&self) -> BitMatrix {
        BitMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copy padded with all-false rows and columns to `n x n`.
    pub fn padded_square(&self) -> BitMatrix {
        let n = self.rows.max(self.cols);
        let mut out = BitMatrix::new(n, n);
        for i in 0..self.rows {
            out.row_mut(i)[..self.words].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_transpose() {
        let mut m = BitMatrix::new(3, 70);
        m.set(0, 0, true);
        m.set(2, 69, true);
        m.set(1, 64, true);
        assert!(m.get(0, 0) && m.get(2, 69) && m.get(1, 64));
        assert!(!m.get(1, 63));
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (70, 3));
        assert!(t.get(69, 2) && t.get(64, 1));
        m.set(2, 69, false);
        assert_eq!(m.count_ones(), 2);
        let p = m.padded_square();
        assert_eq!((p.rows(), p.cols()), (70, 70));
        assert!(p.get(1, 64) && !p.get(69, 69));
    }
}
