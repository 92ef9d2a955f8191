//! Dense bin-by-frame grids with per-element validity masks.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major `rows × cols` storage. Rows are frequency bins, columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid { rows, cols, data: vec![value; rows * cols] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} elements for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Boolean validity mask; `true` means the element is defined.
pub type Mask = Grid<bool>;

/// Complex time-frequency representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub data: Grid<Complex64>,
    pub mask: Mask,
}

impl ComplexGrid {
    pub fn new(data: Grid<Complex64>, mask: Mask) -> Result<Self> {
        check_shapes(data.shape(), mask.shape())?;
        Ok(ComplexGrid { data, mask })
    }

    pub fn fully_defined(data: Grid<Complex64>) -> Self {
        let mask = Grid::filled(data.rows(), data.cols(), true);
        ComplexGrid { data, mask }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }
}

/// Real grid with a validity mask (phases, IF, GD, power).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedGrid {
    pub data: Grid<f64>,
    pub mask: Mask,
}

impl MaskedGrid {
    pub fn new(data: Grid<f64>, mask: Mask) -> Result<Self> {
        check_shapes(data.shape(), mask.shape())?;
        Ok(MaskedGrid { data, mask })
    }

    pub fn fully_defined(data: Grid<f64>) -> Self {
        let mask = Grid::filled(data.rows(), data.cols(), true);
        MaskedGrid { data, mask }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    /// Replace every undefined entry with the sentinel 0.
    pub fn finalize(mut self) -> Self {
        for (v, &m) in self.data.as_mut_slice().iter_mut().zip(self.mask.as_slice()) {
            if !m {
                *v = 0.0;
            }
        }
        self
    }

    pub fn is_defined(&self, r: usize, c: usize) -> bool {
        *self.mask.get(r, c)
    }
}

pub(crate) fn check_shapes(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Grid::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn finalize_zeroes_masked_entries() {
        let data = Grid::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let mask = Grid::from_vec(1, 3, vec![true, false, true]).unwrap();
        let g = MaskedGrid::new(data, mask).unwrap().finalize();
        assert_eq!(g.data.as_slice(), &[1.0, 0.0, 3.0]);
    }

    #[test]
    fn mismatched_mask_is_rejected() {
        let data = Grid::filled(2, 2, 0.0);
        let mask = Grid::filled(2, 3, true);
        assert!(MaskedGrid::new(data, mask).is_err());
    }
}
