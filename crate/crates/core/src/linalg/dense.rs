use std::ops::{Index, IndexMut};

/// Small row-major dense matrix used for element tables and local blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Gauss-Jordan inverse with partial pivoting; None if singular.
    pub fn inverse(&self) -> Option<Mat> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::zeros(n, n);
        for i in 0..n {
            inv[(i, i)] = 1.0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs()))?;
            if a[(p, c)].abs() < 1e-300 {
                return None;
            }
            if p != c {
                for j in 0..n {
                    a.data.swap(p * n + j, c * n + j);
                    inv.data.swap(p * n + j, c * n + j);
                }
            }
            let d = 1.0 / a[(c, c)];
            for j in 0..n {
                a[(c, j)] *= d;
                inv[(c, j)] *= d;
            }
            for i in 0..n {
                if i != c {
                    let f = a[(i, c)];
                    if f != 0.0 {
                        for j in 0..n {
                            a[(i, j)] -= f * a[(c, j)];
                            inv[(i, j)] -= f * inv[(c, j)];
                        }
                    }
                }
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}
