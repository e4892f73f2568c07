use super::{LinearOperator, Mat, SparseMatrix};

/// Sparse copy of a small dense block.
#[derive(Debug, Clone)]
pub struct LocalBlock {
    pub size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl LocalBlock {
    pub fn from_dense(m: &Mat) -> Self {
        assert_eq!(m.rows, m.cols);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..m.rows {
            for j in 0..m.cols {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        LocalBlock { size: m.rows, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// An operator assembled from repeated local blocks. Each instance maps the
/// block's index range, split into segments of length `seg`, to global
/// offsets (one segment per cell touched by the block).
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub n: usize,
    pub seg: usize,
    blocks: Vec<LocalBlock>,
    instances: Vec<(usize, [usize; 2])>,
}

impl BlockOperator {
    pub fn new(n: usize, seg: usize) -> Self {
        BlockOperator { n, seg, blocks: Vec::new(), instances: Vec::new() }
    }

    pub fn add_block(&mut self, block: LocalBlock) -> usize {
        assert!(block.size == self.seg || block.size == 2 * self.seg);
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    /// Place block `b` on the cells whose dof ranges start at `offsets`.
    pub fn add_instance(&mut self, b: usize, offsets: [usize; 2]) {
        self.instances.push((b, offsets));
    }

    #[inline]
    fn global(&self, offsets: &[usize; 2], r: usize) -> usize {
        offsets[r / self.seg] + r % self.seg
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let mut t = Vec::new();
        for (b, off) in &self.instances {
            let blk = &self.blocks[*b];
            for r in 0..blk.size {
                let gr = self.global(off, r);
                for p in blk.row_ptr[r]..blk.row_ptr[r + 1] {
                    t.push((gr, self.global(off, blk.cols[p]), blk.vals[p]));
                }
            }
        }
        SparseMatrix::from_triplets(self.n, &t)
    }
}

impl LinearOperator for BlockOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y[..self.n].iter_mut().for_each(|v| *v = 0.0);
        let seg = self.seg;
        for (b, off) in &self.instances {
            let blk = &self.blocks[*b];
            if blk.size == seg {
                let xs = &x[off[0]..off[0] + seg];
                for r in 0..seg {
                    let mut s = 0.0;
                    for p in blk.row_ptr[r]..blk.row_ptr[r + 1] {
                        s += blk.vals[p] * xs[blk.cols[p]];
                    }
                    y[off[0] + r] += s;
                }
            } else {
                for r in 0..blk.size {
                    let mut s = 0.0;
                    for p in blk.row_ptr[r]..blk.row_ptr[r + 1] {
                        let c = blk.cols[p];
                        s += blk.vals[p] * x[off[c / seg] + c % seg];
                    }
                    y[off[r / seg] + r % seg] += s;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (b, off) in &self.instances {
            let blk = &self.blocks[*b];
            for r in 0..blk.size {
                let gr = self.global(off, r);
                for p in blk.row_ptr[r]..blk.row_ptr[r + 1] {
                    if self.global(off, blk.cols[p]) == gr {
                        d[gr] += blk.vals[p];
                    }
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_apply_matches_sparse() {
        let mut cell = Mat::zeros(2, 2);
        cell.data = vec![2.0, -1.0, 0.5, 3.0];
        let mut face = Mat::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                face[(i, j)] = ((i * 4 + j) as f64 * 0.37).sin();
            }
        }
        let mut op = BlockOperator::new(6, 2);
        let c = op.add_block(LocalBlock::from_dense(&cell));
        let f = op.add_block(LocalBlock::from_dense(&face));
        for k in 0..3 {
            op.add_instance(c, [2 * k, 0]);
        }
        op.add_instance(f, [0, 2]);
        op.add_instance(f, [2, 4]);
        op.add_instance(f, [4, 0]);
        let s = op.to_sparse();
        let x: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
        let mut y1 = vec![0.0; 6];
        let mut y2 = vec![0.0; 6];
        op.apply(&x, &mut y1);
        s.apply(&x, &mut y2);
        for i in 0..6 {
            assert!((y1[i] - y2[i]).abs() < 1e-13);
        }
        assert_eq!(op.diagonal(), s.diagonal());
    }
}
