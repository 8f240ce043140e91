//! A physical systolic cell: `rows × cols` PEs organised as `cols` PE
//! chains. GEMM mode links the chains horizontally through the streaming
//! registers; circconv mode runs each chain as an independent array.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::sim::pe::{PeArray, PeMode, TraceRow};
use crate::vsa::{reverse_circular, Hypervector, Scalar};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Reference product by the direct triple loop.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dims(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = T::ZERO;
                for k in 0..self.cols {
                    acc = acc + self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }
}

/// Result of a GEMV-baseline circular convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun<T: Scalar> {
    pub output: Hypervector<T>,
    pub cycles: u64,
    /// Elements of the materialised circulant matrix.
    pub footprint_elems: u64,
    pub tiles: u64,
}

#[derive(Clone, Debug)]
pub struct SystolicCell<T: Scalar> {
    id: usize,
    rows: usize,
    columns: Vec<PeArray<T>>,
    /// Registers between the left input links and column 0.
    edge: Vec<T>,
    macs: u64,
}

impl<T: Scalar> SystolicCell<T> {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_id(0, rows, cols)
    }

    pub fn with_id(id: usize, rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidInput("cell needs at least one column".into()));
        }
        let columns = (0..cols).map(|_| PeArray::new(rows)).collect::<Result<Vec<_>>>()?;
        Ok(Self { id, rows, columns, edge: vec![T::ZERO; rows], macs: 0 })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn mode(&self) -> PeMode {
        self.columns[0].mode()
    }

    /// Cycles elapsed on this cell.
    pub fn cycle(&self) -> u64 {
        self.columns.iter().map(PeArray::cycle).max().unwrap_or(0)
    }

    /// MACs that contributed to a delivered output.
    pub fn useful_macs(&self) -> u64 {
        self.macs
    }

    pub fn column(&self, c: usize) -> &PeArray<T> {
        &self.columns[c]
    }

    pub fn set_mode(&mut self, mode: PeMode) {
        for col in &mut self.columns {
            col.set_mode(mode);
        }
        if mode != PeMode::Load {
            self.edge.fill(T::ZERO);
        }
    }

    pub fn enable_trace(&mut self) {
        let id = self.id;
        for (c, col) in self.columns.iter_mut().enumerate() {
            col.enable_trace(id, c);
        }
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        let mut rows: Vec<TraceRow> = self.columns.iter_mut().flat_map(|c| c.take_trace()).collect();
        rows.sort_by_key(|r| (r.cycle, r.column, r.pe));
        rows
    }

    fn gemm_step(&mut self, left_in: &[T]) -> Vec<T> {
        let cols = self.columns.len();
        for r in 0..self.rows {
            for c in (1..cols).rev() {
                let (left, right) = self.columns.split_at_mut(c);
                right[0].streaming[r] = left[c - 1].streaming[r];
            }
            self.columns[0].streaming[r] = self.edge[r];
            self.edge[r] = left_in[r];
        }
        let mut bottom = Vec::with_capacity(cols);
        for col in &mut self.columns {
            for r in (1..self.rows).rev() {
                col.psum[r] = col.psum[r - 1] + col.stationary[r] * col.streaming[r];
            }
            col.psum[0] = col.stationary[0] * col.streaming[0];
            bottom.push(col.psum[self.rows - 1]);
            col.tick();
        }
        bottom
    }

    /// Weight-stationary GEMM `Y = W·X`.
    ///
    /// `W[i][j]` sits in PE (row `j`, column `i`); row `j` of `X` streams in
    /// from the left, skewed by `j` cycles, and column `i` emits row `i` of
    /// `Y`. Takes `rows + (rows + cols + K - 1)` cycles, i.e. `3M + K - 1` on
    /// an `M × M` cell.
    pub fn run_gemm(&mut self, w: &Matrix<T>, x: &Matrix<T>) -> Result<(Matrix<T>, u64)> {
        let (rows, cols) = (self.rows, self.cols());
        if w.rows > cols || w.cols > rows {
            return Err(Error::InvalidInput(format!(
                "weight matrix {}×{} does not fit a {}×{} cell",
                w.rows, w.cols, rows, cols
            )));
        }
        check_dims(w.cols, x.rows)?;
        if self.mode() == PeMode::CircConv {
            return Err(Error::ModeConflict { expected: PeMode::Gemm.name(), found: PeMode::CircConv.name() });
        }
        let k = x.cols;
        let start = self.cycle();

        self.set_mode(PeMode::Load);
        for (c, col) in self.columns.iter_mut().enumerate() {
            let target: Vec<T> =
                (0..rows).map(|r| if c < w.rows && r < w.cols { w.get(c, r) } else { T::ZERO }).collect();
            col.load_stationary(&target)?;
        }
        self.set_mode(PeMode::Gemm);

        let mut y = Matrix::zeros(w.rows, k);
        let mut left = vec![T::ZERO; rows];
        for t in 0..rows + cols + k - 1 {
            for (r, slot) in left.iter_mut().enumerate() {
                *slot = if r < x.rows && t >= r && t - r < k { x.get(r, t - r) } else { T::ZERO };
            }
            let bottom = self.gemm_step(&left);
            for (c, &v) in bottom.iter().enumerate().take(w.rows) {
                if t >= rows + c && t - rows - c < k {
                    y.set(c, t - rows - c, v);
                }
            }
        }
        self.macs += (w.rows * w.cols * k) as u64;
        Ok((y, self.cycle() - start))
    }

    /// Circular convolutions on independent columns, one pair per column,
    /// all in the same `3·rows + d - 1` cycles.
    pub fn run_circconv_columns(
        &mut self,
        pairs: &[(&Hypervector<T>, &Hypervector<T>)],
    ) -> Result<(Vec<Hypervector<T>>, u64)> {
        if pairs.len() > self.cols() {
            return Err(Error::InvalidInput(format!(
                "{} convolutions exceed {} columns",
                pairs.len(),
                self.cols()
            )));
        }
        let mut outs = Vec::with_capacity(pairs.len());
        let mut cycles = 0;
        let start = self.cycle();
        for (col, (a, b)) in self.columns.iter_mut().zip(pairs) {
            let d = check_pair(a, b, col.len())?;
            let (y, c) = col.run_circconv_tile(a.as_slice(), b.as_slice(), 0, d, None)?;
            self.macs += (d * d) as u64;
            cycles = cycles.max(c);
            outs.push(Hypervector::real(y)?);
        }
        // idle columns advance in lockstep
        let end = start + cycles;
        for col in &mut self.columns {
            while col.cycle() < end {
                col.tick();
            }
        }
        Ok((outs, cycles))
    }

    /// Circular convolution through the circulant matrix of `a`, tiled as
    /// `⌈d/M⌉²` GEMVs executed one after another.
    pub fn run_gemv_baseline_circconv(&mut self, a: &Hypervector<T>, b: &Hypervector<T>) -> Result<BaselineRun<T>> {
        let d = a.dim();
        check_dims(d, b.dim())?;
        let (m_r, m_c) = (self.rows, self.cols());
        let circulant = |n: usize, j: usize| a[(n + d - j) % d];
        let mut y = vec![T::ZERO; d];
        let mut cycles = 0;
        let mut tiles = 0;
        self.set_mode(PeMode::Load);
        for i0 in (0..d).step_by(m_c) {
            for j0 in (0..d).step_by(m_r) {
                let (ri, rj) = ((d - i0).min(m_c), (d - j0).min(m_r));
                let mut w = Matrix::zeros(ri, rj);
                for i in 0..ri {
                    for j in 0..rj {
                        w.set(i, j, circulant(i0 + i, j0 + j));
                    }
                }
                let x = Matrix::new(rj, 1, b.as_slice()[j0..j0 + rj].to_vec())?;
                let (part, c) = self.run_gemm(&w, &x)?;
                for i in 0..ri {
                    y[i0 + i] = y[i0 + i] + part.get(i, 0);
                }
                cycles += c;
                tiles += 1;
            }
        }
        Ok(BaselineRun {
            output: Hypervector::real(y)?,
            cycles,
            footprint_elems: (d * d) as u64,
            tiles,
        })
    }
}

fn check_pair<T: Scalar>(a: &Hypervector<T>, b: &Hypervector<T>, len: usize) -> Result<usize> {
    let d = a.dim();
    check_dims(d, b.dim())?;
    if d > len {
        return Err(Error::InvalidInput(format!(
            "d={d} exceeds the {len}-PE array; fold it through the mapping module"
        )));
    }
    Ok(d)
}

/// Bubble-streaming circular convolution of `a` and `b` on one PE chain.
/// Needs `d ≤ len`; takes `3·len + d - 1` cycles.
pub fn run_circconv_bs<T: Scalar>(
    array: &mut PeArray<T>,
    a: &Hypervector<T>,
    b: &Hypervector<T>,
) -> Result<(Hypervector<T>, u64)> {
    let d = check_pair(a, b, array.len())?;
    let (y, cycles) = array.run_circconv_tile(a.as_slice(), b.as_slice(), 0, d, None)?;
    Ok((Hypervector::real(y)?, cycles))
}

/// Circular correlation on the same datapath, loading `a` reversed.
pub fn run_circcorr_bs<T: Scalar>(
    array: &mut PeArray<T>,
    a: &Hypervector<T>,
    b: &Hypervector<T>,
) -> Result<(Hypervector<T>, u64)> {
    run_circconv_bs(array, &reverse_circular(a), b)
}

/// Elements held by the bubble-streaming dataflow for one convolution:
/// `a`, `b` and the output.
pub fn bs_footprint_elems(d: usize) -> u64 {
    3 * d as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vsa::circ_conv;

    fn hv(v: &[i32]) -> Hypervector<i32> {
        Hypervector::real(v.to_vec()).unwrap()
    }

    #[test]
    fn gemm_identity_passes_input_through() {
        let mut cell = SystolicCell::<i32>::new(2, 2).unwrap();
        let x = Matrix::new(2, 1, vec![5, -3]).unwrap();
        let (y, cycles) = cell.run_gemm(&Matrix::identity(2), &x).unwrap();
        assert_eq!(y, x);
        assert_eq!(cycles, 6);
    }

    #[test]
    fn gemm_small_product() {
        let mut cell = SystolicCell::<i32>::new(3, 3).unwrap();
        let w = Matrix::new(3, 3, vec![1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let x = Matrix::new(3, 2, vec![1, 0, -1, 2, 3, 1]).unwrap();
        let (y, cycles) = cell.run_gemm(&w, &x).unwrap();
        assert_eq!(y, w.matmul(&x).unwrap());
        assert_eq!(cycles, 3 * 3 + 2 - 1);
    }

    #[test]
    fn gemm_rejects_oversized_weights() {
        let mut cell = SystolicCell::<i32>::new(2, 2).unwrap();
        let w = Matrix::zeros(3, 2);
        assert!(cell.run_gemm(&w, &Matrix::zeros(2, 1)).is_err());
        let w = Matrix::zeros(2, 2);
        assert!(matches!(cell.run_gemm(&w, &Matrix::zeros(3, 1)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gemm_refuses_cell_in_circconv_mode() {
        let mut cell = SystolicCell::<i32>::new(3, 2).unwrap();
        cell.run_circconv_columns(&[(&hv(&[1, 2]), &hv(&[3, 4]))]).unwrap();
        let err = cell.run_gemm(&Matrix::identity(2), &Matrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::ModeConflict { .. }));
        cell.set_mode(PeMode::Gemm);
        assert!(cell.run_gemm(&Matrix::identity(2), &Matrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn bs_small_example() {
        let mut arr = PeArray::new(3).unwrap();
        let (y, cycles) = run_circconv_bs(&mut arr, &hv(&[1, 2, 3]), &hv(&[4, 5, 6])).unwrap();
        assert_eq!(y.as_slice(), &[31, 31, 28]);
        assert_eq!(cycles, 11);
        let mut arr = PeArray::new(3).unwrap();
        let (y, _) = run_circcorr_bs(&mut arr, &hv(&[1, 2, 3]), &hv(&[4, 5, 6])).unwrap();
        assert_eq!(y.as_slice(), &[32, 29, 29]);
    }

    #[test]
    fn bs_rejects_oversized_vector() {
        let mut arr = PeArray::new(2).unwrap();
        assert!(run_circconv_bs(&mut arr, &hv(&[1, 2, 3]), &hv(&[1, 2, 3])).is_err());
        assert!(run_circconv_bs(&mut arr, &hv(&[1, 2]), &hv(&[1, 2, 3])).is_err());
    }

    #[test]
    fn baseline_matches_reference_and_counts_tiles() {
        let a = hv(&[1, -2, 3, 4, 0, 5, -1]);
        let b = hv(&[2, 2, -3, 1, 1, 0, 4]);
        let mut cell = SystolicCell::new(3, 3).unwrap();
        let run = cell.run_gemv_baseline_circconv(&a, &b).unwrap();
        assert_eq!(run.output, circ_conv(&a, &b).unwrap());
        assert_eq!(run.tiles, 9);
        assert_eq!(run.cycles, 9 * 9);
        assert_eq!(run.footprint_elems, 49);
    }
}
