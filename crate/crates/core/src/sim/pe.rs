//! Register-transfer model of a chain of nsPEs.
//!
//! A [`PeArray`] is one logical array: `len` PEs connected top to bottom.
//! Registers are kept as parallel vectors so a cycle is a few tight loops.

use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::vsa::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeMode {
    Load,
    Gemm,
    CircConv,
}

impl PeMode {
    pub fn name(self) -> &'static str {
        match self {
            PeMode::Load => "load",
            PeMode::Gemm => "gemm",
            PeMode::CircConv => "circconv",
        }
    }
}

/// Snapshot of one PE's registers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeState<T> {
    pub stationary: T,
    pub passing: T,
    pub streaming: T,
    pub psum: T,
    pub mode: PeMode,
}

/// One row of the per-cycle register trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub cycle: u64,
    pub cell: usize,
    pub column: usize,
    pub pe: usize,
    pub mode: PeMode,
    pub stationary: f64,
    pub passing: f64,
    pub streaming: f64,
    pub psum: f64,
}

#[derive(Clone, Debug)]
pub struct PeArray<T: Scalar> {
    pub(crate) stationary: Vec<T>,
    pub(crate) passing: Vec<T>,
    pub(crate) streaming: Vec<T>,
    pub(crate) psum: Vec<T>,
    mode: PeMode,
    cycle: u64,
    trace: Option<(usize, usize, Vec<TraceRow>)>,
}

impl<T: Scalar> PeArray<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("array needs at least one PE".into()));
        }
        Ok(Self {
            stationary: vec![T::ZERO; len],
            passing: vec![T::ZERO; len],
            streaming: vec![T::ZERO; len],
            psum: vec![T::ZERO; len],
            mode: PeMode::Load,
            cycle: 0,
            trace: None,
        })
    }

    pub fn len(&self) -> usize {
        self.stationary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stationary.is_empty()
    }

    pub fn mode(&self) -> PeMode {
        self.mode
    }

    /// Cycles clocked since construction.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn state(&self, pe: usize) -> PeState<T> {
        PeState {
            stationary: self.stationary[pe],
            passing: self.passing[pe],
            streaming: self.streaming[pe],
            psum: self.psum[pe],
            mode: self.mode,
        }
    }

    pub fn stationary(&self) -> &[T] {
        &self.stationary
    }

    /// Switching into a compute mode clears the datapath registers; the
    /// stationary register is kept.
    pub fn set_mode(&mut self, mode: PeMode) {
        if mode != self.mode && mode != PeMode::Load {
            self.passing.fill(T::ZERO);
            self.streaming.fill(T::ZERO);
            self.psum.fill(T::ZERO);
        }
        self.mode = mode;
    }

    pub fn enable_trace(&mut self, cell: usize, column: usize) {
        self.trace = Some((cell, column, Vec::new()));
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.as_mut().map(|(_, _, rows)| std::mem::take(rows)).unwrap_or_default()
    }

    pub(crate) fn tick(&mut self) {
        self.cycle += 1;
        if let Some((cell, column, rows)) = &mut self.trace {
            for pe in 0..self.stationary.len() {
                rows.push(TraceRow {
                    cycle: self.cycle - 1,
                    cell: *cell,
                    column: *column,
                    pe,
                    mode: self.mode,
                    stationary: self.stationary[pe].to_f64(),
                    passing: self.passing[pe].to_f64(),
                    streaming: self.streaming[pe].to_f64(),
                    psum: self.psum[pe].to_f64(),
                });
            }
        }
    }

    fn require(&self, mode: PeMode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::ModeConflict { expected: mode.name(), found: self.mode.name() })
        }
    }

    /// One load cycle: the stationary registers shift down by one PE and
    /// `input` enters at the top.
    pub fn shift_load(&mut self, input: T) -> Result<()> {
        self.require(PeMode::Load)?;
        let n = self.len();
        self.stationary.copy_within(..n - 1, 1);
        self.stationary[0] = input;
        self.tick();
        Ok(())
    }

    /// Shifts `target` in from the top so that PE `p` ends up holding
    /// `target[p]`. Takes `len` cycles.
    pub fn load_stationary(&mut self, target: &[T]) -> Result<u64> {
        check_dims(self.len(), target.len())?;
        for &x in target.iter().rev() {
            self.shift_load(x)?;
        }
        Ok(self.len() as u64)
    }

    /// One bubble-streaming cycle.
    ///
    /// Each PE moves its passing value into streaming, takes the upstream
    /// PE's old streaming value into passing, and adds
    /// `stationary × streaming` to the partial sum arriving from above.
    /// `input` enters the top passing register and `psum_top` the top of the
    /// partial-sum chain. Returns the bottom PE's partial sum.
    pub fn step_circconv(&mut self, input: T, psum_top: T) -> Result<T> {
        self.require(PeMode::CircConv)?;
        let n = self.len();
        // new streaming == old passing, so the MAC can read passing directly
        for p in (1..n).rev() {
            self.psum[p] = self.psum[p - 1] + self.stationary[p] * self.passing[p];
        }
        self.psum[0] = psum_top + self.stationary[0] * self.passing[0];
        std::mem::swap(&mut self.streaming, &mut self.passing);
        self.passing.copy_within(..n - 1, 1);
        self.passing[0] = input;
        self.tick();
        Ok(self.psum[n - 1])
    }

    /// Runs one fold tile of a circular convolution.
    ///
    /// The tile covers the `m` stationary elements `a[σ-m+1 ..= σ]` (indices
    /// mod `d`), placed in the bottom `m` PEs, and produces the `d` partial
    /// outputs `Σ a[j]·b[n-j]` over those `j`. `psum_in[n]`, when given, is
    /// added into output `n`, which accumulates folds at no extra cost.
    /// Stream element `i` is `b[(i-σ) mod d]`, so a full tile with `σ = 0`
    /// streams `b[0..d-1]` then `b[0..d-2]`.
    ///
    /// Takes `3·len + d - 1` cycles: `len` to load, then output `n` leaves
    /// the bottom PE `2·len + n` cycles later.
    pub fn run_circconv_tile(
        &mut self,
        a: &[T],
        b: &[T],
        sigma: usize,
        m: usize,
        psum_in: Option<&[T]>,
    ) -> Result<(Vec<T>, u64)> {
        let d = b.len();
        let len = self.len();
        check_dims(d, a.len())?;
        if d == 0 || m == 0 || m > d || m > len {
            return Err(Error::InvalidInput(format!(
                "tile of {m} stationary elements does not fit d={d} on {len} PEs"
            )));
        }
        if let Some(p) = psum_in {
            check_dims(d, p.len())?;
        }
        if self.mode == PeMode::Gemm {
            return Err(Error::ModeConflict { expected: PeMode::CircConv.name(), found: PeMode::Gemm.name() });
        }

        let start = self.cycle;
        let mut target = vec![T::ZERO; len];
        for p in len - m..len {
            // PE p multiplies stream index n + len-1-p into output n
            let idx = (p + sigma + d * len - (len - 1)) % d;
            target[p] = a[idx];
        }
        self.set_mode(PeMode::Load);
        self.load_stationary(&target)?;
        self.set_mode(PeMode::CircConv);

        let stream_len = d + m - 1;
        let first_out = 2 * len - 1;
        let mut out = Vec::with_capacity(d);
        for c in 0..first_out + d {
            let input = if c < stream_len { b[(c + d - sigma % d) % d] } else { T::ZERO };
            let top = match psum_in {
                Some(p) if c >= len && c - len < d => p[c - len],
                _ => T::ZERO,
            };
            let y = self.step_circconv(input, top)?;
            if c >= first_out {
                out.push(y);
            }
        }
        Ok((out, self.cycle - start))
    }
}
