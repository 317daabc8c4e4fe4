//! Unitary DFT helpers over the columns (fast time) and rows (slow time) of
//! a complex grid. Both directions carry a `1/sqrt(N)` factor so the forward
//! transform is `F_N` and the inverse is its conjugate transpose.

use std::cell::RefCell;

use rustfft::FftPlanner;

use crate::{CMat, Complex64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place unitary DFT of a contiguous buffer.
pub fn dft_in_place(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match dir {
            Direction::Forward => p.plan_fft_forward(n),
            Direction::Inverse => p.plan_fft_inverse(n),
        }
    });
    fft.process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    for x in buf.iter_mut() {
        *x *= scale;
    }
}

/// Transforms every column; equivalent to left-multiplying by `F` or `F^-1`.
pub fn dft_columns(m: &mut CMat, dir: Direction) {
    let rows = m.nrows();
    for col in m.as_mut_slice().chunks_exact_mut(rows) {
        dft_in_place(col, dir);
    }
}

/// Transforms every row; `Forward` is right-multiplication by `F`.
pub fn dft_rows(m: &mut CMat, dir: Direction) {
    let cols = m.ncols();
    let mut buf = vec![Complex64::new(0.0, 0.0); cols];
    for r in 0..m.nrows() {
        for (c, b) in buf.iter_mut().enumerate() {
            *b = m[(r, c)];
        }
        dft_in_place(&mut buf, dir);
        for (c, b) in buf.iter().enumerate() {
            m[(r, c)] = *b;
        }
    }
}

/// Dense unitary DFT matrix, used as an oracle in tests.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |p, q| {
        let phase = -2.0 * std::f64::consts::PI * (p * q) as f64 / n as f64;
        Complex64::from_polar(scale, phase)
    })
}
