//! Minimal bindings to the UMFPACK sparse LU of SuiteSparse (`dl` variant:
//! 64-bit indices, real values).

use std::ffi::c_void;
use std::os::raw::c_int;
use std::ptr;

use crate::error::{Error, Result};

const CONTROL: usize = 20;
const INFO: usize = 90;
const PRL: usize = 0;
const STRATEGY: usize = 5;
const STRATEGY_SYMMETRIC: f64 = 3.0;
const STATUS_OK: c_int = 0;
const WARNING_SINGULAR: c_int = 1;
const SYS_A: c_int = 0;
const FLOPS: usize = 42;
const LNZ: usize = 43;
const UNZ: usize = 44;
const NUMERIC_WALLTIME: usize = 75;

#[link(name = "umfpack")]
extern "C" {
    fn umfpack_dl_defaults(control: *mut f64);
    fn umfpack_dl_symbolic(
        n_row: i64,
        n_col: i64,
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        symbolic: *mut *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> c_int;
    fn umfpack_dl_numeric(
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        symbolic: *mut c_void,
        numeric: *mut *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> c_int;
    fn umfpack_dl_solve(
        sys: c_int,
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        x: *mut f64,
        b: *const f64,
        numeric: *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> c_int;
    fn umfpack_dl_free_symbolic(symbolic: *mut *mut c_void);
    fn umfpack_dl_free_numeric(numeric: *mut *mut c_void);
}

fn control() -> [f64; CONTROL] {
    let mut c = [0.0; CONTROL];
    // SAFETY: `c` has the documented length.
    unsafe { umfpack_dl_defaults(c.as_mut_ptr()) };
    c[PRL] = 0.0;
    // symmetric ordering of A + A^T with diagonal-preferring pivots
    c[STRATEGY] = STRATEGY_SYMMETRIC;
    c
}

fn check(status: c_int, what: &str) -> Result<()> {
    match status {
        STATUS_OK => Ok(()),
        WARNING_SINGULAR => Err(Error::LinearSolve(format!("{what}: matrix is singular"))),
        s => Err(Error::LinearSolve(format!("{what}: umfpack status {s}"))),
    }
}

/// Symbolic analysis of one sparsity pattern.
pub(crate) struct Symbolic {
    handle: *mut c_void,
    n: usize,
    col_ptr: Vec<i64>,
    row_idx: Vec<i64>,
    control: [f64; CONTROL],
}

// SAFETY: the handle owns plain heap memory that UMFPACK only reads after
// construction; no thread-local state is involved.
unsafe impl Send for Symbolic {}
unsafe impl Sync for Symbolic {}

impl Drop for Symbolic {
    fn drop(&mut self) {
        // SAFETY: handle was produced by umfpack_dl_symbolic.
        unsafe { umfpack_dl_free_symbolic(&mut self.handle) };
    }
}

pub(crate) struct Numeric {
    handle: *mut c_void,
}

// SAFETY: as for `Symbolic`.
unsafe impl Send for Numeric {}

impl Drop for Numeric {
    fn drop(&mut self) {
        // SAFETY: handle was produced by umfpack_dl_numeric.
        unsafe { umfpack_dl_free_numeric(&mut self.handle) };
    }
}

impl Symbolic {
    pub(crate) fn new(n: usize, col_ptr: &[usize], row_idx: &[usize], values: &[f64]) -> Result<Self> {
        let mut s = Symbolic {
            handle: ptr::null_mut(),
            n,
            col_ptr: col_ptr.iter().map(|&v| v as i64).collect(),
            row_idx: row_idx.iter().map(|&v| v as i64).collect(),
            control: control(),
        };
        let mut info = [0.0; INFO];
        // SAFETY: arrays describe a valid n x n CSC matrix and outlive the call.
        let status = unsafe {
            umfpack_dl_symbolic(
                n as i64,
                n as i64,
                s.col_ptr.as_ptr(),
                s.row_idx.as_ptr(),
                values.as_ptr(),
                &mut s.handle,
                s.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        check(status, "symbolic analysis")?;
        log::trace!("umfpack: ordering {} strategy {} flops estimate {:.3e}", info[19], info[18], info[22]);
        Ok(s)
    }

    pub(crate) fn factor(&self, values: &[f64]) -> Result<Numeric> {
        assert_eq!(values.len(), self.row_idx.len(), "values do not match the analysed pattern");
        let mut num = Numeric { handle: ptr::null_mut() };
        let mut info = [0.0; INFO];
        // SAFETY: same pattern as the analysis; values has nnz entries.
        let status = unsafe {
            umfpack_dl_numeric(
                self.col_ptr.as_ptr(),
                self.row_idx.as_ptr(),
                values.as_ptr(),
                self.handle,
                &mut num.handle,
                self.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        check(status, "factorisation")?;
        log::trace!(
            "umfpack: nnz(L) {} nnz(U) {} flops {:.3e} time {:.3} s",
            info[LNZ],
            info[UNZ],
            info[FLOPS],
            info[NUMERIC_WALLTIME]
        );
        Ok(num)
    }

    /// Solves `A x = b` with UMFPACK's own iterative refinement.
    pub(crate) fn solve(&self, num: &Numeric, values: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        let mut info = [0.0; INFO];
        // SAFETY: x and b have length n; num was factored from this analysis.
        let status = unsafe {
            umfpack_dl_solve(
                SYS_A,
                self.col_ptr.as_ptr(),
                self.row_idx.as_ptr(),
                values.as_ptr(),
                x.as_mut_ptr(),
                b.as_ptr(),
                num.handle,
                self.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        check(status, "solve")?;
        Ok(x)
    }
}
