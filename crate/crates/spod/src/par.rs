//! Data-parallel loop wrappers.
//!
//! With the `parallel` feature on, the per-column and per-frame loops run on
//! the rayon pool; without it they run sequentially. Outputs are written into
//! preassigned slots and all reductions elsewhere stay sequential and
//! fixed-order, so results are bit-identical across thread counts and with
//! the feature off.

use nalgebra::DMatrix;

/// Applies `f(j, input_col, output_col)` over matching column slices of two
/// equally shaped matrices.
pub(crate) fn for_each_column_pair<F>(input: &DMatrix<f64>, output: &mut DMatrix<f64>, f: F)
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let rows = input.nrows();
    assert_eq!(output.nrows(), rows);
    assert_eq!(output.ncols(), input.ncols());
    if rows == 0 {
        return;
    }
    let src = input.as_slice();
    let dst = output.as_mut_slice();

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        dst.par_chunks_mut(rows)
            .zip(src.par_chunks(rows))
            .enumerate()
            .for_each(|(j, (out_col, in_col))| f(j, in_col, out_col));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (j, (out_col, in_col)) in dst.chunks_mut(rows).zip(src.chunks(rows)).enumerate() {
            f(j, in_col, out_col);
        }
    }
}

/// Collects `f(0), .., f(len - 1)` in index order, evaluating in parallel
/// when enabled. Used for per-frame work such as factorizations.
pub(crate) fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}
