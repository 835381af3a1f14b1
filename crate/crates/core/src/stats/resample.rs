use crate::numerics::Matrix;

/// Mean resampling of `v` to `l_new` values.
///
/// With `rho = L_old / L_new >= 1`, output `i` is the mean of the half-open region
/// `[floor(i * rho), floor((i + 1) * rho))`; regions are computed in integer
/// arithmetic so they tile `v` exactly. Any part of a region past the end of `v`
/// counts as copies of the last value. When upsampling (`rho < 1`) every output is
/// a copy of the element nearest its centre, `v[floor((i + 1/2) * rho)]`.
///
/// Panics if `v` is empty or `l_new` is zero.
pub fn resample_1d(v: &[f64], l_new: usize) -> Vec<f64> {
    assert!(!v.is_empty(), "resample_1d on an empty vector");
    assert!(l_new >= 1, "resample_1d to length zero");
    let l_old = v.len();
    if l_new > l_old {
        return (0..l_new)
            .map(|i| v[((2 * i + 1) * l_old / (2 * l_new)).min(l_old - 1)])
            .collect();
    }
    let last = v[l_old - 1];
    (0..l_new)
        .map(|i| {
            let start = i * l_old / l_new;
            let end = (i + 1) * l_old / l_new;
            if end <= start {
                return v[start.min(l_old - 1)];
            }
            let inside = end.min(l_old);
            let sum: f64 = v[start.min(l_old)..inside].iter().sum::<f64>()
                + last * (end - inside.max(start)) as f64;
            sum / (end - start) as f64
        })
        .collect()
}

/// Resamples every row to `cols_new`, then every column of the result to `rows_new`.
pub fn resample_2d(m: &Matrix, rows_new: usize, cols_new: usize) -> Matrix {
    assert!(
        m.rows() > 0 && m.cols() > 0,
        "resample_2d on an empty matrix"
    );
    let mut wide = Matrix::zeros(m.rows(), cols_new);
    for i in 0..m.rows() {
        wide.row_mut(i)
            .copy_from_slice(&resample_1d(m.row(i), cols_new));
    }
    let mut out = Matrix::zeros(rows_new, cols_new);
    for j in 0..cols_new {
        for (i, v) in resample_1d(&wide.column(j), rows_new)
            .into_iter()
            .enumerate()
        {
            out[(i, j)] = v;
        }
    }
    out
}
