//! Small dense helpers shared by the encoder, heads, and losses.
//!
//! Everything operates on `ndarray` matrices of `f64`. The softmax and its
//! backward are kept here because three different layers need the exact
//! same row-wise formulation.

use ndarray::{Array1, Array2};

pub type Mat = Array2<f64>;
pub type Vec1 = Array1<f64>;

/// Row-wise softmax with max-subtraction for stability.
/// Every output row sums to 1 and is strictly positive.
pub fn row_softmax(z: &Mat) -> Mat {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Backward of [`row_softmax`]: given `p = row_softmax(z)` and `dL/dp`,
/// returns `dL/dz`. Row-wise: `dz_i = p_i * (dp_i - sum_k dp_k p_k)`.
pub fn row_softmax_backward(p: &Mat, dp: &Mat) -> Mat {
    let mut dz = Mat::zeros(p.raw_dim());
    for (i, (p_row, dp_row)) in p.rows().into_iter().zip(dp.rows()).enumerate() {
        let dot: f64 = p_row.iter().zip(dp_row.iter()).map(|(a, b)| a * b).sum();
        for (j, (&pv, &dpv)) in p_row.iter().zip(dp_row.iter()).enumerate() {
            dz[[i, j]] = pv * (dpv - dot);
        }
    }
    dz
}

pub fn relu(x: &Mat) -> Mat {
    x.mapv(|v| v.max(0.0))
}

/// Backward of ReLU given the pre-activation `z` and upstream grad `dy`.
/// The subgradient at exactly 0 is taken as 0.
pub fn relu_backward(z: &Mat, dy: &Mat) -> Mat {
    let mut dz = dy.clone();
    dz.zip_mut_with(z, |d, &zv| {
        if zv <= 0.0 {
            *d = 0.0;
        }
    });
    dz
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// log(sum(exp(z))) with max-subtraction.
pub fn logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Concatenate two matrices with equal row counts along columns.
pub fn hcat(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let (n, ca, cb) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Mat::zeros((n, ca + cb));
    out.slice_mut(ndarray::s![.., ..ca]).assign(a);
    out.slice_mut(ndarray::s![.., ca..]).assign(b);
    out
}

/// Frobenius norm.
pub fn fro_norm(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
