//! Forward/backward contracts of the dense layers used by the classifier.

use alloc::{format, vec, vec::Vec};

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

/// `W·x + b`.
pub fn affine_forward(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    check_affine(x, w, b.len())?;
    Ok((0..w.rows()).map(|r| dot(w.row(r), x) + b[r]).collect())
}

/// Gradients of the affine map for upstream gradient `d_out`.
pub fn affine_backward(x: &[f64], w: &Matrix, d_out: &[f64]) -> Result<(Vec<f64>, Matrix, Vec<f64>)> {
    check_affine(x, w, d_out.len())?;
    let mut d_x = vec![0.0; w.cols()];
    let mut d_w = Matrix::zeros(w.rows(), w.cols());
    for (r, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        axpy(g, w.row(r), &mut d_x);
        axpy(g, x, d_w.row_mut(r));
    }
    Ok((d_x, d_w, d_out.to_vec()))
}

fn check_affine(x: &[f64], w: &Matrix, m: usize) -> Result<()> {
    if x.len() != w.cols() || m != w.rows() {
        return Err(Error::Dimension(format!(
            "affine: W is {}x{}, x has {}, bias/upstream has {m}",
            w.rows(),
            w.cols(),
            x.len()
        )));
    }
    Ok(())
}

/// Shape and window of a 1-d convolution over token rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub window: usize,
    pub in_dim: usize,
    pub filters: usize,
}

impl ConvShape {
    /// Infers the shape from a filter bank laid out as `filters x (window * in_dim)`.
    pub fn infer(filters: &Matrix, in_dim: usize) -> Result<Self> {
        if in_dim == 0 || !filters.cols().is_multiple_of(in_dim) {
            return Err(Error::Dimension(format!(
                "filter width {} is not a multiple of input width {in_dim}",
                filters.cols()
            )));
        }
        let window = filters.cols() / in_dim;
        if window.is_multiple_of(2) {
            return Err(Error::Dimension(format!("convolution window must be odd, got {window}")));
        }
        Ok(Self { window, in_dim, filters: filters.rows() })
    }

    #[inline]
    fn half(&self) -> usize {
        self.window / 2
    }

    /// Clipped input row range for output row `i` over `active` rows, plus
    /// the column offset into the filter.
    #[inline]
    fn span(&self, i: usize, active: usize) -> (usize, usize, usize) {
        let h = self.half();
        let lo = i.saturating_sub(h);
        let hi = (i + h + 1).min(active);
        let offset = (lo + h - i) * self.in_dim;
        (lo, hi, offset)
    }
}

/// Same-padded convolution: `out[i][f] = bias[f] + Σ_j filters[f]·input[j]`
/// over the window centred on row `i`, with rows outside the input read as zero.
pub fn conv1d_forward(input: &Matrix, filters: &Matrix, bias: &[f64]) -> Result<Matrix> {
    conv1d_forward_prefix(input, filters, bias, input.rows())
}

/// Convolution restricted to the first `active` rows. Rows at or beyond
/// `active` are read as zero and no output is produced for them.
pub fn conv1d_forward_prefix(input: &Matrix, filters: &Matrix, bias: &[f64], active: usize) -> Result<Matrix> {
    let shape = ConvShape::infer(filters, input.cols())?;
    if shape.window > input.rows() {
        return Err(Error::InvalidWindow { window: shape.window, len: input.rows() });
    }
    if bias.len() != shape.filters {
        return Err(Error::Dimension(format!("bias has {} entries for {} filters", bias.len(), shape.filters)));
    }
    let active = active.min(input.rows());
    let mut out = Matrix::zeros(active, shape.filters);
    for i in 0..active {
        let (lo, hi, offset) = shape.span(i, active);
        let window = input.rows_slice(lo, hi);
        let row = out.row_mut(i);
        for (f, o) in row.iter_mut().enumerate() {
            let w = &filters.row(f)[offset..offset + window.len()];
            *o = bias[f] + dot(w, window);
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d_forward`].
pub struct ConvGrads {
    pub d_input: Matrix,
    pub d_filters: Matrix,
    pub d_bias: Vec<f64>,
}

pub fn conv1d_backward(input: &Matrix, filters: &Matrix, d_out: &Matrix) -> Result<ConvGrads> {
    let shape = ConvShape::infer(filters, input.cols())?;
    let mut grads = ConvGrads {
        d_input: Matrix::zeros(input.rows(), input.cols()),
        d_filters: Matrix::zeros(filters.rows(), filters.cols()),
        d_bias: vec![0.0; shape.filters],
    };
    conv1d_backward_into(
        input,
        filters,
        d_out,
        Some(&mut grads.d_input),
        Some((&mut grads.d_filters, &mut grads.d_bias)),
    )?;
    Ok(grads)
}

/// Accumulating backward pass. `d_out` may cover only a prefix of the input
/// rows (matching [`conv1d_forward_prefix`]); zero upstream entries are skipped.
pub fn conv1d_backward_into(
    input: &Matrix,
    filters: &Matrix,
    d_out: &Matrix,
    mut d_input: Option<&mut Matrix>,
    mut d_params: Option<(&mut Matrix, &mut [f64])>,
) -> Result<()> {
    let shape = ConvShape::infer(filters, input.cols())?;
    let active = d_out.rows();
    if active > input.rows() || d_out.cols() != shape.filters {
        return Err(Error::Dimension(format!(
            "conv upstream is {}x{}, input has {} rows and there are {} filters",
            d_out.rows(),
            d_out.cols(),
            input.rows(),
            shape.filters
        )));
    }
    if let Some(d) = d_input.as_deref() {
        d.ensure_shape(input.rows(), input.cols(), "conv d_input")?;
    }
    if let Some((df, db)) = d_params.as_ref() {
        df.ensure_shape(filters.rows(), filters.cols(), "conv d_filters")?;
        if db.len() != shape.filters {
            return Err(Error::Dimension(format!("conv d_bias has {} entries", db.len())));
        }
    }
    for i in 0..active {
        let (lo, hi, offset) = shape.span(i, active);
        let width = (hi - lo) * shape.in_dim;
        for f in 0..shape.filters {
            let g = d_out[(i, f)];
            if g == 0.0 {
                continue;
            }
            if let Some((df, db)) = d_params.as_mut() {
                db[f] += g;
                axpy(g, input.rows_slice(lo, hi), &mut df.row_mut(f)[offset..offset + width]);
            }
            if let Some(di) = d_input.as_deref_mut() {
                axpy(g, &filters.row(f)[offset..offset + width], di.rows_slice_mut(lo, hi));
            }
        }
    }
    Ok(())
}

/// Result of three-segment max pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPool {
    /// `3 * F` pooled values, segment-major.
    pub pooled: Vec<f64>,
    /// Winning row per pooled entry; `None` for an empty segment.
    pub argmax: Vec<Option<usize>>,
}

/// Row ranges of the three pooling segments: `[0, s1]`, `(s1, s2]`,
/// `(s2, valid_len)`, each clipped to `valid_len`.
pub fn segment_ranges(s1: usize, s2: usize, valid_len: usize) -> [core::ops::Range<usize>; 3] {
    let a = (s1 + 1).min(valid_len);
    let b = (s2 + 1).min(valid_len);
    [0..a, a..b, b..valid_len]
}

/// Max pooling applied separately to the three entity-delimited segments.
/// Ties resolve to the lowest row; empty segments pool to zero.
pub fn segment_max_pool(featmap: &Matrix, (s1, s2): (usize, usize), valid_len: usize) -> Result<SegmentPool> {
    if s1 > s2 || s2 > valid_len {
        return Err(Error::Boundary { s1, s2, valid_len });
    }
    if valid_len > featmap.rows() {
        return Err(Error::Dimension(format!(
            "valid length {valid_len} exceeds feature map rows {}",
            featmap.rows()
        )));
    }
    let f_count = featmap.cols();
    let mut pooled = vec![0.0; 3 * f_count];
    let mut argmax = vec![None; 3 * f_count];
    for (k, range) in segment_ranges(s1, s2, valid_len).into_iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let out = &mut pooled[k * f_count..(k + 1) * f_count];
        let idx = &mut argmax[k * f_count..(k + 1) * f_count];
        out.copy_from_slice(featmap.row(range.start));
        idx.iter_mut().for_each(|i| *i = Some(range.start));
        for r in range.start + 1..range.end {
            for (f, &v) in featmap.row(r).iter().enumerate() {
                if v > out[f] {
                    out[f] = v;
                    idx[f] = Some(r);
                }
            }
        }
    }
    Ok(SegmentPool { pooled, argmax })
}

/// Routes pooled gradients back to the winning rows.
pub fn segment_max_pool_backward(argmax: &[Option<usize>], d_pooled: &[f64], rows: usize, filters: usize) -> Matrix {
    let mut d = Matrix::zeros(rows, filters);
    for (j, (&idx, &g)) in argmax.iter().zip(d_pooled).enumerate() {
        if let Some(r) = idx {
            d[(r, j % filters)] += g;
        }
    }
    d
}

pub fn tanh_forward(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| libm::tanh(x)).collect()
}

/// Backward of tanh given its forward output `y`.
pub fn tanh_backward(y: &[f64], d_out: &[f64]) -> Vec<f64> {
    y.iter().zip(d_out).map(|(&y, &g)| g * (1.0 - y * y)).collect()
}
