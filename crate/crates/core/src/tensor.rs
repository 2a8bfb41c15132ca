//! Dense n-dimensional arrays of `f64` in row-major order.
//!
//! Tensors are immutable values once constructed; every operation returns a
//! new tensor. Summation inside [`matmul`] runs in a fixed left-to-right
//! order over the inner dimension, so results are bitwise reproducible
//! whether or not rows are computed in parallel.

use crate::error::{Error, Result};
use crate::rng::Rng;
use std::io::{Read, Write};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {count} elements but {} were supplied",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "extents must be positive");
        let count: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; count],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Uniform draws in `[lo, hi)`, filled in row-major order.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let mut t = Tensor::zeros(shape);
        for v in t.data.iter_mut() {
            *v = rng.uniform(lo, hi);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &ext)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < ext, "index {ix} out of range {ext} at axis {i}");
            flat = flat * ext + ix;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut f64 {
        let flat = self.flat_index(idx);
        &mut self.data[flat]
    }

    /// Same data, new shape; element counts must agree.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let count: usize = shape.iter().product();
        if count != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise op on mismatched shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| k * v)
    }

    /// Rank-2 transpose.
    pub fn transpose2(&self) -> Result<Tensor> {
        let [m, n] = rank2(self, "transpose")?;
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

fn rank2(t: &Tensor, op: &str) -> Result<[usize; 2]> {
    match t.shape() {
        [m, n] => Ok([*m, *n]),
        s => Err(Error::Dimension(format!(
            "{op} requires a rank-2 tensor, got shape {s:?}"
        ))),
    }
}

/// `[m×k] · [k×n] -> [m×n]`. Accumulation over `k` runs left to right for
/// every output element; rows may be computed in parallel without changing
/// a single bit of the result.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, ka] = rank2(a, "matmul")?;
    let [kb, n] = rank2(b, "matmul")?;
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0f64; m * n];
    let run_row = |i: usize, orow: &mut [f64]| {
        let arow = &a.data[i * ka..(i + 1) * ka];
        for (kx, &av) in arow.iter().enumerate() {
            let brow = &b.data[kx * n..(kx + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    #[cfg(not(target_arch = "wasm32"))]
    {
        use rayon::prelude::*;
        if m * ka * n >= 1 << 16 {
            out.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, orow)| run_row(i, orow));
        } else {
            for (i, orow) in out.chunks_mut(n).enumerate() {
                run_row(i, orow);
            }
        }
    }
    #[cfg(target_arch = "wasm32")]
    for (i, orow) in out.chunks_mut(n).enumerate() {
        run_row(i, orow);
    }
    Tensor::new(&[m, n], out)
}

/// Output spatial extent of a convolution/pool dimension.
pub fn conv_out_extent(input: usize, k: usize, pad: usize, stride: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Unrolls one `[H×W×C]` image into a `[(Ho·Wo) × (k·k·C)]` matrix. Each row
/// is one receptive field, laid out `(ki, kj, c)` row-major; padding
/// contributes zeros.
pub fn im2col(x: &Tensor, k: usize, pad: usize, stride: usize) -> Result<Tensor> {
    let [h, w, c] = match x.shape() {
        [h, w, c] => [*h, *w, *c],
        s => {
            return Err(Error::Dimension(format!(
                "im2col requires [H, W, C] input, got {s:?}"
            )))
        }
    };
    if k == 0 || stride == 0 {
        return Err(Error::Domain(
            "im2col kernel and stride must be at least 1".into(),
        ));
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::Dimension(format!(
            "kernel {k} exceeds padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        )));
    }
    let ho = conv_out_extent(h, k, pad, stride);
    let wo = conv_out_extent(w, k, pad, stride);
    let row_len = k * k * c;
    let mut out = vec![0.0f64; ho * wo * row_len];
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &mut out[(oh * wo + ow) * row_len..(oh * wo + ow + 1) * row_len];
            for ki in 0..k {
                let ih = (oh * stride + ki) as isize - pad as isize;
                if ih < 0 || ih >= h as isize {
                    continue;
                }
                for kj in 0..k {
                    let iw = (ow * stride + kj) as isize - pad as isize;
                    if iw < 0 || iw >= w as isize {
                        continue;
                    }
                    let src = ((ih as usize) * w + iw as usize) * c;
                    let dst = (ki * k + kj) * c;
                    row[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
    }
    Tensor::new(&[ho * wo, row_len], out)
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto an
/// `[H×W×C]` image.
pub fn col2im(
    cols: &Tensor,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    pad: usize,
    stride: usize,
) -> Result<Tensor> {
    let ho = conv_out_extent(h, k, pad, stride);
    let wo = conv_out_extent(w, k, pad, stride);
    let row_len = k * k * c;
    if cols.shape() != [ho * wo, row_len] {
        return Err(Error::Dimension(format!(
            "col2im expected shape [{}, {}], got {:?}",
            ho * wo,
            row_len,
            cols.shape()
        )));
    }
    let mut out = Tensor::zeros(&[h, w, c]);
    for oh in 0..ho {
        for ow in 0..wo {
            let row = &cols.data[(oh * wo + ow) * row_len..(oh * wo + ow + 1) * row_len];
            for ki in 0..k {
                let ih = (oh * stride + ki) as isize - pad as isize;
                if ih < 0 || ih >= h as isize {
                    continue;
                }
                for kj in 0..k {
                    let iw = (ow * stride + kj) as isize - pad as isize;
                    if iw < 0 || iw >= w as isize {
                        continue;
                    }
                    let dst = ((ih as usize) * w + iw as usize) * c;
                    let src = (ki * k + kj) * c;
                    for ch in 0..c {
                        out.data[dst + ch] += row[src + ch];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// Reduces over `axes`. Reduced extents are dropped, or kept as 1 when
/// `keep_dims` is set; reducing every axis yields a `[1]` scalar when
/// dimensions are dropped.
pub fn reduce(x: &Tensor, axes: &[usize], kind: ReduceKind, keep_dims: bool) -> Result<Tensor> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    for &a in axes {
        if a >= rank {
            return Err(Error::Dimension(format!(
                "reduce axis {a} out of range for rank {rank}"
            )));
        }
        if seen[a] {
            return Err(Error::Domain(format!("reduce axis {a} repeated")));
        }
        seen[a] = true;
    }
    if axes.is_empty() && kind == ReduceKind::Max {
        return Err(Error::Domain("max reduction over no axes is undefined".into()));
    }
    if axes.is_empty() {
        return Ok(x.clone());
    }

    let out_shape_kept: Vec<usize> = x
        .shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if seen[i] { 1 } else { d })
        .collect();
    let out_count: usize = out_shape_kept.iter().product();
    let reduced_count: usize = x
        .shape
        .iter()
        .enumerate()
        .filter(|(i, _)| seen[*i])
        .map(|(_, &d)| d)
        .product();

    let init = match kind {
        ReduceKind::Max => f64::NEG_INFINITY,
        _ => 0.0,
    };
    let mut out = vec![init; out_count];

    // Walk the input once; map each source index onto its reduced slot.
    let mut idx = vec![0usize; rank];
    for &v in x.data.iter() {
        let mut slot = 0;
        for (i, &ix) in idx.iter().enumerate() {
            let ext = out_shape_kept[i];
            slot = slot * ext + if seen[i] { 0 } else { ix };
        }
        match kind {
            ReduceKind::Sum | ReduceKind::Mean => out[slot] += v,
            ReduceKind::Max => {
                if v > out[slot] {
                    out[slot] = v
                }
            }
        }
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < x.shape[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    if kind == ReduceKind::Mean {
        let inv = 1.0 / reduced_count as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }

    let final_shape: Vec<usize> = if keep_dims {
        out_shape_kept
    } else {
        let dropped: Vec<usize> = x
            .shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !seen[*i])
            .map(|(_, &d)| d)
            .collect();
        if dropped.is_empty() {
            vec![1]
        } else {
            dropped
        }
    };
    Tensor::new(&final_shape, out)
}

/// Binary dump: `u64` rank, `u64` per extent, then the raw `f64` data, all
/// little-endian.
pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(&(t.rank() as u64).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rank = u64::from_le_bytes(b8) as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Dimension(format!(
            "tensor dump rank {rank} out of supported range 1..=8"
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Tensor::new(&shape, data)
}
