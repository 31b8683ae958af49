//! Forward ops and their backward closures.

use crate::error::{Error, Result};

use super::Tensor;

/// Row-major matmul: out[m,n] += a[m,k] * b[k,n].
pub(crate) fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn shape_err(a: &[usize], b: &str) -> Error {
    Error::Shape(format!("{a:?}"), b.to_string())
}

fn dims2(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(s, "a 2-D tensor")),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    fn unary(&self, data: Vec<f64>, back: impl Fn(&[f64], &mut Vec<f64>) + 'static) -> Tensor {
        let parent = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; g.len()];
                back(g, &mut acc);
                parent.accumulate_grad(&acc);
            },
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                pa.accumulate_grad(g);
                pb.accumulate_grad(g);
            },
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                pa.accumulate_grad(g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                pb.accumulate_grad(&neg);
            },
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                let bd = pb.data();
                let ga: Vec<f64> = g.iter().zip(bd.iter()).map(|(g, b)| g * b).collect();
                drop(bd);
                pa.accumulate_grad(&ga);
                let ad = pa.data();
                let gb: Vec<f64> = g.iter().zip(ad.iter()).map(|(g, a)| g * a).collect();
                drop(ad);
                pb.accumulate_grad(&gb);
            },
        ))
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|x| x * c).collect();
        self.unary(data, move |g, acc| {
            for (a, gv) in acc.iter_mut().zip(g) {
                *a = gv * c;
            }
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|x| x + c).collect();
        self.unary(data, |g, acc| acc.copy_from_slice(g))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = dims2(self)?;
        let (k2, n) = dims2(other)?;
        if k != k2 {
            return Err(Error::Shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let mut data = vec![0.0; m * n];
        mm(&self.data(), m, k, &other.data(), n, &mut data);
        let (pa, pb) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                // dA = g . B^T ; dB = A^T . g
                let bt = transpose_raw(&pb.data(), k, n);
                let mut ga = vec![0.0; m * k];
                mm(g, m, n, &bt, k, &mut ga);
                pa.accumulate_grad(&ga);

                let at = transpose_raw(&pa.data(), m, k);
                let mut gb = vec![0.0; k * n];
                mm(&at, k, m, g, n, &mut gb);
                pb.accumulate_grad(&gb);
            },
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = dims2(self)?;
        let data = transpose_raw(&self.data(), r, c);
        let parent = self.clone();
        Ok(Tensor::from_op(
            vec![c, r],
            data,
            vec![self.clone()],
            move |g| {
                parent.accumulate_grad(&transpose_raw(g, c, r));
            },
        ))
    }

    /// Concatenation along the last (column) axis of 2-D tensors.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (rows, _) = dims2(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = dims2(p)?;
            if r != rows {
                return Err(Error::Shape(
                    format!("{:?}", parts[0].shape()),
                    format!("{:?}", p.shape()),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pd = p.data();
            for i in 0..rows {
                data[i * total + off..i * total + off + w].copy_from_slice(&pd[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let owned: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        let parents = owned.clone();
        Ok(Tensor::from_op(vec![rows, total], data, owned, move |g| {
            let mut off = 0;
            for (p, &w) in parents.iter().zip(&widths) {
                let mut gp = vec![0.0; rows * w];
                for i in 0..rows {
                    gp[i * w..(i + 1) * w]
                        .copy_from_slice(&g[i * total + off..i * total + off + w]);
                }
                p.accumulate_grad(&gp);
                off += w;
            }
        }))
    }

    /// Concatenation along the first (row) axis of 2-D tensors.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (_, cols) = dims2(parts[0])?;
        let mut heights = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = dims2(p)?;
            if c != cols {
                return Err(Error::Shape(
                    format!("{:?}", parts[0].shape()),
                    format!("{:?}", p.shape()),
                ));
            }
            heights.push(r);
        }
        let total: usize = heights.iter().sum();
        let mut data = Vec::with_capacity(total * cols);
        for p in parts {
            data.extend_from_slice(&p.data());
        }
        let owned: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        let parents = owned.clone();
        Ok(Tensor::from_op(vec![total, cols], data, owned, move |g| {
            let mut off = 0;
            for (p, &h) in parents.iter().zip(&heights) {
                p.accumulate_grad(&g[off * cols..(off + h) * cols]);
                off += h;
            }
        }))
    }

    /// Gathers whole rows of a 2-D tensor by index (duplicates allowed).
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (rows, cols) = dims2(self)?;
        for &i in indices {
            if i >= rows {
                return Err(Error::Size(format!("gather index {i} out of {rows} rows")));
            }
        }
        let src = self.data();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        drop(src);
        let parent = self.clone();
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            vec![indices.len(), cols],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; rows * cols];
                for (slot, &i) in idx.iter().enumerate() {
                    for j in 0..cols {
                        acc[i * cols + j] += g[slot * cols + j];
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    /// Broadcasts a [1, d] tensor to [n, d] (gradient sums over rows).
    pub fn broadcast_rows(&self, n: usize) -> Result<Tensor> {
        let (r, d) = dims2(self)?;
        if r != 1 {
            return Err(shape_err(self.shape(), "a [1, d] tensor"));
        }
        let row = self.to_vec();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&row);
        }
        let parent = self.clone();
        Ok(Tensor::from_op(
            vec![n, d],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        acc[j] += g[i * d + j];
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    /// Softmax along the last axis of a 2-D tensor.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let (rows, cols) = dims2(self)?;
        let src = self.data();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                data[i * cols + j] = e;
                sum += e;
            }
            for j in 0..cols {
                data[i * cols + j] /= sum;
            }
        }
        drop(src);
        let out = data.clone();
        let parent = self.clone();
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; rows * cols];
                for i in 0..rows {
                    let y = &out[i * cols..(i + 1) * cols];
                    let gi = &g[i * cols..(i + 1) * cols];
                    let dot: f64 = y.iter().zip(gi).map(|(y, g)| y * g).sum();
                    for j in 0..cols {
                        acc[i * cols + j] = y[j] * (gi[j] - dot);
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    /// Layer normalization along the last axis (no affine part).
    pub fn layer_norm_last(&self) -> Result<Tensor> {
        const EPS: f64 = 1e-5;
        let (rows, cols) = dims2(self)?;
        let src = self.data();
        let mut data = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[i] = is;
            for j in 0..cols {
                data[i * cols + j] = (row[j] - mean) * is;
            }
        }
        drop(src);
        let y = data.clone();
        let parent = self.clone();
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; rows * cols];
                for i in 0..rows {
                    let yi = &y[i * cols..(i + 1) * cols];
                    let gi = &g[i * cols..(i + 1) * cols];
                    let gmean = gi.iter().sum::<f64>() / cols as f64;
                    let gydot = gi.iter().zip(yi).map(|(g, y)| g * y).sum::<f64>() / cols as f64;
                    for j in 0..cols {
                        acc[i * cols + j] = inv_std[i] * (gi[j] - gmean - yi[j] * gydot);
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    pub fn silu(&self) -> Tensor {
        let xs = self.to_vec();
        let data = xs.iter().map(|&x| x * sigmoid(x)).collect();
        self.unary(data, move |g, acc| {
            for ((a, gv), &x) in acc.iter_mut().zip(g).zip(&xs) {
                let s = sigmoid(x);
                *a = gv * (s + x * s * (1.0 - s));
            }
        })
    }

    pub fn tanh_t(&self) -> Tensor {
        let ys: Vec<f64> = self.data().iter().map(|x| x.tanh()).collect();
        let data = ys.clone();
        self.unary(data, move |g, acc| {
            for ((a, gv), &y) in acc.iter_mut().zip(g).zip(&ys) {
                *a = gv * (1.0 - y * y);
            }
        })
    }

    pub fn sigmoid_t(&self) -> Tensor {
        let ys: Vec<f64> = self.data().iter().map(|&x| sigmoid(x)).collect();
        let data = ys.clone();
        self.unary(data, move |g, acc| {
            for ((a, gv), &y) in acc.iter_mut().zip(g).zip(&ys) {
                *a = gv * y * (1.0 - y);
            }
        })
    }

    /// Natural log; caller is responsible for keeping inputs positive
    /// (the losses clamp first).
    pub fn ln_t(&self) -> Tensor {
        let xs = self.to_vec();
        let data = xs.iter().map(|x| x.ln()).collect();
        self.unary(data, move |g, acc| {
            for ((a, gv), &x) in acc.iter_mut().zip(g).zip(&xs) {
                *a = gv / x;
            }
        })
    }

    /// Elementwise x^p for positive x.
    pub fn pow_scalar(&self, p: f64) -> Tensor {
        let xs = self.to_vec();
        let data = xs.iter().map(|x| x.powf(p)).collect();
        self.unary(data, move |g, acc| {
            for ((a, gv), &x) in acc.iter_mut().zip(g).zip(&xs) {
                *a = gv * p * x.powf(p - 1.0);
            }
        })
    }

    /// Clamp with zero gradient outside the open interval.
    pub fn clamp_t(&self, lo: f64, hi: f64) -> Tensor {
        let xs = self.to_vec();
        let data = xs.iter().map(|x| x.clamp(lo, hi)).collect();
        self.unary(data, move |g, acc| {
            for ((a, gv), &x) in acc.iter_mut().zip(g).zip(&xs) {
                *a = if x > lo && x < hi { *gv } else { 0.0 };
            }
        })
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        let parent = self.clone();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], move |g| {
            parent.accumulate_grad(&vec![g[0]; n]);
        })
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum::<f64>() / n as f64;
        let parent = self.clone();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], move |g| {
            parent.accumulate_grad(&vec![g[0] / n as f64; n]);
        })
    }

    /// Per-group elementwise max over rows of a 2-D tensor: output row g is
    /// the componentwise max over the rows listed in `groups[g]`. Gradient
    /// routes to the element that attained the max.
    pub fn row_max_pool(&self, groups: &[Vec<usize>]) -> Result<Tensor> {
        let (rows, cols) = dims2(self)?;
        let src = self.data();
        let mut data = vec![f64::NEG_INFINITY; groups.len() * cols];
        let mut argmax = vec![0usize; groups.len() * cols];
        for (gi, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Size("row_max_pool group is empty".into()));
            }
            for &r in members {
                if r >= rows {
                    return Err(Error::Size(format!("row index {r} out of {rows}")));
                }
                for j in 0..cols {
                    let v = src[r * cols + j];
                    if v > data[gi * cols + j] {
                        data[gi * cols + j] = v;
                        argmax[gi * cols + j] = r;
                    }
                }
            }
        }
        drop(src);
        let parent = self.clone();
        let n_groups = groups.len();
        Ok(Tensor::from_op(
            vec![n_groups, cols],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; rows * cols];
                for gi in 0..n_groups {
                    for j in 0..cols {
                        acc[argmax[gi * cols + j] * cols + j] += g[gi * cols + j];
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    /// Softmax along the row axis within contiguous chunks of `chunk` rows,
    /// independently per column. For a [n·chunk, d] tensor, entry (c·chunk+r, j)
    /// is normalized over r = 0..chunk for fixed (c, j).
    pub fn softmax_row_chunks(&self, chunk: usize) -> Result<Tensor> {
        let (rows, cols) = dims2(self)?;
        if chunk == 0 || rows % chunk != 0 {
            return Err(Error::Size(format!("{rows} rows not divisible into chunks of {chunk}")));
        }
        let src = self.data();
        let mut data = vec![0.0; rows * cols];
        for c in 0..rows / chunk {
            for j in 0..cols {
                let at = |r: usize| (c * chunk + r) * cols + j;
                let max = (0..chunk).map(|r| src[at(r)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for r in 0..chunk {
                    let e = (src[at(r)] - max).exp();
                    data[at(r)] = e;
                    sum += e;
                }
                for r in 0..chunk {
                    data[at(r)] /= sum;
                }
            }
        }
        drop(src);
        let y = data.clone();
        let parent = self.clone();
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            vec![self.clone()],
            move |g| {
                let mut acc = vec![0.0; rows * cols];
                for c in 0..rows / chunk {
                    for j in 0..cols {
                        let at = |r: usize| (c * chunk + r) * cols + j;
                        let dot: f64 = (0..chunk).map(|r| y[at(r)] * g[at(r)]).sum();
                        for r in 0..chunk {
                            acc[at(r)] = y[at(r)] * (g[at(r)] - dot);
                        }
                    }
                }
                parent.accumulate_grad(&acc);
            },
        ))
    }

    /// Sum over contiguous chunks of `chunk` rows: [n·chunk, d] -> [n, d].
    pub fn sum_row_chunks(&self, chunk: usize) -> Result<Tensor> {
        let (rows, cols) = dims2(self)?;
        if chunk == 0 || rows % chunk != 0 {
            return Err(Error::Size(format!("{rows} rows not divisible into chunks of {chunk}")));
        }
        let n = rows / chunk;
        let src = self.data();
        let mut data = vec![0.0; n * cols];
        for c in 0..n {
            for r in 0..chunk {
                for j in 0..cols {
                    data[c * cols + j] += src[(c * chunk + r) * cols + j];
                }
            }
        }
        drop(src);
        let parent = self.clone();
        Ok(Tensor::from_op(vec![n, cols], data, vec![self.clone()], move |g| {
            let mut acc = vec![0.0; rows * cols];
            for c in 0..n {
                for r in 0..chunk {
                    for j in 0..cols {
                        acc[(c * chunk + r) * cols + j] = g[c * cols + j];
                    }
                }
            }
            parent.accumulate_grad(&acc);
        }))
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&self, target: &Tensor) -> Result<Tensor> {
        let d = self.sub(target)?;
        Ok(d.mul(&d)?.mean_all())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]);
        assert_eq!(x.softmax_last().unwrap().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let x = Tensor::from_vec(&[1, 4], vec![3.0; 4]);
        let y = x.layer_norm_last().unwrap();
        assert!(y.to_vec().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.to_vec(), vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let a = Tensor::from_vec(&[2, 3], vec![0.0; 6]);
        let b = Tensor::from_vec(&[2, 2], vec![0.0; 4]);
        match a.matmul(&b) {
            Err(Error::Shape(l, r)) => {
                assert!(l.contains('3') && r.contains('2'));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn gather_and_concat_round_trip() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let top = x.gather_rows(&[0]).unwrap();
        let rest = x.gather_rows(&[1, 2]).unwrap();
        let back = Tensor::concat_rows(&[&top, &rest]).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());

        let left = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]);
        let right = Tensor::from_vec(&[2, 2], vec![10.0, 11.0, 12.0, 13.0]);
        let cc = Tensor::concat_cols(&[&left, &right]).unwrap();
        assert_eq!(cc.to_vec(), vec![1.0, 10.0, 11.0, 3.0, 12.0, 13.0]);
    }

    #[test]
    fn row_max_pool_takes_componentwise_max() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, 9.0, 5.0, 2.0, 3.0, 3.0]);
        let y = x.row_max_pool(&[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(y.to_vec(), vec![5.0, 9.0, 3.0, 3.0]);
    }

    #[test]
    fn broadcast_rows_sums_gradient() {
        let v = Tensor::param(&[1, 3], vec![1.0, 2.0, 3.0]);
        let b = v.broadcast_rows(4).unwrap();
        assert_eq!(b.shape(), &[4, 3]);
        let loss = b.sum_all();
        loss.backward().unwrap();
        assert_eq!(v.grad().unwrap(), vec![4.0; 3]);
    }
}
