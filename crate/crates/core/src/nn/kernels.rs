//! Forward and backward passes, generic over the float type.
//!
//! Conv activations are laid out channel-major across the batch,
//! C × B × L, so each convolution is one matrix product over an im2col
//! buffer. FC activations are B × features. The flatten between the last
//! conv block and the first FC layer is channel-major per sample.

use num_traits::Float;

use super::Architecture;

/// Floats with a dense matrix-multiply kernel.
pub(crate) trait Scalar: Float + 'static {
    /// C ← α·A·B + β·C with arbitrary strides.
    ///
    /// # Safety
    /// All strided indices must lie inside the pointed-to buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row and column strides of a matrix view.
type Strides = (usize, usize);

fn span(rows: usize, cols: usize, (rs, cs): Strides) -> usize {
    (rows - 1) * rs + (cols - 1) * cs + 1
}

/// C (m × n) ← A (m × k) · B (k × n) + β·C, bounds-checked.
#[allow(clippy::too_many_arguments)]
fn gemm<F: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    sa: Strides,
    b: &[F],
    sb: Strides,
    beta: F,
    c: &mut [F],
    sc: Strides,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(span(m, n, sc) <= c.len(), "gemm: C out of bounds");
    if k == 0 {
        for r in 0..m {
            for q in 0..n {
                let v = &mut c[r * sc.0 + q * sc.1];
                *v = beta * *v;
            }
        }
        return;
    }
    assert!(span(m, k, sa) <= a.len(), "gemm: A out of bounds");
    assert!(span(k, n, sb) <= b.len(), "gemm: B out of bounds");
    // SAFETY: every index reachable through the strides was checked above.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        );
    }
}

/// Stored state for one layer at or after the first trainable layer.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<F> {
    Conv {
        /// C_in × B × L
        input: Vec<F>,
        /// Conv output before ReLU, C_out × B × L.
        pre: Vec<F>,
        /// Per pooled cell, the winning position within its row.
        argmax: Vec<u32>,
    },
    Fc {
        /// B × in
        input: Vec<F>,
        /// B × out, before activation
        pre: Vec<F>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Cache<F> {
    pub first_layer: usize,
    pub batch: usize,
    /// One entry per layer from `first_layer` to the end.
    pub layers: Vec<LayerCache<F>>,
}

impl<F: Float> Cache<F> {
    /// ReLU signs and pooling winners; two forward passes with equal
    /// patterns lie on the same linear piece of the network.
    pub fn pattern(&self) -> (Vec<bool>, Vec<u32>) {
        let mut signs = Vec::new();
        let mut winners = Vec::new();
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                LayerCache::Conv { pre, argmax, .. } => {
                    signs.extend(pre.iter().map(|v| *v > F::zero()));
                    winners.extend_from_slice(argmax);
                }
                LayerCache::Fc { pre, .. } if i != last => {
                    signs.extend(pre.iter().map(|v| *v > F::zero()));
                }
                LayerCache::Fc { .. } => {}
            }
        }
        (signs, winners)
    }
}

pub(crate) fn sigmoid<F: Float>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

fn relu_in_place<F: Float>(xs: &mut [F]) {
    for x in xs {
        if *x < F::zero() {
            *x = F::zero();
        }
    }
}

/// Source and destination offsets for kernel tap `j`: out[t0 + u] reads
/// x[s0 + u] for u < n.
fn tap_range(j: usize, pad: usize, len: usize) -> (usize, usize, usize) {
    let (t0, s0) = if j < pad { (pad - j, 0) } else { (0, j - pad) };
    (t0, s0, len.saturating_sub(t0.max(s0)))
}

/// (C_in·k) × (B·L) patch matrix of a C_in × B × L tensor, zero-padded.
fn im2col<F: Float>(x: &[F], c_in: usize, batch: usize, len: usize, k: usize) -> Vec<F> {
    let pad = k / 2;
    let bl = batch * len;
    let mut cols = vec![F::zero(); c_in * k * bl];
    for i in 0..c_in {
        for j in 0..k {
            let (t0, s0, n) = tap_range(j, pad, len);
            let row = &mut cols[(i * k + j) * bl..(i * k + j + 1) * bl];
            for b in 0..batch {
                let src = &x[i * bl + b * len + s0..i * bl + b * len + s0 + n];
                row[b * len + t0..b * len + t0 + n].copy_from_slice(src);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto C_in × B × L.
fn col2im<F: Float>(cols: &[F], c_in: usize, batch: usize, len: usize, k: usize) -> Vec<F> {
    let pad = k / 2;
    let bl = batch * len;
    let mut x = vec![F::zero(); c_in * bl];
    for i in 0..c_in {
        for j in 0..k {
            let (t0, s0, n) = tap_range(j, pad, len);
            let row = &cols[(i * k + j) * bl..(i * k + j + 1) * bl];
            for b in 0..batch {
                let dst = &mut x[i * bl + b * len + s0..i * bl + b * len + s0 + n];
                for (d, &v) in dst.iter_mut().zip(&row[b * len + t0..b * len + t0 + n]) {
                    *d = *d + v;
                }
            }
        }
    }
    x
}

/// Same-padded stride-1 convolution of a C_in × B × L tensor.
/// Returns C_out × B × L.
#[allow(clippy::too_many_arguments)]
fn conv_forward<F: Scalar>(
    x: &[F],
    batch: usize,
    c_in: usize,
    len: usize,
    w: &[F],
    b: &[F],
    c_out: usize,
    k: usize,
) -> Vec<F> {
    let bl = batch * len;
    let cols = im2col(x, c_in, batch, len, k);
    let mut out: Vec<F> = b.iter().flat_map(|&v| std::iter::repeat_n(v, bl)).collect();
    let ck = c_in * k;
    gemm(c_out, ck, bl, w, (ck, 1), &cols, (bl, 1), F::one(), &mut out, (bl, 1));
    out
}

/// Max-pool with window = stride = `pool` over the last axis; floor
/// semantics. Ties go to the lowest index.
fn pool_forward<F: Float>(x: &[F], rows: usize, len: usize, pool: usize) -> (Vec<F>, Vec<u32>) {
    let out_len = len / pool;
    let mut out = Vec::with_capacity(rows * out_len);
    let mut arg = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let xr = &x[r * len..(r + 1) * len];
        for p in 0..out_len {
            let start = p * pool;
            let mut best = start;
            for q in start + 1..start + pool {
                if xr[q] > xr[best] {
                    best = q;
                }
            }
            out.push(xr[best]);
            arg.push(best as u32);
        }
    }
    (out, arg)
}

/// B × n_in times Wᵀ plus bias, W stored n_out × n_in.
fn fc_forward<F: Scalar>(x: &[F], batch: usize, n_in: usize, w: &[F], b: &[F], n_out: usize) -> Vec<F> {
    let mut out: Vec<F> = (0..batch).flat_map(|_| b.iter().copied()).collect();
    gemm(batch, n_in, n_out, x, (n_in, 1), w, (1, n_in), F::one(), &mut out, (n_out, 1));
    out
}

/// C × B × L to B × (C·L).
fn flatten<F: Float>(x: &[F], c: usize, batch: usize, len: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for ch in 0..c {
        for b in 0..batch {
            let src = &x[(ch * batch + b) * len..(ch * batch + b + 1) * len];
            out[b * c * len + ch * len..b * c * len + (ch + 1) * len].copy_from_slice(src);
        }
    }
    out
}

/// B × (C·L) to C × B × L.
fn unflatten<F: Float>(x: &[F], c: usize, batch: usize, len: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for ch in 0..c {
        for b in 0..batch {
            let src = &x[b * c * len + ch * len..b * c * len + (ch + 1) * len];
            out[(ch * batch + b) * len..(ch * batch + b + 1) * len].copy_from_slice(src);
        }
    }
    out
}

/// Channels and length at the flatten boundary.
fn boundary_shape(arch: &Architecture) -> (usize, usize) {
    let lens = arch.conv_lengths();
    let c = arch.conv.last().map_or(1, |b| b.out_channels);
    (c, lens[arch.conv.len()])
}

/// Runs the network on `batch` rows of `x` (B × input_dim). Returns
/// logits and, when `keep_from` is given, a cache covering layers from
/// that index onward.
pub(crate) fn forward<F: Scalar>(
    arch: &Architecture,
    params: &[&[F]],
    x: &[F],
    batch: usize,
    keep_from: Option<usize>,
) -> (Vec<F>, Option<Cache<F>>) {
    let n_conv = arch.conv.len();
    let keep = |layer: usize| keep_from.is_some_and(|f| layer >= f);
    let mut layers = Vec::new();
    let lens = arch.conv_lengths();

    // B × 1 × L and 1 × B × L coincide
    let mut act: Vec<F> = x.to_vec();
    for (i, block) in arch.conv.iter().enumerate() {
        let len = lens[i];
        let pre = conv_forward(
            &act,
            batch,
            block.in_channels,
            len,
            params[2 * i],
            params[2 * i + 1],
            block.out_channels,
            block.kernel_size,
        );
        let mut relu = pre.clone();
        relu_in_place(&mut relu);
        let (pooled, argmax) = pool_forward(&relu, block.out_channels * batch, len, block.pool_size);
        if keep(i) {
            layers.push(LayerCache::Conv {
                input: std::mem::take(&mut act),
                pre,
                argmax,
            });
        }
        act = pooled;
    }
    let (c, l) = boundary_shape(arch);
    if n_conv > 0 {
        act = flatten(&act, c, batch, l);
    }

    let n_fc = arch.fc.len();
    for (j, fc) in arch.fc.iter().enumerate() {
        let layer = n_conv + j;
        let base = 2 * layer;
        let pre = fc_forward(&act, batch, fc.in_features, params[base], params[base + 1], fc.out_features);
        let mut next = pre.clone();
        if j + 1 < n_fc {
            relu_in_place(&mut next);
        }
        if keep(layer) {
            layers.push(LayerCache::Fc {
                input: std::mem::take(&mut act),
                pre,
            });
        }
        act = next;
    }

    let cache = keep_from.map(|first_layer| Cache {
        first_layer,
        batch,
        layers,
    });
    (act, cache)
}

/// Gradients of mean BCE w.r.t. every tensor of layers ≥ `cache.first_layer`.
/// Returns them in canonical tensor order.
pub(crate) fn backward<F: Scalar>(
    arch: &Architecture,
    params: &[&[F]],
    cache: &Cache<F>,
    probs: &[F],
    labels: &[F],
) -> Vec<(usize, Vec<F>)> {
    let batch = cache.batch;
    let inv_b = F::one() / F::from(batch).unwrap();
    let n_conv = arch.conv.len();
    let n_layers = arch.n_layers();
    let lens = arch.conv_lengths();

    // d(mean BCE)/d(logit) = (p - y) / B
    let mut delta: Vec<F> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y) * inv_b)
        .collect();
    let mut grads: Vec<(usize, Vec<F>)> = Vec::new();

    for layer in (cache.first_layer..n_layers).rev() {
        let entry = &cache.layers[layer - cache.first_layer];
        let is_first = layer == cache.first_layer;
        if layer >= n_conv {
            let LayerCache::Fc { input, .. } = entry else {
                unreachable!("layer kinds follow the architecture")
            };
            let fc = arch.fc[layer - n_conv];
            let (n_in, n_out) = (fc.in_features, fc.out_features);
            let w = params[2 * layer];
            let mut gw = vec![F::zero(); n_out * n_in];
            gemm(n_out, batch, n_in, &delta, (1, n_out), input, (n_in, 1), F::zero(), &mut gw, (n_in, 1));
            let mut gb = vec![F::zero(); n_out];
            for row in delta.chunks_exact(n_out) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            grads.push((2 * layer + 1, gb));
            grads.push((2 * layer, gw));
            if is_first {
                break;
            }
            let mut dx = vec![F::zero(); batch * n_in];
            gemm(batch, n_out, n_in, &delta, (n_out, 1), w, (n_in, 1), F::zero(), &mut dx, (n_in, 1));
            if layer > n_conv {
                // gate through the previous FC layer's ReLU
                if let LayerCache::Fc { pre, .. } = &cache.layers[layer - 1 - cache.first_layer] {
                    for (g, p) in dx.iter_mut().zip(pre) {
                        if *p <= F::zero() {
                            *g = F::zero();
                        }
                    }
                }
                delta = dx;
            } else {
                // conv ReLU precedes its pool; gated during unpooling below
                let (c, l) = boundary_shape(arch);
                delta = unflatten(&dx, c, batch, l);
            }
        } else {
            let LayerCache::Conv { input, pre, argmax } = entry else {
                unreachable!("layer kinds follow the architecture")
            };
            let block = arch.conv[layer];
            let (c_in, c_out, k) = (block.in_channels, block.out_channels, block.kernel_size);
            let len = lens[layer];
            let pooled_len = lens[layer + 1];
            let bl = batch * len;
            let ck = c_in * k;

            // unpool into the conv output, then gate by ReLU
            let mut dconv = vec![F::zero(); c_out * bl];
            for row in 0..c_out * batch {
                for p in 0..pooled_len {
                    let cell = row * pooled_len + p;
                    let pos = row * len + argmax[cell] as usize;
                    if pre[pos] > F::zero() {
                        dconv[pos] = dconv[pos] + delta[cell];
                    }
                }
            }

            let gb: Vec<F> = dconv
                .chunks_exact(bl)
                .map(|r| r.iter().fold(F::zero(), |a, &v| a + v))
                .collect();
            let cols = im2col(input, c_in, batch, len, k);
            let mut gw = vec![F::zero(); c_out * ck];
            gemm(c_out, bl, ck, &dconv, (bl, 1), &cols, (1, bl), F::zero(), &mut gw, (ck, 1));
            grads.push((2 * layer + 1, gb));
            grads.push((2 * layer, gw));
            if is_first {
                break;
            }
            let w = params[2 * layer];
            let mut dcols = vec![F::zero(); ck * bl];
            gemm(ck, c_out, bl, w, (1, ck), &dconv, (bl, 1), F::zero(), &mut dcols, (bl, 1));
            delta = col2im(&dcols, c_in, batch, len, k);
        }
    }

    grads.sort_by_key(|(i, _)| *i);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_definition() {
        // 2 samples, 2 in channels, length 5, 3 out channels, kernel 3;
        // input and output are C × B × L
        let (batch, c_in, len, c_out) = (2, 2, 5, 3);
        let x: Vec<f64> = (0..20).map(|v| v as f64 * 0.3 - 1.0).collect();
        let w: Vec<f64> = (0..18).map(|v| (v as f64 * 0.7).sin()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let out = conv_forward(&x, batch, c_in, len, &w, &b, c_out, 3);
        for bi in 0..batch {
            for o in 0..c_out {
                for t in 0..len {
                    let mut want = b[o];
                    for i in 0..c_in {
                        for j in 0..3 {
                            let s = t as isize + j as isize - 1;
                            if (0..len as isize).contains(&s) {
                                want += w[(o * c_in + i) * 3 + j] * x[(i * batch + bi) * len + s as usize];
                            }
                        }
                    }
                    assert!((out[(o * batch + bi) * len + t] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, b, l, k) = (2, 3, 4, 3);
        let x: Vec<f64> = (0..c * b * l).map(|v| (v as f64 * 0.31).cos()).collect();
        let y: Vec<f64> = (0..c * k * b * l).map(|v| (v as f64 * 0.17).sin()).collect();
        let lhs: f64 = im2col(&x, c, b, l, k).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, c, b, l, k)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fc_matches_direct_definition() {
        let x = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        let w = [0.1, 0.2, 0.3, -0.4, 0.5, -0.6];
        let out = fc_forward(&x, 2, 3, &w, &[1.0, -1.0], 2);
        assert_eq!(out.len(), 4);
        assert!((out[0] - (1.0 + 0.1 + 0.4 + 0.9)).abs() < 1e-12);
        assert!((out[1] - (-1.0 - 0.4 + 1.0 - 1.8)).abs() < 1e-12);
        assert!((out[2] - (1.0 - 0.1 + 0.1)).abs() < 1e-12);
        assert!((out[3] - (-1.0 + 0.4 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn flatten_round_trip() {
        let x: Vec<f32> = (0..24).map(|v| v as f32).collect();
        let f = flatten(&x, 3, 2, 4);
        // sample 1, channel 2, position 3
        assert_eq!(f[4 * 3 + 2 * 4 + 3], x[(2 * 2 + 1) * 4 + 3]);
        assert_eq!(unflatten(&f, 3, 2, 4), x);
    }

    #[test]
    fn pool_floor_and_first_max() {
        let x = [1.0, 1.0, 3.0, 2.0, 9.0];
        let (out, arg) = pool_forward(&x, 1, 5, 2);
        assert_eq!(out, vec![1.0, 3.0]);
        assert_eq!(arg, vec![0, 2]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}
