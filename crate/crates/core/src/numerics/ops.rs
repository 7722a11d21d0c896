use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x` for a row-major `W` of width `x.len()`.
#[inline]
pub fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o = dot(row, x);
    }
}

/// `dx += Wᵀ dy`.
#[inline]
pub fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let n = dx.len();
    for (g, row) in dy.iter().zip(w.chunks_exact(n)) {
        if *g == 0.0 {
            continue;
        }
        for (d, wv) in dx.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dW += dy ⊗ x`.
#[inline]
pub fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let n = x.len();
    for (g, row) in dy.iter().zip(dw.chunks_exact_mut(n)) {
        if *g == 0.0 {
            continue;
        }
        for (d, xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

/// `y = W x + b`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = (w.rows(), w.cols());
    if w.shape().len() != 2 || x.len() != n {
        return Err(Error::shape(&[m, x.len()], w.shape()));
    }
    if b.len() != m {
        return Err(Error::shape(&[m], b.shape()));
    }
    x.ensure_finite("affine input")?;
    let mut y = b.data().to_vec();
    for (o, row) in y.iter_mut().zip(w.data().chunks_exact(n)) {
        *o += dot(row, x.data());
    }
    Tensor::vector(y)
}

/// Backward of [`affine`]: accumulates into `dw`, `db` and returns `∂L/∂x`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Result<Tensor> {
    dw.ensure_shape(w.shape())?;
    if dy.len() != w.rows() {
        return Err(Error::shape(&[w.rows()], dy.shape()));
    }
    if db.len() != w.rows() {
        return Err(Error::shape(&[w.rows()], db.shape()));
    }
    outer_acc(dw.data_mut(), dy.data(), x.data());
    for (d, g) in db.data_mut().iter_mut().zip(dy.data()) {
        *d += g;
    }
    let mut dx = vec![0.0; x.len()];
    matvec_t_acc(w.data(), dy.data(), &mut dx);
    Tensor::vector(dx)
}

/// Gate weights of one LSTM direction. `w` is `[4h × (n + h)]` acting on
/// `[x; h_prev]`; gate blocks are stacked in the order input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w: Tensor::zeros(&[4 * hidden, input + hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Uniform(-scale, scale) weights, zero biases except the forget gate at +1.
    pub fn init(input: usize, hidden: usize, scale: f64, rng: &mut Rng) -> Self {
        let w = Tensor::uniform(&[4 * hidden, input + hidden], -scale, scale, rng);
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(1.0);
        LstmWeights { w, b }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols() - self.hidden()
    }
}

/// Everything the backward pass of one cell needs.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `[x; h_prev]`
    pub xh: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates i, f, g, o (each of width h).
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmWeights) -> Result<LstmCache> {
    let hd = p.hidden();
    if x.len() != p.input() {
        return Err(Error::shape(&[p.input()], &[x.len()]));
    }
    if h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::shape(&[hd, hd], &[h_prev.len(), c_prev.len()]));
    }
    let mut xh = Vec::with_capacity(x.len() + hd);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut gates = p.b.data().to_vec();
    for (o, row) in gates.iter_mut().zip(p.w.data().chunks_exact(xh.len())) {
        *o += dot(row, &xh);
    }
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * hd..3 * hd).contains(&k) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    Ok(LstmCache {
        xh,
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
        h,
        c,
    })
}

/// Backward of [`lstm_cell`]. Accumulates weight gradients into `grads` and
/// returns `(∂L/∂x, ∂L/∂h_prev, ∂L/∂c_prev)`.
pub fn lstm_cell_backward(
    cache: &LstmCache,
    p: &LstmWeights,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmWeights,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
        let tc = cache.tanh_c[j];
        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dcj * gg * i * (1.0 - i);
        dz[hd + j] = dcj * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * hd + j] = dcj * i * (1.0 - gg * gg);
        dz[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dcj * f;
    }
    outer_acc(grads.w.data_mut(), &dz, &cache.xh);
    for (d, z) in grads.b.data_mut().iter_mut().zip(&dz) {
        *d += z;
    }
    let mut dxh = vec![0.0; cache.xh.len()];
    matvec_t_acc(p.w.data(), &dz, &mut dxh);
    let dh_prev = dxh.split_off(cache.xh.len() - hd);
    (dxh, dh_prev, dc_prev)
}

/// Softmax over the positions where `mask` is true; masked positions get 0.
pub fn softmax_masked(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::shape(&[logits.len()], &[mask.len()]));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "softmax mask has no live position".into(),
        ));
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    Ok(out)
}

/// Log-softmax computed directly (never `ln` of a softmax output).
pub fn log_softmax_masked(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let probs_max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if probs_max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "softmax mask has no live position".into(),
        ));
    }
    let lse = probs_max
        + logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| (l - probs_max).exp())
            .sum::<f64>()
            .ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

/// Given softmax output `p` and `∂L/∂p`, returns `∂L/∂logits`. Masked
/// positions (p = 0) receive zero.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - s)).collect()
}

pub fn embedding_lookup(table: &Tensor, id: usize) -> Result<&[f64]> {
    if id >= table.rows() {
        return Err(Error::OutOfRange {
            index: id,
            size: table.rows(),
        });
    }
    Ok(table.row(id))
}

/// Scatter-add `dy` into row `id` of the table gradient.
pub fn embedding_backward(grad_table: &mut Tensor, id: usize, dy: &[f64]) -> Result<()> {
    if id >= grad_table.rows() {
        return Err(Error::OutOfRange {
            index: id,
            size: grad_table.rows(),
        });
    }
    for (g, d) in grad_table.row_mut(id).iter_mut().zip(dy) {
        *g += d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::check_gradients;

    fn vecs(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec()).unwrap()
    }

    #[test]
    fn affine_identity_and_hand_product() {
        let x = vecs(&[0.3, -1.2]);
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(affine(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);

        let w = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let y = affine(&vecs(&[1.0, 2.0]), &w, &vecs(&[0.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0]);
    }

    #[test]
    fn affine_shape_error_names_shapes() {
        let w = Tensor::zeros(&[3, 2]);
        let err = affine(&vecs(&[1.0, 2.0, 3.0]), &w, &Tensor::zeros(&[3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 2]") && msg.contains("[3, 3]"), "{msg}");
    }

    #[test]
    fn affine_gradients() {
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let (m, n) = (3, 4);
            let w = Tensor::uniform(&[m, n], -1.0, 1.0, &mut rng);
            let b = Tensor::uniform(&[m], -1.0, 1.0, &mut rng);
            let x = Tensor::uniform(&[n], -1.0, 1.0, &mut rng);
            let r = Tensor::uniform(&[m], -1.0, 1.0, &mut rng);
            // L = r · (W x + b); flat = [x, W, b]
            let unpack = |v: &[f64]| {
                (
                    Tensor::vector(v[..n].to_vec()).unwrap(),
                    Tensor::from_vec(&[m, n], v[n..n + m * n].to_vec()).unwrap(),
                    Tensor::vector(v[n + m * n..].to_vec()).unwrap(),
                )
            };
            let f = |v: &[f64]| {
                let (x, w, b) = unpack(v);
                dot(affine(&x, &w, &b).unwrap().data(), r.data())
            };
            let g = |v: &[f64]| {
                let (x, w, _) = unpack(v);
                let mut dw = w.zeros_like();
                let mut db = Tensor::zeros(&[m]);
                let dx = affine_backward(&x, &w, &r, &mut dw, &mut db).unwrap();
                [dx.data(), dw.data(), db.data()].concat()
            };
            let flat = [x.data(), w.data(), b.data()].concat();
            let err = check_gradients(f, g, &flat, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn lstm_zero_weights() {
        let p = LstmWeights::zeros(3, 2);
        let c_prev = [0.8, -2.0];
        let out = lstm_cell(&[1.0, 2.0, 3.0], &[0.5, 0.5], &c_prev, &p).unwrap();
        for j in 0..2 {
            assert!((out.c[j] - 0.5 * c_prev[j]).abs() < 1e-15);
            assert!((out.h[j] - 0.5 * (0.5 * c_prev[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_zero_inputs_follow_biases() {
        let mut rng = Rng::new(11);
        let p = LstmWeights::init(3, 2, 0.5, &mut rng);
        let mut p = p;
        for b in p.b.data_mut() {
            *b = rng.uniform(-1.0, 1.0);
        }
        let out = lstm_cell(&[0.0; 3], &[0.0; 2], &[0.0; 2], &p).unwrap();
        for j in 0..2 {
            let expect = sigmoid(p.b.data()[j]) * p.b.data()[4 + j].tanh();
            assert!((out.c[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_shape_mismatch() {
        let p = LstmWeights::zeros(3, 2);
        assert!(lstm_cell(&[1.0; 2], &[0.0; 2], &[0.0; 2], &p).is_err());
        assert!(lstm_cell(&[1.0; 3], &[0.0; 3], &[0.0; 2], &p).is_err());
    }

    #[test]
    fn lstm_gradients() {
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let (n, hd) = (4, 4);
            let p = LstmWeights {
                w: Tensor::uniform(&[4 * hd, n + hd], -0.8, 0.8, &mut rng),
                b: Tensor::uniform(&[4 * hd], -0.5, 0.5, &mut rng),
            };
            let rh: Vec<f64> = (0..hd).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let rc: Vec<f64> = (0..hd).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let wlen = 4 * hd * (n + hd);
            let split = |v: &[f64]| {
                let x = v[..n].to_vec();
                let h = v[n..n + hd].to_vec();
                let c = v[n + hd..n + 2 * hd].to_vec();
                let o = n + 2 * hd;
                let w = LstmWeights {
                    w: Tensor::from_vec(&[4 * hd, n + hd], v[o..o + wlen].to_vec()).unwrap(),
                    b: Tensor::vector(v[o + wlen..].to_vec()).unwrap(),
                };
                (x, h, c, w)
            };
            let f = |v: &[f64]| {
                let (x, h, c, w) = split(v);
                let out = lstm_cell(&x, &h, &c, &w).unwrap();
                dot(&out.h, &rh) + dot(&out.c, &rc)
            };
            let g = |v: &[f64]| {
                let (x, h, c, w) = split(v);
                let out = lstm_cell(&x, &h, &c, &w).unwrap();
                let mut gw = LstmWeights::zeros(n, hd);
                let (dx, dh, dc) = lstm_cell_backward(&out, &w, &rh, &rc, &mut gw);
                [&dx[..], &dh, &dc, gw.w.data(), gw.b.data()].concat()
            };
            let mut flat: Vec<f64> = (0..n + 2 * hd).map(|_| rng.uniform(-1.0, 1.0)).collect();
            flat.extend_from_slice(p.w.data());
            flat.extend_from_slice(p.b.data());
            let err = check_gradients(f, g, &flat, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_masked(&[0.0, 0.0, 0.0], &[true; 3]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(softmax_masked(&[5.0, 5.0], &[true, false]).unwrap(), vec![1.0, 0.0]);
        let p = softmax_masked(&[0.0, 3f64.ln()], &[true, true]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(softmax_masked(&[1.0, 2.0], &[false, false]).is_err());
        let lp = log_softmax_masked(&[0.0, 3f64.ln()], &[true, true]).unwrap();
        assert!((lp[1] - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = softmax_masked(&[1000.0, 999.0, -1e6], &[true, true, true]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradients() {
        for seed in 0..10 {
            let mut rng = Rng::new(200 + seed);
            let k = 6;
            let mask: Vec<bool> = (0..k).map(|i| i == 0 || rng.bernoulli(0.7)).collect();
            let r: Vec<f64> = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let x: Vec<f64> = (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let f = |v: &[f64]| dot(&softmax_masked(v, &mask).unwrap(), &r);
            let g = |v: &[f64]| softmax_backward(&softmax_masked(v, &mask).unwrap(), &r);
            assert!(check_gradients(f, g, &x, 1e-5).unwrap() < 1e-4);
        }
    }

    #[test]
    fn embedding_lookup_and_scatter() {
        let table = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(embedding_lookup(&table, 0).unwrap(), &[1.0, 2.0]);
        assert!(embedding_lookup(&table, 3).is_err());
        let mut g = table.zeros_like();
        embedding_backward(&mut g, 1, &[1.0, 2.0]).unwrap();
        embedding_backward(&mut g, 1, &[0.5, -1.0]).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.5, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_gradients() {
        for seed in 0..10 {
            let mut rng = Rng::new(300 + seed);
            let table = Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng);
            let ids = [2usize, 0, 2];
            let r: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
                .collect();
            let f = |v: &[f64]| {
                let t = Tensor::from_vec(&[3, 2], v.to_vec()).unwrap();
                ids.iter()
                    .zip(&r)
                    .map(|(&id, rr)| dot(embedding_lookup(&t, id).unwrap(), rr).powi(2))
                    .sum()
            };
            let g = |v: &[f64]| {
                let t = Tensor::from_vec(&[3, 2], v.to_vec()).unwrap();
                let mut gt = t.zeros_like();
                for (&id, rr) in ids.iter().zip(&r) {
                    let s = 2.0 * dot(embedding_lookup(&t, id).unwrap(), rr);
                    let dy: Vec<f64> = rr.iter().map(|x| s * x).collect();
                    embedding_backward(&mut gt, id, &dy).unwrap();
                }
                gt.into_data()
            };
            assert!(check_gradients(f, g, table.data(), 1e-5).unwrap() < 1e-4);
        }
    }
}
