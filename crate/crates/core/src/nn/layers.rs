//! Network layers with reverse-mode gradients.
//!
//! Each layer owns its parameters and gradient buffers and caches whatever a
//! later `backward` needs when `forward` runs with `train = true`. Reductions
//! accumulate in f64 in a fixed order, so results are independent of batch
//! slicing only where the math says so, and reruns are bitwise identical.

use rand_chacha::ChaCha8Rng;

use crate::nn::init::kaiming_uniform;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2-d convolution, stride 1, square kernel, optional symmetric zero padding.
/// Weight layout: `[out_ch, in_ch, k, k]`, row-major.
#[derive(Debug, Clone)]
pub struct Conv2d<S = f32> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub pad: usize,
    pub w: Vec<S>,
    pub b: Vec<S>,
    pub dw: Vec<S>,
    pub db: Vec<S>,
    cache_xp: Option<Tensor<S>>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_ch * k * k;
        Conv2d {
            in_ch,
            out_ch,
            k,
            pad,
            w: kaiming_uniform(rng, fan_in, out_ch * fan_in),
            b: vec![S::ZERO; out_ch],
            dw: vec![S::ZERO; out_ch * fan_in],
            db: vec![S::ZERO; out_ch],
            cache_xp: None,
        }
    }

    /// Output spatial size for an input of `h`×`w`.
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = h + 2 * self.pad + 1 - self.k;
        let ow = w + 2 * self.pad + 1 - self.k;
        (oh, ow)
    }

    pub fn forward(&mut self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_ch, "conv input channels {} != {}", c, self.in_ch);
        assert!(h + 2 * self.pad >= self.k && w + 2 * self.pad >= self.k, "input too small");
        let xp = pad_nchw(x, self.pad);
        let (_, _, hp, wp) = xp.dims4();
        let (oh, ow) = self.out_hw(h, w);
        let mut y = Tensor::zeros(&[n, self.out_ch, oh, ow]);

        let xd = xp.data();
        let yd = y.data_mut();
        let k = self.k;
        for bi in 0..n {
            for co in 0..self.out_ch {
                let ybase = ((bi * self.out_ch) + co) * oh * ow;
                let bias = self.b[co];
                yd[ybase..ybase + oh * ow].iter_mut().for_each(|v| *v = bias);
                for ci in 0..self.in_ch {
                    let xbase = ((bi * self.in_ch) + ci) * hp * wp;
                    let wbase = ((co * self.in_ch) + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = self.w[wbase + ky * k + kx];
                            for oy in 0..oh {
                                let xrow = xbase + (oy + ky) * wp + kx;
                                let yrow = ybase + oy * ow;
                                for ox in 0..ow {
                                    yd[yrow + ox] += wv * xd[xrow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.cache_xp = train.then(|| xp);
        y
    }

    /// Accumulates dw/db from `dy`; returns dx unless `need_dx` is false
    /// (the first layer of a network has no upstream consumer).
    pub fn backward(&mut self, dy: &Tensor<S>, need_dx: bool) -> Option<Tensor<S>> {
        let xp = self.cache_xp.as_ref().expect("conv backward without cached forward");
        let (n, _, hp, wp) = xp.dims4();
        let (_, _, oh, ow) = dy.dims4();
        let k = self.k;
        let xd = xp.data();
        let dyd = dy.data();

        let mut dxp = need_dx.then(|| Tensor::<S>::zeros(&[n, self.in_ch, hp, wp]));
        for bi in 0..n {
            for co in 0..self.out_ch {
                let dybase = ((bi * self.out_ch) + co) * oh * ow;
                let mut bsum = S::ZERO;
                for v in &dyd[dybase..dybase + oh * ow] {
                    bsum += *v;
                }
                self.db[co] += bsum;
                for ci in 0..self.in_ch {
                    let xbase = ((bi * self.in_ch) + ci) * hp * wp;
                    let wbase = ((co * self.in_ch) + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut wsum = S::ZERO;
                            for oy in 0..oh {
                                let xrow = xbase + (oy + ky) * wp + kx;
                                let dyrow = dybase + oy * ow;
                                for ox in 0..ow {
                                    wsum += dyd[dyrow + ox] * xd[xrow + ox];
                                }
                            }
                            self.dw[wbase + ky * k + kx] += wsum;
                            if let Some(dxp) = dxp.as_mut() {
                                let wv = self.w[wbase + ky * k + kx];
                                let dxd = dxp.data_mut();
                                for oy in 0..oh {
                                    let xrow = xbase + (oy + ky) * wp + kx;
                                    let dyrow = dybase + oy * ow;
                                    for ox in 0..ow {
                                        dxd[xrow + ox] += wv * dyd[dyrow + ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dxp.map(|dxp| unpad_nchw(&dxp, self.pad))
    }

    pub fn zero_grad(&mut self) {
        self.dw.iter_mut().for_each(|v| *v = S::ZERO);
        self.db.iter_mut().for_each(|v| *v = S::ZERO);
    }
}

fn pad_nchw<S: Scalar>(x: &Tensor<S>, pad: usize) -> Tensor<S> {
    if pad == 0 {
        return x.clone();
    }
    let (n, c, h, w) = x.dims4();
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros(&[n, c, hp, wp]);
    let od = out.data_mut();
    let xd = x.data();
    for img in 0..n * c {
        for row in 0..h {
            let src = (img * h + row) * w;
            let dst = (img * hp + row + pad) * wp + pad;
            od[dst..dst + w].copy_from_slice(&xd[src..src + w]);
        }
    }
    out
}

fn unpad_nchw<S: Scalar>(xp: &Tensor<S>, pad: usize) -> Tensor<S> {
    if pad == 0 {
        return xp.clone();
    }
    let (n, c, hp, wp) = xp.dims4();
    let (h, w) = (hp - 2 * pad, wp - 2 * pad);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    let od = out.data_mut();
    let xd = xp.data();
    for img in 0..n * c {
        for row in 0..h {
            let src = (img * hp + row + pad) * wp + pad;
            let dst = (img * h + row) * w;
            od[dst..dst + w].copy_from_slice(&xd[src..src + w]);
        }
    }
    out
}

/// Batch normalization over the channel axis of NCHW tensors.
///
/// Train mode normalizes with biased batch statistics and folds an
/// exponential update into the running statistics (running variance uses the
/// unbiased estimator); Eval mode depends only on the running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<S = f32> {
    pub ch: usize,
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub dgamma: Vec<S>,
    pub dbeta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<S>>,
}

#[derive(Debug, Clone)]
struct BnCache<S> {
    xhat: Vec<S>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(ch: usize) -> Self {
        BatchNorm2d {
            ch,
            gamma: vec![S::ONE; ch],
            beta: vec![S::ZERO; ch],
            dgamma: vec![S::ZERO; ch],
            dbeta: vec![S::ZERO; ch],
            running_mean: vec![S::ZERO; ch],
            running_var: vec![S::ONE; ch],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.ch, "batchnorm channels {} != {}", c, self.ch);
        let plane = h * w;
        let m = n * plane;
        let xd = x.data();
        let mut y = Tensor::zeros(&[n, c, h, w]);
        let yd = y.data_mut();

        if !train {
            for ci in 0..c {
                let mean = self.running_mean[ci].to_f64();
                let inv = 1.0 / (self.running_var[ci].to_f64() + self.eps).sqrt();
                let a = S::from_f64(self.gamma[ci].to_f64() * inv);
                let b = S::from_f64(
                    self.beta[ci].to_f64() - self.gamma[ci].to_f64() * inv * mean,
                );
                for bi in 0..n {
                    let base = ((bi * c) + ci) * plane;
                    for i in base..base + plane {
                        yd[i] = a * xd[i] + b;
                    }
                }
            }
            self.cache = None;
            return y;
        }

        assert!(m > 1, "batchnorm train mode needs more than one value per channel");
        let mut xhat = vec![S::ZERO; xd.len()];
        let mut inv_stds = vec![0.0f64; c];
        for ci in 0..c {
            let mut sum = 0.0f64;
            for bi in 0..n {
                let base = ((bi * c) + ci) * plane;
                for i in base..base + plane {
                    sum += xd[i].to_f64();
                }
            }
            let mean = sum / m as f64;
            let mut sq = 0.0f64;
            for bi in 0..n {
                let base = ((bi * c) + ci) * plane;
                for i in base..base + plane {
                    let d = xd[i].to_f64() - mean;
                    sq += d * d;
                }
            }
            let var = sq / m as f64; // biased, used for normalization
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_stds[ci] = inv;

            let mean_s = S::from_f64(mean);
            let inv_s = S::from_f64(inv);
            let (g, b) = (self.gamma[ci], self.beta[ci]);
            for bi in 0..n {
                let base = ((bi * c) + ci) * plane;
                for i in base..base + plane {
                    let xh = (xd[i] - mean_s) * inv_s;
                    xhat[i] = xh;
                    yd[i] = g * xh + b;
                }
            }

            let unbiased = sq / (m as f64 - 1.0);
            let mom = self.momentum;
            self.running_mean[ci] =
                S::from_f64((1.0 - mom) * self.running_mean[ci].to_f64() + mom * mean);
            self.running_var[ci] =
                S::from_f64((1.0 - mom) * self.running_var[ci].to_f64() + mom * unbiased);
        }
        self.cache = Some(BnCache { xhat, inv_std: inv_stds, shape: vec![n, c, h, w] });
        y
    }

    pub fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let cache = self.cache.as_ref().expect("batchnorm backward without cached forward");
        let (n, c, h, w) = (cache.shape[0], cache.shape[1], cache.shape[2], cache.shape[3]);
        let plane = h * w;
        let m = (n * plane) as f64;
        let dyd = dy.data();
        let xhat = &cache.xhat;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let dxd = dx.data_mut();

        for ci in 0..c {
            let mut s1 = 0.0f64; // Σ dy
            let mut s2 = 0.0f64; // Σ dy·x̂
            for bi in 0..n {
                let base = ((bi * c) + ci) * plane;
                for i in base..base + plane {
                    s1 += dyd[i].to_f64();
                    s2 += dyd[i].to_f64() * xhat[i].to_f64();
                }
            }
            self.dbeta[ci] += S::from_f64(s1);
            self.dgamma[ci] += S::from_f64(s2);

            let a = S::from_f64(self.gamma[ci].to_f64() * cache.inv_std[ci]);
            let c1 = S::from_f64(s1 / m);
            let c2 = S::from_f64(s2 / m);
            for bi in 0..n {
                let base = ((bi * c) + ci) * plane;
                for i in base..base + plane {
                    dxd[i] = a * (dyd[i] - c1 - xhat[i] * c2);
                }
            }
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.dgamma.iter_mut().for_each(|v| *v = S::ZERO);
        self.dbeta.iter_mut().for_each(|v| *v = S::ZERO);
    }
}

/// 2×2 max pooling, stride 2. Input spatial dimensions must be even.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2 { cache: None }
    }

    pub fn forward<S: Scalar>(&mut self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        let (n, c, h, w) = x.dims4();
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims, got {h}×{w}");
        let (oh, ow) = (h / 2, w / 2);
        let xd = x.data();
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        let yd = y.data_mut();
        let mut argmax = train.then(|| vec![0u32; n * c * oh * ow]);

        for img in 0..n * c {
            let xbase = img * h * w;
            let ybase = img * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = xbase + (2 * oy) * w + 2 * ox;
                    let idx = [i00, i00 + 1, i00 + w, i00 + w + 1];
                    let mut best = idx[0];
                    let mut bv = xd[idx[0]];
                    for &i in &idx[1..] {
                        if xd[i] > bv {
                            bv = xd[i];
                            best = i;
                        }
                    }
                    yd[ybase + oy * ow + ox] = bv;
                    if let Some(am) = argmax.as_mut() {
                        am[ybase + oy * ow + ox] = best as u32;
                    }
                }
            }
        }
        self.cache = argmax.map(|argmax| PoolCache { argmax, in_shape: vec![n, c, h, w] });
        y
    }

    pub fn backward<S: Scalar>(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let cache = self.cache.as_ref().expect("pool backward without cached forward");
        let mut dx = Tensor::zeros(&cache.in_shape);
        let dxd = dx.data_mut();
        for (i, dyv) in dy.data().iter().enumerate() {
            dxd[cache.argmax[i] as usize] += *dyv;
        }
        dx
    }
}

/// Elementwise ReLU.
#[derive(Debug, Clone, Default)]
pub struct Relu<S = f32> {
    cache_y: Option<Vec<S>>,
}

impl<S: Scalar> Relu<S> {
    pub fn new() -> Self {
        Relu { cache_y: None }
    }

    pub fn forward(&mut self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.maximum(S::ZERO));
        self.cache_y = train.then(|| y.data().to_vec());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let y = self.cache_y.as_ref().expect("relu backward without cached forward");
        let mut dx = dy.clone();
        for (d, &yv) in dx.data_mut().iter_mut().zip(y.iter()) {
            if yv <= S::ZERO {
                *d = S::ZERO;
            }
        }
        dx
    }
}

/// Fully connected layer. Weight layout: `[out_dim, in_dim]`, row-major.
#[derive(Debug, Clone)]
pub struct Linear<S = f32> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<S>,
    pub b: Vec<S>,
    pub dw: Vec<S>,
    pub db: Vec<S>,
    cache_x: Option<Tensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: kaiming_uniform(rng, in_dim, out_dim * in_dim),
            b: vec![S::ZERO; out_dim],
            dw: vec![S::ZERO; out_dim * in_dim],
            db: vec![S::ZERO; out_dim],
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        let (n, d) = x.dims2();
        assert_eq!(d, self.in_dim, "linear input dim {} != {}", d, self.in_dim);
        let xd = x.data();
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        let yd = y.data_mut();
        for bi in 0..n {
            let xrow = &xd[bi * d..(bi + 1) * d];
            for o in 0..self.out_dim {
                let wrow = &self.w[o * d..(o + 1) * d];
                let mut acc = S::ZERO;
                for i in 0..d {
                    acc += wrow[i] * xrow[i];
                }
                yd[bi * self.out_dim + o] = acc + self.b[o];
            }
        }
        self.cache_x = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let x = self.cache_x.as_ref().expect("linear backward without cached forward");
        let (n, d) = x.dims2();
        let xd = x.data();
        let dyd = dy.data();
        let mut dx = Tensor::zeros(&[n, d]);
        let dxd = dx.data_mut();
        for bi in 0..n {
            let xrow = &xd[bi * d..(bi + 1) * d];
            let dxrow = &mut dxd[bi * d..(bi + 1) * d];
            for o in 0..self.out_dim {
                let g = dyd[bi * self.out_dim + o];
                self.db[o] += g;
                let wrow = &self.w[o * d..(o + 1) * d];
                let dwrow = &mut self.dw[o * d..(o + 1) * d];
                for i in 0..d {
                    dwrow[i] += g * xrow[i];
                    dxrow[i] += g * wrow[i];
                }
            }
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.dw.iter_mut().for_each(|v| *v = S::ZERO);
        self.db.iter_mut().for_each(|v| *v = S::ZERO);
    }
}
