//! Layer primitives with explicit reverse-mode gradients. Every layer reads
//! its parameters from the network's flat vector through [`BlockId`] handles
//! and accumulates gradients into a same-shaped vector, which keeps the
//! optimizer, checkpoints, and finite-difference checks independent of layer
//! internals.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BlockId, Layout, LayoutBuilder, Params};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Softmax,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform +-1/sqrt(d_in) init for input-side weight matrices.
fn init_uniform(rng: &mut ChaCha8Rng, params: &mut [f64], d_in: usize) {
    let bound = 1.0 / (d_in as f64).sqrt();
    for v in params.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Random orthogonal n x n matrix via Gram-Schmidt on a Gaussian draw.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut m = Array2::from_shape_fn((n, n), |_| normal.sample(rng));
    for j in 0..n {
        for k in 0..j {
            let proj = m.column(j).dot(&m.column(k));
            let col_k = m.column(k).to_owned();
            let mut col_j = m.column_mut(j);
            col_j.zip_mut_with(&col_k, |a, &b| *a -= proj * b);
        }
        let norm = f64::sqrt(m.column(j).dot(&m.column(j))).max(1e-12);
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    m
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Time-distributed affine layer with an elementwise (or row softmax)
/// activation.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: BlockId,
    pub b: BlockId,
    pub d_in: usize,
    pub d_out: usize,
    pub activation: Activation,
}

pub struct DenseCache {
    pub x: Array2<f64>,
    pub output: Array2<f64>,
}

impl Dense {
    pub fn new(
        builder: &mut LayoutBuilder,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
    ) -> Self {
        let w = builder.add(format!("{name}.w"), &[d_in, d_out]);
        let b = builder.add(format!("{name}.b"), &[1, d_out]);
        Dense {
            w,
            b,
            d_in,
            d_out,
            activation,
        }
    }

    pub fn init(&self, layout: &Layout, params: &mut Params, rng: &mut ChaCha8Rng) {
        init_uniform(rng, params.slice_mut(layout, self.w), self.d_in);
        params.slice_mut(layout, self.b).fill(0.0);
    }

    pub fn forward(&self, layout: &Layout, params: &Params, x: &Array2<f64>) -> DenseCache {
        let w = params.mat(layout, self.w);
        let b = params.mat(layout, self.b);
        let mut pre = x.dot(&w);
        pre += &b;
        let output = match self.activation {
            Activation::Linear => pre,
            Activation::Relu => pre.mapv_into(|v| v.max(0.0)),
            Activation::Tanh => pre.mapv_into(f64::tanh),
            Activation::Softmax => {
                let mut out = pre;
                for mut row in out.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                out
            }
        };
        DenseCache {
            x: x.clone(),
            output,
        }
    }

    /// Returns dx and accumulates parameter gradients.
    pub fn backward(
        &self,
        layout: &Layout,
        params: &Params,
        cache: &DenseCache,
        dy: &Array2<f64>,
        grads: &mut Params,
    ) -> Array2<f64> {
        let dpre = match self.activation {
            Activation::Linear => dy.clone(),
            Activation::Relu => {
                let mut d = dy.clone();
                d.zip_mut_with(&cache.output, |g, &y| {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                });
                d
            }
            Activation::Tanh => {
                let mut d = dy.clone();
                d.zip_mut_with(&cache.output, |g, &y| *g *= 1.0 - y * y);
                d
            }
            Activation::Softmax => {
                let mut d = Array2::zeros(dy.raw_dim());
                for t in 0..dy.nrows() {
                    let y = cache.output.row(t);
                    let g = dy.row(t);
                    let dot = y.dot(&g);
                    for i in 0..dy.ncols() {
                        d[[t, i]] = y[i] * (g[i] - dot);
                    }
                }
                d
            }
        };
        {
            let dw_update = cache.x.t().dot(&dpre);
            let mut dw = grads.mat_mut(layout, self.w);
            dw += &dw_update;
        }
        {
            let db_update = dpre.sum_axis(Axis(0));
            let mut db = grads.mat_mut(layout, self.b);
            let mut row = db.row_mut(0);
            row += &db_update;
        }
        let w = params.mat(layout, self.w);
        dpre.dot(&w.t())
    }
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Single-direction LSTM. Gate order in the 4H axis is input, forget, cell,
/// output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_x: BlockId,
    pub w_h: BlockId,
    pub b: BlockId,
    pub d_in: usize,
    pub hidden: usize,
}

pub struct LstmCache {
    pub x: Array2<f64>,
    /// Post-activation gates, T x 4H.
    pub gates: Array2<f64>,
    pub cell: Array2<f64>,
    pub tanh_cell: Array2<f64>,
    pub hidden_states: Array2<f64>,
}

impl Lstm {
    pub fn new(builder: &mut LayoutBuilder, name: &str, d_in: usize, hidden: usize) -> Self {
        let w_x = builder.add(format!("{name}.w_x"), &[d_in, 4 * hidden]);
        let w_h = builder.add(format!("{name}.w_h"), &[hidden, 4 * hidden]);
        let b = builder.add(format!("{name}.b"), &[1, 4 * hidden]);
        Lstm {
            w_x,
            w_h,
            b,
            d_in,
            hidden,
        }
    }

    /// Orthogonal recurrent blocks, uniform input weights, forget bias 1.
    pub fn init(&self, layout: &Layout, params: &mut Params, rng: &mut ChaCha8Rng) {
        init_uniform(rng, params.slice_mut(layout, self.w_x), self.d_in);
        let h = self.hidden;
        for gate in 0..4 {
            let q = orthogonal(rng, h);
            let mut w_h = params.mat_mut(layout, self.w_h);
            w_h.slice_mut(s![.., gate * h..(gate + 1) * h]).assign(&q);
        }
        let mut b = params.mat_mut(layout, self.b);
        b.fill(0.0);
        b.slice_mut(s![.., h..2 * h]).fill(1.0);
    }

    pub fn forward(&self, layout: &Layout, params: &Params, x: &Array2<f64>) -> LstmCache {
        let t_len = x.nrows();
        let h = self.hidden;
        let w_x = params.mat(layout, self.w_x);
        let w_h = params.mat(layout, self.w_h);
        let b = params.mat(layout, self.b);

        // Input contribution for all steps in one matmul.
        let zx = x.dot(&w_x);

        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut cell = Array2::zeros((t_len, h));
        let mut tanh_cell = Array2::zeros((t_len, h));
        let mut hidden_states = Array2::zeros((t_len, h));
        let mut h_prev: Array1<f64> = Array1::zeros(h);
        let mut c_prev: Array1<f64> = Array1::zeros(h);

        for t in 0..t_len {
            let zh = h_prev.dot(&w_h);
            for j in 0..h {
                let zi = zx[[t, j]] + zh[j] + b[[0, j]];
                let zf = zx[[t, h + j]] + zh[h + j] + b[[0, h + j]];
                let zg = zx[[t, 2 * h + j]] + zh[2 * h + j] + b[[0, 2 * h + j]];
                let zo = zx[[t, 3 * h + j]] + zh[3 * h + j] + b[[0, 3 * h + j]];
                let gi = sigmoid(zi);
                let gf = sigmoid(zf);
                let gg = zg.tanh();
                let go = sigmoid(zo);
                let c = gf * c_prev[j] + gi * gg;
                let tc = c.tanh();
                gates[[t, j]] = gi;
                gates[[t, h + j]] = gf;
                gates[[t, 2 * h + j]] = gg;
                gates[[t, 3 * h + j]] = go;
                cell[[t, j]] = c;
                tanh_cell[[t, j]] = tc;
                hidden_states[[t, j]] = go * tc;
            }
            h_prev.assign(&hidden_states.row(t));
            c_prev.assign(&cell.row(t));
        }

        LstmCache {
            x: x.clone(),
            gates,
            cell,
            tanh_cell,
            hidden_states,
        }
    }

    /// Backpropagation through time. `dh` is the loss gradient on every
    /// hidden state; returns dx.
    pub fn backward(
        &self,
        layout: &Layout,
        params: &Params,
        cache: &LstmCache,
        dh: &Array2<f64>,
        grads: &mut Params,
    ) -> Array2<f64> {
        let t_len = cache.x.nrows();
        let h = self.hidden;
        let w_h = params.mat(layout, self.w_h);

        let mut dz_all = Array2::zeros((t_len, 4 * h));
        let mut dh_next: Array1<f64> = Array1::zeros(h);
        let mut dc_next: Array1<f64> = Array1::zeros(h);

        for t in (0..t_len).rev() {
            for j in 0..h {
                let gi = cache.gates[[t, j]];
                let gf = cache.gates[[t, h + j]];
                let gg = cache.gates[[t, 2 * h + j]];
                let go = cache.gates[[t, 3 * h + j]];
                let tc = cache.tanh_cell[[t, j]];
                let c_prev = if t > 0 { cache.cell[[t - 1, j]] } else { 0.0 };

                let dht = dh[[t, j]] + dh_next[j];
                let dgo = dht * tc;
                let dc = dc_next[j] + dht * go * (1.0 - tc * tc);
                let dgi = dc * gg;
                let dgf = dc * c_prev;
                let dgg = dc * gi;
                dc_next[j] = dc * gf;

                dz_all[[t, j]] = dgi * gi * (1.0 - gi);
                dz_all[[t, h + j]] = dgf * gf * (1.0 - gf);
                dz_all[[t, 2 * h + j]] = dgg * (1.0 - gg * gg);
                dz_all[[t, 3 * h + j]] = dgo * go * (1.0 - go);
            }
            let dz_row = dz_all.row(t);
            dh_next = dz_row.dot(&w_h.t());
        }

        // Batched parameter gradients.
        {
            let dwx_update = cache.x.t().dot(&dz_all);
            let mut dwx = grads.mat_mut(layout, self.w_x);
            dwx += &dwx_update;
        }
        {
            // h_prev rows: zero, h_0 .. h_{T-2}.
            let mut h_prev_mat = Array2::zeros((t_len, h));
            if t_len > 1 {
                h_prev_mat
                    .slice_mut(s![1.., ..])
                    .assign(&cache.hidden_states.slice(s![..t_len - 1, ..]));
            }
            let dwh_update = h_prev_mat.t().dot(&dz_all);
            let mut dwh = grads.mat_mut(layout, self.w_h);
            dwh += &dwh_update;
        }
        {
            let db_update = dz_all.sum_axis(Axis(0));
            let mut db = grads.mat_mut(layout, self.b);
            let mut row = db.row_mut(0);
            row += &db_update;
        }
        let w_x = params.mat(layout, self.w_x);
        dz_all.dot(&w_x.t())
    }
}

// ---------------------------------------------------------------------------
// BLSTM
// ---------------------------------------------------------------------------

fn reverse_time(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Bidirectional LSTM layer: forward and backward passes concatenated to
/// 2 x hidden output channels.
#[derive(Debug, Clone)]
pub struct Blstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
    pub hidden: usize,
}

pub struct BlstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
    pub output: Array2<f64>,
}

impl Blstm {
    pub fn new(builder: &mut LayoutBuilder, name: &str, d_in: usize, hidden: usize) -> Self {
        Blstm {
            fwd: Lstm::new(builder, &format!("{name}.fwd"), d_in, hidden),
            bwd: Lstm::new(builder, &format!("{name}.bwd"), d_in, hidden),
            hidden,
        }
    }

    pub fn d_out(&self) -> usize {
        2 * self.hidden
    }

    pub fn init(&self, layout: &Layout, params: &mut Params, rng: &mut ChaCha8Rng) {
        self.fwd.init(layout, params, rng);
        self.bwd.init(layout, params, rng);
    }

    pub fn forward(&self, layout: &Layout, params: &Params, x: &Array2<f64>) -> BlstmCache {
        let fwd = self.fwd.forward(layout, params, x);
        let x_rev = reverse_time(x);
        let bwd = self.bwd.forward(layout, params, &x_rev);
        let t_len = x.nrows();
        let h = self.hidden;
        let mut output = Array2::zeros((t_len, 2 * h));
        output
            .slice_mut(s![.., ..h])
            .assign(&fwd.hidden_states);
        output
            .slice_mut(s![.., h..])
            .assign(&reverse_time(&bwd.hidden_states));
        BlstmCache { fwd, bwd, output }
    }

    pub fn backward(
        &self,
        layout: &Layout,
        params: &Params,
        cache: &BlstmCache,
        dy: &Array2<f64>,
        grads: &mut Params,
    ) -> Array2<f64> {
        let h = self.hidden;
        let dy_f = dy.slice(s![.., ..h]).to_owned();
        let dy_b = reverse_time(&dy.slice(s![.., h..]).to_owned());
        let dx_f = self.fwd.backward(layout, params, &cache.fwd, &dy_f, grads);
        let dx_b_rev = self.bwd.backward(layout, params, &cache.bwd, &dy_b, grads);
        dx_f + reverse_time(&dx_b_rev)
    }
}

// ---------------------------------------------------------------------------
// TDNN (dilated 1-D convolution, valid framing, ReLU)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Tdnn {
    pub w: BlockId,
    pub b: BlockId,
    pub d_in: usize,
    pub d_out: usize,
    pub kernel: usize,
    pub dilation: usize,
}

pub struct TdnnCache {
    pub x: Array2<f64>,
    pub output: Array2<f64>,
}

impl Tdnn {
    pub fn new(
        builder: &mut LayoutBuilder,
        name: &str,
        d_in: usize,
        d_out: usize,
        kernel: usize,
        dilation: usize,
    ) -> Self {
        let w = builder.add(format!("{name}.w"), &[kernel * d_in, d_out]);
        let b = builder.add(format!("{name}.b"), &[1, d_out]);
        Tdnn {
            w,
            b,
            d_in,
            d_out,
            kernel,
            dilation,
        }
    }

    /// Frames of left+right context consumed by this layer.
    pub fn context(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        t_in - self.context()
    }

    pub fn init(&self, layout: &Layout, params: &mut Params, rng: &mut ChaCha8Rng) {
        init_uniform(
            rng,
            params.slice_mut(layout, self.w),
            self.kernel * self.d_in,
        );
        params.slice_mut(layout, self.b).fill(0.0);
    }

    pub fn forward(&self, layout: &Layout, params: &Params, x: &Array2<f64>) -> TdnnCache {
        let t_out = self.out_len(x.nrows());
        let w = params.mat(layout, self.w);
        let b = params.mat(layout, self.b);
        let mut pre = Array2::zeros((t_out, self.d_out));
        pre += &b;
        for k in 0..self.kernel {
            let off = k * self.dilation;
            let x_slice = x.slice(s![off..off + t_out, ..]);
            let w_k = w.slice(s![k * self.d_in..(k + 1) * self.d_in, ..]);
            pre += &x_slice.dot(&w_k);
        }
        let output = pre.mapv_into(|v| v.max(0.0));
        TdnnCache {
            x: x.clone(),
            output,
        }
    }

    pub fn backward(
        &self,
        layout: &Layout,
        params: &Params,
        cache: &TdnnCache,
        dy: &Array2<f64>,
        grads: &mut Params,
    ) -> Array2<f64> {
        let t_out = dy.nrows();
        let mut dpre = dy.clone();
        dpre.zip_mut_with(&cache.output, |g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });

        let w = params.mat(layout, self.w);
        let mut dx = Array2::zeros(cache.x.raw_dim());
        for k in 0..self.kernel {
            let off = k * self.dilation;
            let x_slice = cache.x.slice(s![off..off + t_out, ..]);
            let dw_update = x_slice.t().dot(&dpre);
            {
                let mut dw = grads.mat_mut(layout, self.w);
                let mut dw_k = dw.slice_mut(s![k * self.d_in..(k + 1) * self.d_in, ..]);
                dw_k += &dw_update;
            }
            let w_k = w.slice(s![k * self.d_in..(k + 1) * self.d_in, ..]);
            let dx_update = dpre.dot(&w_k.t());
            let mut dx_slice = dx.slice_mut(s![off..off + t_out, ..]);
            dx_slice += &dx_update;
        }
        {
            let db_update = dpre.sum_axis(Axis(0));
            let mut db = grads.mat_mut(layout, self.b);
            let mut row = db.row_mut(0);
            row += &db_update;
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Statistics pooling
// ---------------------------------------------------------------------------

/// Temporal statistics pooling: per-channel mean and population standard
/// deviation (floored at 1e-8) concatenated into a fixed vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct StatsPool;

pub struct StatsPoolCache {
    pub x: Array2<f64>,
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl StatsPool {
    pub fn forward(&self, x: &Array2<f64>) -> (Array1<f64>, StatsPoolCache) {
        let t = x.nrows() as f64;
        let c = x.ncols();
        let mean = x.sum_axis(Axis(0)) / t;
        let mut std = Array1::zeros(c);
        for j in 0..c {
            let m = mean[j];
            let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t;
            std[j] = var.sqrt();
        }
        let mut out = Array1::zeros(2 * c);
        out.slice_mut(s![..c]).assign(&mean);
        for j in 0..c {
            out[c + j] = std[j].max(STD_FLOOR);
        }
        (
            out,
            StatsPoolCache {
                x: x.clone(),
                mean,
                std,
            },
        )
    }

    pub fn backward(&self, cache: &StatsPoolCache, dout: &Array1<f64>) -> Array2<f64> {
        let t = cache.x.nrows();
        let c = cache.x.ncols();
        let tf = t as f64;
        let mut dx = Array2::zeros((t, c));
        for j in 0..c {
            let dmean = dout[j];
            // Below the floor the std path is constant; subgradient zero.
            let dstd = if cache.std[j] > STD_FLOOR {
                dout[c + j]
            } else {
                0.0
            };
            for i in 0..t {
                let centered = cache.x[[i, j]] - cache.mean[j];
                let mut g = dmean / tf;
                if dstd != 0.0 {
                    g += dstd * centered / (tf * cache.std[j]);
                }
                dx[[i, j]] = g;
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::rng_for;
    use ndarray::arr2;

    #[test]
    fn dense_identity_passthrough() {
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "d", 3, 3, Activation::Linear);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        {
            let mut w = params.mat_mut(&layout, dense.w);
            for i in 0..3 {
                w[[i, i]] = 1.0;
            }
        }
        let x = arr2(&[[1.0, -2.0, 3.0], [0.5, 0.0, -0.25]]);
        let out = dense.forward(&layout, &params, &x);
        assert_eq!(out.output, x);
    }

    #[test]
    fn dense_zero_params_zero_output() {
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "d", 4, 2, Activation::Linear);
        let layout = builder.finish();
        let params = Params::zeros(&layout);
        let x = arr2(&[[1.0, 2.0, 3.0, 4.0]]);
        let out = dense.forward(&layout, &params, &x);
        assert!(out.output.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "d", 3, 5, Activation::Softmax);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[1]);
        dense.init(&layout, &mut params, &mut rng);
        let x = arr2(&[[1.0, -2.0, 3.0], [10.0, 20.0, -5.0]]);
        let out = dense.forward(&layout, &params, &x);
        for row in out.output.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lstm_zero_params_zero_output() {
        let mut builder = Layout::builder();
        let lstm = Lstm::new(&mut builder, "l", 3, 4);
        let layout = builder.finish();
        let params = Params::zeros(&layout);
        let x = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let cache = lstm.forward(&layout, &params, &x);
        assert!(cache.hidden_states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blstm_output_shape_is_twice_hidden() {
        let mut builder = Layout::builder();
        let blstm = Blstm::new(&mut builder, "b", 5, 7);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[2]);
        blstm.init(&layout, &mut params, &mut rng);
        let x = Array2::from_shape_fn((9, 5), |(i, j)| (i as f64 - j as f64) * 0.1);
        let cache = blstm.forward(&layout, &params, &x);
        assert_eq!(cache.output.dim(), (9, 14));
    }

    #[test]
    fn blstm_tied_reversal_symmetry() {
        // With backward params tied to forward params, feeding the reversed
        // input must reproduce the original output time-reversed with halves
        // swapped.
        let mut builder = Layout::builder();
        let blstm = Blstm::new(&mut builder, "b", 3, 4);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[3]);
        blstm.init(&layout, &mut params, &mut rng);
        // Tie: copy forward blocks onto backward blocks.
        for (f, b) in [
            (blstm.fwd.w_x, blstm.bwd.w_x),
            (blstm.fwd.w_h, blstm.bwd.w_h),
            (blstm.fwd.b, blstm.bwd.b),
        ] {
            let src = params.slice(&layout, f).to_vec();
            params.slice_mut(&layout, b).copy_from_slice(&src);
        }
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let y = blstm.forward(&layout, &params, &x).output;
        let y_rev_in = blstm.forward(&layout, &params, &reverse_time(&x)).output;

        let h = blstm.hidden;
        let mut swapped = Array2::zeros(y.raw_dim());
        swapped.slice_mut(s![.., ..h]).assign(&y.slice(s![.., h..]));
        swapped.slice_mut(s![.., h..]).assign(&y.slice(s![.., ..h]));
        let expected = reverse_time(&swapped);
        for (a, b) in y_rev_in.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tdnn_shrinks_by_context() {
        let mut builder = Layout::builder();
        let tdnn = Tdnn::new(&mut builder, "t", 4, 6, 3, 2);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[4]);
        tdnn.init(&layout, &mut params, &mut rng);
        assert_eq!(tdnn.context(), 4);
        let x = Array2::from_shape_fn((10, 4), |(i, j)| (i + j) as f64 * 0.05);
        let cache = tdnn.forward(&layout, &params, &x);
        assert_eq!(cache.output.dim(), (6, 6));
    }

    #[test]
    fn stats_pool_constant_and_two_frame() {
        let pool = StatsPool;
        let x = Array2::from_elem((5, 3), 2.5);
        let (out, _) = pool.forward(&x);
        assert_eq!(out.len(), 6);
        for j in 0..3 {
            assert!((out[j] - 2.5).abs() < 1e-12);
            assert!(out[3 + j] <= STD_FLOOR);
        }
        // Two frames [0] and [2]: mean 1, population std 1.
        let x = arr2(&[[0.0], [2.0]]);
        let (out, _) = pool.forward(&x);
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!((out[1] - 1.0).abs() < 1e-12);
    }
}
