//! Central finite-difference gradient verification. This is the correctness
//! anchor for every layer and loss: analytic gradients must match the
//! numerical estimate to a relative error below 1e-4 at 64-bit precision.

pub const GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// |a - n| / max(|a| + |n|, 1e-6).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compare an analytic gradient against central finite differences of
/// `loss_fn` over the given parameter indices. Returns the worst relative
/// error, panicking with context on failure when `panic_on_fail`.
pub fn check_gradients<F>(
    params: &mut super::Params,
    mut loss_fn: F,
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
    tol: f64,
) -> Result<f64, String>
where
    F: FnMut(&super::Params) -> f64,
{
    assert_eq!(analytic.len(), params.data.len());
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = params.data[i];
        params.data[i] = orig + eps;
        let up = loss_fn(params);
        params.data[i] = orig - eps;
        let down = loss_fn(params);
        params.data[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > worst {
            worst = err;
        }
        if err > tol {
            return Err(format!(
                "gradient mismatch at parameter {i}: analytic {} vs numeric {numeric} \
                 (relative error {err:.3e})",
                analytic[i]
            ));
        }
    }
    Ok(worst)
}

/// Every index when the parameter vector is small, otherwise a deterministic
/// stride-based subsample.
pub fn sample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        let stride = n / max;
        (0..max).map(|k| k * stride).collect()
    }
}

// ---------------------------------------------------------------------------
// Layer-by-layer verification cases
// ---------------------------------------------------------------------------

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::rng_for;

use super::layers::{Activation, Blstm, Dense, Lstm, StatsPool, Tdnn};
use super::{loss, Layout, Params};

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub n_params: usize,
    pub worst_rel_err: f64,
}

fn rand_mat(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
}

fn run_case<F, G>(
    name: &str,
    layout: &Layout,
    params: &Params,
    loss_fn: F,
    analytic_fn: G,
) -> std::result::Result<GradCase, String>
where
    F: Fn(&Params) -> f64,
    G: Fn(&Params) -> Params,
{
    let grads = analytic_fn(params);
    let mut probe = params.clone();
    let indices = sample_indices(layout.len(), 2000);
    let worst = check_gradients(
        &mut probe,
        &loss_fn,
        &grads.data,
        &indices,
        GRADCHECK_EPS,
        GRADCHECK_TOL,
    )
    .map_err(|e| format!("{name}: {e}"))?;
    Ok(GradCase {
        name: name.to_string(),
        n_params: layout.len(),
        worst_rel_err: worst,
    })
}

/// Verify analytic gradients for every layer and loss against central finite
/// differences on randomized small shapes. Returns one entry per case.
pub fn verify_all_layer_gradients(seed: u64) -> std::result::Result<Vec<GradCase>, String> {
    let mut out = Vec::new();

    // Dense with each activation, driven by MSE.
    for (activation, name) in [
        (Activation::Linear, "dense.linear+mse"),
        (Activation::Relu, "dense.relu+mse"),
        (Activation::Tanh, "dense.tanh+mse"),
    ] {
        let mut rng = rng_for(&[seed, 0xD0, out.len() as u64]);
        let (t, d_in, d_out) = (5, 4, 3);
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "d", d_in, d_out, activation);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        dense.init(&layout, &mut params, &mut rng);
        for v in params.slice_mut(&layout, dense.b) {
            *v = rng.random_range(-0.5..0.5);
        }
        let x = rand_mat(&mut rng, t, d_in);
        let target = rand_mat(&mut rng, t, d_out);
        let case = run_case(
            name,
            &layout,
            &params,
            |p| {
                let c = dense.forward(&layout, p, &x);
                loss::mse(&c.output, &target).expect("shapes agree")
            },
            |p| {
                let cache = dense.forward(&layout, p, &x);
                let (_, dpred) =
                    loss::mse_with_grad(&cache.output, &target, cache.output.len())
                        .expect("shapes agree");
                let mut grads = Params::zeros(&layout);
                dense.backward(&layout, p, &cache, &dpred, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    // Softmax + cross-entropy.
    {
        let mut rng = rng_for(&[seed, 0xCE]);
        let (t, d_in, k) = (6, 4, 5);
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "sm", d_in, k, Activation::Softmax);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        dense.init(&layout, &mut params, &mut rng);
        for v in params.slice_mut(&layout, dense.b) {
            *v = rng.random_range(-0.5..0.5);
        }
        let x = rand_mat(&mut rng, t, d_in);
        let labels: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();
        let case = run_case(
            "softmax+cross_entropy",
            &layout,
            &params,
            |p| {
                let c = dense.forward(&layout, p, &x);
                loss::cross_entropy(&c.output, &labels).expect("shapes agree")
            },
            |p| {
                let cache = dense.forward(&layout, p, &x);
                let (_, dprobs) =
                    loss::cross_entropy_with_grad(&cache.output, &labels, labels.len())
                        .expect("shapes agree");
                let mut grads = Params::zeros(&layout);
                dense.backward(&layout, p, &cache, &dprobs, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    // LSTM driven by MSE on its hidden states.
    {
        let mut rng = rng_for(&[seed, 0x15]);
        let (t, d_in, hidden) = (7, 3, 4);
        let mut builder = Layout::builder();
        let lstm = Lstm::new(&mut builder, "l", d_in, hidden);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        lstm.init(&layout, &mut params, &mut rng);
        let x = rand_mat(&mut rng, t, d_in);
        let target = rand_mat(&mut rng, t, hidden);
        let case = run_case(
            "lstm+mse",
            &layout,
            &params,
            |p| {
                let c = lstm.forward(&layout, p, &x);
                loss::mse(&c.hidden_states, &target).expect("shapes agree")
            },
            |p| {
                let cache = lstm.forward(&layout, p, &x);
                let (_, dh) =
                    loss::mse_with_grad(&cache.hidden_states, &target, target.len())
                        .expect("shapes agree");
                let mut grads = Params::zeros(&layout);
                lstm.backward(&layout, p, &cache, &dh, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    // BLSTM driven by MSE on the concatenated output.
    {
        let mut rng = rng_for(&[seed, 0xB1]);
        let (t, d_in, hidden) = (6, 3, 3);
        let mut builder = Layout::builder();
        let blstm = Blstm::new(&mut builder, "b", d_in, hidden);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        blstm.init(&layout, &mut params, &mut rng);
        let x = rand_mat(&mut rng, t, d_in);
        let target = rand_mat(&mut rng, t, 2 * hidden);
        let case = run_case(
            "blstm+mse",
            &layout,
            &params,
            |p| {
                let c = blstm.forward(&layout, p, &x);
                loss::mse(&c.output, &target).expect("shapes agree")
            },
            |p| {
                let cache = blstm.forward(&layout, p, &x);
                let (_, dy) = loss::mse_with_grad(&cache.output, &target, target.len())
                    .expect("shapes agree");
                let mut grads = Params::zeros(&layout);
                blstm.backward(&layout, p, &cache, &dy, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    // TDNN driven by MSE on the shrunk output.
    {
        let mut rng = rng_for(&[seed, 0x7D]);
        let (t, d_in, d_out, kernel, dilation) = (7, 4, 3, 3, 2);
        let mut builder = Layout::builder();
        let tdnn = Tdnn::new(&mut builder, "t", d_in, d_out, kernel, dilation);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        tdnn.init(&layout, &mut params, &mut rng);
        for v in params.slice_mut(&layout, tdnn.b) {
            *v = rng.random_range(-0.3..0.3);
        }
        let x = rand_mat(&mut rng, t, d_in);
        let target = rand_mat(&mut rng, tdnn.out_len(t), d_out);
        let case = run_case(
            "tdnn+mse",
            &layout,
            &params,
            |p| {
                let c = tdnn.forward(&layout, p, &x);
                loss::mse(&c.output, &target).expect("shapes agree")
            },
            |p| {
                let cache = tdnn.forward(&layout, p, &x);
                let (_, dy) = loss::mse_with_grad(&cache.output, &target, target.len())
                    .expect("shapes agree");
                let mut grads = Params::zeros(&layout);
                tdnn.backward(&layout, p, &cache, &dy, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    // Dense -> stats pooling -> squared error on the pooled vector.
    {
        let mut rng = rng_for(&[seed, 0x59]);
        let (t, d_in, c) = (6, 4, 3);
        let mut builder = Layout::builder();
        let dense = Dense::new(&mut builder, "pre", d_in, c, Activation::Tanh);
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        dense.init(&layout, &mut params, &mut rng);
        let pool = StatsPool;
        let x = rand_mat(&mut rng, t, d_in);
        let target: Array1<f64> = Array1::from_shape_fn(2 * c, |_| rng.random_range(-1.0..1.0));
        let pooled_loss = |out: &Array1<f64>| -> f64 {
            out.iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / out.len() as f64
        };
        let case = run_case(
            "stats_pool+mse",
            &layout,
            &params,
            |p| {
                let cache = dense.forward(&layout, p, &x);
                let (out, _) = pool.forward(&cache.output);
                pooled_loss(&out)
            },
            |p| {
                let cache = dense.forward(&layout, p, &x);
                let (out, pool_cache) = pool.forward(&cache.output);
                let dout: Array1<f64> = Array1::from_shape_fn(2 * c, |i| {
                    2.0 * (out[i] - target[i]) / out.len() as f64
                });
                let dx = pool.backward(&pool_cache, &dout);
                let mut grads = Params::zeros(&layout);
                dense.backward(&layout, p, &cache, &dx, &mut grads);
                grads
            },
        )?;
        out.push(case);
    }

    Ok(out)
}
