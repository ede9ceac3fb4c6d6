//! Forward pass, Huber loss and backpropagation through time.

use super::params::{Gate, LstmParams};
use super::ForecastError;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activations of one time step, kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn gate_preactivation(params: &LstmParams, gate: Gate, x: f64, h_prev: &[f64]) -> Vec<f64> {
    let cols = params.cols();
    let w = params.weights(gate);
    let b = params.bias(gate);
    (0..params.hidden_size())
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            row[0] * x + row[1..].iter().zip(h_prev).map(|(a, h)| a * h).sum::<f64>() + b[r]
        })
        .collect()
}

fn step(params: &LstmParams, x: f64, h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
    let i: Vec<f64> = gate_preactivation(params, Gate::Input, x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let f: Vec<f64> = gate_preactivation(params, Gate::Forget, x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let o: Vec<f64> = gate_preactivation(params, Gate::Output, x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let g: Vec<f64> = gate_preactivation(params, Gate::Candidate, x, h_prev)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let c: Vec<f64> = (0..params.hidden_size())
        .map(|r| f[r] * c_prev[r] + i[r] * g[r])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    let cache = StepCache {
        x,
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    (h, c, cache)
}

/// One LSTM cell update. Returns `(h_t, c_t)`.
pub fn cell_forward(
    params: &LstmParams,
    x: f64,
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    let hidden = params.hidden_size();
    if h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(ForecastError::StateSize {
            expected: hidden,
            got: h_prev.len().max(c_prev.len()),
        });
    }
    let (h, c, _) = step(params, x, h_prev, c_prev);
    if h.iter().chain(&c).any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("cell state"));
    }
    Ok((h, c))
}

struct Unrolled {
    caches: Vec<StepCache>,
    h_last: Vec<f64>,
    /// Head pre-activation `w_out . h_L + b_out`.
    pre: f64,
}

fn unroll(params: &LstmParams, window: &[f64]) -> Unrolled {
    let hidden = params.hidden_size();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches = Vec::with_capacity(window.len());
    for &x in window {
        let (h_next, c_next, cache) = step(params, x, &h, &c);
        caches.push(cache);
        h = h_next;
        c = c_next;
    }
    let pre = params
        .head_weights()
        .iter()
        .zip(&h)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + params.head_bias();
    Unrolled {
        caches,
        h_last: h,
        pre,
    }
}

fn check_window(window: &[f64], expected: usize) -> Result<(), ForecastError> {
    if window.len() != expected {
        return Err(ForecastError::WindowLength {
            expected,
            got: window.len(),
        });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("input window"));
    }
    Ok(())
}

/// Runs the cell over `window` from a zero state and applies the ReLU head.
/// `window_length` is the length the model was built for.
pub fn forward_window(params: &LstmParams, window: &[f64], window_length: usize) -> Result<f64, ForecastError> {
    check_window(window, window_length)?;
    let pre = unroll(params, window).pre;
    if !pre.is_finite() {
        return Err(ForecastError::NonFinite("prediction"));
    }
    Ok(pre.max(0.0))
}

/// Huber loss of prediction `y_hat` against `y`, and its derivative in `y_hat`.
pub fn huber_loss(y: f64, y_hat: f64, delta: f64) -> (f64, f64) {
    let e = y_hat - y;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// Gradient of `huber_loss(target, forward_window(window))` with respect to
/// every parameter. Returns the gradient and the loss.
pub fn backward_window(
    params: &LstmParams,
    window: &[f64],
    target: f64,
    window_length: usize,
    delta: f64,
) -> Result<(LstmParams, f64), ForecastError> {
    check_window(window, window_length)?;
    let hidden = params.hidden_size();
    let cols = params.cols();
    let run = unroll(params, window);
    let y_hat = run.pre.max(0.0);
    let (loss, dloss) = huber_loss(target, y_hat, delta);
    let mut grads = LstmParams::zeros(hidden);

    // ReLU subgradient at zero is zero.
    let dpre = if run.pre > 0.0 { dloss } else { 0.0 };
    if dpre == 0.0 {
        return finish(grads, loss);
    }
    for (gw, h) in grads.head_weights_mut().iter_mut().zip(&run.h_last) {
        *gw = dpre * h;
    }
    grads.set_head_bias(dpre);

    let mut dh: Vec<f64> = params.head_weights().iter().map(|w| dpre * w).collect();
    let mut dc = vec![0.0; hidden];
    let mut dz = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];

    for cache in run.caches.iter().rev() {
        for r in 0..hidden {
            let t = cache.tanh_c[r];
            let d_o = dh[r] * t;
            dc[r] += dh[r] * cache.o[r] * (1.0 - t * t);
            let d_f = dc[r] * cache.c_prev[r];
            let d_i = dc[r] * cache.g[r];
            let d_g = dc[r] * cache.i[r];
            dz[Gate::Input as usize][r] = d_i * cache.i[r] * (1.0 - cache.i[r]);
            dz[Gate::Forget as usize][r] = d_f * cache.f[r] * (1.0 - cache.f[r]);
            dz[Gate::Output as usize][r] = d_o * cache.o[r] * (1.0 - cache.o[r]);
            dz[Gate::Candidate as usize][r] = d_g * (1.0 - cache.g[r] * cache.g[r]);
            dc[r] *= cache.f[r];
        }
        let mut dh_prev = vec![0.0; hidden];
        for gate in Gate::ALL {
            let dzg = &dz[gate as usize];
            let w = params.weights(gate);
            {
                let gw = grads.weights_mut(gate);
                for r in 0..hidden {
                    let row = &mut gw[r * cols..(r + 1) * cols];
                    row[0] += dzg[r] * cache.x;
                    for (j, h) in cache.h_prev.iter().enumerate() {
                        row[1 + j] += dzg[r] * h;
                    }
                }
            }
            for (gb, d) in grads.bias_mut(gate).iter_mut().zip(dzg) {
                *gb += d;
            }
            for r in 0..hidden {
                let row = &w[r * cols + 1..(r + 1) * cols];
                for (acc, wv) in dh_prev.iter_mut().zip(row) {
                    *acc += wv * dzg[r];
                }
            }
        }
        dh = dh_prev;
    }
    finish(grads, loss)
}

fn finish(grads: LstmParams, loss: f64) -> Result<(LstmParams, f64), ForecastError> {
    if !loss.is_finite() {
        return Err(ForecastError::NonFinite("loss"));
    }
    if !grads.is_finite() {
        return Err(ForecastError::NonFinite("gradient"));
    }
    Ok((grads, loss))
}

#[cfg(test)]
mod tests {
    use super::super::params::init_params;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-line re-implementation of the gate equations, written
    /// independently of `step` (explicit per-lane loops, no shared helpers).
    fn naive_cell(p: &LstmParams, x: f64, h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden_size();
        let mut h_out = vec![0.0; n];
        let mut c_out = vec![0.0; n];
        for r in 0..n {
            let mut z = [0.0f64; 4];
            for (k, gate) in Gate::ALL.iter().enumerate() {
                let w = p.weights(*gate);
                let mut acc = p.bias(*gate)[r] + w[r * (n + 1)] * x;
                for j in 0..n {
                    acc += w[r * (n + 1) + 1 + j] * h[j];
                }
                z[k] = acc;
            }
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let (i, f, o, g) = (sig(z[0]), sig(z[1]), sig(z[2]), z[3].tanh());
            c_out[r] = f * c[r] + i * g;
            h_out[r] = o * c_out[r].tanh();
        }
        (h_out, c_out)
    }

    fn naive_forward(p: &LstmParams, window: &[f64]) -> f64 {
        let n = p.hidden_size();
        let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
        for &x in window {
            let (h2, c2) = naive_cell(p, x, &h, &c);
            h = h2;
            c = c2;
        }
        let mut pre = p.head_bias();
        for r in 0..n {
            pre += p.head_weights()[r] * h[r];
        }
        if pre > 0.0 { pre } else { 0.0 }
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmParams::zeros(4);
        let (h, c) = cell_forward(&p, 0.7, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn forget_bias_carries_cell() {
        let mut p = LstmParams::zeros(3);
        p.bias_mut(Gate::Forget).fill(1.0);
        let (_, c) = cell_forward(&p, 0.2, &[0.0; 3], &[1.0; 3]).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        for v in c {
            assert!((v - expected).abs() < 1e-15);
            assert!((v - 0.7311).abs() < 1e-4);
        }
    }

    #[test]
    fn cell_matches_naive_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let p = init_params(5, seed);
            let h: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (h1, c1) = cell_forward(&p, 0.3, &h, &c).unwrap();
            let (h2, c2) = naive_cell(&p, 0.3, &h, &c);
            for (a, b) in h1.iter().zip(&h2).chain(c1.iter().zip(&c2)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn state_size_checked() {
        let p = LstmParams::zeros(2);
        assert!(matches!(
            cell_forward(&p, 0.0, &[0.0; 3], &[0.0; 2]),
            Err(ForecastError::StateSize { .. })
        ));
    }

    #[test]
    fn head_bias_and_relu_clamp() {
        let mut p = LstmParams::zeros(4);
        p.set_head_bias(0.4);
        assert_eq!(forward_window(&p, &[0.1, 0.9, 0.3], 3).unwrap(), 0.4);
        p.set_head_bias(-0.4);
        assert_eq!(forward_window(&p, &[0.1, 0.9, 0.3], 3).unwrap(), 0.0);
        assert!(matches!(
            forward_window(&p, &[0.1, 0.9], 3),
            Err(ForecastError::WindowLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..10 {
            let mut p = init_params(6, seed);
            p.set_head_bias(0.5);
            let window: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
            let a = forward_window(&p, &window, 8).unwrap();
            assert_eq!(a, forward_window(&p, &window, 8).unwrap());
            assert!((a - naive_forward(&p, &window)).abs() < 1e-12);
        }
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber_loss(0.3, 0.3, 1.0), (0.0, 0.0));
        assert_eq!(huber_loss(0.0, 0.5, 1.0), (0.125, 0.5));
        assert_eq!(huber_loss(0.0, 2.0, 1.0), (1.5, 1.0));
        assert_eq!(huber_loss(2.0, 0.0, 1.0), (1.5, -1.0));
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let mut p = LstmParams::zeros(3);
        p.set_head_bias(0.25);
        let (g, loss) = backward_window(&p, &[0.1, 0.2], 0.25, 2, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamped_head_has_no_gradient() {
        let mut p = init_params(3, 2);
        p.set_head_bias(-10.0);
        let (g, loss) = backward_window(&p, &[0.1, 0.2, 0.3], 0.5, 3, 1.0).unwrap();
        assert_eq!(loss, 0.125);
        assert!(g.head_weights().iter().all(|&v| v == 0.0));
        assert_eq!(g.head_bias(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (hidden, length) = (3, 4);
        let mut p = init_params(hidden, 42);
        p.set_head_bias(0.6);
        let window: Vec<f64> = (0..length).map(|_| rng.random_range(0.0..1.0)).collect();
        let target = 0.1;
        let (g, _) = backward_window(&p, &window, target, length, 1.0).unwrap();
        let step = 1e-5;
        for k in 0..p.as_slice().len() {
            let mut plus = p.clone();
            plus.as_mut_slice()[k] += step;
            let mut minus = p.clone();
            minus.as_mut_slice()[k] -= step;
            let lp = huber_loss(target, naive_forward(&plus, &window), 1.0).0;
            let lm = huber_loss(target, naive_forward(&minus, &window), 1.0).0;
            let numeric = (lp - lm) / (2.0 * step);
            let analytic = g.as_slice()[k];
            if analytic.abs().max(numeric.abs()) > 1e-8 {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
                assert!(rel < 1e-4, "{}: analytic {analytic} numeric {numeric}", p.describe(k));
            }
        }
    }
}
