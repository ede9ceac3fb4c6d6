//! Compares backpropagated LSTM gradients with central finite differences.

use edgecast::forecast::{backward_window, forward_window, huber_loss, init_params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (hidden, length, delta) = (4, 6, 1.0);
    let mut params = init_params(hidden, 3);
    params.set_head_bias(0.5);
    let window = [0.1, 0.4, 0.35, 0.8, 0.6, 0.2];
    let target = 0.3;

    let (grad, loss) = backward_window(&params, &window, target, length, delta)?;
    println!("loss {loss:.6}, {} parameters", grad.as_slice().len());

    let loss_at = |p: &edgecast::forecast::LstmParams| -> f64 {
        huber_loss(target, forward_window(p, &window, length).unwrap(), delta).0
    };
    let step = 1e-5;
    let mut worst = (0.0, 0);
    for k in 0..params.as_slice().len() {
        let mut plus = params.clone();
        plus.as_mut_slice()[k] += step;
        let mut minus = params.clone();
        minus.as_mut_slice()[k] -= step;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
        let analytic = grad.as_slice()[k];
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-8 {
            let rel = (analytic - numeric).abs() / scale;
            if rel > worst.0 {
                worst = (rel, k);
            }
        }
    }
    println!("worst relative error {:.2e} at {}", worst.0, params.describe(worst.1));
    Ok(())
}
