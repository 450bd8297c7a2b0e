//! Central finite differences against the analytic gradients.

use lineage_sim::data::Split;
use lineage_sim::net::DenseNet;

/// Largest relative gap between analytic and numeric gradients over every
/// weight and bias. Gaps where both sides are below `floor` count as zero.
pub fn max_relative_error(net: &DenseNet, split: &Split, eps: f64, floor: f64) -> f64 {
    let (_, grads) = net.loss_and_gradients(split).unwrap();
    let loss_at = |probe: &DenseNet| probe.loss(split).unwrap();
    let rel = |a: f64, n: f64| {
        let scale = a.abs().max(n.abs());
        if scale < floor {
            0.0
        } else {
            (a - n).abs() / scale
        }
    };
    let mut worst = 0.0f64;
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut up = net.clone();
                up.layers[l].weights[[r, c]] += eps;
                let mut down = net.clone();
                down.layers[l].weights[[r, c]] -= eps;
                let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * eps);
                worst = worst.max(rel(grads.weights[l][[r, c]], numeric));
            }
        }
        for r in 0..rows {
            let mut up = net.clone();
            up.layers[l].bias[r] += eps;
            let mut down = net.clone();
            down.layers[l].bias[r] -= eps;
            let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * eps);
            worst = worst.max(rel(grads.bias[l][r], numeric));
        }
    }
    worst
}
