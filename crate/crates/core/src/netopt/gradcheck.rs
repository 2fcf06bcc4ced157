//! Central finite-difference verification of analytic gradients.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::Mlp;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &mut [f64], i: usize, h: f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Compares [`Mlp::backward`] against central differences for a random
/// linear scalar loss `sum(w * output)` and returns the worst relative error
/// over all parameters.
pub fn grad_check(net: &Mlp, input: &[f64], rng: &mut impl Rng) -> f64 {
    grad_check_with(net, input, rng, |net, input, w| {
        let (_, cache) = net.forward(input).expect("input matches the network");
        net.backward(&cache, w).expect("fresh cache").0
    })
}

/// Like [`grad_check`], but with a caller-supplied analytic gradient. Used to
/// confirm the checker notices a broken backward pass.
pub fn grad_check_with(
    net: &Mlp,
    input: &[f64],
    rng: &mut impl Rng,
    analytic: impl Fn(&Mlp, &[f64], &[f64]) -> Vec<f64>,
) -> f64 {
    let w: Vec<f64> = (0..net.output_dim()).map(|_| rng.sample(StandardNormal)).collect();
    let grads = analytic(net, input, &w);
    let mut probe = net.clone();
    let mut params = net.params().to_vec();
    let mut loss = |p: &[f64]| {
        probe.params_mut().copy_from_slice(p);
        let out = probe.forward(input).expect("input matches the network").0;
        out.iter().zip(&w).map(|(o, c)| o * c).sum::<f64>()
    };
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let numeric = central_difference(&mut loss, &mut params, i, FD_STEP);
        worst = worst.max(relative_error(grads[i], numeric));
    }
    worst
}
