//! Critic forward pass, parameter gradient and the gradient-penalty
//! gradient (double backprop), each checked against central differences.
//!
//! cargo run --example critic_gradients

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvtomo::critic::{forward, init_critic, SMALL_ARCH};
use uvtomo::diff::{input_grad, penalty_param_grad, value_and_param_grad};

fn main() -> uvtomo::Result<()> {
    let d = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let critic = init_critic(&SMALL_ARCH, d, &mut rng)?;
    println!("critic {:?} on lines of length {d}: {} parameters", critic.arch(), critic.n_params());

    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (value, grad) = value_and_param_grad(&critic, &x)?;
    println!("D(x) = {value:.6}, |dD/dphi| = {:.4}", grad.norm());

    let gx = input_grad(&critic, &x)?;
    let gnorm = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pen = penalty_param_grad(&critic, &x, 10.0)?;
    println!("|dD/dx| = {gnorm:.4}, penalty 10(|dD/dx| - 1)^2 = {:.4}", pen.value);

    // Spot-check the first-layer weight with the largest gradient; most
    // entries sit behind inactive ReLUs and are exactly zero.
    let (at, _) = grad.weights[0]
        .indexed_iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty layer");
    let h = 1e-6;
    let mut plus = critic.clone();
    let mut minus = critic.clone();
    plus.layers[0].weight[at] += h;
    minus.layers[0].weight[at] -= h;
    let fd = (forward(&plus, &x)? - forward(&minus, &x)?) / (2.0 * h);
    println!("dD/dW0{at:?}: analytic {:.8}, finite difference {fd:.8}", grad.weights[0][at]);
    let fd = (penalty_param_grad(&plus, &x, 10.0)?.value - penalty_param_grad(&minus, &x, 10.0)?.value) / (2.0 * h);
    println!("dGP/dW0{at:?}: analytic {:.8}, finite difference {fd:.8}", pen.grad.weights[0][at]);
    Ok(())
}
