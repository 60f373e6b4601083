//! The relaxed categorical sampler that lets gradients reach the angle
//! distribution: temperature sweep and a check that batch means track `p`.
//!
//! cargo run --example gumbel_softmax

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uvtomo::angledist::{gumbel_softmax, mean_weights, random_piecewise_pmf, tv_distance};
use uvtomo::Pmf;

fn main() -> uvtomo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_piecewise_pmf(16, 3, &mut rng)?;
    println!("p = {:.3?}", p.probs());
    for tau in [10.0, 1.0, 0.5, 0.1, 1e-4] {
        let (w, _) = gumbel_softmax(&p, tau, 4000, &mut rng)?;
        let peak = w.weights.rows().into_iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).sum::<f64>()
            / w.weights.nrows() as f64;
        let mean = Pmf::new(mean_weights(&w).to_vec())?;
        println!(
            "tau {tau:>7}: mean row peak {peak:.3}, TV(mean row, p) {:.3}",
            tv_distance(&mean, &p)?
        );
    }
    // Low temperature rows are one-hot draws from p; high temperature rows
    // flatten toward uniform.
    Ok(())
}
