//! Unknown-angle maximum likelihood by EM, from a blurred ground truth and
//! from noise, to show how much the answer depends on where it starts.
//!
//! cargo run --release --example em -- [iters] [sigma]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uvtomo::baselines::{em_reconstruct, EmConfig, EmInit};
use uvtomo::dataset::{synthesize, Noise};
use uvtomo::image::shepp_logan;
use uvtomo::metrics::evaluate;
use uvtomo::{AngleGrid, Pmf};

fn main() -> uvtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_iters: usize = args.next().map_or(20, |s| s.parse().expect("iters must be an integer"));
    let sigma: f64 = args.next().map_or(EmConfig::default().sigma, |s| s.parse().expect("sigma must be a number"));

    let (d, n) = (32, 60);
    let gt = shepp_logan(d)?;
    let grid = AngleGrid::new(n)?;
    let data = synthesize(&gt, &Pmf::uniform(n), 2000, Noise::None, &mut ChaCha8Rng::seed_from_u64(0))?;

    for init in [EmInit::LowpassGt, EmInit::FbpUniform, EmInit::Random] {
        let cfg = EmConfig {
            init,
            n_iters,
            sigma,
            ..EmConfig::default()
        };
        let res = em_reconstruct(&data, &grid, &cfg, Some(&gt))?;
        let report = evaluate(&res.image, &gt, Some((&res.pmf, &Pmf::uniform(n))), n)?;
        println!(
            "{init:?}: CC {:.3}, PSNR {:.2} dB, log-likelihood {:.1} -> {:.1}",
            report.cc,
            report.psnr,
            res.log_likelihood[0],
            res.log_likelihood[res.log_likelihood.len() - 1]
        );
    }
    Ok(())
}
