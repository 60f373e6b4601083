//! Known-angle reconstruction: TV-regularized least squares by ADMM next
//! to filtered backprojection.
//!
//! cargo run --release --example admm_tv -- [d] [n_views] [gamma_tv]

use uvtomo::baselines::{admm_tv_traced, AdmmConfig};
use uvtomo::image::shepp_logan;
use uvtomo::metrics::psnr;
use uvtomo::projector::{fbp, project_all};
use uvtomo::{AngleGrid, ProjectionSet};

fn main() -> uvtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(64, |s| s.parse().expect("d must be an integer"));
    let n: usize = args.next().map_or(60, |s| s.parse().expect("n_views must be an integer"));
    let gamma_tv: f64 = args.next().map_or(1e-3, |s| s.parse().expect("gamma_tv must be a number"));

    let gt = shepp_logan(d)?;
    let grid = AngleGrid::new(n)?;
    let sino = ProjectionSet::new(project_all(&gt, &grid), 0.0, Some((0..n as u32).collect()), n)?;
    let cfg = AdmmConfig {
        gamma_tv,
        ..AdmmConfig::default()
    };
    let res = admm_tv_traced(&sino, &cfg)?;
    for (i, obj) in res.objective.iter().enumerate().step_by(cfg.n_iters.div_ceil(8).max(1)) {
        println!("iter {:>4}: objective {obj:.6e}", i + 1);
    }
    println!("FBP      PSNR {:.2} dB", psnr(&fbp(&sino, &grid)?, &gt)?);
    println!("ADMM-TV  PSNR {:.2} dB", psnr(&res.image, &gt)?);
    Ok(())
}
