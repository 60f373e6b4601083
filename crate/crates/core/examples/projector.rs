//! Parallel-beam projection: adjoint check, a full sinogram and filtered
//! backprojection with both ramp windows.
//!
//! cargo run --example projector -- [d] [n_views]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvtomo::image::shepp_logan;
use uvtomo::metrics::{cc, psnr};
use uvtomo::projector::{backproject, fbp_with, project, project_all, FbpWindow};
use uvtomo::{AngleGrid, Image, ProjectionSet};

fn main() -> uvtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(64, |s| s.parse().expect("d must be an integer"));
    let n: usize = args.next().map_or(120, |s| s.parse().expect("n_views must be an integer"));

    // <P f, g> against <f, Pᵀ g> on random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = Image::from_pixels(d, (0..d * d).map(|_| rng.random::<f64>()).collect())?;
    let g: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let theta = 0.3;
    let lhs: f64 = project(&f, theta).iter().zip(&g).map(|(a, b)| a * b).sum();
    let rhs = f.dot(&backproject(&g, theta)?);
    println!("adjoint: <Pf,g> = {lhs:.12}, <f,P'g> = {rhs:.12}");

    let gt = shepp_logan(d)?;
    let line = project(&gt, 0.0);
    println!("line sum {:.4} = pixel size x mass {:.4}", line.iter().sum::<f64>(), gt.pixel_size() * gt.sum());

    let grid = AngleGrid::new(n)?;
    let sino = ProjectionSet::new(project_all(&gt, &grid), 0.0, Some((0..n as u32).collect()), n)?;
    for window in [FbpWindow::RamLak, FbpWindow::Hann] {
        let rec = fbp_with(&sino, &grid, window)?;
        println!("FBP {window:?}: PSNR {:.2} dB, CC {:.4}", psnr(&rec, &gt)?, cc(&rec, &gt)?);
    }
    Ok(())
}
