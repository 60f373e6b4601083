//! Adversarial recovery of an image and its unknown angle distribution from
//! unlabeled, clean projection lines. Writes the image, the PMF overlay and
//! the loss curves.
//!
//! cargo run --release --example train_gan -- [epochs] [learn|fixed_known|fixed_uniform] [out_dir]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uvtomo::angledist::{random_piecewise_pmf, save_pmf};
use uvtomo::dataset::{synthesize, Noise};
use uvtomo::image::{save_pgm, shepp_logan};
use uvtomo::metrics::evaluate;
use uvtomo::plot::{loss_curves_svg, pmf_overlay_svg, write_text};
use uvtomo::trainer::{save_history, train_with, Control, GroundTruth};
use uvtomo::{PmfMode, TrainConfig};

fn main() -> uvtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epochs must be an integer"));
    let mode: PmfMode = args
        .next()
        .map_or(PmfMode::Learn, |s| serde_json::from_value(serde_json::Value::String(s)).expect("unknown PMF mode"));
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "out/train_gan".into()));
    std::fs::create_dir_all(&out).map_err(|e| uvtomo::Error::io(&out, e))?;

    let gt = shepp_logan(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pmf = random_piecewise_pmf(64, 4, &mut rng)?;
    let data = synthesize(&gt, &pmf, 10_000, Noise::None, &mut rng)?;

    let cfg = TrainConfig {
        // A quarter-width critic keeps this quick. The acceptance runs use
        // the full small architecture and reach CC 0.79 to 0.89 after 60 epochs.
        critic_arch: vec![128, 64, 32, 1],
        alpha_phi: 1e-3,
        alpha_i: 6e-4,
        alpha_p: 1e-3,
        lr_decay: 0.8,
        decay_every_i: 8,
        n_epochs: epochs,
        pmf_mode: mode,
        seed: 1,
        ..TrainConfig::default()
    };
    let truth = GroundTruth { image: &gt, pmf: &pmf };
    let known = (mode == PmfMode::FixedKnown).then_some(&pmf);
    let res = train_with(&data, &cfg, known, Some(truth), |r, _| {
        println!(
            "epoch {:>3}: critic {:>9.4} generator {:>9.4} CC {:.3} TV {:.3}",
            r.epoch,
            r.critic_loss,
            r.gen_loss,
            r.cc.unwrap_or(f64::NAN),
            r.tv_dist_to_gt.unwrap_or(f64::NAN)
        );
        Ok(Control::Continue)
    })?;

    let report = evaluate(&res.image, &gt, Some((&res.pmf, &pmf)), 64)?;
    let aligned_pmf = report.alignment.apply_pmf(&res.pmf);
    save_pgm(&report.alignment.apply_image(&res.image), out.join("image.pgm"))?;
    save_pmf(&aligned_pmf, out.join("pmf.csv"))?;
    save_history(&res.history, out.join("history.csv"))?;
    write_text(out.join("pmf.svg"), &pmf_overlay_svg(&pmf, &aligned_pmf)?)?;
    write_text(out.join("losses.svg"), &loss_curves_svg(&res.history))?;
    println!(
        "final: CC {:.3}, PSNR {:.2} dB, PMF TV {:.3}; outputs in {}",
        report.cc,
        report.psnr,
        report.tv_distance.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}
