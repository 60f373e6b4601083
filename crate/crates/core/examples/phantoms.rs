//! Build the two test images, write them as `.uvim` and `.pgm`, and read
//! one back.
//!
//! cargo run --example phantoms -- [d] [out_dir]

use uvtomo::image::{load_image, random_piecewise_image, save_image, save_pgm, shepp_logan};

fn main() -> uvtomo::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(64, |s| s.parse().expect("d must be an integer"));
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "out/phantoms".into()));
    std::fs::create_dir_all(&out).map_err(|e| uvtomo::Error::io(&out, e))?;

    let shepp = shepp_logan(d)?;
    let random = random_piecewise_image(d, 6, 7)?;
    for (name, img) in [("shepp_logan", &shepp), ("random", &random)] {
        save_image(img, out.join(format!("{name}.uvim")))?;
        save_pgm(img, out.join(format!("{name}.pgm")))?;
        println!(
            "{name:12} d={d} mass={:.2} range=[{:.2}, {:.2}] center={:.3}",
            img.sum(),
            img.min(),
            img.max(),
            img.get(d / 2, d / 2)
        );
    }
    // The container stores f32, so a round trip is exact up to that rounding.
    let back = load_image(out.join("shepp_logan.uvim"))?;
    let err = back.pixels().iter().zip(shepp.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip max error {err:.1e}; files in {}", out.display());
    Ok(())
}
