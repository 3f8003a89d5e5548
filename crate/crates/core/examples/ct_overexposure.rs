//! Simulates an overexposed fan-beam scan of the knee phantom and compares
//! the reconstructions. Small grid by default so it runs in seconds.
//!
//!     cargo run --release --example ct_overexposure -- [size] [kappa_frac]

use m1bit::bench::{run_ct_method, CtConfig, CtMethod, CtScene};
use m1bit::ct::PhantomKind;

fn main() -> m1bit::Result<()> {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let size: usize = a.first().and_then(|s| s.parse().ok()).unwrap_or(48);
    let kappa_frac: f64 = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let mut cfg = CtConfig::default();
    // Keep the 256 mm field of view and 620 mm detector at any size.
    cfg.pixel_size = 256.0 / size as f64;
    cfg.geometry.detector_pixel = 2.0 * cfg.pixel_size;
    cfg.geometry.n_bins = (620.0 / cfg.geometry.detector_pixel).round() as usize;
    cfg.geometry.n_views = 180;
    cfg.geometry.angular_step = 2.0;
    cfg.size = size;
    cfg.tv.max_outer = 100;

    let scene = CtScene::new(&cfg, PhantomKind::Knee, kappa_frac, 0.0, 0)?;
    let flagged = scene.observed.obs.saturated_count();
    let truly = scene.psi_true.iter().filter(|&&b| b).count();
    println!("{size}x{size}, kappa = {:.3}: {flagged} zero readings, {truly} truly saturated", scene.kappa);
    for method in CtMethod::ALL {
        let out = run_ct_method(&scene, &cfg, method, false)?;
        let rounds = out.history.as_ref().map_or(String::new(), |h| format!(", {} rounds", h.rounds.len()));
        println!("{:<12} {:>8.2} HU{rounds}", method.name(), out.rmse_hu);
    }
    Ok(())
}
