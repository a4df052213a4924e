//! Trains the modality classifier on the procedural image set with and
//! without unlabeled data and reports test accuracy.
//!
//! Usage: synthetic_benchmark [epochs] [seed] [size] [noise] [background] [blob_lo] [blob_hi]

use std::time::Instant;

use radcap_core::classifier::{accuracy, train, train_supervised, ModelConfig, SslConfig};
use radcap_core::synthetic::SyntheticSpec;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn main() -> radcap_core::Result<()> {
    let epochs = arg(1, 12);
    let seed = arg(2, 0u64);
    let size = arg(3, 16usize);
    let noise = arg(4, 0.12f32);
    let defaults = SyntheticSpec::default();
    let background = arg(5, defaults.background_amplitude);
    let blob_radius = (arg(6, defaults.blob_radius.0), arg(7, defaults.blob_radius.1));
    let scale = size as f32 / 32.0;

    let spec = SyntheticSpec {
        size,
        noise_std: noise,
        background_amplitude: background,
        blob_radius,
        bands: defaults.bands.map(|(lo, hi)| (lo * scale, hi * scale)),
        ..defaults
    };
    let train_set = spec.generate(200, 100 + seed);
    let test_set = spec.generate(100, 200 + seed);
    let (labeled, unlabeled) = train_set.split_at(60);
    let unlabeled: Vec<_> = unlabeled.iter().map(|s| s.clone().with_label(None)).collect();
    let model = ModelConfig::compact(vec![16, 32], size);
    let steps = unlabeled.len().div_ceil(32);
    let config = SslConfig {
        epochs,
        seed,
        steps_per_epoch: Some(steps),
        ..SslConfig::default()
    };
    let test: Vec<_> = test_set.iter().collect();

    let t = Instant::now();
    let sup = train_supervised(&model, labeled, &config)?;
    for log in &sup.history {
        println!("sup epoch {:>2} loss {:.4} val {:.3}", log.epoch, log.sup_loss, log.val_acc);
    }
    let sup = sup.checkpoint.restore()?;
    println!("supervised: acc {:.4} in {:.1}s", accuracy(&sup, &test)?, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let outcome = train(&model, labeled, &unlabeled, &config)?;
    for log in &outcome.history {
        println!(
            "epoch {:>2} sup {:.4} unsup {:.4} mask {:.3} val {:.3}",
            log.epoch, log.sup_loss, log.unsup_loss, log.mask_rate, log.val_acc
        );
    }
    let ssl = outcome.checkpoint.restore()?;
    println!("ssl: acc {:.4} in {:.1}s", accuracy(&ssl, &test)?, t.elapsed().as_secs_f64());
    Ok(())
}
