//! Desk-scale training run on synthetic pairs, reporting held-out L1 per epoch.

use std::time::Instant;

use lmanon_gan::data::synthetic_dataset;
use lmanon_gan::train::{mean_l1, Trainer};
use lmanon_gan::GanConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GanConfig { seed: 7, ..GanConfig::desk() };
    let train = synthetic_dataset(200, config.image_size, 1)?;
    let held = synthetic_dataset(40, config.image_size, 2)?;
    let mut trainer = Trainer::new(config.clone())?;
    let init = mean_l1(trainer.generator(), &held, 40);
    println!("init held-out L1 {init:.4}");
    let start = Instant::now();
    for _ in 0..config.epochs {
        trainer.run_epoch(&train)?;
        let l1 = mean_l1(trainer.generator(), &held, 40);
        let m = trainer.log().epoch_means(trainer.epoch()).unwrap();
        println!(
            "epoch {:2} {:6.1}s held-out L1 {:.4} ({:.3} of init) d={:.3} g_adv={:.3}",
            trainer.epoch(),
            start.elapsed().as_secs_f64(),
            l1,
            l1 / init,
            m.discriminator_loss,
            m.generator_adv_loss
        );
    }
    Ok(())
}
