//! Adversarial and reconstruction losses with their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{GanError, Result};

/// Mean binary cross-entropy of `logits` against a constant target, and its
/// gradient with respect to each logit.
pub fn bce_with_logits(logits: &[f32], target: f32) -> (f64, Vec<f32>) {
    let n = logits.len() as f64;
    let mut total = 0.0f64;
    let grad = logits
        .iter()
        .map(|&x| {
            let x64 = f64::from(x);
            let t = f64::from(target);
            total += x64.max(0.0) - x64 * t + (-x64.abs()).exp().ln_1p();
            let sigmoid = 1.0 / (1.0 + (-x64).exp());
            ((sigmoid - t) / n) as f32
        })
        .collect();
    (total / n, grad)
}

/// Mean absolute error and its (sub)gradient with respect to `pred`.
pub fn l1(pred: &[f32], target: &[f32]) -> (f64, Vec<f32>) {
    let n = pred.len() as f64;
    let mut total = 0.0f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = f64::from(p) - f64::from(t);
            total += d.abs();
            if d > 0.0 {
                (1.0 / n) as f32
            } else if d < 0.0 {
                (-1.0 / n) as f32
            } else {
                0.0
            }
        })
        .collect();
    (total / n, grad)
}

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    /// Adversarial term plus the weighted reconstruction term.
    pub generator: f64,
    pub generator_adv: f64,
    pub generator_l1: f64,
    /// Half the sum of the real and fake terms.
    pub discriminator: f64,
}

fn finite(name: &str, values: &[f32]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GanError::Numeric(format!("{name} contains non-finite values")))
    }
}

/// Generator and discriminator objectives from the discriminator's scores on
/// real and generated pairs.
pub fn gan_losses(d_real: &[f32], d_fake: &[f32], gen_out: &[f32], target: &[f32], lambda_l1: f32) -> Result<GanLosses> {
    finite("real scores", d_real)?;
    finite("fake scores", d_fake)?;
    finite("generator output", gen_out)?;
    finite("target", target)?;
    if gen_out.len() != target.len() || d_real.len() != d_fake.len() {
        return Err(GanError::InvalidArgument("loss inputs differ in shape".into()));
    }
    let (real, _) = bce_with_logits(d_real, 1.0);
    let (fake, _) = bce_with_logits(d_fake, 0.0);
    let (adv, _) = bce_with_logits(d_fake, 1.0);
    let (rec, _) = l1(gen_out, target);
    Ok(GanLosses {
        generator: adv + f64::from(lambda_l1) * rec,
        generator_adv: adv,
        generator_l1: rec,
        discriminator: 0.5 * (real + fake),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let (loss, grad) = bce_with_logits(&[0.0; 4], 1.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(grad.iter().all(|&g| (g + 0.125).abs() < 1e-7));
        let (loss, _) = bce_with_logits(&[0.0; 4], 0.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let (loss, grad) = bce_with_logits(&[200.0, -200.0], 1.0);
        assert!((loss - 100.0).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn loss_examples() {
        let out = [0.5, -0.5, 0.25];
        let l = gan_losses(&[1.0], &[-1.0], &out, &out, 100.0).unwrap();
        assert_eq!(l.generator_l1, 0.0);
        assert_eq!(l.generator, l.generator_adv);
        let l = gan_losses(&[1.0], &[-1.0], &out, &[0.0; 3], 0.0).unwrap();
        assert_eq!(l.generator, l.generator_adv);
        assert!((l.generator_l1 - 1.25 / 3.0).abs() < 1e-12);
        assert!(gan_losses(&[f32::NAN], &[0.0], &out, &out, 1.0).is_err());
        assert!(gan_losses(&[0.0], &[0.0], &out, &out[..2], 1.0).is_err());
    }
}
