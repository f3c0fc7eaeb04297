//! Training objectives, recorded on a tape so they can be differentiated.
//!
//! Distortion is measured on the 8-bit scale: images live in `[0, 1]` and are
//! multiplied by 255 before squaring. Rates are in bits per pixel of the batch.

use gmc_core::entropy::rate_bits_var;
use gmc_core::model::GmmVars;
use gmc_tensor::{Tape, Tensor, Var};

use crate::error::{Result, TrainError};
use crate::features::FeatureExtractor;

fn same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(TrainError::Config(format!("{what}: shapes {sa:?} and {sb:?} differ")));
    }
    Ok(())
}

fn check_weight(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(TrainError::Config(format!("{name} must be a non-negative number (got {v})")))
    }
}

/// Mean of `(255·(x − x̂))²`.
pub fn mse_loss(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var> {
    same_shape(tape, x, x_hat, "mse_loss")?;
    let d = tape.sub(x_hat, x)?;
    let d = tape.scale(d, 255.0)?;
    let sq = tape.square(d)?;
    Ok(tape.mean(sq)?)
}

pub struct Stage1Loss {
    pub total: Var,
    /// Estimated bits per pixel of the noisy latents.
    pub rate: Var,
    pub mse: Var,
}

/// `rate + λ_d1 · MSE`.
pub fn loss_stage1(
    tape: &mut Tape,
    x: Var,
    x_hat: Var,
    z_noisy: Var,
    gmm: &GmmVars,
    mixtures: usize,
    lambda_d1: f64,
) -> Result<Stage1Loss> {
    check_weight("lambda_d1", lambda_d1)?;
    let [n, _, h, w] = tape.value(x).shape();
    let bits = rate_bits_var(tape, z_noisy, gmm, mixtures)?;
    let rate = tape.scale(bits, 1.0 / (n * h * w) as f64)?;
    let mse = mse_loss(tape, x, x_hat)?;
    let weighted = tape.scale(mse, lambda_d1)?;
    let total = tape.add(rate, weighted)?;
    Ok(Stage1Loss { total, rate, mse })
}

/// Mean over the maps of `mean((m − target)²)`.
fn ls_term(tape: &mut Tape, maps: &[Var], target: f64) -> Result<Var> {
    if maps.is_empty() {
        return Err(TrainError::Config("no discriminator outputs".into()));
    }
    let mut acc: Option<Var> = None;
    for &m in maps {
        let d = tape.add_scalar(m, -target)?;
        let sq = tape.square(d)?;
        let term = tape.mean(sq)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(tape.scale(acc.expect("non-empty"), 1.0 / maps.len() as f64)?)
}

/// Generator side: `E[(D(x̂) − 1)²]`.
pub fn lsgan_generator(tape: &mut Tape, fake: &[Var]) -> Result<Var> {
    ls_term(tape, fake, 1.0)
}

/// Discriminator side: `E[D(x̂)²] + E[(D(x) − 1)²]`.
pub fn lsgan_discriminator(tape: &mut Tape, real: &[Var], fake: &[Var]) -> Result<Var> {
    let f = ls_term(tape, fake, 0.0)?;
    let r = ls_term(tape, real, 1.0)?;
    Ok(tape.add(f, r)?)
}

/// Both adversarial losses for fixed discriminator outputs, as `(generator, discriminator)`.
pub fn lsgan_losses(real: &[Tensor], fake: &[Tensor]) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let r: Vec<Var> = real.iter().map(|t| tape.constant(t.clone())).collect();
    let f: Vec<Var> = fake.iter().map(|t| tape.constant(t.clone())).collect();
    let g = lsgan_generator(&mut tape, &f)?;
    let d = lsgan_discriminator(&mut tape, &r, &f)?;
    Ok((tape.value(g).data()[0], tape.value(d).data()[0]))
}

/// Mean absolute difference of the extractor's features.
pub fn feature_loss(tape: &mut Tape, extractor: &dyn FeatureExtractor, x: Var, x_hat: Var) -> Result<Var> {
    same_shape(tape, x, x_hat, "feature_loss")?;
    let fx = extractor.features(tape, x)?;
    let fy = extractor.features(tape, x_hat)?;
    let d = tape.sub(fy, fx)?;
    let a = tape.abs(d)?;
    Ok(tape.mean(a)?)
}

/// Stage-2 weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage2Weights {
    pub lambda_d2: f64,
    pub lambda_adv: f64,
    pub lambda_feat: f64,
}

pub struct Stage2Loss {
    pub total: Var,
    pub mse: Var,
    pub adv: Var,
    pub feat: Var,
}

/// `λ_d2 · MSE + λ_adv · L_adv^G + λ_feat · L_feat`, given the discriminator's
/// maps on `x_hat`.
pub fn loss_stage2(
    tape: &mut Tape,
    x: Var,
    x_hat: Var,
    fake_maps: &[Var],
    extractor: &dyn FeatureExtractor,
    weights: Stage2Weights,
) -> Result<Stage2Loss> {
    check_weight("lambda_d2", weights.lambda_d2)?;
    check_weight("lambda_adv", weights.lambda_adv)?;
    check_weight("lambda_feat", weights.lambda_feat)?;
    let mse = mse_loss(tape, x, x_hat)?;
    let adv = lsgan_generator(tape, fake_maps)?;
    let feat = feature_loss(tape, extractor, x, x_hat)?;
    let a = tape.scale(mse, weights.lambda_d2)?;
    let b = tape.scale(adv, weights.lambda_adv)?;
    let c = tape.scale(feat, weights.lambda_feat)?;
    let ab = tape.add(a, b)?;
    let total = tape.add(ab, c)?;
    Ok(Stage2Loss { total, mse, adv, feat })
}
