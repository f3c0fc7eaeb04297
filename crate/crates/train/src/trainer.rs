//! The two training stages.
//!
//! Stage 1 fits the encoder, decoder G¹ and context model on rate plus
//! distortion, with additive uniform noise standing in for rounding. Stage 2
//! copies G¹ into G² and fine-tunes only G² against a multi-scale LSGAN
//! discriminator, one discriminator update per generator update. The encoder
//! and context model are read-only in stage 2; their latents are hard-rounded.
//!
//! Every iteration draws its patches and noise from a ChaCha stream keyed by
//! `(seed, iteration)`, so a resumed run replays the uninterrupted trajectory.

use gmc_core::model::layers::Bound;
use gmc_core::model::{round_half_away, uniform_noise};
use gmc_core::{Model, Network};
use gmc_tensor::{adam_step, AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::data::PatchSampler;
use crate::error::{Result, TrainError};
use crate::features::FeatureExtractor;
use crate::losses::{loss_stage1, loss_stage2, lsgan_discriminator, Stage2Weights};

pub const ENCODER: &str = "enc";
pub const DECODER: &str = "dec";
pub const CONTEXT: &str = "ctx";
pub const DISCRIMINATOR: &str = "disc";

/// Loss values of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// Zero-based index of the iteration that produced these values.
    pub iteration: u64,
    pub lr: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl LogRow {
    pub fn csv_header(&self) -> String {
        let mut s = String::from("iteration,lr");
        for (name, _) in &self.terms {
            s.push(',');
            s.push_str(name);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}", self.iteration, self.lr);
        for (_, v) in &self.terms {
            s.push_str(&format!(",{v}"));
        }
        s
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

fn scalar(tape: &Tape, v: Var, iteration: u64, term: &'static str) -> Result<f64> {
    let value = tape.value(v).item();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFinite { iteration, term })
    }
}

fn adam(params: &ParamStore, lr: f64) -> AdamState {
    AdamState::new(
        params,
        AdamConfig {
            lr,
            ..AdamConfig::default()
        },
    )
}

fn check_stage(cfg: &TrainConfig, stage: u8) -> Result<()> {
    cfg.validate()?;
    if cfg.stage != stage {
        return Err(TrainError::Config(format!(
            "config selects stage {} but a stage-{stage} trainer was requested",
            cfg.stage
        )));
    }
    Ok(())
}

fn check_resume(model: &Model, cfg: &TrainConfig, ckpt: &Checkpoint, stage: u8) -> Result<()> {
    if ckpt.stage != stage {
        return Err(TrainError::Checkpoint(format!(
            "expected a stage-{stage} checkpoint, found stage {}",
            ckpt.stage
        )));
    }
    ckpt.check_model(&model.digest())?;
    ckpt.check_train(&cfg.digest())?;
    if ckpt.iteration > cfg.iterations {
        return Err(TrainError::Checkpoint(format!(
            "checkpoint is at iteration {} but the run stops at {}",
            ckpt.iteration, cfg.iterations
        )));
    }
    Ok(())
}

fn restore(model: &Model, ckpt: &Checkpoint, label: &str, network: Network) -> Result<ParamStore> {
    let p = ckpt.params(label)?.clone();
    model.check_params(network, &p)?;
    Ok(p)
}

fn restore_adam(ckpt: &Checkpoint, label: &str, params: &ParamStore) -> Result<AdamState> {
    let a = ckpt.optimizer(label)?.clone();
    a.m.check_compatible(params)?;
    a.v.check_compatible(params)?;
    Ok(a)
}

pub struct Stage1Trainer {
    model: Model,
    cfg: TrainConfig,
    sampler: PatchSampler,
    pub encoder: ParamStore,
    pub decoder: ParamStore,
    pub context: ParamStore,
    opt: [AdamState; 3],
    iteration: u64,
}

impl Stage1Trainer {
    /// Fresh run with parameters initialized from `cfg.seed`.
    pub fn new(model: Model, cfg: TrainConfig, sampler: PatchSampler) -> Result<Self> {
        check_stage(&cfg, 1)?;
        let encoder = model.init(Network::Encoder, cfg.seed)?;
        let decoder = model.init(Network::Decoder, cfg.seed)?;
        let context = model.init(Network::Context, cfg.seed)?;
        let opt = [adam(&encoder, cfg.lr), adam(&decoder, cfg.lr), adam(&context, cfg.lr)];
        Ok(Stage1Trainer {
            model,
            cfg,
            sampler,
            encoder,
            decoder,
            context,
            opt,
            iteration: 0,
        })
    }

    pub fn resume(model: Model, cfg: TrainConfig, sampler: PatchSampler, ckpt: &Checkpoint) -> Result<Self> {
        check_stage(&cfg, 1)?;
        check_resume(&model, &cfg, ckpt, 1)?;
        let encoder = restore(&model, ckpt, ENCODER, Network::Encoder)?;
        let decoder = restore(&model, ckpt, DECODER, Network::Decoder)?;
        let context = restore(&model, ckpt, CONTEXT, Network::Context)?;
        let opt = [
            restore_adam(ckpt, ENCODER, &encoder)?,
            restore_adam(ckpt, DECODER, &decoder)?,
            restore_adam(ckpt, CONTEXT, &context)?,
        ];
        Ok(Stage1Trainer {
            model,
            cfg,
            sampler,
            encoder,
            decoder,
            context,
            opt,
            iteration: ckpt.iteration,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    /// Loss terms for a fixed batch and noise draw, without updating anything.
    pub fn evaluate(&self, x: &Tensor, noise: &Tensor) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new();
        let pe = Bound::new(&mut tape, &self.encoder, false);
        let pg = Bound::new(&mut tape, &self.decoder, false);
        let pc = Bound::new(&mut tape, &self.context, false);
        let (loss, _) = self.forward(&mut tape, &pe, &pg, &pc, x, noise)?;
        Ok((
            tape.value(loss.total).item(),
            tape.value(loss.rate).item(),
            tape.value(loss.mse).item(),
        ))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        pe: &Bound,
        pg: &Bound,
        pc: &Bound,
        x: &Tensor,
        noise: &Tensor,
    ) -> Result<(crate::losses::Stage1Loss, Var)> {
        let xv = tape.constant(x.clone());
        let y = self.model.encoder_forward(tape, pe, xv)?;
        let u = tape.constant(noise.clone());
        let z = tape.add(y, u)?;
        let gmm = self.model.context_forward_tape(tape, pc, z)?;
        let x_hat = self.model.decoder_forward(tape, pg, z)?;
        let loss = loss_stage1(
            tape,
            xv,
            x_hat,
            z,
            &gmm,
            self.model.config().mixtures,
            self.cfg.lambda_d1,
        )?;
        Ok((loss, z))
    }

    /// The patches and noise that iteration `iteration` uses.
    pub fn batch(&self, iteration: u64) -> (Tensor, Tensor) {
        let mut rng = iteration_rng(self.cfg.seed, iteration);
        let x = self.sampler.sample(self.cfg.batch_size, &mut rng);
        let [n, _, h, w] = x.shape();
        let f = self.model.config().downsample_factor;
        let noise = uniform_noise([n, self.model.config().latent_channels, h / f, w / f], &mut rng);
        (x, noise)
    }

    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.iteration;
        let (x, noise) = self.batch(it);
        let mut tape = Tape::new();
        let pe = Bound::new(&mut tape, &self.encoder, true);
        let pg = Bound::new(&mut tape, &self.decoder, true);
        let pc = Bound::new(&mut tape, &self.context, true);
        let (loss, _) = self.forward(&mut tape, &pe, &pg, &pc, &x, &noise)?;
        let total = scalar(&tape, loss.total, it, "loss")?;
        let rate = scalar(&tape, loss.rate, it, "rate_bpp")?;
        let mse = scalar(&tape, loss.mse, it, "mse")?;
        let grads = tape.backward(loss.total)?;

        let lr = self.cfg.lr_at(it);
        let stores = [&mut self.encoder, &mut self.decoder, &mut self.context];
        for ((store, bound), opt) in stores.into_iter().zip([&pe, &pg, &pc]).zip(self.opt.iter_mut()) {
            opt.config.lr = lr;
            adam_step(store, &bound.grads(&tape, &grads), opt)?;
        }
        self.iteration += 1;
        Ok(LogRow {
            iteration: it,
            lr,
            terms: vec![("loss", total), ("rate_bpp", rate), ("mse", mse)],
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            stage: 1,
            iteration: self.iteration,
            model_digest: self.model.digest(),
            train_digest: self.cfg.digest(),
            params: vec![
                (ENCODER.into(), self.encoder.clone()),
                (DECODER.into(), self.decoder.clone()),
                (CONTEXT.into(), self.context.clone()),
            ],
            optimizers: vec![
                (ENCODER.into(), self.opt[0].clone()),
                (DECODER.into(), self.opt[1].clone()),
                (CONTEXT.into(), self.opt[2].clone()),
            ],
        }
    }
}

pub struct Stage2Trainer {
    model: Model,
    cfg: TrainConfig,
    sampler: PatchSampler,
    extractor: Box<dyn FeatureExtractor>,
    encoder: ParamStore,
    context: ParamStore,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    opt_g: AdamState,
    opt_d: AdamState,
    iteration: u64,
}

impl Stage2Trainer {
    /// Starts from a finished stage-1 checkpoint: G² = G¹, fresh discriminator.
    pub fn new(
        model: Model,
        cfg: TrainConfig,
        sampler: PatchSampler,
        extractor: Box<dyn FeatureExtractor>,
        stage1: &Checkpoint,
    ) -> Result<Self> {
        check_stage(&cfg, 2)?;
        if stage1.stage != 1 {
            return Err(TrainError::Checkpoint(format!(
                "stage 2 starts from a stage-1 checkpoint, found stage {}",
                stage1.stage
            )));
        }
        stage1.check_model(&model.digest())?;
        let encoder = restore(&model, stage1, ENCODER, Network::Encoder)?;
        let context = restore(&model, stage1, CONTEXT, Network::Context)?;
        let generator = restore(&model, stage1, DECODER, Network::Decoder)?;
        let discriminator = model.init(Network::Discriminator, cfg.seed)?;
        let opt_g = adam(&generator, cfg.lr);
        let opt_d = adam(&discriminator, cfg.lr);
        Ok(Stage2Trainer {
            model,
            cfg,
            sampler,
            extractor,
            encoder,
            context,
            generator,
            discriminator,
            opt_g,
            opt_d,
            iteration: 0,
        })
    }

    pub fn resume(
        model: Model,
        cfg: TrainConfig,
        sampler: PatchSampler,
        extractor: Box<dyn FeatureExtractor>,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        check_stage(&cfg, 2)?;
        check_resume(&model, &cfg, ckpt, 2)?;
        let encoder = restore(&model, ckpt, ENCODER, Network::Encoder)?;
        let context = restore(&model, ckpt, CONTEXT, Network::Context)?;
        let generator = restore(&model, ckpt, DECODER, Network::Decoder)?;
        let discriminator = restore(&model, ckpt, DISCRIMINATOR, Network::Discriminator)?;
        let opt_g = restore_adam(ckpt, DECODER, &generator)?;
        let opt_d = restore_adam(ckpt, DISCRIMINATOR, &discriminator)?;
        Ok(Stage2Trainer {
            model,
            cfg,
            sampler,
            extractor,
            encoder,
            context,
            generator,
            discriminator,
            opt_g,
            opt_d,
            iteration: ckpt.iteration,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn encoder(&self) -> &ParamStore {
        &self.encoder
    }

    pub fn context(&self) -> &ParamStore {
        &self.context
    }

    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.iteration;
        let mut rng = iteration_rng(self.cfg.seed, it);
        let x = self.sampler.sample(self.cfg.batch_size, &mut rng);
        let lr = self.cfg.lr_at(it);

        // Generator update. The encoder rides on the same tape as frozen
        // leaves so the check below can prove nothing flowed into it.
        let mut tape = Tape::new();
        let pe = Bound::new(&mut tape, &self.encoder, false);
        let pg = Bound::new(&mut tape, &self.generator, true);
        let pd = Bound::new(&mut tape, &self.discriminator, false);
        let xv = tape.constant(x.clone());
        let y = self.model.encoder_forward(&mut tape, &pe, xv)?;
        let z = tape.constant(tape.value(y).map(round_half_away));
        let x_hat = self.model.decoder_forward(&mut tape, &pg, z)?;
        let fake = self.model.discriminator_forward(&mut tape, &pd, x_hat)?;
        let weights = Stage2Weights {
            lambda_d2: self.cfg.lambda_d2,
            lambda_adv: self.cfg.lambda_adv,
            lambda_feat: self.cfg.lambda_feat,
        };
        let loss = loss_stage2(&mut tape, xv, x_hat, &fake, self.extractor.as_ref(), weights)?;
        let total = scalar(&tape, loss.total, it, "loss")?;
        let mse = scalar(&tape, loss.mse, it, "mse")?;
        let adv_g = scalar(&tape, loss.adv, it, "adv_g")?;
        let feat = scalar(&tape, loss.feat, it, "feat")?;
        let grads = tape.backward(loss.total)?;
        if let Some((name, _)) = pe.vars().find(|(_, v)| grads.get(*v).is_some()) {
            return Err(TrainError::Invariant(format!("gradient reached frozen parameter `{name}`")));
        }
        let g_grads = pg.grads(&tape, &grads);
        let x_hat_value = tape.value(x_hat).clone();
        drop(tape);

        // Discriminator update on the pre-update reconstruction.
        let mut tape = Tape::new();
        let pd = Bound::new(&mut tape, &self.discriminator, true);
        let real_in = tape.constant(x);
        let fake_in = tape.constant(x_hat_value);
        let real = self.model.discriminator_forward(&mut tape, &pd, real_in)?;
        let fake = self.model.discriminator_forward(&mut tape, &pd, fake_in)?;
        let d_loss = lsgan_discriminator(&mut tape, &real, &fake)?;
        let adv_d = scalar(&tape, d_loss, it, "adv_d")?;
        let d_grads = tape.backward(d_loss)?;

        self.opt_g.config.lr = lr;
        adam_step(&mut self.generator, &g_grads, &mut self.opt_g)?;
        self.opt_d.config.lr = lr;
        adam_step(&mut self.discriminator, &pd.grads(&tape, &d_grads), &mut self.opt_d)?;
        self.iteration += 1;
        Ok(LogRow {
            iteration: it,
            lr,
            terms: vec![
                ("loss", total),
                ("mse", mse),
                ("adv_g", adv_g),
                ("feat", feat),
                ("adv_d", adv_d),
            ],
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            stage: 2,
            iteration: self.iteration,
            model_digest: self.model.digest(),
            train_digest: self.cfg.digest(),
            params: vec![
                (ENCODER.into(), self.encoder.clone()),
                (CONTEXT.into(), self.context.clone()),
                (DECODER.into(), self.generator.clone()),
                (DISCRIMINATOR.into(), self.discriminator.clone()),
            ],
            optimizers: vec![
                (DECODER.into(), self.opt_g.clone()),
                (DISCRIMINATOR.into(), self.opt_d.clone()),
            ],
        }
    }
}

/// Byte-level check that stage 2 left the encoder and context model untouched.
pub fn verify_frozen(stage1: &Checkpoint, stage2: &Checkpoint) -> Result<()> {
    for label in [ENCODER, CONTEXT] {
        if !stage1.params(label)?.bit_identical(stage2.params(label)?) {
            return Err(TrainError::Invariant(format!("stage 2 modified the `{label}` parameters")));
        }
    }
    Ok(())
}
