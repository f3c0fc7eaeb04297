//! The networks: encoder E, decoder G, context model C, multi-scale discriminator D.

pub mod context;
pub mod latents;
pub mod layers;

use gmc_tensor::{ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use context::{ContextEvaluator, ContextModel, GmmField, GmmVars, PositionGmm};
pub use latents::{
    quantize_inference, quantize_training, round_half_away, uniform_noise, LatentCode, QuantizedLatents,
};
use layers::{Attention, Block, Bound, Conv, Layer, Sequential};

use crate::config::ModelConfig;
use crate::error::{hex, CodecError, Result};

/// Identifies one of the four parameter stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Network {
    Encoder,
    Decoder,
    Context,
    Discriminator,
}

impl Network {
    pub const ALL: [Network; 4] = [
        Network::Encoder,
        Network::Decoder,
        Network::Context,
        Network::Discriminator,
    ];

    /// Name prefix shared by every parameter of this network.
    pub fn prefix(self) -> &'static str {
        match self {
            Network::Encoder => "enc.",
            Network::Decoder => "dec.",
            Network::Context => "ctx.",
            Network::Discriminator => "disc.",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Network::Encoder => 1,
            Network::Decoder => 2,
            Network::Context => 3,
            Network::Discriminator => 4,
        }
    }
}

/// Number of discriminator scales.
pub const DISCRIMINATOR_SCALES: usize = 3;

/// Architecture descriptors for one [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    digest: [u8; 32],
    encoder: Sequential,
    decoder: Sequential,
    context: ContextModel,
    discriminator: Vec<Sequential>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let l = config.latent_channels;
        let r = config.residual_blocks_per_stage;
        let downs = config.down_block_positions();
        let attention = config.attention_enabled;

        let mut encoder = Sequential::default();
        for j in 0..2 * r {
            if j == r && attention {
                encoder.push(Layer::Attention(Attention::new("enc.attn0", c)));
            }
            let name = format!("enc.block{j}");
            encoder.push(Layer::Block(if downs.contains(&j) {
                Block::down(&name, if j == 0 { 3 } else { c }, c)
            } else {
                Block::plain(&name, c)
            }));
        }
        encoder.push(Layer::Conv(Conv::new("enc.down", c, l, 3, 2).linear()));
        if attention {
            encoder.push(Layer::Attention(Attention::new("enc.attn1", l)));
        }
        encoder.push(Layer::Conv(Conv::new("enc.out", l, l, 1, 1).linear()));

        let mut decoder = Sequential::default();
        if attention {
            decoder.push(Layer::Attention(Attention::new("dec.attn0", l)));
        }
        decoder.push(Layer::Conv(Conv::new("dec.in", l, c, 3, 1)));
        decoder.push(Layer::Act);
        for j in 0..2 * r {
            if j == r && attention {
                decoder.push(Layer::Attention(Attention::new("dec.attn1", c)));
            }
            let name = format!("dec.block{j}");
            decoder.push(Layer::Block(if downs.contains(&(2 * r - 1 - j)) {
                Block::up(&name, c)
            } else {
                Block::plain(&name, c)
            }));
        }
        decoder.push(Layer::Conv(Conv::new("dec.out", c, 12, 3, 1).linear()));
        decoder.push(Layer::Shuffle(2));

        let discriminator = (0..DISCRIMINATOR_SCALES)
            .map(|s| Sequential {
                layers: vec![
                    Layer::Conv(Conv::new(format!("disc.s{s}.conv0"), 3, c, 3, 2).unpadded()),
                    Layer::Act,
                    Layer::Conv(Conv::new(format!("disc.s{s}.conv1"), c, 2 * c, 3, 2).unpadded()),
                    Layer::Act,
                    Layer::Conv(Conv::new(format!("disc.s{s}.out"), 2 * c, 1, 1, 1)),
                ],
            })
            .collect();

        Ok(Model {
            digest: config.digest(),
            context: ContextModel::new(&config),
            config,
            encoder,
            decoder,
            discriminator,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn context(&self) -> &ContextModel {
        &self.context
    }

    /// Seeded He initialization. Each network draws from its own ChaCha stream,
    /// so adding layers to one network never perturbs another.
    pub fn init(&self, network: Network, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(network.stream());
        let mut store = ParamStore::new(self.digest);
        match network {
            Network::Encoder => self.encoder.declare(&mut store, &mut rng)?,
            Network::Decoder => self.decoder.declare(&mut store, &mut rng)?,
            Network::Context => self.context.declare(&mut store, &mut rng)?,
            Network::Discriminator => {
                for d in &self.discriminator {
                    d.declare(&mut store, &mut rng)?;
                }
            }
        }
        Ok(store)
    }

    /// Expected `(name, shape)` list of a network's store, in declaration order.
    pub fn layout(&self, network: Network) -> Result<Vec<(String, [usize; 4])>> {
        Ok(self
            .init(network, 0)?
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape()))
            .collect())
    }

    /// Fails unless `params` was built for this config and matches `network`'s layout.
    pub fn check_params(&self, network: Network, params: &ParamStore) -> Result<()> {
        self.check_digest(params)?;
        let layout = self.layout(network)?;
        if layout.len() != params.len() {
            return Err(CodecError::Config(format!(
                "{:?} store has {} tensors, expected {}",
                network,
                params.len(),
                layout.len()
            )));
        }
        for ((name, shape), (pn, pt)) in layout.iter().zip(params.iter()) {
            if name != pn {
                return Err(CodecError::UnexpectedTensor {
                    expected: name.clone(),
                    found: pn.to_string(),
                });
            }
            if *shape != pt.shape() {
                return Err(CodecError::CorruptShape {
                    name: name.clone(),
                    expected: shape.to_vec(),
                    found: pt.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn check_digest(&self, params: &ParamStore) -> Result<()> {
        if *params.digest() != self.digest {
            return Err(CodecError::DigestMismatch {
                expected: hex(&self.digest),
                found: hex(params.digest()),
            });
        }
        Ok(())
    }

    fn check_image(&self, shape: [usize; 4], multiple: usize) -> Result<()> {
        let [n, c, h, w] = shape;
        if n == 0 || c != 3 {
            return Err(CodecError::Input(format!("expected an Nx3xHxW image, got {shape:?}")));
        }
        if h == 0 || w == 0 || h % multiple != 0 || w % multiple != 0 {
            return Err(CodecError::Input(format!(
                "image {h}x{w} is not divisible by {multiple}; pad it to a multiple first"
            )));
        }
        Ok(())
    }

    pub fn encoder_forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.check_image(tape.value(x).shape(), self.config.downsample_factor)?;
        self.encoder.forward(tape, p, x)
    }

    /// Raw (unclamped) reconstruction used by the training losses.
    pub fn decoder_forward(&self, tape: &mut Tape, p: &Bound, z: Var) -> Result<Var> {
        let [_, c, _, _] = tape.value(z).shape();
        if c != self.config.latent_channels {
            return Err(CodecError::Input(format!(
                "decoder expects {} latent channels, got {c}",
                self.config.latent_channels
            )));
        }
        self.decoder.forward(tape, p, z)
    }

    pub fn context_forward_tape(&self, tape: &mut Tape, p: &Bound, z: Var) -> Result<GmmVars> {
        self.context.forward(tape, p, z)
    }

    /// Patch score maps of the three sub-discriminators; scale `k` sees the
    /// input average-pooled `k` times.
    pub fn discriminator_forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Vec<Var>> {
        self.check_image(tape.value(x).shape(), 4)?;
        let mut maps = Vec::with_capacity(DISCRIMINATOR_SCALES);
        let mut input = x;
        for (k, d) in self.discriminator.iter().enumerate() {
            if k > 0 {
                input = tape.avg_pool2(input)?;
            }
            maps.push(d.forward(tape, p, input)?);
        }
        Ok(maps)
    }

    pub fn encode(&self, image: &Tensor, params: &ParamStore) -> Result<LatentCode> {
        self.check_digest(params)?;
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, params, false);
        let x = tape.constant(image.clone());
        let y = self.encoder_forward(&mut tape, &p, x)?;
        Ok(LatentCode {
            y: tape.value(y).clone(),
        })
    }

    /// Reconstruction clamped to `[0, 1]`.
    pub fn decode(&self, z: &QuantizedLatents, params: &ParamStore) -> Result<Tensor> {
        self.decode_tensor(&z.to_tensor(), params)
    }

    pub fn decode_tensor(&self, z: &Tensor, params: &ParamStore) -> Result<Tensor> {
        self.check_digest(params)?;
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, params, false);
        let zv = tape.constant(z.clone());
        let out = self.decoder_forward(&mut tape, &p, zv)?;
        Ok(tape.value(out).map(|v| v.clamp(0.0, 1.0)))
    }

    /// Mixture parameters for every element of `z` (integer or noisy latents).
    pub fn context_forward(&self, z: &Tensor, params: &ParamStore) -> Result<GmmField> {
        self.check_digest(params)?;
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, params, false);
        let zv = tape.constant(z.clone());
        let vars = self.context.forward(&mut tape, &p, zv)?;
        vars.to_field(&tape, self.config.mixtures)
    }

    pub fn context_evaluator(&self, params: &ParamStore) -> Result<ContextEvaluator> {
        self.check_digest(params)?;
        self.context.evaluator(params)
    }

    pub fn discriminate(&self, image: &Tensor, params: &ParamStore) -> Result<Vec<Tensor>> {
        self.check_digest(params)?;
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, params, false);
        let x = tape.constant(image.clone());
        let maps = self.discriminator_forward(&mut tape, &p, x)?;
        Ok(maps.into_iter().map(|m| tape.value(m).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            base_channels: 4,
            latent_channels: 2,
            downsample_factor: 4,
            mixtures: 2,
            residual_blocks_per_stage: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_shapes() {
        let model = Model::new(ModelConfig::default()).unwrap();
        let enc = model.init(Network::Encoder, 1).unwrap();
        let dec = model.init(Network::Decoder, 1).unwrap();
        let x = Tensor::from_fn([1, 3, 64, 64], |_, c, h, w| ((c + h + w) % 7) as f64 / 7.0);
        let y = model.encode(&x, &enc).unwrap();
        assert_eq!(y.y.shape(), [1, 8, 4, 4]);
        let z = quantize_inference(&y, 2).unwrap();
        let out = model.decode(&z, &dec).unwrap();
        assert_eq!(out.shape(), [1, 3, 64, 64]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn encoder_rejects_unpadded_input() {
        let model = Model::new(small()).unwrap();
        let enc = model.init(Network::Encoder, 1).unwrap();
        let err = model.encode(&Tensor::zeros([1, 3, 10, 8]), &enc).unwrap_err();
        assert!(err.to_string().contains("pad"), "{err}");
    }

    #[test]
    fn init_is_seeded_and_f32_exact() {
        let model = Model::new(small()).unwrap();
        for net in Network::ALL {
            let a = model.init(net, 3).unwrap();
            assert!(a.bit_identical(&model.init(net, 3).unwrap()));
            assert!(!a.bit_identical(&model.init(net, 4).unwrap()));
            assert!(a.names().all(|n| n.starts_with(net.prefix())));
            for (_, t) in a.iter() {
                assert!(t.data().iter().all(|&v| v as f32 as f64 == v));
            }
            model.check_params(net, &a).unwrap();
        }
    }

    #[test]
    fn digest_mismatch_is_reported() {
        let model = Model::new(small()).unwrap();
        let other = Model::new(ModelConfig {
            mixtures: 3,
            ..small()
        })
        .unwrap();
        let dec = other.init(Network::Decoder, 0).unwrap();
        let z = Tensor::zeros([1, 2, 2, 2]);
        assert!(matches!(
            model.decode_tensor(&z, &dec),
            Err(CodecError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn discriminator_scales() {
        let model = Model::new(small()).unwrap();
        let d = model.init(Network::Discriminator, 0).unwrap();
        let maps = model.discriminate(&Tensor::full([1, 3, 64, 64], 0.3), &d).unwrap();
        let dims: Vec<_> = maps.iter().map(|m| m.shape()).collect();
        assert_eq!(dims, vec![[1, 1, 15, 15], [1, 1, 7, 7], [1, 1, 3, 3]]);
        assert!(model.discriminate(&Tensor::zeros([1, 3, 30, 32]), &d).is_err());
    }

    #[test]
    fn gmm_field_is_valid() {
        let model = Model::new(small()).unwrap();
        let ctx = model.init(Network::Context, 9).unwrap();
        let z = Tensor::from_fn([1, 2, 5, 4], |_, c, h, w| ((c * 3 + h * 2 + w) % 5) as f64 - 2.0);
        let field = model.context_forward(&z, &ctx).unwrap();
        assert_eq!(field.weights.shape(), [2, 2, 5, 4]);
        field.validate(model.config().sigma_floor).unwrap();
    }
}
