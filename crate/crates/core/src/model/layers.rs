//! Named layer descriptors shared by all networks. A descriptor knows its
//! parameter names and shapes, how to initialize them, and how to run on a tape.

use std::collections::HashMap;

use gmc_tensor::{GradStore, Gradients, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::LEAKY_SLOPE;
use crate::error::{CodecError, Result};

/// Parameters of one store recorded on a tape, looked up by name.
pub struct Bound {
    vars: HashMap<String, Var>,
    order: Vec<(String, Var)>,
}

impl Bound {
    /// Records every tensor of `store` as a leaf; `trainable` decides whether the
    /// leaves collect gradients.
    pub fn new(tape: &mut Tape, store: &ParamStore, trainable: bool) -> Self {
        let mut vars = HashMap::with_capacity(store.len());
        let mut order = Vec::with_capacity(store.len());
        for (name, t) in store.iter() {
            let v = tape.leaf(t.clone(), trainable);
            vars.insert(name.to_string(), v);
            order.push((name.to_string(), v));
        }
        Bound { vars, order }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| CodecError::Config(format!("parameter `{name}` missing from store")))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.order.iter().map(|(n, v)| (n.as_str(), *v))
    }

    /// Gradient for every bound parameter; parameters the loss never reached get zeros.
    pub fn grads(&self, tape: &Tape, gradients: &Gradients) -> GradStore {
        self.order
            .iter()
            .map(|(name, v)| {
                let g = gradients
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Initialization gain of the last conv in each residual branch.
pub const RESIDUAL_GAIN: f64 = 0.1;

/// He-normal weights (fan-in scaling) times `gain`, rounded to `f32`.
fn he_init(rng: &mut impl Rng, shape: [usize; 4], gain: f64) -> Tensor {
    let fan_in = (shape[1] * shape[2] * shape[3]).max(1);
    let normal = Normal::new(0.0, gain * (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_, _, _, _| normal.sample(rng) as f32 as f64)
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Multiplier on the He standard deviation at initialization.
    pub init_gain: f64,
}

impl Conv {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, kernel: usize, stride: usize) -> Self {
        Conv {
            name: name.into(),
            cin,
            cout,
            kernel,
            stride,
            pad: kernel / 2,
            init_gain: 1.0,
        }
    }

    /// Variance-preserving init for convs not followed by an activation.
    pub fn linear(mut self) -> Self {
        self.init_gain = std::f64::consts::FRAC_1_SQRT_2;
        self
    }

    /// Residual branches end in a damped conv so every block starts close to
    /// the identity; undamped, activations grow geometrically with depth.
    pub fn damped(mut self) -> Self {
        self.init_gain = RESIDUAL_GAIN;
        self
    }

    pub fn unpadded(mut self) -> Self {
        self.pad = 0;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.cout, self.cin, self.kernel, self.kernel]
    }

    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        store.insert(self.weight_name(), he_init(rng, self.weight_shape(), self.init_gain))?;
        store.insert(self.bias_name(), Tensor::zeros([1, self.cout, 1, 1]))?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let w = p.var(&self.weight_name())?;
        let b = p.var(&self.bias_name())?;
        Ok(tape.conv2d(x, w, Some(b), self.stride, self.pad)?)
    }
}

pub(crate) fn lrelu(tape: &mut Tape, x: Var) -> Result<Var> {
    Ok(tape.leaky_relu(x, LEAKY_SLOPE)?)
}

/// conv3×3 → act → conv3×3 → act, plus identity.
#[derive(Clone, Debug)]
pub struct ResBlock {
    conv1: Conv,
    conv2: Conv,
}

/// Strided variant with a 1×1 strided projection on the skip path.
#[derive(Clone, Debug)]
pub struct ResBlockDown {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
}

/// Sub-pixel variant: the first conv emits 4× channels that are pixel-shuffled.
#[derive(Clone, Debug)]
pub struct ResBlockUp {
    up: Conv,
    conv2: Conv,
    skip: Conv,
}

#[derive(Clone, Debug)]
pub enum Block {
    Plain(ResBlock),
    Down(ResBlockDown),
    Up(ResBlockUp),
}

impl Block {
    pub fn plain(name: &str, c: usize) -> Self {
        Block::Plain(ResBlock {
            conv1: Conv::new(format!("{name}.conv1"), c, c, 3, 1),
            conv2: Conv::new(format!("{name}.conv2"), c, c, 3, 1).damped(),
        })
    }

    pub fn down(name: &str, cin: usize, cout: usize) -> Self {
        Block::Down(ResBlockDown {
            conv1: Conv::new(format!("{name}.conv1"), cin, cout, 3, 2),
            conv2: Conv::new(format!("{name}.conv2"), cout, cout, 3, 1).damped(),
            skip: Conv::new(format!("{name}.skip"), cin, cout, 1, 2).linear(),
        })
    }

    pub fn up(name: &str, c: usize) -> Self {
        Block::Up(ResBlockUp {
            up: Conv::new(format!("{name}.up"), c, 4 * c, 3, 1),
            conv2: Conv::new(format!("{name}.conv2"), c, c, 3, 1).damped(),
            skip: Conv::new(format!("{name}.skip"), c, 4 * c, 1, 1).linear(),
        })
    }

    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        match self {
            Block::Plain(b) => {
                b.conv1.declare(store, rng)?;
                b.conv2.declare(store, rng)
            }
            Block::Down(b) => {
                b.conv1.declare(store, rng)?;
                b.conv2.declare(store, rng)?;
                b.skip.declare(store, rng)
            }
            Block::Up(b) => {
                b.up.declare(store, rng)?;
                b.conv2.declare(store, rng)?;
                b.skip.declare(store, rng)
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (main, skip) = match self {
            Block::Plain(b) => {
                let h = b.conv1.forward(tape, p, x)?;
                let h = lrelu(tape, h)?;
                let h = b.conv2.forward(tape, p, h)?;
                (lrelu(tape, h)?, x)
            }
            Block::Down(b) => {
                let h = b.conv1.forward(tape, p, x)?;
                let h = lrelu(tape, h)?;
                let h = b.conv2.forward(tape, p, h)?;
                (lrelu(tape, h)?, b.skip.forward(tape, p, x)?)
            }
            Block::Up(b) => {
                let h = b.up.forward(tape, p, x)?;
                let h = tape.pixel_shuffle(h, 2)?;
                let h = lrelu(tape, h)?;
                let h = b.conv2.forward(tape, p, h)?;
                let s = b.skip.forward(tape, p, x)?;
                (lrelu(tape, h)?, tape.pixel_shuffle(s, 2)?)
            }
        };
        Ok(tape.add(main, skip)?)
    }
}

/// Bottleneck residual unit used inside attention branches.
#[derive(Clone, Debug)]
struct ResUnit {
    reduce: Conv,
    mid: Conv,
    expand: Conv,
}

impl ResUnit {
    fn new(name: &str, c: usize) -> Self {
        let half = (c / 2).max(1);
        ResUnit {
            reduce: Conv::new(format!("{name}.reduce"), c, half, 1, 1),
            mid: Conv::new(format!("{name}.mid"), half, half, 3, 1),
            expand: Conv::new(format!("{name}.expand"), half, c, 1, 1).damped(),
        }
    }

    fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        self.reduce.declare(store, rng)?;
        self.mid.declare(store, rng)?;
        self.expand.declare(store, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.reduce.forward(tape, p, x)?;
        let h = lrelu(tape, h)?;
        let h = self.mid.forward(tape, p, h)?;
        let h = lrelu(tape, h)?;
        let h = self.expand.forward(tape, p, h)?;
        Ok(tape.add(h, x)?)
    }
}

/// Residual units per attention branch.
const ATTENTION_UNITS: usize = 3;

/// Simplified attention: `x + trunk(x) ⊙ σ(mask(x))`.
#[derive(Clone, Debug)]
pub struct Attention {
    trunk: Vec<ResUnit>,
    mask: Vec<ResUnit>,
    mask_out: Conv,
}

impl Attention {
    pub fn new(name: &str, c: usize) -> Self {
        Attention {
            trunk: (0..ATTENTION_UNITS)
                .map(|i| ResUnit::new(&format!("{name}.trunk{i}"), c))
                .collect(),
            mask: (0..ATTENTION_UNITS)
                .map(|i| ResUnit::new(&format!("{name}.mask{i}"), c))
                .collect(),
            mask_out: Conv::new(format!("{name}.mask_out"), c, c, 1, 1),
        }
    }

    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        for u in self.trunk.iter().chain(&self.mask) {
            u.declare(store, rng)?;
        }
        self.mask_out.declare(store, rng)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut t = x;
        for u in &self.trunk {
            t = u.forward(tape, p, t)?;
        }
        let mut m = x;
        for u in &self.mask {
            m = u.forward(tape, p, m)?;
        }
        let m = self.mask_out.forward(tape, p, m)?;
        let m = tape.sigmoid(m)?;
        let gated = tape.mul(t, m)?;
        Ok(tape.add(x, gated)?)
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Block(Block),
    Attention(Attention),
    Conv(Conv),
    Act,
    Shuffle(usize),
}

impl Layer {
    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        match self {
            Layer::Block(b) => b.declare(store, rng),
            Layer::Attention(a) => a.declare(store, rng),
            Layer::Conv(c) => c.declare(store, rng),
            Layer::Act | Layer::Shuffle(_) => Ok(()),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Layer::Block(b) => b.forward(tape, p, x),
            Layer::Attention(a) => a.forward(tape, p, x),
            Layer::Conv(c) => c.forward(tape, p, x),
            Layer::Act => lrelu(tape, x),
            Layer::Shuffle(r) => Ok(tape.pixel_shuffle(x, *r)?),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        self.layers.iter().try_for_each(|l| l.declare(store, rng))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |h, l| l.forward(tape, p, h))
    }
}
