//! Fixed feature extractors for the perceptual loss.

use gmc_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// A frozen network mapping images to feature maps. Implementations must
/// record their weights as constants so no gradient reaches them.
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Var>;

    fn describe(&self) -> String;
}

/// Four 3×3 conv + leaky ReLU stages with seeded He-uniform weights, average
/// pooling between stages. Features are taken after the fourth stage, so the
/// input side must be a multiple of 8.
#[derive(Clone, Debug)]
pub struct RandomConvFeatures {
    seed: u64,
    stages: Vec<(Tensor, Tensor)>,
}

impl RandomConvFeatures {
    pub const CHANNELS: [usize; 4] = [8, 16, 16, 32];

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let stages = Self::CHANNELS
            .iter()
            .map(|&cout| {
                let bound = (6.0 / (cin * 9) as f64).sqrt();
                let w = Tensor::from_fn([cout, cin, 3, 3], |_, _, _, _| rng.random_range(-bound..bound));
                let b = Tensor::from_fn([1, cout, 1, 1], |_, _, _, _| rng.random_range(-0.1..0.1));
                cin = cout;
                (w, b)
            })
            .collect();
        RandomConvFeatures { seed, stages }
    }
}

impl FeatureExtractor for RandomConvFeatures {
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = tape.add_scalar(x, -0.5)?;
        for (i, (w, b)) in self.stages.iter().enumerate() {
            if i > 0 {
                h = tape.avg_pool2(h)?;
            }
            let wv = tape.constant(w.clone());
            let bv = tape.constant(b.clone());
            h = tape.conv2d(h, wv, Some(bv), 1, 1)?;
            h = tape.leaky_relu(h, 0.2)?;
        }
        Ok(h)
    }

    fn describe(&self) -> String {
        format!("random-conv(seed={})", self.seed)
    }
}
