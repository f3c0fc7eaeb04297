mod common;

use common::fixtures::{texture, tiny_model};
use gmc_core::model::{quantize_inference, DISCRIMINATOR_SCALES};
use gmc_core::{Model, ModelConfig, Network};
use gmc_tensor::Tensor;

#[test]
fn zero_image_gives_finite_latents() {
    let model = Model::new(ModelConfig::default()).unwrap();
    let enc = model.init(Network::Encoder, 11).unwrap();
    assert!(enc.get("enc.out.b").unwrap().data().iter().all(|&b| b == 0.0));
    let y = model.encode(&Tensor::zeros([1, 3, 64, 64]), &enc).unwrap();
    assert_eq!(y.y.shape(), [1, 8, 4, 4]);
    assert!(y.y.is_finite());
}

#[test]
fn encode_and_decode_are_deterministic() {
    let model = tiny_model();
    let enc = model.init(Network::Encoder, 1).unwrap();
    let dec = model.init(Network::Decoder, 1).unwrap();
    let x = texture(16, 8, 2);
    let a = model.encode(&x, &enc).unwrap();
    let b = model.encode(&x, &enc).unwrap();
    assert!(a.y.data().iter().zip(b.y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    let z = quantize_inference(&a, 2).unwrap();
    let d1 = model.decode(&z, &dec).unwrap();
    let d2 = model.decode(&z, &dec).unwrap();
    assert_eq!(d1.shape(), [1, 3, 16, 8]);
    assert!(d1.data().iter().zip(d2.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn shared_discriminator_weights_on_constant_input() {
    let model = tiny_model();
    let mut d = model.init(Network::Discriminator, 4).unwrap();
    // copy scale 0 weights into every other scale
    let names: Vec<String> = d.names().filter(|n| n.starts_with("disc.s0.")).map(String::from).collect();
    for n in &names {
        let t = d.get(n).unwrap().clone();
        for s in 1..DISCRIMINATOR_SCALES {
            *d.get_mut(&n.replacen("disc.s0.", &format!("disc.s{s}."), 1)).unwrap() = t.clone();
        }
    }
    let maps = model.discriminate(&Tensor::full([1, 3, 64, 64], 0.4), &d).unwrap();
    assert_eq!(maps.len(), 3);
    let v = maps[0].data()[0];
    for m in &maps {
        assert!(m.data().iter().all(|&x| x == v), "{:?}", m.data());
    }
}

#[test]
fn gmm_invariants_hold_for_random_weights() {
    let model = tiny_model();
    for seed in 0..10 {
        let ctx = model.init(Network::Context, seed).unwrap();
        let z = Tensor::from_fn([1, 2, 4, 5], |_, c, y, x| ((seed as usize * 7 + c * 5 + y * 3 + x) % 9) as f64 - 4.0);
        let field = model.context_forward(&z, &ctx).unwrap();
        field.validate(model.config().sigma_floor).unwrap();
    }
}

#[test]
fn context_free_ablation_is_position_independent() {
    let model = Model::new(ModelConfig {
        context_enabled: false,
        ..common::fixtures::tiny_config()
    })
    .unwrap();
    let ctx = model.init(Network::Context, 3).unwrap();
    let z = Tensor::from_fn([1, 2, 3, 3], |_, c, y, x| (c + y * x) as f64);
    let field = model.context_forward(&z, &ctx).unwrap();
    field.validate(model.config().sigma_floor).unwrap();
    let eval = model.context_evaluator(&ctx).unwrap();
    let at = eval.eval(&[0; 18], 3, 3, 2, 2);
    for k in 0..2 {
        for c in 0..2 {
            let (w, m, s) = field.component(k, c, 1, 2);
            assert_eq!(field.component(k, c, 0, 0), (w, m, s));
            assert!((w - at.weights[k * 2 + c]).abs() < 1e-12);
            assert!((s - at.stds[k * 2 + c]).abs() < 1e-12);
        }
    }
}
