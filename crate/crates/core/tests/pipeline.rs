mod common;

use common::fixtures::{context_params, texture, tiny_config, tiny_model};
use common::oracles::psnr_oracle;
use gmc_core::codec::{decode_bitstream_latents, read_bitstream, reconstruct};
use gmc_core::entropy::{pack_container, unpack_container, Header};
use gmc_core::interp::{alpha_sweep, interpolate_images, interpolate_networks, psnr, InterpMode, SweepInputs};
use gmc_core::weights::{weights_for_model, weights_from_bytes, weights_to_bytes};
use gmc_core::{compress_image, decompress_image, CodecError, Model, ModelConfig, Network};
use gmc_tensor::{ParamStore, Tensor};
use proptest::prelude::*;

struct Stores {
    enc: ParamStore,
    ctx: ParamStore,
    g1: ParamStore,
    g2: ParamStore,
}

fn stores(model: &Model) -> Stores {
    Stores {
        enc: model.init(Network::Encoder, 1).unwrap(),
        ctx: context_params(model, 1, 0.5),
        g1: model.init(Network::Decoder, 1).unwrap(),
        g2: model.init(Network::Decoder, 2).unwrap(),
    }
}

#[test]
fn compress_decompress_pipeline() {
    let model = tiny_model();
    let s = stores(&model);
    let image = texture(13, 10, 3);
    let out = compress_image(&model, &s.enc, &s.ctx, &image, true).unwrap();
    assert_eq!(&out.bytes[..4], b"GMC1");
    let stream = read_bitstream(&model, &out.bytes).unwrap();
    assert_eq!(stream.header.original, (13, 10));
    assert_eq!(stream.header.padded, (16, 12));
    assert_eq!(stream.header.latent, (4, 3));
    let z = decode_bitstream_latents(&model, &s.ctx, &stream, Some(&out.trace)).unwrap();
    assert_eq!(z, out.latents);
    let a = decompress_image(&model, &s.ctx, &s.g1, &out.bytes).unwrap();
    let b = decompress_image(&model, &s.ctx, &s.g1, &out.bytes).unwrap();
    assert_eq!(a.shape(), [1, 3, 13, 10]);
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    let bpp = out.report.actual_bpp().unwrap();
    assert!((bpp - stream.payload.len() as f64 * 8.0 / 130.0).abs() < 1e-9);
}

#[test]
fn digest_mismatch_between_stream_and_model() {
    let model = tiny_model();
    let s = stores(&model);
    let out = compress_image(&model, &s.enc, &s.ctx, &texture(8, 8, 1), false).unwrap();
    let other = Model::new(ModelConfig {
        sigma_floor: 0.02,
        ..tiny_config()
    })
    .unwrap();
    assert!(matches!(read_bitstream(&other, &out.bytes), Err(CodecError::DigestMismatch { .. })));
}

#[test]
fn every_header_byte_flip_is_rejected() {
    let model = tiny_model();
    let s = stores(&model);
    // orig == padded, so any change to the recorded dims is inconsistent
    let out = compress_image(&model, &s.enc, &s.ctx, &texture(16, 16, 5), false).unwrap();
    let header_len = unpack_container(&out.bytes).unwrap().header.encoded_len();
    for i in 0..header_len {
        let mut bytes = out.bytes.clone();
        bytes[i] ^= 0xff;
        let result = read_bitstream(&model, &bytes).and_then(|st| decode_bitstream_latents(&model, &s.ctx, &st, None));
        let err = result.expect_err(&format!("flip at byte {i} went unnoticed"));
        let expected = match i {
            0..=3 => matches!(err, CodecError::BadMagic { .. }),
            4..=5 => matches!(err, CodecError::UnsupportedVersion { .. }),
            6..=37 => matches!(err, CodecError::DigestMismatch { .. }),
            _ => true,
        };
        assert!(expected, "byte {i}: {err}");
    }
}

#[test]
fn truncation_anywhere_is_rejected() {
    let model = tiny_model();
    let s = stores(&model);
    let out = compress_image(&model, &s.enc, &s.ctx, &texture(8, 12, 6), false).unwrap();
    for cut in 0..out.bytes.len() {
        assert!(matches!(
            read_bitstream(&model, &out.bytes[..cut]),
            Err(CodecError::Truncated { .. })
        ));
    }
}

#[test]
fn container_round_trip_is_byte_exact() {
    let model = tiny_model();
    let s = stores(&model);
    let out = compress_image(&model, &s.enc, &s.ctx, &texture(12, 12, 7), false).unwrap();
    let stream = unpack_container(&out.bytes).unwrap();
    assert_eq!(pack_container(&stream), out.bytes);
    let h: &Header = &stream.header;
    assert_eq!(h.original, (12, 12));
}

#[test]
fn weight_fault_injection() {
    let model = tiny_model();
    let dec = model.init(Network::Decoder, 3).unwrap();
    let bytes = weights_to_bytes(&dec);
    let back = weights_for_model(&bytes, &model, &[Network::Decoder]).unwrap();
    assert!(back.bit_identical(&dec));

    let mut magic = bytes.clone();
    magic[1] = b'X';
    assert!(matches!(weights_from_bytes(&magic, None), Err(CodecError::BadMagic { .. })));

    assert!(matches!(
        weights_from_bytes(&bytes[..bytes.len() / 2], None),
        Err(CodecError::Truncated { .. })
    ));

    let other = Model::new(ModelConfig {
        mixtures: 3,
        ..tiny_config()
    })
    .unwrap();
    assert!(matches!(
        weights_for_model(&bytes, &other, &[Network::Decoder]),
        Err(CodecError::DigestMismatch { .. })
    ));

    // first tensor: name_len at 42, name, rank, then dims
    let name_len = u16::from_le_bytes([bytes[42], bytes[43]]) as usize;
    let name = std::str::from_utf8(&bytes[44..44 + name_len]).unwrap().to_string();
    let dim0 = 44 + name_len + 1;
    let mut shape = bytes.clone();
    shape[dim0] ^= 0x01;
    match weights_for_model(&shape, &model, &[Network::Decoder]) {
        Err(CodecError::CorruptShape { name: n, .. }) => assert_eq!(n, name),
        other => panic!("expected CorruptShape, got {other:?}"),
    }
}

#[test]
fn interpolation_endpoints_are_bit_identical() {
    let model = tiny_model();
    let s = stores(&model);
    let image = texture(8, 8, 8);
    let out = compress_image(&model, &s.enc, &s.ctx, &image, false).unwrap();
    let stream = read_bitstream(&model, &out.bytes).unwrap();
    let z = decode_bitstream_latents(&model, &s.ctx, &stream, None).unwrap();
    let plain1 = reconstruct(&model, &s.g1, &z, &stream.header).unwrap();
    let plain2 = reconstruct(&model, &s.g2, &z, &stream.header).unwrap();
    let at0 = interpolate_networks(&s.g1, &s.g2, 0.0).unwrap();
    let at1 = interpolate_networks(&s.g1, &s.g2, 1.0).unwrap();
    assert!(at0.bit_identical(&s.g1));
    assert!(at1.bit_identical(&s.g2));
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&reconstruct(&model, &at0, &z, &stream.header).unwrap()), bits(&plain1));
    assert_eq!(bits(&reconstruct(&model, &at1, &z, &stream.header).unwrap()), bits(&plain2));
    assert_eq!(bits(&interpolate_images(&plain1, &plain2, 0.0).unwrap()), bits(&plain1));
    assert_eq!(bits(&interpolate_images(&plain1, &plain2, 1.0).unwrap()), bits(&plain2));

    let inputs = SweepInputs {
        model: &model,
        context: &s.ctx,
        g1: &s.g1,
        g2: &s.g2,
    };
    let alphas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let net = alpha_sweep(&inputs, &out.bytes, &alphas, &image, InterpMode::Network).unwrap();
    let img = alpha_sweep(&inputs, &out.bytes, &alphas, &image, InterpMode::Image).unwrap();
    assert_eq!(net.rows[0].psnr_db, psnr(&image, &plain1).unwrap());
    for r in net.rows.iter().chain(&img.rows) {
        assert_eq!(r.est_bpp, net.rows[0].est_bpp);
        assert_eq!(r.actual_bpp, net.rows[0].actual_bpp);
    }
    for i in [0, 5] {
        assert_eq!(bits(&net.images[i]), bits(&img.images[i]));
        assert_eq!(net.rows[i].psnr_db, img.rows[i].psnr_db);
    }
    assert!(net.to_csv().starts_with("alpha,psnr_db,est_bpp,actual_bpp\n"));
    assert_eq!(net.to_csv().lines().count(), 7);
}

#[test]
fn psnr_decreases_with_noise() {
    let image = texture(16, 16, 9);
    let mut last = f64::INFINITY;
    for amp in [0.001, 0.01, 0.03, 0.1, 0.3] {
        let noisy = Tensor::from_fn([1, 3, 16, 16], |_, c, y, x| {
            let n = ((c * 997 + y * 31 + x * 7) as f64 * 12.9898).sin();
            image.at(0, c, y, x) + amp * n
        });
        let p = psnr(&image, &noisy).unwrap();
        assert!((p - psnr_oracle(image.data(), noisy.data())).abs() < 1e-9);
        assert!(p < last);
        last = p;
    }
}

fn random_store(seed: u64) -> ParamStore {
    let model = tiny_model();
    let mut p = model.init(Network::Decoder, seed).unwrap();
    for (_, t) in p.iter_mut() {
        let s = seed as f64;
        *t = t.map(|v| v * (1.0 + s.sin()));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn interpolation_is_linear_and_convex(sa in 0u64..1000, sb in 1000u64..2000, alpha in 0.0f64..=1.0) {
        let (a, b) = (random_store(sa), random_store(sb));
        let half = interpolate_networks(&a, &b, 0.5).unwrap();
        let nested = interpolate_networks(&half, &b, 0.5).unwrap();
        let direct = interpolate_networks(&a, &b, 0.75).unwrap();
        let mid = interpolate_networks(&a, &b, alpha).unwrap();
        for (((name, n), (_, d)), ((_, x), (_, y))) in nested.iter().zip(direct.iter()).zip(a.iter().zip(b.iter())) {
            for i in 0..n.numel() {
                let scale = x.data()[i].abs().max(y.data()[i].abs()).max(1e-300);
                prop_assert!((n.data()[i] - d.data()[i]).abs() <= 4.0 * f64::EPSILON * scale, "{}", name);
                let v = mid.get(name).unwrap().data()[i];
                prop_assert!(v >= x.data()[i].min(y.data()[i]) && v <= x.data()[i].max(y.data()[i]));
            }
        }
    }

    #[test]
    fn decode_of_encode_keeps_shape(hm in 1usize..4, wm in 1usize..4, seed in 0u64..50) {
        let model = tiny_model();
        let enc = model.init(Network::Encoder, seed).unwrap();
        let dec = model.init(Network::Decoder, seed).unwrap();
        let x = texture(hm * 4, wm * 4, seed);
        let y = model.encode(&x, &enc).unwrap();
        let z = gmc_core::model::quantize_inference(&y, 2).unwrap();
        prop_assert_eq!(model.decode(&z, &dec).unwrap().shape(), x.shape());
    }
}
