use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gmc_core::codec::{decode_bitstream_latents, read_bitstream, reconstruct};
use gmc_core::entropy::rate_estimate;
use gmc_core::image::{read_ppm, write_ppm, RgbImage};
use gmc_core::interp::{SweepInputs, PSNR_CAP_DB};
use gmc_core::io::write_atomic;
use gmc_core::weights::{save_weights, weights_from_bytes};
use gmc_core::{
    alpha_sweep, compress_image, interpolate_images, interpolate_networks, psnr, InterpMode, Model, Network,
    QuantizedLatents,
};
use gmc_tensor::{ParamStore, Tensor};
use gmc_train::{
    load_dataset, Checkpoint, LogRow, PatchSampler, RandomConvFeatures, Stage1Trainer, Stage2Trainer,
};

use crate::args::Mode;
use crate::settings::Settings;

/// A weight file split into the networks it contains.
struct WeightFile {
    path: PathBuf,
    store: ParamStore,
}

impl WeightFile {
    fn load(path: &Path, model: &Model) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read weights {}", path.display()))?;
        let store = weights_from_bytes(&bytes, None).with_context(|| format!("in weights {}", path.display()))?;
        model
            .check_digest(&store)
            .with_context(|| format!("weights {} do not match the model config", path.display()))?;
        Ok(WeightFile {
            path: path.to_path_buf(),
            store,
        })
    }

    fn network(&self, model: &Model, network: Network) -> Result<ParamStore> {
        let sub = self.store.subset(network.prefix());
        if sub.is_empty() {
            bail!("weights {} contain no {network:?} parameters", self.path.display());
        }
        model
            .check_params(network, &sub)
            .with_context(|| format!("{network:?} parameters in {}", self.path.display()))?;
        Ok(sub)
    }
}

fn merge(stores: &[&ParamStore]) -> Result<ParamStore> {
    let mut out = ParamStore::new(*stores[0].digest());
    for s in stores {
        out.extend(s)?;
    }
    Ok(out)
}

fn read_image(path: &Path) -> Result<Tensor> {
    Ok(read_ppm(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .to_tensor())
}

fn write_image(path: &Path, t: &Tensor) -> Result<()> {
    write_ppm(path, &RgbImage::from_tensor(t)?).with_context(|| format!("cannot write {}", path.display()))
}

fn latents_text(z: &QuantizedLatents) -> String {
    let mut s = format!("{} {} {}\n", z.channels(), z.height(), z.width());
    for c in 0..z.channels() {
        for y in 0..z.height() {
            let row: Vec<String> = (0..z.width()).map(|x| z.get(c, y, x).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

fn log_text(rows: &[LogRow]) -> String {
    let mut s = String::new();
    if let Some(first) = rows.first() {
        s.push_str(&first.csv_header());
        s.push('\n');
    }
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn train(
    settings: &Settings,
    from: Option<&Path>,
    resume: Option<&Path>,
    checkpoint_every: Option<u64>,
    out: &Path,
) -> Result<()> {
    let model = settings.model()?;
    let cfg = settings.train.clone();
    cfg.validate()?;
    // Everything that can fail on bad input happens before the first write.
    let images = load_dataset(&cfg.dataset, cfg.seed)?;
    let sampler = PatchSampler::new(images, cfg.patch_size)?;
    let resume = resume.map(Checkpoint::load).transpose().context("cannot load --resume checkpoint")?;
    let stage = cfg.stage;

    enum Trainer {
        One(Stage1Trainer),
        Two(Stage2Trainer),
    }
    let mut trainer = match stage {
        1 => Trainer::One(match &resume {
            Some(ck) => Stage1Trainer::resume(model.clone(), cfg.clone(), sampler, ck)?,
            None => Stage1Trainer::new(model.clone(), cfg.clone(), sampler)?,
        }),
        _ => {
            let features = Box::new(RandomConvFeatures::new(cfg.feature_seed));
            Trainer::Two(match &resume {
                Some(ck) => Stage2Trainer::resume(model.clone(), cfg.clone(), sampler, features, ck)?,
                None => {
                    let path = from.context("stage 2 needs --from <stage-1 checkpoint>")?;
                    let stage1 = Checkpoint::load(path)
                        .with_context(|| format!("cannot load stage-1 checkpoint {}", path.display()))?;
                    Stage2Trainer::new(model.clone(), cfg.clone(), sampler, features, &stage1)?
                }
            })
        }
    };

    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let log_path = out.join(format!("stage{stage}_log.csv"));
    // On resume, keep the rows of the interrupted run that precede the checkpoint.
    let mut log = String::new();
    if resume.is_some() && log_path.exists() {
        let start = match &trainer {
            Trainer::One(t) => t.iteration(),
            Trainer::Two(t) => t.iteration(),
        };
        let old = std::fs::read_to_string(&log_path)?;
        for l in old.lines().take(start as usize + 1) {
            let _ = writeln!(log, "{l}");
        }
    }
    let mut rows: Vec<LogRow> = Vec::new();

    loop {
        let (finished, it) = match &trainer {
            Trainer::One(t) => (t.finished(), t.iteration()),
            Trainer::Two(t) => (t.finished(), t.iteration()),
        };
        if finished {
            break;
        }
        let row = match &mut trainer {
            Trainer::One(t) => t.step(),
            Trainer::Two(t) => t.step(),
        }
        .with_context(|| format!("stage {stage} failed at iteration {it}"))?;
        if (it + 1) % 100 == 0 {
            log::info!("{}", row.to_csv());
        }
        rows.push(row);
        if let Some(k) = checkpoint_every.filter(|&k| k > 0) {
            if (it + 1) % k == 0 {
                let ck = match &trainer {
                    Trainer::One(t) => t.checkpoint(),
                    Trainer::Two(t) => t.checkpoint(),
                };
                ck.save(&out.join(format!("stage{stage}_iter{}.gmck", it + 1)))?;
            }
        }
    }

    if log.is_empty() {
        log = log_text(&rows);
    } else {
        for r in &rows {
            let _ = writeln!(log, "{}", r.to_csv());
        }
    }
    let ck = match &trainer {
        Trainer::One(t) => t.checkpoint(),
        Trainer::Two(t) => t.checkpoint(),
    };
    let ck_path = out.join(format!("stage{stage}.gmck"));
    ck.save(&ck_path)?;
    let weights_path = match stage {
        1 => {
            let w = merge(&[ck.params("enc")?, ck.params("ctx")?, ck.params("dec")?])?;
            let p = out.join("weights.gmcw");
            save_weights(&w, &p)?;
            p
        }
        _ => {
            let p = out.join("weights_g2.gmcw");
            save_weights(ck.params("dec")?, &p)?;
            p
        }
    };
    write_atomic(&log_path, log.as_bytes())?;
    println!("checkpoint = {}", ck_path.display());
    println!("weights = {}", weights_path.display());
    println!("log = {}", log_path.display());
    println!("iterations = {}", ck.iteration);
    Ok(())
}

pub fn compress(settings: &Settings, input: &Path, weights: &Path, out: &Path, dump: Option<&Path>) -> Result<()> {
    let model = settings.model()?;
    let w = WeightFile::load(weights, &model)?;
    let enc = w.network(&model, Network::Encoder)?;
    let ctx = w.network(&model, Network::Context)?;
    let image = read_image(input)?;
    let c = compress_image(&model, &enc, &ctx, &image, false)?;
    write_atomic(out, &c.bytes).with_context(|| format!("cannot write {}", out.display()))?;
    if let Some(p) = dump {
        write_atomic(p, latents_text(&c.latents).as_bytes())?;
    }
    let [_, _, h, wd] = image.shape();
    println!("original = {wd}x{h}");
    println!("bytes = {}", c.bytes.len());
    println!("payload_bytes = {}", c.report.actual_bits.unwrap_or(0) / 8);
    println!("actual_bpp = {}", c.report.actual_bpp().unwrap_or(f64::NAN));
    println!("estimated_bpp = {}", c.report.estimated_bpp());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn decompress(
    settings: &Settings,
    input: &Path,
    weights: &Path,
    weights_g2: Option<&Path>,
    alpha: f64,
    mode: Mode,
    out: &Path,
    dump: Option<&Path>,
) -> Result<()> {
    gmc_core::interp::check_alpha(alpha)?;
    let model = settings.model()?;
    let bytes = std::fs::read(input).with_context(|| format!("cannot read bitstream {}", input.display()))?;
    let stream = read_bitstream(&model, &bytes)?;
    let w = WeightFile::load(weights, &model)?;
    let ctx = w.network(&model, Network::Context)?;
    let g2 = match weights_g2 {
        Some(p) => Some(WeightFile::load(p, &model)?.network(&model, Network::Decoder)?),
        None if alpha > 0.0 => bail!("--alpha {alpha} blends in the second decoder; pass --weights-g2"),
        None => None,
    };
    let g1 = if alpha < 1.0 || mode == Mode::Image {
        Some(w.network(&model, Network::Decoder)?)
    } else {
        None
    };
    let z = decode_bitstream_latents(&model, &ctx, &stream, None)?;
    if let Some(p) = dump {
        write_atomic(p, latents_text(&z).as_bytes())?;
    }
    let image = match (mode, g1, g2) {
        (_, Some(g1), None) => reconstruct(&model, &g1, &z, &stream.header)?,
        (_, None, Some(g2)) => reconstruct(&model, &g2, &z, &stream.header)?,
        (Mode::Network, Some(g1), Some(g2)) => {
            let g = interpolate_networks(&g1, &g2, alpha)?;
            reconstruct(&model, &g, &z, &stream.header)?
        }
        (Mode::Image, Some(g1), Some(g2)) => {
            let x1 = reconstruct(&model, &g1, &z, &stream.header)?;
            let x2 = reconstruct(&model, &g2, &z, &stream.header)?;
            interpolate_images(&x1, &x2, alpha)?
        }
        (_, None, None) => unreachable!("one decoder is always loaded"),
    };
    write_image(out, &image)?;
    let (h, wd) = stream.header.original;
    println!("decoded = {wd}x{h}");
    println!("alpha = {alpha}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    settings: &Settings,
    input: &Path,
    weights: &Path,
    weights_g2: &Path,
    original: &Path,
    alphas: &[f64],
    mode: Mode,
    out: &Path,
) -> Result<()> {
    let model = settings.model()?;
    let bytes = std::fs::read(input).with_context(|| format!("cannot read bitstream {}", input.display()))?;
    let w = WeightFile::load(weights, &model)?;
    let context = w.network(&model, Network::Context)?;
    let g1 = w.network(&model, Network::Decoder)?;
    let g2 = WeightFile::load(weights_g2, &model)?.network(&model, Network::Decoder)?;
    let original = read_image(original)?;
    let inputs = SweepInputs {
        model: &model,
        context: &context,
        g1: &g1,
        g2: &g2,
    };
    let report = alpha_sweep(&inputs, &bytes, alphas, &original, InterpMode::from(mode))?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for (row, image) in report.rows.iter().zip(&report.images) {
        write_image(&out.join(format!("alpha_{:.3}.ppm", row.alpha)), image)?;
    }
    write_atomic(&out.join("sweep.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn eval(
    settings: &Settings,
    original: &Path,
    reconstruction: &Path,
    bitstream: Option<&Path>,
    weights: Option<&Path>,
) -> Result<()> {
    let x = read_image(original)?;
    let y = read_image(reconstruction)?;
    let p = psnr(&x, &y)?;
    println!("psnr_db = {p}");
    if p == PSNR_CAP_DB {
        log::info!("images are identical; PSNR reported at its cap");
    }
    if let Some(path) = bitstream {
        let model = settings.model()?;
        let bytes = std::fs::read(path).with_context(|| format!("cannot read bitstream {}", path.display()))?;
        let stream = read_bitstream(&model, &bytes)?;
        let pixels = stream.header.original_pixels();
        println!("actual_bpp = {}", (stream.payload.len() * 8) as f64 / pixels as f64);
        if let Some(wp) = weights {
            let ctx = WeightFile::load(wp, &model)?.network(&model, Network::Context)?;
            let z = decode_bitstream_latents(&model, &ctx, &stream, None)?;
            let field = model.context_forward(&z.to_tensor(), &ctx)?;
            let report = rate_estimate(&z.to_tensor(), &field, pixels)?;
            println!("estimated_bpp = {}", report.estimated_bpp());
        }
    }
    Ok(())
}
