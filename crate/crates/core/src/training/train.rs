//! Generator training on a patch store: reconstruction only, or
//! reconstruction plus a relativistic adversarial term with alternating
//! discriminator and generator updates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::refnet::{build_discriminator, build_refnet, save_weights, RefNet, RefNetConfig};
use crate::tensor::{mae_loss, Adam, Gradients, Network, Tensor};

use super::patches::PatchStore;
use super::ragan::{ragan_discriminator_loss, ragan_generator_loss};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Reconstruction loss only.
    Basic,
    /// Reconstruction plus `mu` times the adversarial generator loss.
    Complex,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(TrainMode::Basic),
            "complex" => Ok(TrainMode::Complex),
            _ => Err(Error::Parameter(format!("training mode must be basic or complex, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after_halving: f64,
    /// Fraction of `total_steps` after which `lr_after_halving` applies.
    pub halving_point: f64,
    pub total_steps: usize,
    pub mu: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Steps between checkpoints; zero disables them.
    pub checkpoint_every: usize,
    pub generator: RefNetConfig,
    pub discriminator_base: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr_initial: 2e-4,
            lr_after_halving: 1e-4,
            halving_point: 0.5,
            total_steps: 1000,
            mu: 1e-3,
            seed: 0,
            mode: TrainMode::Basic,
            checkpoint_every: 500,
            generator: RefNetConfig::default(),
            discriminator_base: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !positive(self.lr_initial) || !positive(self.lr_after_halving) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.halving_point) {
            return Err(Error::Config(format!("halving_point {} outside [0, 1]", self.halving_point)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.discriminator_base == 0 {
            return Err(Error::Config("discriminator_base must be positive".into()));
        }
        self.generator.validate()
    }

    /// First step index that uses the halved learning rate.
    pub fn halving_step(&self) -> usize {
        (self.halving_point * self.total_steps as f64).round() as usize
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.halving_step() {
            self.lr_initial
        } else {
            self.lr_after_halving
        }
    }
}

/// Losses of one training step. Adversarial entries are `None` in basic
/// mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss_recon: f64,
    pub loss_g: Option<f64>,
    pub loss_d: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub weights_path: Option<PathBuf>,
}

impl TrainReport {
    /// Mean reconstruction loss over the first and the last `window` steps.
    pub fn smoothed_recon(&self, window: usize) -> Option<(f64, f64)> {
        let n = self.steps.len();
        if window == 0 || n < window {
            return None;
        }
        let mean = |s: &[StepRecord]| s.iter().map(|r| r.loss_recon).sum::<f64>() / s.len() as f64;
        Some((mean(&self.steps[..window]), mean(&self.steps[n - window..])))
    }

    /// `step,loss_recon,loss_G,loss_D,lr` lines with a header; missing
    /// adversarial losses are written as `-`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.8e}"));
        let mut s = String::from("step,loss_recon,loss_G,loss_D,lr\n");
        for r in &self.steps {
            let _ = writeln!(
                s,
                "{},{:.8e},{},{},{:e}",
                r.step,
                r.loss_recon,
                opt(r.loss_g),
                opt(r.loss_d),
                r.lr
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

struct Adversary {
    net: Network,
    adam: Adam,
    grads: Gradients,
    scratch: Gradients,
}

/// Stateful training loop over a borrowed patch store.
pub struct Trainer<'a> {
    config: TrainConfig,
    store: &'a PatchStore,
    generator: RefNet,
    adam: Adam,
    grads: Gradients,
    adversary: Option<Adversary>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
}

impl<'a> Trainer<'a> {
    /// Builds the generator from `config.seed` and, in complex mode, the
    /// discriminator from `config.seed + 1`. Batch order uses its own stream.
    pub fn new(config: TrainConfig, store: &'a PatchStore) -> Result<Self> {
        config.validate()?;
        if store.is_empty() {
            return Err(Error::Data("patch store is empty".into()));
        }
        if store.hr_size() != config.generator.scale * store.lr_size() {
            return Err(Error::Data(format!(
                "patch sizes {} -> {} do not match scale {}",
                store.lr_size(),
                store.hr_size(),
                config.generator.scale
            )));
        }
        if !store.lr_size().is_multiple_of(config.generator.size_multiple()) {
            return Err(Error::Data(format!(
                "LR patch size {} is not a multiple of {}",
                store.lr_size(),
                config.generator.size_multiple()
            )));
        }
        let generator = build_refnet(&config.generator, config.seed)?;
        let grads = Gradients::zeros_like(generator.network.params());
        let adversary = match config.mode {
            TrainMode::Basic => None,
            TrainMode::Complex => {
                let net = build_discriminator(config.discriminator_base, config.seed.wrapping_add(1))?;
                let grads = Gradients::zeros_like(net.params());
                let scratch = grads.clone();
                Some(Adversary { net, adam: Adam::new(), grads, scratch })
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            store,
            generator,
            adam: Adam::new(),
            grads,
            adversary,
            rng,
            order: Vec::new(),
            cursor: 0,
            step: 0,
        })
    }

    pub fn generator(&self) -> &RefNet {
        &self.generator
    }

    pub fn into_generator(self) -> RefNet {
        self.generator
    }

    pub fn discriminator(&self) -> Option<&Network> {
        self.adversary.as_ref().map(|a| &a.net)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn next_indices(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.batch_size);
        while out.len() < self.config.batch_size {
            if self.cursor == self.order.len() {
                self.order = (0..self.store.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    fn batch(&mut self) -> Result<(Tensor, Tensor)> {
        let idx = self.next_indices();
        let (lr, hr) = (self.store.lr_size(), self.store.hr_size());
        let n = idx.len();
        let mut x = Vec::with_capacity(n * lr * lr);
        let mut t = Vec::with_capacity(n * hr * hr);
        for i in idx {
            let p = &self.store.pairs()[i];
            x.extend_from_slice(&p.r_ll);
            t.extend_from_slice(&p.r_hh);
        }
        Ok((Tensor::nhwc(n, lr, lr, 1, x)?, Tensor::nhwc(n, hr, hr, 1, t)?))
    }

    /// One iteration: in complex mode a discriminator update followed by a
    /// generator update, otherwise a generator update only.
    pub fn step(&mut self) -> Result<StepRecord> {
        let lr = self.config.lr_at(self.step);
        let (x, target) = self.batch()?;
        let trace = self.generator.network.forward_trace(&x)?;
        let (loss_recon, mut upstream) = mae_loss(trace.output(), &target)?;
        let (mut loss_g, mut loss_d) = (None, None);

        if let Some(adv) = self.adversary.as_mut() {
            let fake = trace.output();
            let n = target.shape()[0];
            let logit_shape = [n, 1, 1, 1];

            let real_trace = adv.net.forward_trace(&target)?;
            let fake_trace = adv.net.forward_trace(fake)?;
            let d = ragan_discriminator_loss(real_trace.output().data(), fake_trace.output().data())?;
            adv.grads.zero();
            adv.net.backward(&real_trace, &Tensor::new(logit_shape, d.grad_real)?, &mut adv.grads)?;
            adv.net.backward(&fake_trace, &Tensor::new(logit_shape, d.grad_fake)?, &mut adv.grads)?;
            adv.adam.step(adv.net.params_mut(), &adv.grads, lr)?;
            loss_d = Some(d.loss);

            let real_logits = adv.net.forward(&target)?;
            let fake_trace = adv.net.forward_trace(fake)?;
            let g = ragan_generator_loss(real_logits.data(), fake_trace.output().data())?;
            adv.scratch.zero();
            let grad_fake =
                adv.net.backward(&fake_trace, &Tensor::new(logit_shape, g.grad_fake)?, &mut adv.scratch)?;
            let mu = self.config.mu as f32;
            for (u, a) in upstream.data_mut().iter_mut().zip(grad_fake.data()) {
                *u += mu * a;
            }
            loss_g = Some(g.loss);
        }

        let finite = loss_recon.is_finite()
            && loss_g.is_none_or(f64::is_finite)
            && loss_d.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::Numerical(format!(
                "non-finite loss at step {} (recon {loss_recon}, G {loss_g:?}, D {loss_d:?})",
                self.step
            )));
        }

        self.grads.zero();
        self.generator.network.backward(&trace, &upstream, &mut self.grads)?;
        self.adam.step(self.generator.network.params_mut(), &self.grads, lr)?;
        let record = StepRecord { step: self.step, loss_recon, loss_g, loss_d, lr };
        self.step += 1;
        Ok(record)
    }
}

/// Path of the rolling checkpoint written next to `out_weights`.
pub fn checkpoint_path(out_weights: &Path) -> PathBuf {
    let mut s = out_weights.as_os_str().to_owned();
    s.push(".ckpt");
    PathBuf::from(s)
}

/// Runs `config.total_steps` iterations, checkpointing every
/// `config.checkpoint_every` steps, and saves the final generator weights to
/// `out_weights`. A non-finite loss aborts with a numerical error that names
/// the last checkpoint written.
pub fn train(config: &TrainConfig, store: &PatchStore, out_weights: impl AsRef<Path>) -> Result<TrainReport> {
    let out = out_weights.as_ref();
    let ckpt = checkpoint_path(out);
    let mut trainer = Trainer::new(config.clone(), store)?;
    let mut report = TrainReport::default();
    let mut last_good: Option<usize> = None;
    for _ in 0..config.total_steps {
        let record = trainer.step().map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(match last_good {
                Some(s) => format!("{msg}; last good checkpoint {} (step {s})", ckpt.display()),
                None => format!("{msg}; no checkpoint written yet"),
            }),
            other => other,
        })?;
        report.steps.push(record);
        let done = trainer.steps_taken();
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.total_steps {
            save_weights(trainer.generator().network.params(), &ckpt)?;
            last_good = Some(done);
        }
    }
    save_weights(trainer.generator().network.params(), out)?;
    report.weights_path = Some(out.to_path_buf());
    Ok(report)
}
