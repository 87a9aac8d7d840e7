//! Variational autoencoder for range-scan embedding.
//!
//! The encoder emits `2L` values per sample: `mu` followed by `log_var`.
//! Training loss per batch is
//!
//! ```text
//! recon = mean_{b,i} (x_hat - x)^2
//! kl    = mean_b sum_j 0.5 (mu^2 + exp(log_var) - 1 - log_var)
//! loss  = recon + beta * kl / input_dim
//! ```
//!
//! Dividing the KL by the input width puts both terms on a per-element scale
//! (the usual summed-likelihood ELBO divided by `input_dim`).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{CheckpointError, LearnError, Result};
use crate::net::{Activation, DenseNet};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub beta: f64,
    pub lr: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self { input_dim: 720, latent_dim: 32, hidden: vec![256, 128], beta: 1.0, lr: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vae<R: Real = f32> {
    pub encoder: DenseNet<R>,
    pub decoder: DenseNet<R>,
    latent_dim: usize,
    beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeLoss {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct VaeGradients<R: Real> {
    pub encoder: Vec<R>,
    pub decoder: Vec<R>,
}

/// Closed-form `KL(N(mu, exp(log_var)) || N(0, 1))` summed over dimensions.
pub fn gaussian_kl(mu: &[f64], log_var: &[f64]) -> f64 {
    mu.iter().zip(log_var).map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv)).sum()
}

impl<R: Real> Vae<R> {
    pub fn new(cfg: &VaeConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.input_dim == 0 {
            return Err(LearnError::Config("vae dimensions must be positive".into()));
        }
        let mut enc_sizes = vec![cfg.input_dim];
        enc_sizes.extend(&cfg.hidden);
        enc_sizes.push(2 * cfg.latent_dim);
        let mut dec_sizes = vec![cfg.latent_dim];
        dec_sizes.extend(cfg.hidden.iter().rev());
        dec_sizes.push(cfg.input_dim);
        let acts = |n: usize| {
            let mut a = vec![Activation::Relu; n - 2];
            a.push(Activation::Linear);
            a
        };
        Ok(Self {
            encoder: DenseNet::new(&enc_sizes, &acts(enc_sizes.len()), rng)?,
            decoder: DenseNet::new(&dec_sizes, &acts(dec_sizes.len()), rng)?,
            latent_dim: cfg.latent_dim,
            beta: cfg.beta,
        })
    }

    pub fn from_nets(encoder: DenseNet<R>, decoder: DenseNet<R>, beta: f64) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim || encoder.input_dim() != decoder.output_dim() {
            return Err(LearnError::DimMismatch {
                context: "vae encoder/decoder",
                expected: 2 * latent_dim,
                got: encoder.output_dim(),
            });
        }
        Ok(Self { encoder, decoder, latent_dim, beta })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Posterior mean for each sample in the batch; no sampling.
    pub fn encode(&self, input: &[R], batch: usize) -> Result<Vec<R>> {
        let h = self.encoder.forward(input, batch)?;
        let l = self.latent_dim;
        Ok(h.chunks_exact(2 * l).flat_map(|row| row[..l].iter().copied()).collect())
    }

    pub fn decode(&self, latent: &[R], batch: usize) -> Result<Vec<R>> {
        self.decoder.forward(latent, batch)
    }

    /// Loss and parameter gradients using caller-supplied standard normal
    /// noise `eps` (`batch x latent_dim`) for the reparameterized sample.
    pub fn loss_and_grads(&self, input: &[R], batch: usize, eps: &[R]) -> Result<(VaeLoss, VaeGradients<R>)> {
        let l = self.latent_dim;
        let n = self.input_dim();
        if eps.len() != batch * l {
            return Err(LearnError::DimMismatch { context: "vae noise", expected: batch * l, got: eps.len() });
        }
        let enc = self.encoder.forward_cached(input, batch)?;
        let h = enc.output();
        let mut z = vec![R::ZERO; batch * l];
        let mut kl = 0.0f64;
        let half = R::from_f64(0.5);
        for b in 0..batch {
            for j in 0..l {
                let mu = h[b * 2 * l + j];
                let lv = h[b * 2 * l + l + j];
                z[b * l + j] = mu + (half * lv).exp() * eps[b * l + j];
                let (m, v) = (mu.to_f64(), lv.to_f64());
                kl += 0.5 * (m * m + v.exp() - 1.0 - v);
            }
        }
        kl /= batch as f64;
        let dec = self.decoder.forward_cached(&z, batch)?;
        let recon_out = dec.output();
        let count = (batch * n) as f64;
        let mut recon = 0.0f64;
        let scale = R::from_f64(2.0 / count);
        let mut d_out = vec![R::ZERO; batch * n];
        for i in 0..batch * n {
            let diff = recon_out[i] - input[i];
            recon += diff.to_f64() * diff.to_f64();
            d_out[i] = scale * diff;
        }
        recon /= count;
        let total = recon + self.beta * kl / n as f64;
        if !total.is_finite() {
            return Err(LearnError::NonFinite("vae loss"));
        }

        let dec_grads = self.decoder.backward(&dec, &d_out)?;
        let dz = &dec_grads.input;
        let kl_scale = R::from_f64(self.beta / (n as f64 * batch as f64));
        let mut d_h = vec![R::ZERO; batch * 2 * l];
        for b in 0..batch {
            for j in 0..l {
                let mu = h[b * 2 * l + j];
                let lv = h[b * 2 * l + l + j];
                let g = dz[b * l + j];
                let sigma = (half * lv).exp();
                d_h[b * 2 * l + j] = g + kl_scale * mu;
                d_h[b * 2 * l + l + j] = g * eps[b * l + j] * half * sigma + kl_scale * half * (lv.exp() - R::ONE);
            }
        }
        let enc_grads = self.encoder.backward(&enc, &d_h)?;
        Ok((
            VaeLoss { reconstruction: recon, kl, total },
            VaeGradients { encoder: enc_grads.params, decoder: dec_grads.params },
        ))
    }
}

impl Vae<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "vae");
        ck.set_meta("latent_dim", self.latent_dim);
        ck.set_meta("beta", self.beta);
        ck.push_net("encoder", &self.encoder);
        ck.push_net("decoder", &self.decoder);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> std::result::Result<Self, CheckpointError> {
        if ck.require_meta("kind")? != "vae" {
            return Err(CheckpointError::Manifest("checkpoint is not a vae".into()));
        }
        let beta: f64 = ck.parse_meta("beta")?;
        Vae::from_nets(ck.net("encoder")?, ck.net("decoder")?, beta)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))
    }
}

/// VAE plus its optimizers and noise source.
#[derive(Clone, Debug)]
pub struct VaeTrainer {
    pub vae: Vae<f32>,
    enc_opt: Adam<f32>,
    dec_opt: Adam<f32>,
    rng: ChaCha8Rng,
}

impl VaeTrainer {
    pub fn new(vae: Vae<f32>, lr: f64, rng: ChaCha8Rng) -> Self {
        let cfg = AdamConfig { lr, ..Default::default() };
        Self {
            enc_opt: Adam::new(cfg, vae.encoder.params().len()),
            dec_opt: Adam::new(cfg, vae.decoder.params().len()),
            vae,
            rng,
        }
    }

    /// One Adam step on a batch of scans normalized to `[0, 1]`.
    pub fn train_step(&mut self, input: &[f32], batch: usize) -> Result<VaeLoss> {
        let l = self.vae.latent_dim();
        let eps: Vec<f32> = (0..batch * l).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let (loss, grads) = self.vae.loss_and_grads(input, batch, &eps)?;
        self.enc_opt.step(self.vae.encoder.params_mut(), &grads.encoder)?;
        self.dec_opt.step(self.vae.decoder.params_mut(), &grads.decoder)?;
        Ok(loss)
    }

    pub fn into_vae(self) -> Vae<f32> {
        self.vae
    }
}
