use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::AdamW;
use super::pool::CipherPool;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::cipher::{symbol_error_rate, CipherMapping, SymbolId};
use crate::corpus::{make_batch, Batch};
use crate::error::{Error, Result};
use crate::heads::GumbelSinkhorn;
use crate::model::Model;
use crate::params::Parameters;
use crate::rng::{stream_rng, streams, SeedStream};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    pub final_val_acc: Option<f64>,
    pub history: Vec<MetricsRow>,
}

/// Fixed validation sequences encrypted under ciphers outside the training pool.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub ciphertexts: Vec<Vec<SymbolId>>,
    pub plaintexts: Vec<Vec<SymbolId>>,
    pub ciphers: Vec<CipherMapping>,
}

impl ValidationSet {
    /// Encrypt up to `size` plaintexts, each under a fresh cipher drawn from
    /// the validation stream, skipping any cipher in `exclude`.
    pub fn new(plaintexts: &[Vec<SymbolId>], size: usize, seed: u64, exclude: Option<&CipherPool>) -> Result<Self> {
        let stream = SeedStream::new(seed).child(streams::VALIDATION);
        let mut index = 0;
        let mut set = Self { ciphertexts: Vec::new(), plaintexts: Vec::new(), ciphers: Vec::new() };
        for plain in plaintexts.iter().take(size) {
            let cipher = loop {
                let c = CipherMapping::sample(stream.seed(index));
                index += 1;
                if !exclude.is_some_and(|p| p.contains(&c)) {
                    break c;
                }
            };
            set.ciphertexts.push(cipher.apply(plain)?);
            set.plaintexts.push(plain.clone());
            set.ciphers.push(cipher);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plaintexts.is_empty()
    }

    /// `1 - mean SER` of the model's decodings.
    pub fn accuracy(&self, model: &Model<f32>, exec: crate::exec::Execution) -> Result<f64> {
        if self.is_empty() {
            return Ok(f64::NAN);
        }
        let decoded = model.decode_batch(&self.ciphertexts, exec)?;
        let mut total = 0.0;
        for (d, plain) in decoded.iter().zip(&self.plaintexts) {
            total += symbol_error_rate(&d.prediction, plain)?;
        }
        Ok(1.0 - total / self.len() as f64)
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model<f32>,
    pub optimizer: AdamW<f32>,
    /// Steps completed so far.
    pub step: u64,
    train: Vec<Vec<SymbolId>>,
    validation: Option<ValidationSet>,
    pool: Option<CipherPool>,
    out_dir: Option<PathBuf>,
    metrics: Option<csv::Writer<File>>,
    history: Vec<MetricsRow>,
}

impl Trainer {
    /// Fresh model and optimizer. `validation` plaintexts are encrypted once
    /// under held-out ciphers.
    pub fn new(config: TrainConfig, train: Vec<Vec<SymbolId>>, validation: &[Vec<SymbolId>]) -> Result<Self> {
        config.validate()?;
        let mut model = Model::new(&config.model_config()?, config.head, config.seed)?;
        model.backbone.precision = config.precision;
        model.relax = GumbelSinkhorn::new(config.tau, config.sinkhorn_iters)?;
        let optimizer = AdamW::new(config.optimizer(), &model.params());
        Self::assemble(config, model, optimizer, 0, train, validation)
    }

    /// Continue from a checkpoint written by [`Trainer::save`]. Batches are a
    /// pure function of (seed, step), so the run continues exactly.
    pub fn resume(config: TrainConfig, checkpoint: &Path, train: Vec<Vec<SymbolId>>, validation: &[Vec<SymbolId>]) -> Result<Self> {
        config.validate()?;
        let ck = load_checkpoint::<f32>(checkpoint)?;
        if ck.seed != config.seed {
            warn!("checkpoint seed {} differs from config seed {}; using the checkpoint's", ck.seed, config.seed);
        }
        let config = TrainConfig { seed: ck.seed, ..config };
        let optimizer = ck.optimizer.ok_or_else(|| Error::Checkpoint("no optimizer state to resume from".into()))?;
        let mut model = ck.model;
        model.backbone.precision = config.precision;
        Self::assemble(config, model, optimizer, ck.step, train, validation)
    }

    fn assemble(
        config: TrainConfig,
        model: Model<f32>,
        optimizer: AdamW<f32>,
        step: u64,
        train: Vec<Vec<SymbolId>>,
        validation: &[Vec<SymbolId>],
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let max_len = model.config().max_len;
        if let Some(t) = train.iter().find(|t| t.len() > max_len || t.is_empty()) {
            return Err(Error::TooLong { len: t.len(), max: max_len });
        }
        let pool = config.cipher_pool_size.map(|k| CipherPool::new(k, config.seed));
        let validation = if validation.is_empty() {
            None
        } else {
            Some(ValidationSet::new(validation, config.validation_size, config.seed, pool.as_ref())?)
        };
        Ok(Self { config, model, optimizer, step, train, validation, pool, out_dir: None, metrics: None, history: Vec::new() })
    }

    /// Write metrics and checkpoints under `dir`. Appends to an existing
    /// `metrics.csv` when resuming.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let path = dir.join("metrics.csv");
        let append = self.step > 0 && path.exists();
        let file = OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(&path)?;
        let writer = csv::WriterBuilder::new().has_headers(!append).from_writer(file);
        self.metrics = Some(writer);
        self.out_dir = Some(dir.to_owned());
        Ok(self)
    }

    pub fn pool(&self) -> Option<&CipherPool> {
        self.pool.as_ref()
    }

    pub fn validation(&self) -> Option<&ValidationSet> {
        self.validation.as_ref()
    }

    pub fn history(&self) -> &[MetricsRow] {
        &self.history
    }

    /// The batch for step `step` (0-based) and the Gumbel seed of each row.
    pub fn batch(&self, step: u64) -> Result<(Batch, Vec<u64>)> {
        let b = self.config.batch_size as u64;
        let stream = SeedStream::new(self.config.seed).child(streams::BATCH);
        let mut plains = Vec::with_capacity(b as usize);
        let mut ciphers = Vec::with_capacity(b as usize);
        let mut noise = Vec::with_capacity(b as usize);
        for r in 0..b {
            let mut rng = stream_rng(stream.seed(step * b + r), streams::BATCH);
            plains.push(&self.train[rng.random_range(0..self.train.len())]);
            ciphers.push(match &self.pool {
                Some(pool) => *pool.sample(&mut rng),
                None => CipherMapping::sample_with(&mut rng),
            });
            noise.push(rng.random::<u64>());
        }
        Ok((make_batch(&plains, &ciphers, self.model.config().max_len)?, noise))
    }

    /// Mean loss and parameter gradient of a batch.
    pub fn gradient(&self, batch: &Batch, noise_seeds: &[u64]) -> Result<(f64, Model<f32>)> {
        let positions = batch.n_positions();
        let scale = 1.0 / positions.max(1) as f32;
        let model = &self.model;
        let (grad, loss, err) = self.config.execution.fold_chunks(
            batch.rows(),
            || (model.zeros_like(), 0.0f64, None),
            |acc, r| {
                if acc.2.is_some() {
                    return;
                }
                let noise = model.sample_noise(noise_seeds[r]);
                match model.loss_backward(batch.row_tokens(r), batch.row_targets(r), noise.as_ref(), scale, &mut acc.0) {
                    Ok(l) => acc.1 += l,
                    Err(e) => acc.2 = Some(e),
                }
            },
            |a, b| {
                a.0.add_(&b.0);
                a.1 += b.1;
                if a.2.is_none() {
                    a.2 = b.2;
                }
            },
        );
        match err {
            Some(e) => Err(e),
            None => Ok((loss / positions.max(1) as f64, grad)),
        }
    }

    /// Run one optimizer step and return the batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let (batch, noise) = self.batch(self.step)?;
        let (loss, grad) = self.gradient(&batch, &noise)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(self.step + 1));
        }
        self.optimizer.step(self.model.params_mut(), grad.params());
        self.step += 1;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<Option<f64>> {
        self.validation.as_ref().map(|v| v.accuracy(&self.model, self.config.execution)).transpose()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let train_config = serde_json::to_value(&self.config)?;
        save_checkpoint(path, &self.model, self.step, self.config.seed, Some(&self.optimizer), train_config)
    }

    fn checkpoint_path(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join("checkpoints").join(name))
    }

    /// Train until `config.steps` steps are done.
    pub fn run(&mut self) -> Result<TrainSummary> {
        let mut last_loss = f64::NAN;
        let mut last_val = None;
        while self.step < self.config.steps {
            let started = Instant::now();
            let loss = self.train_step()?;
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
            let step = self.step;
            let val_acc = if step.is_multiple_of(self.config.validate_every) || step == self.config.steps {
                self.validate()?
            } else {
                None
            };
            if val_acc.is_some() {
                last_val = val_acc;
            }
            let row = MetricsRow { step, loss, lr: self.config.lr, wall_ms, val_acc };
            if let Some(w) = self.metrics.as_mut() {
                w.serialize(&row)?;
                if step.is_multiple_of(self.config.log_every) {
                    w.flush()?;
                }
            }
            if step.is_multiple_of(self.config.log_every) {
                info!("step {step}: loss {loss:.4} ({wall_ms:.0} ms){}", val_acc.map_or(String::new(), |a| format!(", val acc {a:.4}")));
            }
            self.history.push(row);
            last_loss = loss;
            if step.is_multiple_of(self.config.checkpoint_every) {
                if let Some(path) = self.checkpoint_path(&format!("step-{step:07}.ckpt")) {
                    self.save(&path)?;
                }
            }
        }
        if let Some(w) = self.metrics.as_mut() {
            w.flush()?;
        }
        if let Some(path) = self.checkpoint_path("final.ckpt") {
            self.save(&path)?;
        }
        Ok(TrainSummary { steps: self.step, final_loss: last_loss, final_val_acc: last_val, history: self.history.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;
    use crate::cipher::encode;
    use crate::model::HeadKind;

    fn data() -> Vec<Vec<SymbolId>> {
        ["THE CAT SAT ON THE MAT.", "A BIRD IN THE HAND IS WORTH TWO IN THE BUSH.", "TO BE, OR NOT TO BE!"]
            .iter()
            .map(|s| encode(s).unwrap())
            .collect()
    }

    fn config(head: HeadKind) -> TrainConfig {
        let mut model = ModelConfig::new(16, 1, 2, 32);
        model.max_len = 64;
        TrainConfig { steps: 4, batch_size: 5, lr: 1e-3, head, model: Some(model), validation_size: 3, validate_every: 2, ..Default::default() }
    }

    #[test]
    fn batches_are_reproducible() {
        let t = Trainer::new(config(HeadKind::Standard), data(), &[]).unwrap();
        assert_eq!(t.batch(3).unwrap(), t.batch(3).unwrap());
        assert_ne!(t.batch(3).unwrap().0, t.batch(4).unwrap().0);
    }

    #[test]
    fn resume_continues_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for head in [HeadKind::Standard, HeadKind::Bijective] {
            let mut full = Trainer::new(config(head), data(), &data()).unwrap();
            let reference = full.run().unwrap();

            let mut first = Trainer::new(TrainConfig { steps: 2, ..config(head) }, data(), &data()).unwrap();
            first.run().unwrap();
            let ckpt = dir.path().join("mid.ckpt");
            first.save(&ckpt).unwrap();
            let mut second = Trainer::resume(config(head), &ckpt, data(), &data()).unwrap();
            let rest = second.run().unwrap();
            let losses = |h: &[MetricsRow]| h.iter().map(|r| (r.step, r.loss.to_bits(), r.val_acc)).collect::<Vec<_>>();
            assert_eq!(losses(&reference.history[2..]), losses(&rest.history));
            assert_eq!(full.model, second.model);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut t = Trainer::new(TrainConfig { lr: 0.0, ..config(HeadKind::Bijective) }, data(), &[]).unwrap();
        let before = t.model.clone();
        t.run().unwrap();
        assert_eq!(t.model, before);
    }

    #[test]
    fn writes_metrics_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { checkpoint_every: 2, log_every: 1, ..config(HeadKind::Standard) };
        let mut t = Trainer::new(cfg, data(), &data()).unwrap().with_output(dir.path()).unwrap();
        t.run().unwrap();
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "step,loss,lr,wall_ms,val_acc");
        assert_eq!(csv.lines().count(), 5);
        for name in ["step-0000002.ckpt", "step-0000004.ckpt", "final.ckpt"] {
            assert!(dir.path().join("checkpoints").join(name).exists(), "{name}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut t = Trainer::new(config(HeadKind::Standard), data(), &[]).unwrap();
        t.model.backbone.final_norm.fill(f32::NAN);
        assert!(matches!(t.train_step(), Err(Error::Diverged(1))));
    }

    #[test]
    fn validation_ciphers_avoid_the_pool() {
        let cfg = TrainConfig { cipher_pool_size: Some(10), ..config(HeadKind::Standard) };
        let t = Trainer::new(cfg, data(), &data()).unwrap();
        let pool = t.pool().unwrap();
        assert!(t.validation().unwrap().ciphers.iter().all(|c| !pool.contains(c)));
    }

    #[test]
    fn pool_of_k_is_exactly_what_training_sees() {
        let cfg = TrainConfig { cipher_pool_size: Some(7), batch_size: 16, ..config(HeadKind::Standard) };
        let t = Trainer::new(cfg, data(), &[]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for step in 0..20 {
            seen.extend(t.batch(step).unwrap().0.ciphers);
        }
        assert_eq!(seen.len(), 7);
        assert!(seen.iter().all(|c| t.pool().unwrap().contains(c)));
    }
}
