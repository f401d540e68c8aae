//! Adam with decoupled L2 decay and unit-norm projection of entity rows,
//! plus the epoch loop with early stopping on validation MRR.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{KgeError, Result};
use crate::graph::{EntityId, RelationId, Split, Triple, TripleStore};
use crate::models::{loss_gradients, GradientSet, MarginLossConfig, ModelParams};
use crate::rng;
use crate::samplers::{NegativeBatch, NegativeSampler};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam state: sparse first/second moments, one row per parameter row that
/// has ever received a gradient, and a global step counter for bias
/// correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    step_count: u64,
    m_entity: HashMap<EntityId, Vec<f64>>,
    v_entity: HashMap<EntityId, Vec<f64>>,
    m_relation: HashMap<RelationId, Vec<f64>>,
    v_relation: HashMap<RelationId, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            step_count: 0,
            m_entity: HashMap::new(),
            v_entity: HashMap::new(),
            m_relation: HashMap::new(),
            v_relation: HashMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One optimizer step: per touched row, Adam update with bias correction,
    /// then decoupled decay (row ← row − lr·λ·row), then unit-norm projection
    /// for entity rows only. A non-finite gradient rejects the whole step
    /// before any state is mutated.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &GradientSet,
        l2_lambda: f64,
    ) -> Result<()> {
        for (e, g) in grads.entities() {
            if !g.iter().all(|x| x.is_finite()) {
                return Err(KgeError::NonFiniteGradient {
                    row: format!("entity {e}"),
                });
            }
        }
        for (r, g) in grads.relations() {
            if !g.iter().all(|x| x.is_finite()) {
                return Err(KgeError::NonFiniteGradient {
                    row: format!("relation {r}"),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        let lr = self.lr;
        for (e, g) in grads.entities() {
            let m = self.m_entity.entry(e).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v_entity.entry(e).or_insert_with(|| vec![0.0; g.len()]);
            adam_row(lr, t, m, v, params.entity_mut(e), g, l2_lambda);
            params.project_entity_row(e);
        }
        for (r, g) in grads.relations() {
            let m = self
                .m_relation
                .entry(r)
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v_relation
                .entry(r)
                .or_insert_with(|| vec![0.0; g.len()]);
            adam_row(lr, t, m, v, params.relation_mut(r), g, l2_lambda);
        }
        Ok(())
    }
}

fn adam_row(lr: f64, t: u64, m: &mut [f64], v: &mut [f64], row: &mut [f64], g: &[f64], l2: f64) {
    let bc1 = 1.0 - BETA1.powi(t as i32);
    let bc2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..row.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        row[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        row[i] -= lr * l2 * row[i];
    }
}

/// Epoch-loop configuration. Margin, learning rate, and λ travel separately
/// (`MarginLossConfig`, `AdamState`).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Negatives per positive per direction.
    pub n_s: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving dev evaluations tolerated before stopping.
    pub patience: usize,
    /// Evaluate dev MRR every this many epochs.
    pub eval_every: usize,
    pub seed: u64,
    /// Epoch budget for `fine_tune` (embedding-based samplers).
    pub fine_tune_epochs: usize,
    /// Cap on dev triples scored during training evals; `None` = full dev.
    pub dev_sample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_s: 1,
            batch_size: 512,
            max_epochs: 100,
            patience: 3,
            eval_every: 1,
            seed: 0,
            fine_tune_epochs: 5,
            dev_sample: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.n_s < 1 {
            violations.push("n_s must be ≥ 1".to_string());
        }
        if self.batch_size < 1 {
            violations.push("batch_size must be ≥ 1".to_string());
        }
        if self.eval_every < 1 {
            violations.push("eval_every must be ≥ 1".to_string());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(KgeError::InvalidArgument(violations.join("; ")))
        }
    }
}

/// One logged epoch. `dev_mrr` is present only on evaluation epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_mrr: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "epoch,mean_loss,dev_mrr,elapsed_seconds")?;
        for r in &self.records {
            let dev = r.dev_mrr.map(|m| m.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.epoch, r.mean_loss, dev, r.elapsed_seconds)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| KgeError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| KgeError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
    /// Epoch whose checkpoint is returned; 0 means the untrained baseline.
    pub best_epoch: usize,
    /// Dev MRR of the returned checkpoint; NaN when dev was never evaluated.
    pub best_dev_mrr: f64,
    pub stopped_early: bool,
}

/// Sum of per-positive hinge gradients over one batch. The parallel version
/// reduces in item order, so it is bitwise identical to the serial one.
#[cfg(feature = "parallel")]
pub fn batch_gradients(
    params: &ModelParams,
    positives: &[Triple],
    negatives: &[NegativeBatch],
    cfg: &MarginLossConfig,
) -> (GradientSet, f64) {
    let per_item: Vec<(GradientSet, f64)> = positives
        .par_iter()
        .zip(negatives.par_iter())
        .map(|(&p, negs)| loss_gradients(params, p, negs, cfg))
        .collect();
    merge_items(per_item)
}

#[cfg(not(feature = "parallel"))]
pub fn batch_gradients(
    params: &ModelParams,
    positives: &[Triple],
    negatives: &[NegativeBatch],
    cfg: &MarginLossConfig,
) -> (GradientSet, f64) {
    batch_gradients_serial(params, positives, negatives, cfg)
}

pub fn batch_gradients_serial(
    params: &ModelParams,
    positives: &[Triple],
    negatives: &[NegativeBatch],
    cfg: &MarginLossConfig,
) -> (GradientSet, f64) {
    let per_item: Vec<(GradientSet, f64)> = positives
        .iter()
        .zip(negatives.iter())
        .map(|(&p, negs)| loss_gradients(params, p, negs, cfg))
        .collect();
    merge_items(per_item)
}

fn merge_items(per_item: Vec<(GradientSet, f64)>) -> (GradientSet, f64) {
    let mut grads = GradientSet::new();
    let mut loss = 0.0;
    for (g, l) in per_item {
        grads.merge(g);
        loss += l;
    }
    (grads, loss)
}

/// Trains `params` on the store's train split, evaluating filtered MRR on dev
/// every `eval_every` epochs, and returns the best-dev checkpoint. Stops when
/// dev MRR fails to improve for `patience` consecutive evaluations. With an
/// empty dev split no evaluation happens and the final parameters are
/// returned.
pub fn train(
    store: &TripleStore,
    params: ModelParams,
    sampler: &dyn NegativeSampler,
    loss_cfg: &MarginLossConfig,
    cfg: &TrainConfig,
    adam: AdamState,
) -> Result<TrainOutcome> {
    run_epochs(store, params, sampler, loss_cfg, cfg, adam, cfg.max_epochs, cfg.patience, true)
}

/// Runs exactly `cfg.fine_tune_epochs` epochs from pretrained parameters with
/// an embedding-based sampler (whose frozen model is never updated) and
/// returns the final parameters.
pub fn fine_tune(
    store: &TripleStore,
    params: ModelParams,
    sampler: &dyn NegativeSampler,
    loss_cfg: &MarginLossConfig,
    cfg: &TrainConfig,
    adam: AdamState,
) -> Result<TrainOutcome> {
    if !sampler.is_embedding_based() {
        return Err(KgeError::InvalidArgument(
            "fine_tune requires an embedding-based sampler (nn or nmiss)".to_string(),
        ));
    }
    run_epochs(
        store,
        params,
        sampler,
        loss_cfg,
        cfg,
        adam,
        cfg.fine_tune_epochs,
        usize::MAX,
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    store: &TripleStore,
    mut params: ModelParams,
    sampler: &dyn NegativeSampler,
    loss_cfg: &MarginLossConfig,
    cfg: &TrainConfig,
    mut adam: AdamState,
    max_epochs: usize,
    patience: usize,
    select_best: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_triples: Vec<Triple> = store.split(Split::Train).to_vec();
    if train_triples.is_empty() {
        return Err(KgeError::EmptyInput {
            what: "training split".to_string(),
        });
    }
    let dev = dev_subset(store, cfg);
    let mut log = TrainLog::default();
    if max_epochs == 0 {
        return Ok(TrainOutcome {
            params,
            log,
            best_epoch: 0,
            best_dev_mrr: f64::NAN,
            stopped_early: false,
        });
    }

    let mut shuffle_rng = rng::stream(cfg.seed, rng::STREAM_SHUFFLE);
    let mut sampler_rng = rng::stream(cfg.seed, rng::STREAM_SAMPLER);

    // Untrained baseline: the checkpoint to beat.
    let mut best_epoch = 0usize;
    let mut best_dev_mrr = f64::NAN;
    let mut best_params = None;
    if select_best && !dev.is_empty() {
        best_dev_mrr = crate::eval::pooled_mrr(&params, store, &dev)?;
        best_params = Some(params.clone());
    }

    let mut order = train_triples;
    let mut evals_without_improvement = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let negatives = sampler.sample_batch(store, batch, cfg.n_s, &mut sampler_rng);
            let (grads, loss) = batch_gradients(&params, batch, &negatives, loss_cfg);
            adam.step(&mut params, &grads, loss_cfg.l2_lambda)?;
            total_loss += loss;
        }
        let mean_loss = total_loss / order.len() as f64;

        let mut dev_mrr = None;
        if !dev.is_empty() && (epoch % cfg.eval_every == 0 || epoch == max_epochs) {
            let mrr = crate::eval::pooled_mrr(&params, store, &dev)?;
            dev_mrr = Some(mrr);
            if select_best {
                if !(mrr <= best_dev_mrr) {
                    // Strict improvement (NaN baseline counts as beaten).
                    best_dev_mrr = mrr;
                    best_epoch = epoch;
                    best_params = Some(params.clone());
                    evals_without_improvement = 0;
                } else {
                    evals_without_improvement += 1;
                }
            }
        }
        log.records.push(EpochRecord {
            epoch,
            mean_loss,
            dev_mrr,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });
        if select_best && evals_without_improvement >= patience {
            stopped_early = true;
            break;
        }
    }

    let last_eval = log.records.iter().rev().find_map(|r| r.dev_mrr);
    let (params, best_epoch, best_dev_mrr) = match best_params {
        Some(best) if select_best => (best, best_epoch, best_dev_mrr),
        _ => (params, log.records.len(), last_eval.unwrap_or(f64::NAN)),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
        best_dev_mrr,
        stopped_early,
    })
}

/// Dev triples used for during-training evaluation: the full dev split, or a
/// seeded subsample of `dev_sample` triples when the split is larger.
fn dev_subset(store: &TripleStore, cfg: &TrainConfig) -> Vec<Triple> {
    let dev = store.split(Split::Dev);
    match cfg.dev_sample {
        Some(k) if k > 0 && dev.len() > k => {
            let mut rng = rng::stream(cfg.seed, rng::STREAM_DEV_SUBSAMPLE);
            rand::seq::index::sample(&mut rng, dev.len(), k)
                .iter()
                .map(|i| dev[i])
                .collect()
        }
        _ => dev.to_vec(),
    }
}
