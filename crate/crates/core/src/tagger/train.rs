use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::objective::{accumulate_gradient, Instance};
use super::{features, start_mask, Capacity, ModelWeights, TrainConfig};
use crate::corpus::{validate_tags, Corpus, ValidationMode};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("loss became non-finite in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("warm start model has capacity {found}, expected {expected}")]
    CapacityMismatch { expected: Capacity, found: Capacity },
    #[error("warm start model tag set differs from the corpus tag set")]
    TagSetMismatch,
}

/// Epoch-average negative log-likelihood, one entry per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-8;

pub fn train(corpus: &Corpus, config: &TrainConfig, capacity: Capacity) -> Result<ModelWeights, TrainError> {
    train_with_report(corpus, config, capacity, None).map(|(w, _)| w)
}

/// Continues training from `init` (its capacity is kept).
pub fn train_from(init: &ModelWeights, corpus: &Corpus, config: &TrainConfig) -> Result<ModelWeights, TrainError> {
    train_with_report(corpus, config, init.capacity(), Some(init)).map(|(w, _)| w)
}

/// Mini-batch AdaGrad ascent on the mean conditional log-likelihood minus
/// `l2/2 * ||w||^2`. Batches are visited in a ChaCha8 shuffle seeded from
/// `config.seed`, and gradients are summed sequentially in batch order, so
/// the result is a pure function of the inputs.
pub fn train_with_report(
    corpus: &Corpus,
    config: &TrainConfig,
    capacity: Capacity,
    init: Option<&ModelWeights>,
) -> Result<(ModelWeights, TrainReport), TrainError> {
    check_config(config)?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut model = match init {
        Some(m) => {
            if m.capacity() != capacity {
                return Err(TrainError::CapacityMismatch { expected: capacity, found: m.capacity() });
            }
            if m.tag_set() != &corpus.tag_set {
                return Err(TrainError::TagSetMismatch);
            }
            m.clone()
        }
        None => ModelWeights::new(corpus.tag_set.clone(), capacity),
    };

    let mut truncated = 0usize;
    let instances: Vec<Instance> = corpus
        .utterances
        .iter()
        .map(|u| {
            let n = u.len().min(config.max_sequence_length);
            if n < u.len() {
                truncated += 1;
            }
            let words: Vec<&str> = u.words().take(n).collect();
            let rows = (0..n)
                .map(|t| {
                    features::features_for_words(&words, t, capacity, model.hash_bits())
                        .ids()
                        .iter()
                        .map(|&id| model.row_or_insert(id))
                        .collect()
                })
                .collect();
            let mut gold = u.gold_tags[..n].to_vec();
            validate_tags(&mut gold, &corpus.tag_set, ValidationMode::Repair).expect("repair never fails");
            Instance { rows, gold }
        })
        .collect();
    if truncated > 0 {
        log::warn!("truncated {truncated} utterance(s) longer than {} tokens", config.max_sequence_length);
    }

    let start = start_mask(&corpus.tag_set);
    let params = model.params_mut();
    let mut grad = params.zeros_like();
    let mut accum = params.zeros_like();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.emission.fill(0.0);
            grad.transition.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_nll -= accumulate_gradient(params, &start, &instances[i], &mut grad, scale);
            }
            if !epoch_nll.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            adagrad_step(&mut params.emission, &grad.emission, &mut accum.emission, config);
            adagrad_step(&mut params.transition, &grad.transition, &mut accum.transition, config);
        }
        report.epoch_losses.push(epoch_nll / instances.len() as f64);
        log::debug!("epoch {epoch}: mean nll {:.6}", epoch_nll / instances.len() as f64);
    }
    if !model.all_finite() {
        return Err(TrainError::NonFiniteLoss { epoch: config.epochs.saturating_sub(1) });
    }
    Ok((model, report))
}

fn adagrad_step(weights: &mut [f64], grad: &[f64], accum: &mut [f64], config: &TrainConfig) {
    for ((w, &g), a) in weights.iter_mut().zip(grad).zip(accum.iter_mut()) {
        if *w == f64::NEG_INFINITY {
            continue;
        }
        let g = g - config.l2 * *w;
        if g == 0.0 {
            continue;
        }
        *a += g * g;
        *w += config.learning_rate * g / (a.sqrt() + ADAGRAD_EPS);
    }
}

fn check_config(c: &TrainConfig) -> Result<(), TrainError> {
    if c.epochs == 0 || c.batch_size == 0 || c.max_sequence_length == 0 {
        return Err(TrainError::InvalidConfig("epochs, batch_size and max_sequence_length must be positive".into()));
    }
    if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("learning_rate {} must be positive", c.learning_rate)));
    }
    if !(c.l2 >= 0.0 && c.l2.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("l2 {} must be non-negative", c.l2)));
    }
    Ok(())
}
