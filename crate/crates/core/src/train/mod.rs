//! Training data preparation, the teacher-forced objective, and the
//! optimization loop.

mod checkpoint;
mod corpus;
mod loss;
mod quads;
mod vocab;

pub use checkpoint::Checkpoint;
pub use corpus::{load_corpus, parse_corpus, parse_generated, write_corpus, Conversation};
pub use loss::{quad_gradients, quad_loss, quad_loss_graph, LossStats, PROB_FLOOR};
pub use quads::{build_quad, build_quads, prepare_input, QuadSet, TrainingQuad};
pub use vocab::Vocab;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collector::{link_spans, Tokenizer, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::metrics::EvalReport;
use crate::model::{generate, DecodeMode, Generation, Model, Symbol};
use crate::tensor::{Adam, AdamConfig, Gradients};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub decay: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub gate_weight: f64,
    /// Keep entity and relation embeddings at their initial values.
    pub freeze_kg: bool,
    /// Evaluate generation on the held-out slice every this many epochs; 0 never.
    pub eval_every: usize,
    pub eval_max_len: usize,
    /// Stop once an epoch's per-token NLL falls below this.
    pub stop_below: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.001,
            decay: 0.95,
            clip_norm: Some(0.5),
            seed: 1,
            gate_weight: 1.0,
            freeze_kg: false,
            eval_every: 1,
            eval_max_len: 30,
            stop_below: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("learning rate must be positive and decay in (0, 1]");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) || !(self.gate_weight >= 0.0) {
            return fail("clip norm must be positive and gate weight non-negative");
        }
        if self.eval_max_len == 0 {
            return fail("evaluation length must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub nll: f64,
    pub gate_acc: f64,
    pub ent_prec: f64,
    pub ent_rec: f64,
    pub learning_rate: f64,
    pub floored: usize,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,nll,gate_acc,ent_prec,ent_rec";

    pub fn csv_row(&self) -> String {
        format!("{},{:.9},{:.6},{:.6},{:.6}", self.epoch, self.nll, self.gate_acc, self.ent_prec, self.ent_rec)
    }
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>4}  nll {:.5}  gate {:.4}  prec {:.3}  rec {:.3}  lr {:.2e}",
            self.epoch, self.nll, self.gate_acc, self.ent_prec, self.ent_rec, self.learning_rate
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    /// Epoch at which the loss went non-finite. Parameters were rolled back to
    /// the end of the previous epoch.
    pub diverged_at: Option<usize>,
}

/// Runs the optimization loop, calling `on_epoch` after every epoch.
pub fn train(
    model: &mut Model,
    quads: &[TrainingQuad],
    held_out: &[TrainingQuad],
    vocab: &Vocab,
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if quads.is_empty() {
        return Err(Error::Precondition("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.store, AdamConfig { clip_norm: cfg.clip_norm, ..AdamConfig::default() });
    if cfg.freeze_kg {
        for id in model.kg_params() {
            adam.freeze(id);
        }
    }
    let mut order: Vec<usize> = (0..quads.len()).collect();
    let mut metrics = Vec::new();
    let mut last_eval = (0.0, 0.0);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate * cfg.decay.powi(epoch as i32 - 1);
        let snapshot = model.store.clone();
        order.shuffle(&mut rng);
        let mut stats = LossStats::default();
        let mut failed = false;
        for batch in order.chunks(cfg.batch_size) {
            match batch_step(model, quads, batch, cfg, &mut adam, lr) {
                Ok(s) => stats.add(&s),
                Err(Error::Numeric(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed || !stats.nll.is_finite() {
            model.store = snapshot;
            return Ok(TrainOutcome { metrics, diverged_at: Some(epoch) });
        }

        let evaluate_now = cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if evaluate_now && !held_out.is_empty() {
            let ev = evaluate(model, held_out, vocab, kb, cfg.eval_max_len, DecodeMode::Greedy)?;
            last_eval = (ev.report.entity_precision, ev.report.entity_recall);
        }
        let m = EpochMetrics {
            epoch,
            nll: stats.per_token_nll(),
            gate_acc: stats.gate_accuracy(),
            ent_prec: last_eval.0,
            ent_rec: last_eval.1,
            learning_rate: lr,
            floored: stats.floored,
        };
        on_epoch(&m);
        let done = cfg.stop_below.is_some_and(|t| m.nll < t);
        metrics.push(m);
        if done {
            break;
        }
    }
    Ok(TrainOutcome { metrics, diverged_at: None })
}

/// One Adam update on the batch mean of per-example losses.
fn batch_step(
    model: &mut Model,
    quads: &[TrainingQuad],
    batch: &[usize],
    cfg: &TrainConfig,
    adam: &mut Adam,
    lr: f64,
) -> Result<LossStats> {
    let mut stats = LossStats::default();
    let mut total = Gradients::empty(model.store.len());
    for &i in batch {
        let (_, s, grads) = quad_gradients(model, &quads[i], cfg.gate_weight)?;
        stats.add(&s);
        total.accumulate(&grads);
    }
    total.scale(1.0 / batch.len() as f64);
    adam.step(&mut model.store, &total, lr)?;
    Ok(stats)
}

/// Teacher-forced statistics over a set of examples.
pub fn teacher_forced(model: &Model, quads: &[TrainingQuad], gate_weight: f64) -> Result<LossStats> {
    let mut stats = LossStats::default();
    for q in quads {
        stats.add(&quad_loss(model, q, gate_weight)?.1);
    }
    Ok(stats)
}

/// Tokens of a generated response, entities spelled with their KB names.
pub fn render(symbols: &[Symbol], vocab: &Vocab, kb: &KnowledgeBase) -> Vec<String> {
    let mut out = Vec::new();
    for s in symbols {
        match *s {
            Symbol::Word(w) => out.push(vocab.word(w).to_string()),
            Symbol::Entity(e) => out.extend(WhitespaceTokenizer.tokenize(kb.name(e))),
        }
    }
    out
}

/// Entities in a generated response: copied ones plus any spelled out in words.
pub fn generated_entities(gen: &Generation, vocab: &Vocab, kb: &KnowledgeBase) -> BTreeSet<EntityId> {
    let mut found: BTreeSet<EntityId> = gen.entities().into_iter().collect();
    let mut run: Vec<String> = Vec::new();
    let flush = |run: &mut Vec<String>, found: &mut BTreeSet<EntityId>| {
        found.extend(link_spans(run, kb, false).into_iter().map(|m| m.entity));
        run.clear();
    };
    for s in &gen.symbols {
        match *s {
            Symbol::Word(w) => run.push(vocab.word(w).to_string()),
            Symbol::Entity(_) => flush(&mut run, &mut found),
        }
    }
    flush(&mut run, &mut found);
    found
}

/// Generated outputs with their scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub generations: Vec<Generation>,
    pub rendered: Vec<Vec<String>>,
    pub entities: Vec<BTreeSet<EntityId>>,
}

pub fn evaluate(
    model: &Model,
    quads: &[TrainingQuad],
    vocab: &Vocab,
    kb: &KnowledgeBase,
    max_len: usize,
    mode: DecodeMode,
) -> Result<Evaluation> {
    let mut generations = Vec::with_capacity(quads.len());
    let mut rendered = Vec::with_capacity(quads.len());
    let mut entities = Vec::with_capacity(quads.len());
    for q in quads {
        let gen = generate(model, &q.x, &q.knowledge, max_len, mode)?;
        rendered.push(render(&gen.symbols, vocab, kb));
        entities.push(generated_entities(&gen, vocab, kb));
        generations.push(gen);
    }
    let references: Vec<Vec<String>> = quads.iter().map(|q| q.response.clone()).collect();
    let gold: Vec<BTreeSet<EntityId>> = quads.iter().map(|q| q.gold_entities.clone()).collect();
    let report = EvalReport::compute(&rendered, &references, &entities, &gold, false);
    Ok(Evaluation { report, generations, rendered, entities })
}
