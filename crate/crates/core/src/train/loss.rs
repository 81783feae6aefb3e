use super::TrainingQuad;
use crate::error::{Error, Result};
use crate::model::{decode_step_graph, decoder_inputs, encode_graph, symbol_embedding, Model, Symbol, BOS};
use crate::tensor::{Gradients, Graph, Var};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-example bookkeeping from one teacher-forced pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    /// Summed negative log-likelihood.
    pub nll: f64,
    pub tokens: usize,
    pub gate_correct: usize,
    pub gate_total: usize,
    /// Steps whose gold probability fell under [`PROB_FLOOR`].
    pub floored: usize,
}

impl LossStats {
    pub fn add(&mut self, o: &LossStats) {
        self.nll += o.nll;
        self.tokens += o.tokens;
        self.gate_correct += o.gate_correct;
        self.gate_total += o.gate_total;
        self.floored += o.floored;
    }

    pub fn per_token_nll(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.nll / self.tokens as f64
        }
    }

    pub fn gate_accuracy(&self) -> f64 {
        if self.gate_total == 0 {
            1.0
        } else {
            self.gate_correct as f64 / self.gate_total as f64
        }
    }
}

/// Teacher-forced NLL under the mixture plus `gate_weight` times the gate BCE,
/// recorded on `g`.
pub fn quad_loss_graph(g: &mut Graph, model: &Model, quad: &TrainingQuad, gate_weight: f64) -> Result<(Var, LossStats)> {
    let k = &quad.knowledge;
    let enc = encode_graph(g, model, &quad.x, &k.relations)?;
    let inp = decoder_inputs(g, model, enc.weighted, enc.pooled, &k.candidates, k.topic)?;
    let ead = model.config.entity_decoder;
    let targets: Vec<Symbol> = if ead { quad.target.clone() } else { quad.words.iter().map(|&w| Symbol::Word(w)).collect() };

    let mut stats = LossStats::default();
    let mut terms = Vec::with_capacity(2 * targets.len());
    let mut state = enc.pooled;
    let mut coverage = None;
    let mut prev = Symbol::Word(BOS);
    for (t, &y) in targets.iter().enumerate() {
        let emb = symbol_embedding(g, model, prev)?;
        let v = decode_step_graph(g, model, &inp, state, emb, coverage, None)?;
        let p = match y {
            Symbol::Word(w) => {
                let pw = g.pick(v.p_gru, w)?;
                match v.gate {
                    Some(gate) => {
                        let open = g.sum(gate);
                        let shut = g.one_minus(open);
                        g.mul(pw, shut)?
                    }
                    None => pw,
                }
            }
            Symbol::Entity(e) => {
                let (Some(beta), Some(gate), Some(j)) = (v.beta, v.gate, k.candidate_index(e)) else {
                    return Err(Error::Precondition(format!("target entity {e} cannot be copied")));
                };
                let b = g.pick(beta, j)?;
                let open = g.sum(gate);
                g.mul(b, open)?
            }
        };
        let pv = g.value(p).item();
        if pv < PROB_FLOOR {
            stats.floored += 1;
        }
        stats.nll -= pv.max(PROB_FLOOR).ln();
        stats.tokens += 1;
        terms.push(g.ln_floor(p, PROB_FLOOR));

        if ead {
            let label = quad.gate.get(t).copied().unwrap_or(false);
            let predicted = v.gate.is_some_and(|gt| g.value(gt).item() > 0.5);
            stats.gate_total += 1;
            stats.gate_correct += usize::from(predicted == label);
            if let Some(z) = v.gate_logit {
                let signed = if label { z } else { g.scale(z, -1.0) };
                let ls = g.log_sigmoid(signed);
                let ls = g.sum(ls);
                terms.push(g.scale(ls, gate_weight));
            }
        }
        state = v.state;
        coverage = v.coverage;
        prev = y;
    }
    let total = g.add_n(&terms)?;
    Ok((g.scale(total, -1.0), stats))
}

/// Loss value and statistics for one example.
pub fn quad_loss(model: &Model, quad: &TrainingQuad, gate_weight: f64) -> Result<(f64, LossStats)> {
    let mut g = Graph::new(&model.store);
    let (l, stats) = quad_loss_graph(&mut g, model, quad, gate_weight)?;
    Ok((g.scalar(l), stats))
}

/// Loss, statistics and parameter gradients for one example.
pub fn quad_gradients(model: &Model, quad: &TrainingQuad, gate_weight: f64) -> Result<(f64, LossStats, Gradients)> {
    let mut g = Graph::new(&model.store);
    let (l, stats) = quad_loss_graph(&mut g, model, quad, gate_weight)?;
    let value = g.scalar(l);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = g.backward(l)?;
    Ok((value, stats, grads))
}
