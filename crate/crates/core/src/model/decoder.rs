use std::cmp::Ordering;

use super::encoder::gru_step_graph;
use super::{encode_graph, EncodedContext, Model, Symbol, BOS, EOS};
use crate::collector::ContextKnowledge;
use crate::error::{Error, Result};
use crate::kb::EntityId;
use crate::tensor::{Graph, Tensor, Var};

/// Below this total the coverage mask is ignored rather than renormalized.
const MASK_FLOOR: f64 = 1e-12;

/// Graph handles for one decoder step.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepVars {
    pub state: Var,
    pub context: Var,
    pub p_gru: Var,
    /// `σ(W_g s)` as a length-1 vector; `None` when the gate is shut.
    pub gate: Option<Var>,
    /// Pre-sigmoid gate, present only when the gate is learned.
    pub gate_logit: Option<Var>,
    pub beta: Option<Var>,
    pub coverage: Option<Var>,
}

/// Inputs shared by every step of one response.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderInputs {
    pub weighted: Var,
    pub pooled: Var,
    /// Candidate embeddings, one row each. `None` when there are no candidates.
    pub candidates: Option<Var>,
    pub topic: Var,
}

pub(crate) fn decoder_inputs(
    g: &mut Graph,
    model: &Model,
    weighted: Var,
    pooled: Var,
    candidates: &[EntityId],
    topic: EntityId,
) -> Result<DecoderInputs> {
    check_entities(model, candidates.iter().chain([&topic]))?;
    let ent = model.ids.ent_emb;
    let candidates = if candidates.is_empty() {
        None
    } else {
        let rows: Vec<Var> = candidates.iter().map(|e| g.param_row(ent, e.index())).collect::<Result<_>>()?;
        Some(g.stack(&rows)?)
    };
    let topic = g.param_row(ent, topic.index())?;
    Ok(DecoderInputs { weighted, pooled, candidates, topic })
}

fn check_entities<'a>(model: &Model, ids: impl IntoIterator<Item = &'a EntityId>) -> Result<()> {
    for e in ids {
        if e.index() >= model.config.num_entities {
            return Err(Error::Lookup(format!("entity {e} outside table of {}", model.config.num_entities)));
        }
    }
    Ok(())
}

/// Input embedding for the previously emitted symbol.
pub(crate) fn symbol_embedding(g: &mut Graph, model: &Model, sym: Symbol) -> Result<Var> {
    match sym {
        Symbol::Word(w) => {
            if w >= model.config.vocab_size {
                return Err(Error::Lookup(format!("token id {w} outside vocabulary")));
            }
            g.param_row(model.ids.word_emb, w)
        }
        Symbol::Entity(e) => {
            check_entities(model, [&e])?;
            let row = g.param_row(model.ids.ent_emb, e.index())?;
            g.param_matvec(model.ids.w_p, row)
        }
    }
}

pub(crate) fn decode_step_graph(
    g: &mut Graph,
    model: &Model,
    inp: &DecoderInputs,
    s_prev: Var,
    y_prev: Var,
    a_prev: Option<Var>,
    force_gate: Option<f64>,
) -> Result<StepVars> {
    let cfg = &model.config;
    let ids = &model.ids;

    let context = if cfg.static_context {
        inp.pooled
    } else {
        let key = g.param_matvec(ids.w_a, s_prev)?;
        let scores = g.matvec(inp.weighted, key)?;
        let weights = g.softmax(scores)?;
        g.mat_t_vec(inp.weighted, weights)?
    };
    let x = g.concat(&[context, inp.topic, y_prev]);
    let state = gru_step_graph(g, &ids.dec, x, s_prev)?;
    let logits = g.param_matvec(ids.w_o, state)?;
    let p_gru = g.softmax(logits)?;

    let Some(cands) = inp.candidates.filter(|_| cfg.entity_decoder) else {
        return Ok(StepVars { state, context, p_gru, gate: None, gate_logit: None, beta: None, coverage: a_prev });
    };
    let (gate, gate_logit) = match force_gate {
        Some(v) => (g.constant_vector(vec![v]), None),
        None => {
            let z = g.param_matvec(ids.w_g, state)?;
            (g.sigmoid(z), Some(z))
        }
    };
    let proj = g.param_matvec(ids.w_e, context)?;
    let scores = g.matvec(cands, proj)?;
    let attn = g.softmax(scores)?;
    let n = g.value(cands).rows();
    let a_prev = match a_prev {
        Some(a) => a,
        None => g.input(Tensor::zeros(n, 1)),
    };
    let beta = if cfg.coverage {
        let free = g.one_minus(a_prev);
        let masked = g.mul(free, attn)?;
        if g.value(masked).data().iter().sum::<f64>() > MASK_FLOOR {
            g.normalize(masked)?
        } else {
            attn
        }
    } else {
        attn
    };
    let g_scalar = g.sum(gate);
    let used = g.scale_by(beta, g_scalar)?;
    let raised = g.add(a_prev, used)?;
    let coverage = g.clamp(raised, 0.0, 1.0);
    Ok(StepVars { state, context, p_gru, gate: Some(gate), gate_logit, beta: Some(beta), coverage: Some(coverage) })
}

/// Decoder state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeState {
    pub state: Vec<f64>,
    /// Step context `ĉ` used to produce this state.
    pub context: Vec<f64>,
    pub gate: f64,
    /// Attention over candidates. Empty when no entity can be copied.
    pub beta: Vec<f64>,
    /// How much each candidate has been used so far, each entry in `[0, 1]`.
    pub coverage: Vec<f64>,
}

impl DecodeState {
    /// Starts from the pooled encoder context with no candidate used yet.
    pub fn initial(enc: &EncodedContext, num_candidates: usize) -> DecodeState {
        DecodeState {
            state: enc.pooled.clone(),
            context: vec![0.0; enc.pooled.len()],
            gate: 0.0,
            beta: Vec::new(),
            coverage: vec![0.0; num_candidates],
        }
    }
}

/// Probabilities over the vocabulary followed by the candidate entities.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDistribution {
    pub vocab: Vec<f64>,
    pub entities: Vec<f64>,
}

impl MixtureDistribution {
    pub fn total(&self) -> f64 {
        self.vocab.iter().chain(&self.entities).sum()
    }

    pub fn len(&self) -> usize {
        self.vocab.len() + self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability at a position of the joint space.
    pub fn get(&self, i: usize) -> f64 {
        if i < self.vocab.len() {
            self.vocab[i]
        } else {
            self.entities[i - self.vocab.len()]
        }
    }

    /// Most probable joint position, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.len() {
            if self.get(i) > self.get(best) {
                best = i;
            }
        }
        best
    }

    /// Joint positions ordered by probability, ties by index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.get(b).partial_cmp(&self.get(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        idx
    }

    pub fn symbol(&self, i: usize, candidates: &[EntityId]) -> Symbol {
        if i < self.vocab.len() {
            Symbol::Word(i)
        } else {
            Symbol::Entity(candidates[i - self.vocab.len()])
        }
    }
}

/// One decoder step on concrete values.
pub fn decode_step(
    model: &Model,
    enc: &EncodedContext,
    candidates: &[EntityId],
    topic: EntityId,
    prev: &DecodeState,
    y_prev: Symbol,
) -> Result<(MixtureDistribution, DecodeState)> {
    step_values(model, enc, candidates, topic, prev, y_prev, None)
}

/// As [`decode_step`] with the gate pinned to `gate`.
pub fn decode_step_with_gate(
    model: &Model,
    enc: &EncodedContext,
    candidates: &[EntityId],
    topic: EntityId,
    prev: &DecodeState,
    y_prev: Symbol,
    gate: f64,
) -> Result<(MixtureDistribution, DecodeState)> {
    step_values(model, enc, candidates, topic, prev, y_prev, Some(gate))
}

fn step_values(
    model: &Model,
    enc: &EncodedContext,
    candidates: &[EntityId],
    topic: EntityId,
    prev: &DecodeState,
    y_prev: Symbol,
    force_gate: Option<f64>,
) -> Result<(MixtureDistribution, DecodeState)> {
    if prev.coverage.len() != candidates.len() {
        return Err(Error::Precondition(format!(
            "coverage has {} entries for {} candidates",
            prev.coverage.len(),
            candidates.len()
        )));
    }
    let mut g = Graph::new(&model.store);
    let weighted = g.input(enc.weighted.clone());
    let pooled = g.constant_vector(enc.pooled.clone());
    let inp = decoder_inputs(&mut g, model, weighted, pooled, candidates, topic)?;
    let s_prev = g.constant_vector(prev.state.clone());
    let y = symbol_embedding(&mut g, model, y_prev)?;
    let a_prev = (!candidates.is_empty()).then(|| g.constant_vector(prev.coverage.clone()));
    let v = decode_step_graph(&mut g, model, &inp, s_prev, y, a_prev, force_gate)?;
    let values = |v: Option<Var>| v.map(|v| g.value(v).data().to_vec()).unwrap_or_default();
    let gate = v.gate.map_or(0.0, |x| g.value(x).item());
    let p_gru = g.value(v.p_gru).data();
    let beta = values(v.beta);
    let mix = MixtureDistribution {
        vocab: p_gru.iter().map(|p| (1.0 - gate) * p).collect(),
        entities: if beta.is_empty() { vec![0.0; candidates.len()] } else { beta.iter().map(|b| gate * b).collect() },
    };
    if mix.vocab.iter().chain(&mix.entities).any(|p| !p.is_finite()) {
        return Err(Error::Numeric("decoder produced a non-finite distribution".into()));
    }
    let coverage = if candidates.is_empty() { Vec::new() } else { values(v.coverage) };
    let next = DecodeState {
        state: g.value(v.state).data().to_vec(),
        context: g.value(v.context).data().to_vec(),
        gate,
        beta,
        coverage,
    };
    Ok((mix, next))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// What the decoder saw and chose at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub t: usize,
    pub gate: f64,
    /// Five most probable vocabulary words with their mixture probability.
    pub top_vocab: Vec<(usize, f64)>,
    pub beta: Vec<f64>,
    pub coverage: Vec<f64>,
    pub choice: Symbol,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Emitted symbols, end-of-sequence excluded.
    pub symbols: Vec<Symbol>,
    pub trace: Vec<StepTrace>,
    /// Sum of log-probabilities of the chosen symbols, end marker included when emitted.
    pub log_prob: f64,
}

impl Generation {
    pub fn entities(&self) -> Vec<EntityId> {
        self.symbols
            .iter()
            .filter_map(|s| match s {
                Symbol::Entity(e) => Some(*e),
                Symbol::Word(_) => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Hypothesis {
    symbols: Vec<Symbol>,
    trace: Vec<StepTrace>,
    state: DecodeState,
    prev: Symbol,
    log_prob: f64,
}

impl Hypothesis {
    /// Per-token average log-probability, counting the end marker.
    fn score(&self, ended: bool) -> f64 {
        let n = self.symbols.len() + usize::from(ended);
        if n == 0 {
            0.0
        } else {
            self.log_prob / n as f64
        }
    }
}

fn trace_step(t: usize, mix: &MixtureDistribution, state: &DecodeState, choice: Symbol) -> StepTrace {
    let mut top: Vec<(usize, f64)> = mix.vocab.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    top.truncate(5);
    StepTrace {
        t,
        gate: state.gate,
        top_vocab: top,
        beta: state.beta.clone(),
        coverage: state.coverage.clone(),
        choice,
    }
}

/// Generates a response for encoded input `x` with the collected knowledge.
pub fn generate(
    model: &Model,
    x: &[usize],
    knowledge: &ContextKnowledge,
    max_len: usize,
    mode: DecodeMode,
) -> Result<Generation> {
    if max_len == 0 {
        return Err(Error::Precondition("max_len must be at least 1".into()));
    }
    let width = match mode {
        DecodeMode::Greedy => 1,
        DecodeMode::Beam(0) => return Err(Error::Precondition("beam width must be at least 1".into())),
        DecodeMode::Beam(k) => k,
    };
    let enc = {
        let mut g = Graph::new(&model.store);
        let v = encode_graph(&mut g, model, x, &knowledge.relations)?;
        EncodedContext {
            states: g.value(v.states).clone(),
            alpha: g.value(v.alpha).data().to_vec(),
            rbar: g.value(v.rbar).data().to_vec(),
            weighted: g.value(v.weighted).clone(),
            pooled: g.value(v.pooled).data().to_vec(),
        }
    };
    let cands = &knowledge.candidates;
    let topic = knowledge.topic;

    let mut live = vec![Hypothesis {
        symbols: Vec::new(),
        trace: Vec::new(),
        state: DecodeState::initial(&enc, cands.len()),
        prev: Symbol::Word(BOS),
        log_prob: 0.0,
    }];
    let mut finished: Vec<(f64, Hypothesis)> = Vec::new();

    for t in 0..max_len {
        // (log-prob, hypothesis index, joint position, mixture, next state)
        let mut pool: Vec<(f64, usize, usize, Symbol, DecodeState, StepTrace)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let (mix, next) = decode_step(model, &enc, cands, topic, &hyp.state, hyp.prev)?;
            for i in mix.ranked().into_iter().take(width) {
                let p = mix.get(i);
                if p <= 0.0 && !pool.is_empty() {
                    continue;
                }
                let sym = mix.symbol(i, cands);
                let tr = trace_step(t, &mix, &next, sym);
                pool.push((hyp.log_prob + p.ln(), h, i, sym, next.clone(), tr));
            }
        }
        pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        pool.truncate(width);

        let mut next_live = Vec::new();
        for (lp, h, _, sym, state, tr) in pool {
            let mut hyp = live[h].clone();
            hyp.log_prob = lp;
            hyp.trace.push(tr);
            if sym == Symbol::Word(EOS) {
                finished.push((hyp.score(true), hyp));
                continue;
            }
            hyp.symbols.push(sym);
            hyp.state = state;
            hyp.prev = sym;
            next_live.push(hyp);
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }
    for hyp in live {
        finished.push((hyp.score(false), hyp));
    }
    let best = finished
        .into_iter()
        .reduce(|best, cand| if cand.0 > best.0 { cand } else { best })
        .map(|(_, h)| h)
        .ok_or_else(|| Error::Internal("decoding produced no hypothesis".into()))?;
    Ok(Generation { symbols: best.symbols, trace: best.trace, log_prob: best.log_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::RelationId;
    use crate::model::encode;
    use crate::model::testing::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn knowledge(cands: &[usize], topic: usize) -> ContextKnowledge {
        ContextKnowledge {
            topic: EntityId(topic),
            relations: vec![RelationId::ACT_BY],
            mentioned: Vec::new(),
            seeds: vec![EntityId(topic)],
            expanded: Vec::new(),
            candidates: cands.iter().map(|&c| EntityId(c)).collect(),
            relation_vectors: Vec::new(),
            candidate_vectors: Vec::new(),
        }
    }

    fn first_step(m: &Model, cands: &[EntityId], gate: Option<f64>) -> (MixtureDistribution, DecodeState) {
        let enc = encode(m, &[5, 6, 7], &[RelationId::ACT_BY]).unwrap();
        let init = DecodeState::initial(&enc, cands.len());
        match gate {
            Some(v) => decode_step_with_gate(m, &enc, cands, EntityId(0), &init, Symbol::Word(BOS), v).unwrap(),
            None => decode_step(m, &enc, cands, EntityId(0), &init, Symbol::Word(BOS)).unwrap(),
        }
    }

    #[test]
    fn mixture_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..50 {
            let mut m = tiny_model(seed);
            m.randomize(rng.gen_range(0.1..2.0), &mut rng);
            let n = rng.gen_range(0..5);
            let cands: Vec<EntityId> = (0..n).map(EntityId).collect();
            let (mix, st) = first_step(&m, &cands, None);
            assert!((mix.total() - 1.0).abs() <= 1e-9);
            assert!((0.0..=1.0).contains(&st.gate));
            if n == 0 {
                assert_eq!(st.gate, 0.0);
            }
        }
    }

    #[test]
    fn gate_endpoints_select_one_path() {
        let m = tiny_model(3);
        let cands = [EntityId(1), EntityId(2)];
        let (open, st) = first_step(&m, &cands, Some(1.0));
        assert!(open.vocab.iter().all(|&p| p == 0.0));
        assert_eq!(open.entities, st.beta);
        let (shut, _) = first_step(&m, &cands, Some(0.0));
        assert!(shut.entities.iter().all(|&p| p == 0.0));
        let (plain, _) = {
            let mut vanilla = m.clone();
            vanilla.config.entity_decoder = false;
            first_step(&vanilla, &cands, None)
        };
        assert_eq!(shut.vocab, plain.vocab);
    }

    #[test]
    fn single_candidate_takes_all_attention() {
        let m = tiny_model(5);
        let (_, st) = first_step(&m, &[EntityId(3)], None);
        assert_eq!(st.beta, vec![1.0]);
    }

    #[test]
    fn coverage_lowers_attention_on_used_entity() {
        let m = tiny_model(7);
        let cands = [EntityId(1), EntityId(2)];
        let enc = encode(&m, &[5, 6, 7], &[RelationId::ACT_BY]).unwrap();
        let init = DecodeState::initial(&enc, 2);
        let (_, s1) = decode_step_with_gate(&m, &enc, &cands, EntityId(0), &init, Symbol::Word(BOS), 1.0).unwrap();
        let used = if s1.beta[0] >= s1.beta[1] { 0 } else { 1 };
        let emitted = Symbol::Entity(cands[used]);

        let (_, with) = decode_step(&m, &enc, &cands, EntityId(0), &s1, emitted).unwrap();
        let mut off = m.clone();
        off.config.coverage = false;
        let (_, without) = decode_step(&off, &enc, &cands, EntityId(0), &s1, emitted).unwrap();
        assert!(with.beta[used] < without.beta[used]);
        for (a, b) in s1.coverage.iter().zip(&with.coverage) {
            assert!(b >= a);
        }
    }

    #[test]
    fn beam_of_one_equals_greedy() {
        for seed in 0..10 {
            let m = tiny_model(seed);
            let k = knowledge(&[1, 2, 3], 0);
            let greedy = generate(&m, &[5, 6, 7, 8], &k, 6, DecodeMode::Greedy).unwrap();
            let beam = generate(&m, &[5, 6, 7, 8], &k, 6, DecodeMode::Beam(1)).unwrap();
            assert_eq!(greedy, beam);
            assert!(generate(&m, &[5, 6], &k, 6, DecodeMode::Beam(3)).is_ok());
        }
    }

    #[test]
    fn max_len_one_emits_at_most_one_symbol() {
        let m = tiny_model(2);
        let k = knowledge(&[1, 2], 0);
        let long = generate(&m, &[5, 6], &k, 4, DecodeMode::Greedy).unwrap();
        let short = generate(&m, &[5, 6], &k, 1, DecodeMode::Greedy).unwrap();
        assert_eq!(short.trace.len(), 1);
        assert_eq!(short.symbols, long.symbols.iter().take(1).copied().collect::<Vec<_>>());
        assert!(generate(&m, &[5, 6], &k, 0, DecodeMode::Greedy).is_err());
    }

    #[test]
    fn coverage_never_decreases_along_a_trace() {
        for seed in 0..10 {
            let m = tiny_model(seed);
            let g = generate(&m, &[5, 6, 7], &knowledge(&[1, 2, 3, 4], 0), 8, DecodeMode::Greedy).unwrap();
            for w in g.trace.windows(2) {
                for (a, b) in w[0].coverage.iter().zip(&w[1].coverage) {
                    assert!(b >= a);
                }
            }
            assert!(g.trace.iter().flat_map(|t| &t.coverage).all(|a| (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let mix = MixtureDistribution { vocab: vec![0.25, 0.25], entities: vec![0.25, 0.25] };
        assert_eq!(mix.argmax(), 0);
        assert_eq!(mix.ranked(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn unknown_candidate_rejected() {
        let m = tiny_model(1);
        let k = knowledge(&[1, 77], 0);
        assert!(matches!(generate(&m, &[5], &k, 3, DecodeMode::Greedy), Err(Error::Lookup(_))));
    }
}
