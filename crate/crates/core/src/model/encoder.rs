use super::{GruParams, Model};
use crate::error::{Error, Result};
use crate::kb::RelationId;
use crate::tensor::{Graph, ParameterStore, Tensor, Var};

/// `h = (1 − z)⊙h_prev + z⊙h̃` with the standard reset-gated candidate.
pub(crate) fn gru_step_graph(g: &mut Graph, p: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let gate = |g: &mut Graph, w, u| -> Result<Var> {
        let wx = g.param_matvec(w, x)?;
        let uh = g.param_matvec(u, h_prev)?;
        let s = g.add(wx, uh)?;
        Ok(g.sigmoid(s))
    };
    let z = gate(g, p.w_z, p.u_z)?;
    let r = gate(g, p.w_r, p.u_r)?;
    let wx = g.param_matvec(p.w_0, x)?;
    let uh = g.param_matvec(p.u_0, h_prev)?;
    let ruh = g.mul(r, uh)?;
    let pre = g.add(wx, ruh)?;
    let cand = g.tanh(pre);
    let delta = g.sub(cand, h_prev)?;
    let step = g.mul(z, delta)?;
    g.add(h_prev, step)
}

/// One GRU update on plain vectors.
pub fn gru_step(store: &ParameterStore, p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new(store);
    let xv = g.constant_vector(x.to_vec());
    let hv = g.constant_vector(h_prev.to_vec());
    let h = gru_step_graph(&mut g, p, xv, hv)?;
    let out = g.value(h);
    if !out.is_finite() {
        return Err(Error::Numeric("GRU state is not finite".into()));
    }
    Ok(out.data().to_vec())
}

/// Graph handles produced by [`encode_graph`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct EncVars {
    pub states: Var,
    pub alpha: Var,
    pub rbar: Var,
    pub weighted: Var,
    pub pooled: Var,
}

pub(crate) fn encode_graph(g: &mut Graph, model: &Model, tokens: &[usize], relations: &[RelationId]) -> Result<EncVars> {
    let cfg = &model.config;
    let ids = &model.ids;
    if tokens.is_empty() {
        return Err(Error::Precondition("cannot encode an empty input".into()));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::Lookup(format!("token id {t} outside vocabulary of {}", cfg.vocab_size)));
    }
    if let Some(r) = relations.iter().find(|r| r.index() >= cfg.num_relations) {
        return Err(Error::Lookup(format!("relation id {} outside table of {}", r.index(), cfg.num_relations)));
    }

    let words: Vec<Var> = tokens.iter().map(|&t| g.param_row(ids.word_emb, t)).collect::<Result<_>>()?;
    let h = cfg.half();
    let mut fwd = Vec::with_capacity(words.len());
    let mut state = g.input(Tensor::zeros(h, 1));
    for &x in &words {
        state = gru_step_graph(g, &ids.enc_fwd, x, state)?;
        fwd.push(state);
    }
    let mut bwd = vec![state; words.len()];
    let mut state = g.input(Tensor::zeros(h, 1));
    for (i, &x) in words.iter().enumerate().rev() {
        state = gru_step_graph(g, &ids.enc_bwd, x, state)?;
        bwd[i] = state;
    }
    let rows: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat(&[b, f])).collect();
    let states = g.stack(&rows)?;

    let rbar = if relations.is_empty() {
        g.input(Tensor::zeros(cfg.kg_dim, 1))
    } else {
        let rs: Vec<Var> = relations.iter().map(|r| g.param_row(ids.rel_emb, r.index())).collect::<Result<_>>()?;
        g.mean(&rs)?
    };
    let alpha = if cfg.attribute_attention {
        let key = g.param_matvec(ids.w_1, rbar)?;
        let scores = g.matvec(states, key)?;
        g.softmax(scores)?
    } else {
        let n = tokens.len();
        g.constant_vector(vec![1.0 / n as f64; n])
    };
    let weighted = g.row_scale(states, alpha)?;
    let pooled = g.mat_t_vec(states, alpha)?;
    Ok(EncVars { states, alpha, rbar, weighted, pooled })
}

/// Encoder output for one input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedContext {
    /// `[h_backward; h_forward]` per position, one row each.
    pub states: Tensor,
    /// Attribute attention over positions.
    pub alpha: Vec<f64>,
    /// Mean attribute embedding (zero when no attribute was detected).
    pub rbar: Vec<f64>,
    /// Rows `α_i h_i`.
    pub weighted: Tensor,
    /// `Σ α_i h_i`, the decoder's initial state.
    pub pooled: Vec<f64>,
}

pub fn encode(model: &Model, tokens: &[usize], relations: &[RelationId]) -> Result<EncodedContext> {
    let mut g = Graph::new(&model.store);
    let v = encode_graph(&mut g, model, tokens, relations)?;
    let out = EncodedContext {
        states: g.value(v.states).clone(),
        alpha: g.value(v.alpha).data().to_vec(),
        rbar: g.value(v.rbar).data().to_vec(),
        weighted: g.value(v.weighted).clone(),
        pooled: g.value(v.pooled).data().to_vec(),
    };
    if !out.states.is_finite() || !out.weighted.is_finite() {
        return Err(Error::Numeric("encoder produced non-finite states".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::*;
    use crate::tensor::{check_gradients, Stencil};

    fn zero_gru() -> (ParameterStore, GruParams) {
        let mut s = ParameterStore::new();
        let mut add = |n: &str, c| s.add(n, Tensor::zeros(1, c)).unwrap();
        let p = GruParams {
            w_z: add("wz", 2),
            u_z: add("uz", 1),
            w_r: add("wr", 2),
            u_r: add("ur", 1),
            w_0: add("w0", 2),
            u_0: add("u0", 1),
        };
        (s, p)
    }

    #[test]
    fn zero_weight_gru_halves_the_state() {
        let (s, p) = zero_gru();
        assert_eq!(gru_step(&s, &p, &[0.7, -1.0], &[0.4]).unwrap(), vec![0.2]);
        assert_eq!(gru_step(&s, &p, &[0.7, -1.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let (mut s, p) = zero_gru();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        for id in s.ids().collect::<Vec<_>>() {
            *s.get_mut(id) = Tensor::uniform(1, s.get(id).cols(), 1.0, &mut rng);
        }
        let report = check_gradients(&s, Stencil::FivePoint, 1e-4, 1e-8, |g| {
            let x = g.constant_vector(vec![0.3, -0.8]);
            let h0 = g.constant_vector(vec![0.5]);
            let h1 = gru_step_graph(g, &p, x, h0)?;
            let h2 = gru_step_graph(g, &p, x, h1)?;
            Ok(g.sum(h2))
        })
        .unwrap();
        assert!(report.max_rel_error() <= 1e-5, "{report:#?}");
    }

    #[test]
    fn zero_attention_matrix_gives_uniform_weights() {
        let mut m = tiny_model(1);
        m.store.get_mut(m.ids.w_1).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let enc = encode(&m, &[5, 6, 7, 8], &[RelationId::ACT_BY]).unwrap();
        assert_eq!(enc.alpha, vec![0.25; 4]);
    }

    #[test]
    fn single_token_gets_all_weight() {
        let m = tiny_model(2);
        let enc = encode(&m, &[6], &[RelationId::DIRECT_BY]).unwrap();
        assert_eq!(enc.alpha, vec![1.0]);
        assert_eq!(enc.pooled, enc.states.row(0));
    }

    #[test]
    fn repeated_attribute_matches_single() {
        let m = tiny_model(3);
        let once = encode(&m, &[5, 7, 6], &[RelationId::ACT_BY]).unwrap();
        let twice = encode(&m, &[5, 7, 6], &[RelationId::ACT_BY, RelationId::ACT_BY]).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn attribute_order_does_not_matter() {
        let m = tiny_model(3);
        let a = encode(&m, &[5, 7, 6], &[RelationId::ACT_BY, RelationId::HAS_GENRE]).unwrap();
        let b = encode(&m, &[5, 7, 6], &[RelationId::HAS_GENRE, RelationId::ACT_BY]).unwrap();
        for (x, y) in a.alpha.iter().zip(&b.alpha) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn no_attributes_means_uniform_attention() {
        let m = tiny_model(8);
        let enc = encode(&m, &[5, 6, 7], &[]).unwrap();
        assert!(enc.rbar.iter().all(|&v| v == 0.0));
        for a in &enc.alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn disabled_attention_is_uniform() {
        let mut m = tiny_model(4);
        m.config.attribute_attention = false;
        let enc = encode(&m, &[5, 6], &[RelationId::ACT_BY]).unwrap();
        assert_eq!(enc.alpha, vec![0.5, 0.5]);
        for c in 0..m.config.hidden {
            assert_eq!(enc.weighted.get(1, c), enc.states.get(1, c) / 2.0);
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let m = tiny_model(1);
        assert!(matches!(encode(&m, &[], &[]), Err(Error::Precondition(_))));
        assert!(matches!(encode(&m, &[99], &[]), Err(Error::Lookup(_))));
    }

    #[test]
    fn attention_is_a_distribution() {
        let m = tiny_model(6);
        let enc = encode(&m, &[1, 5, 6, 7, 8, 2], &[RelationId::WRITE_BY, RelationId::ACT_BY]).unwrap();
        assert_eq!(enc.states.shape(), (6, m.config.hidden));
        assert!(enc.alpha.iter().all(|&a| a >= 0.0));
        assert!((enc.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
