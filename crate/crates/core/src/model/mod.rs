//! Attribute-aware encoder and entity-aware pointer decoder.

mod decoder;
mod encoder;

pub use decoder::{
    decode_step, decode_step_with_gate, generate, DecodeMode, DecodeState, Generation, MixtureDistribution, StepTrace,
};
pub use encoder::{encode, gru_step, EncodedContext};

pub(crate) use decoder::{decode_step_graph, decoder_inputs, symbol_embedding};
pub(crate) use encoder::encode_graph;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::KgEmbedding;
use crate::error::{Error, Result};
use crate::kb::EntityId;
use crate::tensor::{ParamId, ParameterStore, Tensor};

/// Reserved vocabulary entries. These occupy ids `0..5` in every vocabulary.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SEP: usize = 4;

/// One decoder output: a vocabulary word or a copied KB entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Word(usize),
    Entity(EntityId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub word_dim: usize,
    /// Total encoder width; each direction gets half.
    pub hidden: usize,
    pub kg_dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Attribute attention in the encoder. Off gives uniform weights.
    pub attribute_attention: bool,
    /// Pointer gate and entity copying. Off reduces the decoder to a plain GRU language model.
    pub entity_decoder: bool,
    pub coverage: bool,
    /// Reuse the pooled context at every step instead of attending over encoder states.
    pub static_context: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size <= SEP {
            return fail("vocabulary must hold the reserved tokens");
        }
        if self.word_dim == 0 || self.kg_dim == 0 {
            return fail("embedding sizes must be positive");
        }
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return fail("hidden size must be even and at least 2");
        }
        if self.num_entities == 0 || self.num_relations == 0 {
            return fail("knowledge base tables are empty");
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.hidden / 2
    }

    /// Width of the decoder GRU input `[ĉ; topic; y_prev]`.
    pub fn decoder_input(&self) -> usize {
        self.hidden + self.kg_dim + self.word_dim
    }

    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("word_dim", self.word_dim.to_string()),
            ("hidden", self.hidden.to_string()),
            ("kg_dim", self.kg_dim.to_string()),
            ("num_entities", self.num_entities.to_string()),
            ("num_relations", self.num_relations.to_string()),
            ("attribute_attention", self.attribute_attention.to_string()),
            ("entity_decoder", self.entity_decoder.to_string()),
            ("coverage", self.coverage.to_string()),
            ("static_context", self.static_context.to_string()),
        ]
    }

    pub(crate) fn from_pairs(pairs: &[(String, String)]) -> Result<ModelConfig> {
        let get = |k: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Config(format!("bad value for `{k}`")))
        };
        let flag = |k: &str| -> Result<bool> {
            get(k)?.parse().map_err(|_| Error::Config(format!("bad value for `{k}`")))
        };
        let cfg = ModelConfig {
            vocab_size: num("vocab_size")?,
            word_dim: num("word_dim")?,
            hidden: num("hidden")?,
            kg_dim: num("kg_dim")?,
            num_entities: num("num_entities")?,
            num_relations: num("num_relations")?,
            attribute_attention: flag("attribute_attention")?,
            entity_decoder: flag("entity_decoder")?,
            coverage: flag("coverage")?,
            static_context: flag("static_context")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "vocab={} word={} hidden={} kg={} aae={} ead={} coverage={}",
            self.vocab_size,
            self.word_dim,
            self.hidden,
            self.kg_dim,
            self.attribute_attention,
            self.entity_decoder,
            self.coverage
        )
    }
}

/// Weights of one GRU cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w_0: ParamId,
    pub u_0: ParamId,
}

impl GruParams {
    fn register(store: &mut ParameterStore, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut add = |name: &str, cols: usize| store.add(&format!("{prefix}.{name}"), xavier(hidden, cols, rng));
        Ok(GruParams {
            w_z: add("W_z", input)?,
            u_z: add("U_z", hidden)?,
            w_r: add("W_r", input)?,
            u_r: add("U_r", hidden)?,
            w_0: add("W_0", input)?,
            u_0: add("U_0", hidden)?,
        })
    }

    fn lookup(store: &ParameterStore, prefix: &str) -> Result<Self> {
        let id = |name: &str| store.id(&format!("{prefix}.{name}"));
        Ok(GruParams {
            w_z: id("W_z")?,
            u_z: id("U_z")?,
            w_r: id("W_r")?,
            u_r: id("U_r")?,
            w_0: id("W_0")?,
            u_0: id("U_0")?,
        })
    }
}

/// Handles of every named parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamIds {
    pub word_emb: ParamId,
    pub ent_emb: ParamId,
    pub rel_emb: ParamId,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub w_1: ParamId,
    pub w_a: ParamId,
    pub dec: GruParams,
    pub w_o: ParamId,
    pub w_g: ParamId,
    pub w_e: ParamId,
    pub w_p: ParamId,
}

impl ParamIds {
    pub fn lookup(store: &ParameterStore) -> Result<Self> {
        Ok(ParamIds {
            word_emb: store.id("word_emb")?,
            ent_emb: store.id("ent_emb")?,
            rel_emb: store.id("rel_emb")?,
            enc_fwd: GruParams::lookup(store, "enc_fwd")?,
            enc_bwd: GruParams::lookup(store, "enc_bwd")?,
            w_1: store.id("W_1")?,
            w_a: store.id("W_a")?,
            dec: GruParams::lookup(store, "dec")?,
            w_o: store.id("W_o")?,
            w_g: store.id("W_g")?,
            w_e: store.id("W_e")?,
            w_p: store.id("W_p")?,
        })
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(rows, cols, bound, rng)
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParameterStore,
    pub ids: ParamIds,
}

impl Model {
    /// Random initialization. Entity and relation tables are copied from `kg`
    /// when given, otherwise drawn at random.
    pub fn init(config: ModelConfig, kg: Option<&KgEmbedding>, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let h = c.half();
        let mut store = ParameterStore::new();

        let word_emb = store.add("word_emb", Tensor::uniform(c.vocab_size, c.word_dim, 0.1, &mut rng))?;
        let (ents, rels) = match kg {
            Some(kg) => {
                if kg.dim() != c.kg_dim
                    || kg.num_entities() != c.num_entities
                    || kg.num_relations() != c.num_relations
                {
                    return Err(Error::Config(format!(
                        "embedding is {}x{} / {}x{}, model expects {}x{} / {}x{}",
                        kg.num_entities(),
                        kg.dim(),
                        kg.num_relations(),
                        kg.dim(),
                        c.num_entities,
                        c.kg_dim,
                        c.num_relations,
                        c.kg_dim
                    )));
                }
                (
                    Tensor::new(c.num_entities, c.kg_dim, kg.entity_matrix().to_vec())?,
                    Tensor::new(c.num_relations, c.kg_dim, kg.relation_matrix().to_vec())?,
                )
            }
            None => {
                let b = 1.0 / (c.kg_dim as f64).sqrt();
                (
                    Tensor::uniform(c.num_entities, c.kg_dim, b, &mut rng),
                    Tensor::uniform(c.num_relations, c.kg_dim, b, &mut rng),
                )
            }
        };
        let ent_emb = store.add("ent_emb", ents)?;
        let rel_emb = store.add("rel_emb", rels)?;
        let enc_fwd = GruParams::register(&mut store, "enc_fwd", c.word_dim, h, &mut rng)?;
        let enc_bwd = GruParams::register(&mut store, "enc_bwd", c.word_dim, h, &mut rng)?;
        let w_1 = store.add("W_1", xavier(c.hidden, c.kg_dim, &mut rng))?;
        let w_a = store.add("W_a", xavier(c.hidden, c.hidden, &mut rng))?;
        let dec = GruParams::register(&mut store, "dec", c.decoder_input(), c.hidden, &mut rng)?;
        let w_o = store.add("W_o", xavier(c.vocab_size, c.hidden, &mut rng))?;
        let w_g = store.add("W_g", xavier(1, c.hidden, &mut rng))?;
        let w_e = store.add("W_e", xavier(c.kg_dim, c.hidden, &mut rng))?;
        let w_p = store.add("W_p", xavier(c.word_dim, c.kg_dim, &mut rng))?;

        let ids = ParamIds { word_emb, ent_emb, rel_emb, enc_fwd, enc_bwd, w_1, w_a, dec, w_o, w_g, w_e, w_p };
        Ok(Model { config, store, ids })
    }

    /// Rebuilds a model around a loaded store, checking every shape.
    pub fn from_store(config: ModelConfig, store: ParameterStore) -> Result<Model> {
        config.validate()?;
        let ids = ParamIds::lookup(&store)?;
        let c = &config;
        let h = c.half();
        let mut expect = vec![
            (ids.word_emb, (c.vocab_size, c.word_dim)),
            (ids.ent_emb, (c.num_entities, c.kg_dim)),
            (ids.rel_emb, (c.num_relations, c.kg_dim)),
            (ids.w_1, (c.hidden, c.kg_dim)),
            (ids.w_a, (c.hidden, c.hidden)),
            (ids.w_o, (c.vocab_size, c.hidden)),
            (ids.w_g, (1, c.hidden)),
            (ids.w_e, (c.kg_dim, c.hidden)),
            (ids.w_p, (c.word_dim, c.kg_dim)),
        ];
        for (gru, input, width) in [(ids.enc_fwd, c.word_dim, h), (ids.enc_bwd, c.word_dim, h), (ids.dec, c.decoder_input(), c.hidden)] {
            for (id, cols) in [
                (gru.w_z, input),
                (gru.u_z, width),
                (gru.w_r, input),
                (gru.u_r, width),
                (gru.w_0, input),
                (gru.u_0, width),
            ] {
                expect.push((id, (width, cols)));
            }
        }
        for (id, shape) in expect {
            if store.get(id).shape() != shape {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    store.name(id),
                    store.get(id).shape(),
                    shape
                )));
            }
        }
        Ok(Model { config, store, ids })
    }

    /// Knowledge-graph tables, which a frozen run leaves untouched.
    pub fn kg_params(&self) -> [ParamId; 2] {
        [self.ids.ent_emb, self.ids.rel_emb]
    }

    /// Overwrites every parameter with fresh uniform noise in `[-bound, bound)`.
    pub fn randomize(&mut self, bound: f64, rng: &mut impl Rng) {
        for id in self.store.ids().collect::<Vec<_>>() {
            for v in self.store.get_mut(id).data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            word_dim: 3,
            hidden: 4,
            kg_dim: 3,
            num_entities: 5,
            num_relations: 10,
            attribute_attention: true,
            entity_decoder: true,
            coverage: true,
            static_context: false,
        }
    }

    pub fn tiny_model(seed: u64) -> Model {
        Model::init(tiny_config(), None, seed).unwrap()
    }
}
