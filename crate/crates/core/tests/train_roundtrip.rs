use kgchat::embed::{evaluate_tails, train_transe, KgEmbedding, TransEConfig};
use kgchat::model::DecodeMode;
use kgchat::pipeline::{fit, Ablation, ModelShape, Responder};
use kgchat::synth::{synthesize, SynthConfig};
use kgchat::train::{Checkpoint, TrainConfig};

fn small() -> kgchat::synth::SynthCorpus {
    synthesize(&SynthConfig { films: 4, conversations: 8, held_out_films: 1, held_out_conversations: 2, seed: 5 }).unwrap()
}

#[test]
fn transe_ranks_training_tails_and_survives_a_save() {
    let s = small();
    let cfg = TransEConfig { dim: 16, epochs: 300, ..TransEConfig::default() };
    let run = train_transe(&s.kb, &cfg, 3).unwrap();
    let lp = evaluate_tails(&s.kb, &run.embedding, s.kb.triples()).unwrap();
    assert!(lp.hits_at_10 >= 0.9, "{lp:?}");

    let mut buf = Vec::new();
    run.embedding.save(&s.kb, &mut buf).unwrap();
    let back = KgEmbedding::load(&s.kb, buf.as_slice()).unwrap();
    assert_eq!(back, run.embedding);
}

#[test]
fn checkpoint_reload_reproduces_replies() {
    let s = small();
    let kg = train_transe(&s.kb, &TransEConfig { dim: 8, epochs: 50, ..TransEConfig::default() }, 1).unwrap().embedding;
    let shape = ModelShape { word_dim: 8, hidden: 12, max_vocab: 200 };
    let cfg = TrainConfig { epochs: 3, batch_size: 4, eval_every: 0, ..TrainConfig::default() };
    let ablation = Ablation { expansion: false, ..Ablation::default() };
    let fitted = fit(&s.kb, &s.lexicon, &kg, &s.train, &s.held_out, shape, ablation, &cfg, |_| {}).unwrap();
    assert_eq!(fitted.outcome.metrics.len(), 3);

    let mut buf = Vec::new();
    fitted.checkpoint.write_to(&mut buf).unwrap();
    let again = Checkpoint::read(buf.as_slice()).unwrap();
    assert_eq!(again.expansion, fitted.checkpoint.expansion);

    let conv = &s.held_out[0];
    let topic = s.kb.resolve(&conv.topic).unwrap();
    let history = &conv.turns[..conv.turns.len() - 1];
    let a = Responder { kb: &s.kb, lexicon: &s.lexicon, checkpoint: &fitted.checkpoint }
        .respond(history, topic, 8, DecodeMode::Beam(2))
        .unwrap();
    let b = Responder { kb: &s.kb, lexicon: &s.lexicon, checkpoint: &again }.respond(history, topic, 8, DecodeMode::Beam(2)).unwrap();
    assert_eq!(a.tokens, b.tokens);
    assert!(a.knowledge.expanded.is_empty());
}
