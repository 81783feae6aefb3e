use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use kgchat::collector::{link_spans, PatternLexicon};
use kgchat::embed::{evaluate_tails, train_transe, KgEmbedding, TransEConfig};
use kgchat::kb::{EntityId, KnowledgeBase};
use kgchat::metrics::EvalReport;
use kgchat::model::DecodeMode;
use kgchat::pipeline::{collector_for, prepare, Ablation, ModelShape, Responder};
use kgchat::synth::{synthesize, SynthConfig};
use kgchat::train::{load_corpus, parse_generated, write_corpus, Checkpoint, Conversation, EpochMetrics, TrainConfig};

use crate::chat::{self, ChatSession};
use crate::trace::format_trace;
use crate::{
    AblationFlags, ChatArgs, CollectArgs, Command, DecodeFlags, EmbedCommand, EmbedTrainArgs, EvalArgs, GenerateArgs,
    KbCommand, SynthArgs, TrainArgs,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Kb(KbCommand::Build { kb, out }) => kb_build(&kb, out.as_deref()),
        Command::Kb(KbCommand::Stats { kb }) => {
            require(&[&kb])?;
            println!("{}", load_kb(&kb)?.stats());
            Ok(())
        }
        Command::Embed(EmbedCommand::Train(a)) => embed_train(a),
        Command::Embed(EmbedCommand::Eval { kb, emb }) => embed_eval(&kb, &emb),
        Command::Collect(a) => collect(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Chat(a) => chat(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        ensure!(p.is_file(), "{}: no such file", p.display());
    }
    Ok(())
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(path).with_context(|| path.display().to_string())
}

fn load_lexicon(path: &Path) -> Result<PatternLexicon> {
    PatternLexicon::load(path).with_context(|| path.display().to_string())
}

fn load_corpus_at(path: &Path) -> Result<Vec<Conversation>> {
    load_corpus(path).with_context(|| path.display().to_string())
}

fn load_embedding(kb: &KnowledgeBase, path: &Path) -> Result<KgEmbedding> {
    let file = File::open(path).with_context(|| path.display().to_string())?;
    KgEmbedding::load(kb, BufReader::new(file)).with_context(|| path.display().to_string())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| path.display().to_string())
}

/// Runs `f` against a buffered file, or standard output when `path` is absent.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| p.display().to_string())?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().with_context(|| p.display().to_string())?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn ablation(flags: &AblationFlags) -> Ablation {
    Ablation {
        expansion: !flags.no_2he,
        attribute_attention: !flags.no_aae,
        entity_decoder: !flags.no_ead,
        coverage: !flags.no_coverage,
    }
}

fn decode_mode(flags: &DecodeFlags) -> Result<DecodeMode> {
    ensure!(flags.beam >= 1, "--beam must be at least 1");
    ensure!(flags.max_len >= 1, "--max-len must be at least 1");
    Ok(if flags.beam == 1 { DecodeMode::Greedy } else { DecodeMode::Beam(flags.beam) })
}

fn kb_build(path: &Path, out: Option<&Path>) -> Result<()> {
    require(&[path])?;
    let kb = load_kb(path)?;
    with_output(out, |w| Ok(kb.write_tsv(w)?))?;
    eprintln!("{}", kb.stats());
    Ok(())
}

fn embed_train(a: EmbedTrainArgs) -> Result<()> {
    require(&[&a.kb])?;
    let cfg = TransEConfig { dim: a.dim, epochs: a.epochs, learning_rate: a.lr, margin: a.margin, ..TransEConfig::default() };
    cfg.validate()?;
    let kb = load_kb(&a.kb)?;
    let run = train_transe(&kb, &cfg, a.seed)?;
    with_output(Some(&a.out), |w| Ok(run.embedding.save(&kb, w)?))?;
    if let Some(p) = &a.losses {
        with_output(Some(p), |w| {
            writeln!(w, "epoch,loss")?;
            for (i, l) in run.epoch_losses.iter().enumerate() {
                writeln!(w, "{},{l:.9}", i + 1)?;
            }
            Ok(())
        })?;
    }
    if let (Some(first), Some(last)) = (run.epoch_losses.first(), run.epoch_losses.last()) {
        println!("epochs={} first_loss={first:.6} last_loss={last:.6}", run.epoch_losses.len());
    }
    Ok(())
}

fn embed_eval(kb_path: &Path, emb_path: &Path) -> Result<()> {
    require(&[kb_path, emb_path])?;
    let kb = load_kb(kb_path)?;
    let emb = load_embedding(&kb, emb_path)?;
    let forward: Vec<_> = kb.triples().iter().copied().filter(|t| !t.relation.is_inverse()).collect();
    let lp = evaluate_tails(&kb, &emb, &forward)?;
    println!("triples={} hits@10={:.4} mean_rank={:.2} mrr={:.4}", forward.len(), lp.hits_at_10, lp.mean_rank, lp.mrr);
    Ok(())
}

fn collect(a: CollectArgs) -> Result<()> {
    require(&[&a.kb, &a.lexicon])?;
    let kb = load_kb(&a.kb)?;
    let lex = load_lexicon(&a.lexicon)?;
    let topic = resolve_topic(&kb, &a.topic)?;
    let mode = Ablation { expansion: !a.no_2he, ..Ablation::default() }.expansion_mode();
    let k = collector_for(&kb, &lex, mode).collect_text(&a.text, topic)?;
    print!("{}", k.render(&kb));
    Ok(())
}

fn resolve_topic(kb: &KnowledgeBase, name: &str) -> Result<EntityId> {
    kb.resolve(name).or_else(|_| {
        let near: Vec<String> = kb.nearest_aliases(name, 5).into_iter().map(|(a, _)| a).collect();
        bail!("unknown topic `{name}`; closest matches: {}", near.join(", "))
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.kb, &a.lexicon, &a.corpus];
    inputs.extend(a.held_out.as_deref());
    inputs.extend(a.emb.as_deref());
    require(&inputs)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        decay: a.decay,
        seed: a.seed,
        gate_weight: a.gate_weight,
        freeze_kg: a.freeze_kg,
        eval_every: if a.held_out.is_some() { 1 } else { 0 },
        ..TrainConfig::default()
    };
    cfg.validate()?;
    ensure!(a.word_dim >= 1 && a.hidden >= 2 && a.hidden % 2 == 0, "--hidden must be even and --word-dim positive");

    let kb = load_kb(&a.kb)?;
    let lex = load_lexicon(&a.lexicon)?;
    let convs = load_corpus_at(&a.corpus)?;
    let held = match &a.held_out {
        Some(p) => load_corpus_at(p)?,
        None => Vec::new(),
    };
    let kg = match &a.emb {
        Some(p) => load_embedding(&kb, p)?,
        None => {
            let tc = TransEConfig { dim: a.kg_dim, epochs: a.kg_epochs, ..TransEConfig::default() };
            train_transe(&kb, &tc, a.seed)?.embedding
        }
    };
    let shape = ModelShape { word_dim: a.word_dim, hidden: a.hidden, max_vocab: a.max_vocab };

    let mut rows = vec![EpochMetrics::CSV_HEADER.to_string()];
    let mut prepared = prepare(&kb, &lex, &kg, &convs, &held, shape, ablation(&a.ablation), cfg.seed)?;
    if let Some(p) = &a.word_vectors {
        require(&[p])?;
        let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
        let n = prepared.load_word_vectors(&text).with_context(|| p.display().to_string())?;
        eprintln!("word_vectors={n}/{}", prepared.vocab.len());
    }
    let fitted = prepared.train(&kb, &cfg, |m| {
        eprintln!("{m}");
        rows.push(m.csv_row());
    })?;
    eprintln!(
        "examples={} entity_mentions={} unreachable_rate={:.4}",
        fitted.train.quads.len(),
        fitted.train.entity_mentions,
        fitted.train.unreachable_rate()
    );
    fitted.checkpoint.save(&a.ckpt).with_context(|| a.ckpt.display().to_string())?;
    with_output(a.metrics.as_deref(), |w| {
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    if let Some(epoch) = fitted.outcome.diverged_at {
        bail!("loss diverged at epoch {epoch}; saved the parameters from the epoch before");
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    require(&[&a.kb, &a.lexicon, &a.ckpt, &a.corpus])?;
    let mode = decode_mode(&a.decode)?;
    let kb = load_kb(&a.kb)?;
    let lex = load_lexicon(&a.lexicon)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let convs = load_corpus_at(&a.corpus)?;
    let responder = Responder { kb: &kb, lexicon: &lex, checkpoint: &ck };
    let mut out = Vec::with_capacity(convs.len());
    for (i, c) in convs.iter().enumerate() {
        let topic = resolve_topic(&kb, &c.topic).with_context(|| format!("{}: record {}", a.corpus.display(), i + 1))?;
        let reply = responder.respond(c.context(), topic, a.decode.max_len, mode)?;
        if a.decode.trace {
            eprintln!("# {}\n{}", i + 1, format_trace(&reply.generation, &ck.vocab, &reply.knowledge, &kb));
        }
        let mut turns = c.context().to_vec();
        turns.push(reply.tokens);
        out.push(Conversation { topic: c.topic.clone(), turns });
    }
    with_output(a.out.as_deref(), |w| Ok(write_corpus(&out, w)?))
}

fn chat(a: ChatArgs) -> Result<()> {
    require(&[&a.kb, &a.lexicon, &a.ckpt])?;
    let mode = decode_mode(&a.decode)?;
    let kb = load_kb(&a.kb)?;
    let lex = load_lexicon(&a.lexicon)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let responder = Responder { kb: &kb, lexicon: &lex, checkpoint: &ck };
    let mut session = ChatSession::new(responder, a.decode.max_len, mode);
    session.trace = a.decode.trace;
    if let Some(t) = &a.topic {
        session.set_topic(t).map_err(anyhow::Error::msg)?;
    }
    let stdin = io::stdin();
    chat::run(&mut session, stdin.lock(), io::stdout().lock())
}

fn response_entities(kb: &KnowledgeBase, c: &Conversation) -> BTreeSet<EntityId> {
    link_spans(c.response(), kb, false).into_iter().map(|m| m.entity).collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    require(&[&a.kb, &a.generated, &a.reference])?;
    let kb = load_kb(&a.kb)?;
    let text = std::fs::read_to_string(&a.generated).with_context(|| a.generated.display().to_string())?;
    let generated = parse_generated(&text).with_context(|| a.generated.display().to_string())?;
    let reference = load_corpus_at(&a.reference)?;
    ensure!(
        generated.len() == reference.len(),
        "{} has {} conversations but {} has {}",
        a.generated.display(),
        generated.len(),
        a.reference.display(),
        reference.len()
    );
    for (i, (g, r)) in generated.iter().zip(&reference).enumerate() {
        ensure!(g.topic == r.topic, "record {}: topics differ (`{}` vs `{}`)", i + 1, g.topic, r.topic);
    }
    let hyp: Vec<Vec<String>> = generated.iter().map(|c| c.response().to_vec()).collect();
    let refs: Vec<Vec<String>> = reference.iter().map(|c| c.response().to_vec()).collect();
    let hyp_ents: Vec<_> = generated.iter().map(|c| response_entities(&kb, c)).collect();
    let ref_ents: Vec<_> = reference.iter().map(|c| response_entities(&kb, c)).collect();
    let report = EvalReport::compute(&hyp, &refs, &hyp_ents, &ref_ents, a.smoothing);
    print!("{report}");
    let csv = format!("{}\n{}\n", EvalReport::csv_header(), report.csv_row());
    match &a.csv {
        Some(p) => std::fs::write(p, csv).with_context(|| p.display().to_string())?,
        None => print!("\n{csv}"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        films: a.films,
        conversations: a.conversations,
        held_out_films: a.held_out_films,
        held_out_conversations: a.held_out_conversations,
        seed: a.seed,
    };
    let s = synthesize(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let files: [(&str, String); 4] = [
        ("kb.tsv", s.kb_text.clone()),
        ("lexicon.tsv", s.lexicon_text.clone()),
        ("train.jsonl", s.train_jsonl()?),
        ("held_out.jsonl", s.held_out_jsonl()?),
    ];
    for (name, body) in files {
        let p: PathBuf = a.out.join(name);
        std::fs::write(&p, body).with_context(|| p.display().to_string())?;
    }
    println!("{} train, {} held-out conversations; {}", s.train.len(), s.held_out.len(), s.kb.stats());
    Ok(())
}
