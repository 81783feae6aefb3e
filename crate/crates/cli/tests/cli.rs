use std::path::Path;
use std::process::{Command, Output};

use kgchat::collector::PatternLexicon;
use kgchat::embed::{train_transe, TransEConfig};
use kgchat::kb::KnowledgeBase;
use kgchat::model::DecodeMode;
use kgchat::pipeline::{fit, Ablation, ModelShape, Responder};
use kgchat::synth::{synthesize, SynthConfig};
use kgchat::train::{Checkpoint, TrainConfig};
use kgchat_cli::chat::{self, ChatSession};

fn kgchat(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgchat")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const THREE_LINE_KB: &str = "T\tThe Notebook\tactBy\tRachel McAdams\n\
                             T\tSpotlight\tactBy\tRachel McAdams\n\
                             T\tThe Notebook\tdirectBy\tNick Cassavetes\n";

#[test]
fn kb_stats_counts_inverse_triples() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("kb.tsv"), THREE_LINE_KB).unwrap();
    let o = kgchat(&["kb", "stats", "--kb", "kb.tsv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("triples=6"), "{}", stdout(&o));

    let o = kgchat(&["kb", "build", "--kb", "kb.tsv", "--out", "clean.tsv"], dir.path());
    assert!(o.status.success());
    let again = KnowledgeBase::load(dir.path().join("clean.tsv")).unwrap();
    assert_eq!(again.stats().triples, 6);
}

#[test]
fn usage_and_file_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgchat(&["kb", "stats", "--kb", "x", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let o = kgchat(&["kb", "stats", "--kb", "missing.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("missing.tsv"));

    std::fs::write(dir.path().join("bad.tsv"), "T\ta\tlikes\tb\n").unwrap();
    let o = kgchat(&["kb", "stats", "--kb", "bad.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.tsv") && stderr(&o).contains("likes"));
}

#[test]
fn collect_prints_attributes_and_candidates() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("kb.tsv"),
        format!("{THREE_LINE_KB}T\tAbout Time\tactBy\tRachel McAdams\n"),
    )
    .unwrap();
    std::fs::write(dir.path().join("lex.tsv"), "actBy\tactress\n").unwrap();
    let o = kgchat(
        &["collect", "--kb", "kb.tsv", "--lexicon", "lex.tsv", "--topic", "The Notebook", "--text", "it was acted by the actress Rachel"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("R: {actBy}"));
    assert!(out.contains("E: [The Notebook, Rachel McAdams, Spotlight, About Time]"), "{out}");

    let o = kgchat(&["collect", "--kb", "kb.tsv", "--lexicon", "lex.tsv", "--topic", "The Notbook", "--text", "hi"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("the notebook"));
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("kb.tsv"), THREE_LINE_KB).unwrap();
    std::fs::write(dir.path().join("run.conf"), "kb=kb.tsv\nout=ignored-for-stats\n").unwrap();
    let o = kgchat(&["kb", "stats", "--config", "run.conf"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("triples=6"));
    let o = kgchat(&["kb", "stats", "--config", "run.conf", "--kb", "nope.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_output_trains_generates_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = kgchat(&["synth", "--out", "d", "--films", "4", "--conversations", "6", "--held-out-films", "2", "--held-out-conversations", "3"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(p.join("vec.txt"), "1 8\nwho 1 1 1 1 1 1 1 1\n").unwrap();
    let o = kgchat(
        &[
            "train", "--word-vectors", "vec.txt", "--kb", "d/kb.tsv", "--lexicon", "d/lexicon.tsv", "--corpus", "d/train.jsonl", "--held-out",
            "d/held_out.jsonl", "--ckpt", "m.ckpt", "--metrics", "m.csv", "--epochs", "3", "--word-dim", "8", "--hidden",
            "8", "--kg-dim", "8", "--kg-epochs", "20",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("unreachable_rate=0.0000"));
    assert!(stderr(&o).contains("word_vectors=1/"));
    let csv = std::fs::read_to_string(p.join("m.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,nll,gate_acc,ent_prec,ent_rec"));
    assert_eq!(csv.lines().count(), 4);

    let o = kgchat(
        &["generate", "--kb", "d/kb.tsv", "--lexicon", "d/lexicon.tsv", "--ckpt", "m.ckpt", "--corpus", "d/held_out.jsonl", "--out", "g.jsonl", "--max-len", "6", "--beam", "2"],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kgchat(&["eval", "--kb", "d/kb.tsv", "--generated", "g.jsonl", "--reference", "d/held_out.jsonl"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("BLEU-2") && out.contains("bleu2,bleu3,dist1,dist2,ent_prec,ent_rec,responses"));
}

fn overfit_checkpoint() -> (KnowledgeBase, PatternLexicon, Checkpoint, String) {
    let s = synthesize(&SynthConfig { films: 3, conversations: 6, held_out_films: 0, held_out_conversations: 0, seed: 4 })
        .unwrap();
    let kg = train_transe(&s.kb, &TransEConfig { dim: 16, epochs: 100, ..TransEConfig::default() }, 1).unwrap().embedding;
    let shape = ModelShape { word_dim: 16, hidden: 32, max_vocab: 200 };
    let cfg = TrainConfig { epochs: 150, learning_rate: 0.01, batch_size: 6, eval_every: 0, stop_below: Some(0.01), ..TrainConfig::default() };
    let fitted = fit(&s.kb, &s.lexicon, &kg, &s.train, &[], shape, Ablation::default(), &cfg, |_| {}).unwrap();
    let topic = s.train[0].topic.clone();
    (s.kb, s.lexicon, fitted.checkpoint, topic)
}

#[test]
fn chat_session_grows_history_and_handles_commands() {
    let (kb, lex, ck, topic) = overfit_checkpoint();
    let responder = Responder { kb: &kb, lexicon: &lex, checkpoint: &ck };
    let mut session = ChatSession::new(responder, 10, DecodeMode::Greedy);
    let script = format!(":topic Nowhere\n:topic {topic}\n\nwho is the actor\n:trace\nwho directed it\n*&^% ??\n:quit\nnever read\n");
    let mut out = Vec::new();
    chat::run(&mut session, script.as_bytes(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();

    assert!(text.contains("unknown topic `Nowhere`; closest matches:"));
    assert!(text.contains("trace on") && text.contains("t=0 g="));
    assert_eq!(session.context_sizes.len(), 3);
    assert!(session.context_sizes.windows(2).all(|w| w[0] < w[1]), "{:?}", session.context_sizes);
    assert!(!text.contains("never read"));
}

#[test]
fn chat_binary_answers_with_a_candidate_entity() {
    let (kb, lex, ck, topic) = overfit_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut kb_text = Vec::new();
    kb.write_tsv(&mut kb_text).unwrap();
    std::fs::write(p.join("kb.tsv"), kb_text).unwrap();
    let lex_text: String = lex.iter().map(|(pat, r)| format!("{}\t{}\n", r.name(), pat.join(" "))).collect();
    std::fs::write(p.join("lex.tsv"), lex_text).unwrap();
    ck.save(p.join("m.ckpt")).unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_kgchat"))
        .args(["chat", "--kb", "kb.tsv", "--lexicon", "lex.tsv", "--ckpt", "m.ckpt", "--topic", &topic, "--trace"])
        .current_dir(p)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"who is the director\n:quit\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("candidates: ")).unwrap();
    let names: Vec<String> = line["candidates: ".len()..].split(" | ").map(str::to_lowercase).collect();
    let reply = out.lines().next().unwrap().trim_start_matches("> ").to_string();
    assert!(names.iter().any(|n| reply.split(' ').any(|w| w == n)), "{out}");
}
