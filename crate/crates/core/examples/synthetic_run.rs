//! Trains on the synthetic topic corpus and prints the deferral table.
//!
//! `cargo run --release -p udc-core --example synthetic_run -- [seed] [epochs] [metric:0|1] [patience]`

use std::time::Instant;

use udc_core::corpus::synthetic::{generate, SyntheticSpec};
use udc_core::corpus::{build_vocab, encode_dataset, load_pretrained_embeddings, split_dataset, SplitSpec};
use udc_core::evaluation::{evaluate, random_baseline_report, DeferralMode, DeferralPolicy, ScoredPrediction};
use udc_core::metric::{distance_statistics, ClassPartition, MetricConfig};
use udc_core::nn::{train, EncoderConfig, ModelState, TrainConfig};
use udc_core::uncertainty::{de_score, deterministic_features, ScorerConfig};

fn main() -> udc_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let seed = args.first().copied().unwrap_or(0);
    let epochs = args.get(1).copied().unwrap_or(10) as usize;
    let use_metric = args.get(2).copied().unwrap_or(1) == 1;
    let patience = args.get(3).copied().unwrap_or(3) as usize;

    let corpus = generate(&SyntheticSpec::default())?;
    let splits = split_dataset(&corpus.dataset, &SplitSpec { seed, ..Default::default() })?;
    let vocab = build_vocab(&splits.train, 1)?;
    let dir = std::env::temp_dir().join(format!("udc-synthetic-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| udc_core::Error::io(&dir, e))?;
    let vectors = dir.join("vectors.txt");
    std::fs::write(&vectors, corpus.word_vectors(50, 7)).map_err(|e| udc_core::Error::io(&vectors, e))?;
    let emb = load_pretrained_embeddings(&vectors, &vocab, 50, seed)?;

    let max_len = 100;
    let (tr, va, te) = (
        encode_dataset(&splits.train, &vocab, max_len),
        encode_dataset(&splits.valid, &vocab, max_len),
        encode_dataset(&splits.test, &vocab, max_len),
    );
    let mut cfg = EncoderConfig::new(vocab.len(), 4);
    cfg.embed_dim = 50;
    cfg.max_len = max_len;
    let model = ModelState::new(cfg, Some(&emb), seed)?;
    let tc = TrainConfig { max_epochs: epochs, patience, seed, ..Default::default() };
    let metric = MetricConfig::default();
    let start = Instant::now();
    let out = train(model, &tr, &va, &tc, use_metric.then_some(&metric))?;
    println!("trained {} epochs in {:.1}s, best {}", out.log.len(), start.elapsed().as_secs_f64(), out.best_epoch);
    for e in &out.log {
        println!("  {:>2} ce {:.4} metric {:.4} valid micro-F1 {:.4}", e.epoch, e.train_ce, e.train_metric, e.valid_micro_f1);
    }

    let start = Instant::now();
    let scores = de_score(&out.model, &te.instance_ids, &te.tokens, &ScorerConfig { seed, ..Default::default() })?;
    println!("scored in {:.1}s", start.elapsed().as_secs_f64());
    let preds: Vec<ScoredPrediction> = scores
        .iter()
        .zip(&te.labels)
        .map(|(s, &y)| ScoredPrediction {
            instance_id: s.instance_id.clone(),
            predicted_class: s.predicted_class,
            true_class: y,
            score: s.value,
        })
        .collect();
    for mode in [DeferralMode::RemainingOnly, DeferralMode::Combined] {
        let policy = DeferralPolicy { ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4], mode };
        let mut report = evaluate(&preds, &policy, "dropout_entropy", seed)?;
        report.extend(random_baseline_report(&preds, &policy, 100, seed)?);
        println!("{}", report.to_table());
    }
    let feats = deterministic_features(&out.model, &te.tokens, te.labels.clone())?;
    let stats = distance_statistics(&feats, &ClassPartition::from_labels(&te.labels))?;
    println!("test intra {:.4} inter {:.4} ratio {:.4}", stats.mean_intra, stats.mean_inter, stats.ratio);
    let feats = deterministic_features(&out.model, &tr.tokens, tr.labels.clone())?;
    let stats = distance_statistics(&feats, &ClassPartition::from_labels(&tr.labels))?;
    println!("train intra {:.4} inter {:.4} ratio {:.4}", stats.mean_intra, stats.mean_inter, stats.ratio);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
