use promptgrad::diagnostics::anchor_report;
use promptgrad::engine::{init_prompt, optimize, tokenize_records, TrainConfig, TrainingExample};
use promptgrad::model::{pretrain_base, ModelConfig, Vocabulary};
use promptgrad::tasks::{sentiment_toy, TaskSizes};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let docs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(700);
    let steps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3200);

    let bundle = sentiment_toy(seed, TaskSizes { corpus_docs: docs, ..TaskSizes::default() });
    let vocab = Vocabulary::from_corpus(&bundle.charset);
    let config = ModelConfig::desk_scale(vocab.len());
    let corpus: Vec<Vec<usize>> = bundle.corpus.iter()
        .map(|l| { let mut i = vocab.tokenize(l).unwrap(); i.push(vocab.eos_id()); i })
        .collect();
    let (ckpt, _) = pretrain_base::<f64>(&corpus, config, vocab, seed, steps, 1e-3).unwrap();
    let train = tokenize_records(&bundle.train, ckpt.vocabulary(), true).unwrap();
    let val = tokenize_records(&bundle.val, ckpt.vocabulary(), true).unwrap();
    let p0 = init_prompt(&bundle.prompt, &ckpt).unwrap();

    // Is the raw init anchored at all?
    let a0 = anchor_report(&p0, &ckpt).unwrap();
    println!("p0: fully={} min_p={:.4}", a0.fully_anchored, a0.min_p_original);
    for lr in [0.001, 0.01] {
        let cfg = TrainConfig { learning_rate: lr, max_epochs: 10, patience: Some(2), val_fraction: 0.2, seed };
        let (p, _) = optimize(&p0, &train, Some(&val), &ckpt, &cfg).unwrap();
        let a = anchor_report(&p, &ckpt).unwrap();
        let off: Vec<String> = a.positions.iter().filter(|p| !p.anchored)
            .map(|p| format!("{}:{}->{}", p.position, p.original_symbol, p.nearest_symbol)).collect();
        println!("lr={lr}: fully={} min_p={:.4} off={:?}", a.fully_anchored, a.min_p_original, off);
    }

    // Overfit variants: with/without EOS target, different examples.
    for (name, ex) in [
        ("train0+eos", train[0].clone()),
        ("train0-noeos", TrainingExample::new(train[0].input.clone(),
            train[0].target[..train[0].target.len()-1].to_vec()).unwrap()),
        ("short-target", TrainingExample::new(
            ckpt.vocabulary().tokenize(" the film was happy => ").unwrap(),
            ckpt.vocabulary().tokenize("pos").unwrap()).unwrap()),
    ] {
        let cfg = TrainConfig { learning_rate: 0.01, max_epochs: 200, patience: None, val_fraction: 0.0, seed: 0 };
        let (_, r) = optimize(&p0, &[ex], None, &ckpt, &cfg).unwrap();
        let reach = r.train_losses.iter().position(|&l| l < 0.01);
        println!("overfit {name}: reached_at={:?} final={:.5}", reach.map(|i| i+1), r.train_losses.last().unwrap());
    }
}
