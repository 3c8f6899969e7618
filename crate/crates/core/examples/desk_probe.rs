// Scratch harness for tuning desk-scale runs; not part of the deliverable.
use std::time::Instant;

use opsum_core::corpus::{generate_desk_corpus, train_tokenizer, RatingScale, DESK_ASPECTS};
use opsum_core::induction::{cluster_purity, probe_accuracy, train_induction, InductionConfig};
use opsum_core::synthesis::infer_plans;

fn main() {
    let stage = std::env::args().nth(1).unwrap_or_else(|| "induce".into());
    let t0 = Instant::now();
    let entities: usize = std::env::var("ENT").map(|s| s.parse().unwrap()).unwrap_or(60);
    let n_train = entities * 12;
    let desk = generate_desk_corpus(entities, 12, 17);
    let mut train: Vec<_> = desk.records[..n_train].to_vec();
    if std::env::var("FLAT").is_ok() {
        for r in &mut train {
            r.rating = 4;
        }
    }
    let texts: Vec<&str> = train.iter().map(|r| r.text.as_str()).collect();
    let vocab = train_tokenizer(&texts, 4000);
    println!(
        "[{:6.1}s] corpus {} reviews, vocab {}",
        t0.elapsed().as_secs_f64(),
        n_train,
        vocab.size()
    );

    let cfg = InductionConfig {
        lr: std::env::var("LR").map(|s| s.parse().unwrap()).unwrap_or(1e-3),
        warmup_steps: std::env::var("WU").map(|s| s.parse().unwrap()).unwrap_or(100),
        max_epochs: std::env::var("EP").map(|s| s.parse().unwrap()).unwrap_or(30),
        negatives: std::env::var("NEG").map(|s| s.parse().unwrap()).unwrap_or(5),
        batch_size: std::env::var("BS").map(|s| s.parse().unwrap()).unwrap_or(16),
        dropout: std::env::var("DO").map(|s| s.parse().unwrap()).unwrap_or(0.0),
        lambda: std::env::var("LAM").map(|s| s.parse().unwrap()).unwrap_or(0.1),
        hidden: std::env::var("HID").map(|s| s.parse().unwrap()).unwrap_or(64),
        k_aspects: std::env::var("KA").map(|s| s.parse().unwrap()).unwrap_or(16),
        emb_init: std::env::var("EMB").map(|s| s.parse().unwrap()).unwrap_or(2.0),
        ..InductionConfig::default()
    };
    let seed: u64 = std::env::var("SEED").map(|s| s.parse().unwrap()).unwrap_or(0);
    let (model, report) = train_induction(&train, &vocab, RatingScale::OneToFive, &cfg, seed).unwrap();
    println!(
        "[{:6.1}s] induction best epoch {} initial {:.3} epochs {:?}",
        t0.elapsed().as_secs_f64(),
        report.best_epoch,
        report.initial_loss,
        report.epoch_losses.iter().step_by(10).map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
    );

    // Criterion 7 measurements on the training corpus.
    let mut assignments = Vec::new();
    let mut aspect_labels = Vec::new();
    let mut sent_labels = Vec::new();
    let mut h_a_feats = Vec::new();
    let mut h_s_feats = Vec::new();
    for (rec, side) in train.iter().zip(&desk.sidecar[..n_train]) {
        let toks = vocab.tokenize(&rec.text);
        let enc = model.encode(&toks);
        let plan = model.infer_plan(&toks);
        let argmax = plan
            .p_a
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assignments.push(argmax);
        let planted = side.planted_aspects[0].as_str();
        aspect_labels.push(DESK_ASPECTS.iter().position(|(n, _)| *n == planted).unwrap());
        sent_labels.push(side.planted_sentiment as usize);
        h_a_feats.push(enc.h_a.clone());
        h_s_feats.push(enc.h_s.clone());
    }
    let mut hist = vec![0usize; cfg.k_aspects];
    for &a in &assignments {
        hist[a] += 1;
    }
    println!("assignment histogram: {hist:?}");
    for k in 0..cfg.k_aspects {
        if hist[k] == 0 {
            continue;
        }
        let members: Vec<usize> =
            (0..assignments.len()).filter(|&i| assignments[i] == k).collect();
        let mut asp = vec![0usize; DESK_ASPECTS.len()];
        let mut pos = 0usize;
        let mut toks = 0usize;
        for &i in &members {
            asp[aspect_labels[i]] += 1;
            pos += sent_labels[i];
            toks += vocab.tokenize(&train[i].text).len();
        }
        let maj = asp.iter().max().unwrap();
        println!(
            "  cluster {k:2}: n={:3} maj_aspect {:.2} pos {:.2} mean_toks {:.1} asp {asp:?}",
            members.len(),
            *maj as f64 / members.len() as f64,
            pos as f64 / members.len() as f64,
            toks as f64 / members.len() as f64
        );
    }
    let purity = cluster_purity(&assignments, &aspect_labels);
    {
        let mut max_p = 0.0;
        let mut ent = 0.0;
        for (rec, _) in train.iter().zip(&desk.sidecar[..n_train]) {
            let toks = vocab.tokenize(&rec.text);
            let plan = model.infer_plan(&toks);
            max_p += plan.p_a.iter().cloned().fold(f64::MIN, f64::max);
            ent -= plan.p_a.iter().map(|p| if *p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>();
        }
        let n = train.len() as f64;
        println!("routing: mean max p_a {:.3} mean entropy {:.3} (uniform {:.3})", max_p / n, ent / n, (cfg.k_aspects as f64).ln());
        // k-means on h_a: the purity a perfect router could reach.
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut krng = rand::rngs::StdRng::seed_from_u64(3);
        let dim = h_a_feats[0].rows();
        let mut order: Vec<usize> = (0..h_a_feats.len()).collect();
        order.shuffle(&mut krng);
        let k = cfg.k_aspects;
        let mut cent: Vec<Vec<f64>> = order[..k].iter().map(|&i| h_a_feats[i].data().to_vec()).collect();
        let mut assign = vec![0usize; h_a_feats.len()];
        for _ in 0..25 {
            for (i, f) in h_a_feats.iter().enumerate() {
                let mut best = (f64::MAX, 0usize);
                for (c, ce) in cent.iter().enumerate() {
                    let d: f64 = f.data().iter().zip(ce).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                assign[i] = best.1;
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, f) in h_a_feats.iter().enumerate() {
                counts[assign[i]] += 1;
                for (s, v) in sums[assign[i]].iter_mut().zip(f.data()) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for s in &mut sums[c] {
                        *s /= counts[c] as f64;
                    }
                    cent[c] = sums[c].clone();
                }
            }
        }
        println!("kmeans purity on h_a: {:.3}", cluster_purity(&assign, &aspect_labels));
    }
    let aspect_from_ha = probe_accuracy(&h_a_feats, &aspect_labels, DESK_ASPECTS.len(), 5);
    let aspect_from_hs = probe_accuracy(&h_s_feats, &aspect_labels, DESK_ASPECTS.len(), 5);
    let concat: Vec<_> = h_a_feats
        .iter()
        .zip(&h_s_feats)
        .map(|(a, s)| {
            let mut v = a.data().to_vec();
            v.extend_from_slice(s.data());
            opsum_core::tensor::Tensor::from_vec(v.len(), 1, v)
        })
        .collect();
    let aspect_from_h = probe_accuracy(&concat, &aspect_labels, DESK_ASPECTS.len(), 5);
    let bow: Vec<_> = train
        .iter()
        .map(|r| {
            let mut v = vec![0.0; vocab.size()];
            for t in vocab.tokenize(&r.text) {
                v[t as usize] += 1.0;
            }
            opsum_core::tensor::Tensor::from_vec(v.len(), 1, v)
        })
        .collect();
    let aspect_from_bow = probe_accuracy(&bow, &aspect_labels, DESK_ASPECTS.len(), 5);
    println!(
        "aspect probes: h_a {aspect_from_ha:.3} h_s {aspect_from_hs:.3} concat {aspect_from_h:.3} bow {aspect_from_bow:.3}"
    );
    let pa = probe_accuracy(&h_a_feats, &sent_labels, 2, 5);
    let ps = probe_accuracy(&h_s_feats, &sent_labels, 2, 5);
    println!(
        "[{:6.1}s] purity {purity:.3} probe(h_a) {pa:.3} probe(h_s) {ps:.3} gap {:.3}",
        t0.elapsed().as_secs_f64(),
        ps - pa
    );

    if stage == "alpha" {
        let plans = infer_plans(&train, &vocab, &model);
        let base = opsum_core::synthesis::SynthesisConfig { seed: 7, n_reviews: 4, ..Default::default() };
        let rows =
            opsum_core::eval::alpha_study(&train, &plans, &vocab, &base, &[1.0, 10.0, 100.0], 400)
                .unwrap();
        for r in &rows {
            println!("[{:6.1}s] alpha {:>6.1}: r1 {:.4}", t0.elapsed().as_secs_f64(), r.alpha, r.r1);
        }
    }
}
