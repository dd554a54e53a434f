use std::path::PathBuf;

use fewnist::dataset::synth::{self, SynthConfig};
use fewnist::dataset::DigitPartition;
use fewnist::fewshot::{few_shot_session, ShotConfig};
use fewnist::network::Mlp;
use fewnist::rng::{train_seed, SeededRng};
use fewnist::trainer::{pretrain, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tag = args.get(1).cloned().unwrap_or_else(|| "v1".into());
    let variant = args.get(2).cloned().unwrap_or_else(|| "main".into());
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let n_shots: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);
    let shot_lr: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let fsp_lr: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(shot_lr);

    let dir = PathBuf::from(format!("/tmp/fewnist-probe/{tag}"));
    std::fs::create_dir_all(&dir).unwrap();

    let synth_cfg = SynthConfig::default();
    let (train, test) = synth::labeled_sets(&synth_cfg).unwrap();
    let partition = DigitPartition::default();
    let old_train = train.filter_by_digits(partition.pretrain_digits());
    let novel_train = train.filter_by_digits(partition.novel_digits());
    let old_test = test.filter_by_digits(partition.pretrain_digits());

    let ckpt = dir.join(format!("ckpt-{seed}.bin"));
    let mlp = if ckpt.exists() {
        Mlp::load(&ckpt).unwrap()
    } else {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut rng = SeededRng::new(train_seed(cfg.seed));
        let mut net = Mlp::default_sized(&mut rng);
        let t0 = std::time::Instant::now();
        let report = pretrain(&mut net, &old_train, Some(&old_test), &cfg, &mut rng).unwrap();
        eprintln!(
            "pretrain done in {:.1}s, last loss {:.3}, acc {:?}",
            t0.elapsed().as_secs_f64(),
            report.history.last().unwrap().loss,
            report.final_accuracy
        );
        net.save(&ckpt).unwrap();
        net
    };

    if variant == "eval" {
        let mut rng = SeededRng::new(fewnist::rng::eval_seed(seed));
        let acc = fewnist::eval::subset_accuracy(&mlp, &old_test, 1000, &mut rng).unwrap();
        println!("pretrain old-test acc seed={seed}: {acc:.4}");
        return;
    }

    if variant == "fsp" {
        use fewnist::fewshot::{
            fewshot_pretrain, FewshotPretrainConfig, FEWSHOT_PRETRAIN_FACTORS,
            FEWSHOT_PRETRAIN_INIT_STDS,
        };
        use fewnist::network::{ActivationSpec, DEFAULT_SHAPES};
        let fsp = FewshotPretrainConfig {
            shot: ShotConfig {
                learning_rate: fsp_lr,
                layer_lr_factors: FEWSHOT_PRETRAIN_FACTORS.to_vec(),
                seed,
                ..ShotConfig::default()
            },
            buffer_cap: 4,
            n_shots: 5000,
        };
        let mut rng = SeededRng::new(train_seed(seed));
        let mut net = Mlp::init(
            &DEFAULT_SHAPES,
            &FEWSHOT_PRETRAIN_INIT_STDS,
            ActivationSpec::default(),
            &mut rng,
        )
        .unwrap();
        let t0 = std::time::Instant::now();
        let report = fewshot_pretrain(&mut net, &old_train, Some(&old_test), &fsp, &mut rng).unwrap();
        println!(
            "fsp pretrain seed={seed}: acc {:?} in {:.1}s",
            report.final_accuracy,
            t0.elapsed().as_secs_f64()
        );
        let factors = match args.get(7).map(String::as_str).unwrap_or("frozen") {
            "t5" => FEWSHOT_PRETRAIN_FACTORS.to_vec(),
            "hybrid" => vec![0.0, 0.25, 1.0],
            _ => vec![0.0, 1.0, 1.0],
        };
        let shot_cfg = ShotConfig {
            learning_rate: shot_lr,
            layer_lr_factors: factors,
            seed,
            ..ShotConfig::default()
        };
        let results = few_shot_session(
            &mut net,
            &novel_train,
            &old_train,
            &shot_cfg,
            n_shots,
            &test,
            &partition,
            1000,
        )
        .unwrap();
        println!("shot  old    new    only   overall");
        for r in &results {
            if n_shots > 20 && r.shot % 10 != 0 && r.shot != 1 {
                continue;
            }
            println!(
                "{:>4}  {:.3}  {:.3}  {:.3}  {:.3}",
                r.shot, r.metrics.acc_old, r.metrics.acc_new, r.metrics.acc_only_new, r.metrics.acc_overall
            );
        }
        return;
    }

    if variant == "drift" {
        use fewnist::eval::Evaluator;
        use fewnist::fewshot::run_shot;
        use fewnist::rng::{eval_seed, shot_seed};
        let cfg = ShotConfig {
            learning_rate: shot_lr,
            layer_lr_factors: vec![1.0, 1.0, 1.0],
            seed,
            ..ShotConfig::default()
        };
        let mut net = mlp.clone();
        let w0: Vec<_> = net.weights.clone();
        let norms: Vec<f64> = w0
            .iter()
            .map(|w| w.data().iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut idx_a = novel_train.indices_of_digits(&[partition.novel_digits()[0]]);
        let mut idx_b = novel_train.indices_of_digits(&[partition.novel_digits()[1]]);
        let mut shot_rng = SeededRng::new(shot_seed(cfg.seed));
        let mut eval_rng = SeededRng::new(eval_seed(cfg.seed));
        shot_rng.shuffle(&mut idx_a);
        shot_rng.shuffle(&mut idx_b);
        let evaluator = Evaluator::new(&test, &partition, 1000).unwrap();
        println!("shot  d1      d2      d3      old    steps");
        for shot in 1..=n_shots {
            let sa = (novel_train.image(idx_a[shot - 1]), partition.novel_digits()[0]);
            let sb = (novel_train.image(idx_b[shot - 1]), partition.novel_digits()[1]);
            let recs = run_shot(&mut net, sa, sb, &old_train, &cfg, &mut shot_rng).unwrap();
            let m = evaluator.metrics(&net, shot, &mut eval_rng).unwrap();
            let drifts: Vec<f64> = net
                .weights
                .iter()
                .zip(&w0)
                .zip(&norms)
                .map(|((w, w0), n)| {
                    w.data()
                        .iter()
                        .zip(w0.data())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        / n
                })
                .collect();
            println!(
                "{:>4}  {:.4}  {:.4}  {:.4}  {:.3}  {}+{}",
                shot, drifts[0], drifts[1], drifts[2], m.acc_old, recs[0].steps, recs[1].steps
            );
        }
        return;
    }

    let factors = match variant.as_str() {
        "main" => vec![0.0, 1.0, 1.0],
        "no_freeze" => vec![1.0, 1.0, 1.0],
        "no_enrich" => vec![0.0, 1.0, 1.0],
        "reduced_lr" => vec![0.01, 1.0, 1.0],
        other => panic!("unknown variant {other}"),
    };
    let enrichment_count = if variant == "no_enrich" { 0 } else { 4 };
    let shot_cfg = ShotConfig {
        learning_rate: shot_lr,
        layer_lr_factors: factors,
        enrichment_count,
        seed,
        ..ShotConfig::default()
    };
    let mut net = mlp;
    let t1 = std::time::Instant::now();
    let results = few_shot_session(
        &mut net,
        &novel_train,
        &old_train,
        &shot_cfg,
        n_shots,
        &test,
        &partition,
        1000,
    )
    .unwrap();
    eprintln!("session in {:.1}s", t1.elapsed().as_secs_f64());
    println!("variant={variant} seed={seed}");
    println!("shot  old    new    only   overall  steps");
    for r in &results {
        if n_shots > 20 && r.shot % 10 != 0 && r.shot != 1 {
            continue;
        }
        println!(
            "{:>4}  {:.3}  {:.3}  {:.3}  {:.3}    {}+{} ({:?},{:?})",
            r.shot,
            r.metrics.acc_old,
            r.metrics.acc_new,
            r.metrics.acc_only_new,
            r.metrics.acc_overall,
            r.sub_shots[0].steps,
            r.sub_shots[1].steps,
            r.sub_shots[0].reason,
            r.sub_shots[1].reason
        );
    }
}
