mod common;

use graph_ood::config::ProtocolConfig;
use graph_ood::graph::{homophily_measures, Graph};
use graph_ood::harness::{
    make_static_tasks, make_temporal_tasks, run_lifelong, run_task, sweep_alpha, sweep_q,
    GoodSettings, PipelineConfig, StreamOrigin, TrainSettings,
};
use graph_ood::io::{synth_generate, SynthConfig};
use graph_ood::models::{BackboneKind, HeadConfig, HeadKind};
use graph_ood::scores::ScorerConfig;
use graph_ood::thresholds::ThresholdConfig;

fn pipeline(kind: BackboneKind, head: HeadKind, scorer: ScorerConfig, threshold: ThresholdConfig) -> PipelineConfig {
    PipelineConfig {
        backbone: common::backbone(kind, 16),
        head: HeadConfig::new(head),
        train: TrainSettings {
            epochs: 60,
            learning_rate: 0.02,
            class_weighting: true,
        },
        scorer,
        good: Some(GoodSettings::tuned(vec![0.0, 0.5, 1.0])),
        threshold,
    }
}

fn msp_pipeline() -> PipelineConfig {
    pipeline(
        BackboneKind::Gcn,
        HeadKind::SoftmaxCe,
        ScorerConfig::Msp,
        ThresholdConfig::Naive { delta: 0.5 },
    )
}

fn small_benchmark(seed: u64) -> Graph<f64> {
    let mut cfg = common::benchmark(seed);
    cfg.num_vertices = 250;
    cfg.p_in = 0.08;
    cfg.p_out = 0.004;
    cfg.separation = 3.0;
    synth_generate(&cfg).unwrap()
}

fn yearly(seed: u64) -> Graph<f64> {
    let mut cfg = common::benchmark(seed);
    cfg.num_vertices = 300;
    cfg.num_years = 3;
    synth_generate(&cfg).unwrap()
}

#[test]
fn temporal_stream_structure() {
    let g = yearly(3);
    let years = g.timestamps().unwrap();
    let stream = make_temporal_tasks(&g, 2000).unwrap();
    assert_eq!(stream.origin, StreamOrigin::Temporal);
    assert_eq!(stream.tasks.len(), 2);
    let mut previous_known: Vec<usize> = Vec::new();
    for (i, task) in stream.tasks.iter().enumerate() {
        let t_train = 2000 + i as i64;
        let t_eval = t_train + 1;
        // Inductive: the model never sees a vertex from the evaluation year.
        let train_years = task.train_graph.timestamps().unwrap();
        assert!(train_years.iter().all(|&y| y <= t_train));
        assert_eq!(task.train_graph.num_vertices(), years.iter().filter(|&&y| y <= t_train).count());
        let eval_years = task.eval_graph.timestamps().unwrap();
        assert!(eval_years.iter().all(|&y| y <= t_eval));
        for &v in &task.train_map {
            assert!(eval_years[v] <= t_train);
        }
        for (&v, &ood) in task.eval_vertices.iter().zip(&task.ood_truth) {
            assert_eq!(eval_years[v], t_eval);
            let label = task.eval_graph.labels()[v];
            assert_eq!(ood, !task.known_classes.contains(&label));
        }
        // Known classes only grow.
        assert!(previous_known.iter().all(|c| task.known_classes.contains(c)));
        previous_known = task.known_classes.clone();
        assert!(!task.known_classes.contains(&4));
    }
    // The planted class only appears in the last year, so only the last
    // task has OOD vertices.
    assert!(stream.tasks[0].ood_truth.iter().all(|&t| !t));
    let last = &stream.tasks[1];
    let ood = last.ood_truth.iter().filter(|&&t| t).count();
    assert_eq!(ood, g.labels().iter().filter(|&&y| y == 4).count());

    let report = run_lifelong(&stream, &msp_pipeline(), 1, None).unwrap();
    assert_eq!(report.tasks.len(), 2);
    assert!(report.tasks[0].auroc.is_none());
    assert!(report.tasks[1].auroc.is_some());
    assert_eq!(report.aggregate.auroc_excluded_tasks, 1);
    assert!(make_temporal_tasks(&g, 2002).is_err());
}

#[test]
fn static_tasks_hold_out_each_class() {
    let g = small_benchmark(2);
    let stream = make_static_tasks(&g, &[0, 4], [0.6, 0.2, 0.2], 9).unwrap();
    for (task, holdout) in stream.tasks.iter().zip([0, 4]) {
        assert!(task.train_graph.labels().iter().all(|&y| y != holdout));
        assert!(!task.known_classes.contains(&holdout));
        assert_eq!(task.eval_graph.num_vertices(), g.num_vertices());
        for (&v, &ood) in task.eval_vertices.iter().zip(&task.ood_truth) {
            assert_eq!(ood, g.labels()[v] == holdout);
            assert!(!task.train_map.contains(&v));
        }
        for (&v, &ood) in task.tuning_vertices.iter().zip(&task.tuning_truth) {
            assert_eq!(ood, g.labels()[v] == holdout);
        }
        // Per-class rounding keeps the test share within one vertex per class.
        assert!(task.eval_vertices.len().abs_diff(50) <= 5);
    }
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let g = small_benchmark(4);
    let stream = make_static_tasks(&g, &[1, 4], [0.6, 0.2, 0.2], 2).unwrap();
    let cfg = pipeline(
        BackboneKind::Gcn,
        HeadKind::SoftmaxCe,
        ScorerConfig::Odin {
            temperature: 1000.0,
            epsilon: 0.001,
        },
        ThresholdConfig::OpenWrf {
            q: 0.1,
            hidden_dim: 16,
            epochs: 50,
            learning_rate: 0.01,
            score_feature: true,
        },
    );
    let a = run_lifelong(&stream, &cfg, 5, Some(1)).unwrap().to_json();
    let b = run_lifelong(&stream, &cfg, 5, Some(3)).unwrap().to_json();
    assert_eq!(a, b);
    let c = run_lifelong(&stream, &cfg, 6, Some(1)).unwrap().to_json();
    assert_ne!(a, c);
}

#[test]
fn every_threshold_rule_runs() {
    let g = small_benchmark(5);
    let stream = make_static_tasks(&g, &[4], [0.6, 0.2, 0.2], 1).unwrap();
    let cases = [
        (HeadKind::SoftmaxCe, ScorerConfig::Msp, ThresholdConfig::Openwgl),
        (
            HeadKind::SigmoidBceWeighted,
            ScorerConfig::Gdoc,
            ThresholdConfig::Gdoc {
                alpha_doc: 3.0,
                delta_min: 0.5,
            },
        ),
        (HeadKind::IsomaxPlus, ScorerConfig::Isomax, ThresholdConfig::Naive { delta: 0.5 }),
    ];
    for kind in BackboneKind::ALL {
        for (head, scorer, threshold) in cases.clone() {
            let cfg = pipeline(kind, head, scorer, threshold);
            let out = run_task(&stream.tasks[0], &cfg, 3).unwrap();
            assert_eq!(out.decision.ood_mask.len(), stream.tasks[0].eval_vertices.len());
            let r = &out.report;
            assert!((0.0..=1.0).contains(&r.micro_f1));
            assert!(r.auroc.is_some());
            assert!(r.id_accuracy.unwrap() > 0.5, "{kind:?}/{head:?}: {:?}", r.id_accuracy);
        }
    }
}

#[test]
fn sweeps_cover_their_grids() {
    let g = small_benchmark(6);
    let stream = make_static_tasks(&g, &[4], [0.6, 0.2, 0.2], 1).unwrap();
    let cfg = msp_pipeline();
    let alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let curve = sweep_alpha(&stream, &cfg, &alphas, 2).unwrap();
    assert_eq!(curve.points.len(), 11);
    assert!(curve.points.iter().all(|p| (0.0..=1.0).contains(&p.value)));
    let grid = [0.1, 0.2, 0.3];
    let curves = sweep_q(&stream, &cfg, &grid, &grid, 2).unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0].method, "open_wrf");
    assert_eq!(curves[1].method, "naive");
    assert!(curves.iter().all(|c| c.points.len() == 3));
}

#[test]
fn incompatible_pipelines_rejected() {
    let g = small_benchmark(7);
    let stream = make_static_tasks(&g, &[4], [0.6, 0.2, 0.2], 1).unwrap();
    let bad = [
        pipeline(BackboneKind::Gcn, HeadKind::SoftmaxCe, ScorerConfig::Gdoc, ThresholdConfig::Naive { delta: 0.5 }),
        pipeline(
            BackboneKind::Gcn,
            HeadKind::SoftmaxCe,
            ScorerConfig::Msp,
            ThresholdConfig::Gdoc {
                alpha_doc: 3.0,
                delta_min: 0.5,
            },
        ),
        pipeline(BackboneKind::Gcn, HeadKind::IsomaxPlus, ScorerConfig::Isomax, ThresholdConfig::Openwgl),
    ];
    for cfg in bad {
        assert!(run_lifelong(&stream, &cfg, 0, None).unwrap_err().is_config_error());
    }
}

#[test]
fn protocol_builds_streams() {
    let g = yearly(1);
    let p = ProtocolConfig::StaticLoco {
        holdouts: None,
        fractions: [0.6, 0.2, 0.2],
    };
    assert_eq!(p.build(&g, 0).unwrap().tasks.len(), 5);
    assert_eq!(ProtocolConfig::Temporal { t0: 2000 }.build(&g, 0).unwrap().tasks.len(), 2);
}

fn block_edges(g: &Graph<f64>) -> (usize, usize, usize, usize) {
    let labels = g.labels();
    let counts = g.class_counts();
    let intra_pairs: usize = counts.iter().map(|c| c * (c - 1) / 2).sum();
    let n = g.num_vertices();
    let inter_pairs = n * (n - 1) / 2 - intra_pairs;
    let mut intra = 0;
    let mut inter = 0;
    for (u, v) in g.canonical_edges() {
        if labels[u] == labels[v] {
            intra += 1;
        } else {
            inter += 1;
        }
    }
    (intra, intra_pairs, inter, inter_pairs)
}

fn within_three_se(hits: usize, trials: usize, p: f64) -> bool {
    let freq = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (freq - p).abs() <= 3.0 * se
}

#[test]
fn generator_edge_frequencies_match_probabilities() {
    for seed in 0..10 {
        let cfg = SynthConfig {
            num_vertices: 2000,
            num_classes: 4,
            p_in: 0.01,
            p_out: 0.001,
            feature_dim: 4,
            separation: 1.0,
            noise_std: 1.0,
            ood_class_id: None,
            ood_fraction: None,
            num_years: 0,
            first_year: 2000,
            seed,
        };
        let g: Graph<f64> = synth_generate(&cfg).unwrap();
        let (intra, intra_pairs, inter, inter_pairs) = block_edges(&g);
        assert!(within_three_se(intra, intra_pairs, 0.01), "seed {seed}: {intra}/{intra_pairs}");
        assert!(within_three_se(inter, inter_pairs, 0.001), "seed {seed}: {inter}/{inter_pairs}");
    }
}

#[test]
fn equal_probabilities_give_baseline_homophily() {
    let cfg = SynthConfig {
        num_vertices: 1500,
        num_classes: 3,
        p_in: 0.01,
        p_out: 0.01,
        feature_dim: 3,
        separation: 1.0,
        noise_std: 1.0,
        ood_class_id: Some(2),
        ood_fraction: Some(0.2),
        num_years: 0,
        first_year: 2000,
        seed: 3,
    };
    let g: Graph<f64> = synth_generate(&cfg).unwrap();
    let n = g.num_vertices() as f64;
    let counts = g.class_counts();
    let intra_pairs: f64 = counts.iter().map(|&c| (c * (c - 1) / 2) as f64).sum();
    let expected = intra_pairs / (n * (n - 1.0) / 2.0);
    let r = homophily_measures(&g).unwrap();
    assert!((r.graph_level - expected).abs() < 0.01, "{} vs {expected}", r.graph_level);
    assert!(r.class_insensitive.unwrap() < 0.02);
}
