//! One pass/fail line per acceptance criterion.
//!
//! Criteria 1 and 2 need the Cora citation graph. Point `GRAPH_OOD_CORA`
//! at a converted bundle or at a directory holding the LINQS `cora.content`
//! and `cora.cites` files (default: `<workspace>/data/cora`). Without it
//! they are reported as FAIL with the reason. The process exits non-zero
//! only when a criterion whose inputs are available fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::thread;
use std::time::{Duration, Instant};

use graph_ood::autodiff::{finite_diff_check, Tape, Var};
use graph_ood::config::ProtocolConfig;
use graph_ood::good::{good_aggregate, GoodConfig};
use graph_ood::graph::{build_graph, homophily_measures, r_hop_mask};
use graph_ood::harness::{
    make_static_tasks, metric_auroc, run_lifelong, sweep_alpha, sweep_q, EvalReport, GoodSettings,
    PipelineConfig, TrainSettings,
};
use graph_ood::io::{convert_linqs, load_bundle, save_bundle, synth_generate, ConvertOptions, SynthConfig};
use graph_ood::models::{
    bce_class_weights, isomax_logits, ncontrast_on_tape, softmax_ce_on_tape, structure_operator, train,
    weighted_bce_on_tape, BackboneConfig, BackboneKind, HeadConfig, HeadKind, ModelState, TrainConfig,
};
use graph_ood::scores::{score_msp, score_odin, score_with_model, OdinConfig, ScorerConfig};
use graph_ood::tensor::DenseMatrix;
use graph_ood::thresholds::{gdoc_thresholds, ThresholdConfig};
use graph_ood::{Graph64, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Inputs missing from this environment.
    Unavailable(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// Criterion 1 and 2: Cora.

const CORA_GRAPH_LEVEL: f64 = 0.810;
const CORA_VERTEX_LEVEL: f64 = 0.825;
const CORA_CLASS_INSENSITIVE: f64 = 0.766;
const HOMOPHILY_TOL: f64 = 0.005;
const CORA_INTER: usize = 2006;
const CORA_INTRA: usize = 8550;
const HOMOPHILY_BUDGET: Duration = Duration::from_secs(1);

const CORA_ID_ACCURACY: f64 = 0.89;
const CORA_ID_ACCURACY_TOL: f64 = 0.03;
const CORA_AUROC: f64 = 0.84;
const CORA_AUROC_TOL: f64 = 0.05;
const GOOD_SLACK: f64 = 0.01;
const GOOD_MIN_AUROC: f64 = 0.85;
const CORA_BUDGET: Duration = Duration::from_secs(15 * 60);

fn cora_dir() -> PathBuf {
    std::env::var_os("GRAPH_OOD_CORA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora"))
}

fn load_cora() -> std::result::Result<Graph64, String> {
    let dir = cora_dir();
    if dir.join("meta.json").exists() {
        return load_bundle(&dir).map_err(|e| e.to_string());
    }
    let (content, cites) = (dir.join("cora.content"), dir.join("cora.cites"));
    if content.exists() && cites.exists() {
        return convert_linqs(&content, &cites, ConvertOptions::default())
            .map(|c| c.graph)
            .map_err(|e| e.to_string());
    }
    Err(format!(
        "Cora not found at {} (set GRAPH_OOD_CORA to a bundle or LINQS directory)",
        dir.display()
    ))
}

fn criterion_1(cora: &std::result::Result<Graph64, String>) -> Outcome {
    let g = match cora {
        Ok(g) => g,
        Err(e) => return Outcome::Unavailable(e.clone()),
    };
    let start = Instant::now();
    let r = match homophily_measures(g) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let ci = r.class_insensitive.unwrap_or(f64::NAN);
    let ok = (r.graph_level - CORA_GRAPH_LEVEL).abs() <= HOMOPHILY_TOL
        && (r.vertex_level - CORA_VERTEX_LEVEL).abs() <= HOMOPHILY_TOL
        && (ci - CORA_CLASS_INSENSITIVE).abs() <= HOMOPHILY_TOL
        && r.inter_class_edges == CORA_INTER
        && r.intra_class_edges == CORA_INTRA
        && elapsed < HOMOPHILY_BUDGET;
    verdict(
        ok,
        format!(
            "graph {:.4} vertex {:.4} class-insensitive {:.4} inter/intra {}/{} in {:.3}s",
            r.graph_level,
            r.vertex_level,
            ci,
            r.inter_class_edges,
            r.intra_class_edges,
            elapsed.as_secs_f64()
        ),
    )
}

fn cora_pipeline(good: Option<GoodSettings>) -> PipelineConfig {
    PipelineConfig {
        backbone: BackboneConfig::new(BackboneKind::Gcn, 2, 64, 0.5),
        head: HeadConfig::new(HeadKind::SoftmaxCe),
        train: TrainSettings {
            epochs: 200,
            learning_rate: 0.01,
            class_weighting: true,
        },
        scorer: ScorerConfig::Odin {
            temperature: 1000.0,
            epsilon: 0.001,
        },
        good,
        threshold: ThresholdConfig::Naive { delta: 0.5 },
    }
}

fn criterion_2(cora: &std::result::Result<Graph64, String>) -> Outcome {
    let g = match cora {
        Ok(g) => g,
        Err(e) => return Outcome::Unavailable(e.clone()),
    };
    let start = Instant::now();
    let run = || -> Result<(EvalReport, EvalReport)> {
        let holdouts: Vec<usize> = (0..g.num_classes()).collect();
        let stream = make_static_tasks(g, &holdouts, [0.6, 0.2, 0.2], 0)?;
        let base = run_lifelong(&stream, &cora_pipeline(None), 0, None)?;
        let good = GoodSettings::tuned(graph_ood::harness::default_alpha_grid());
        let tuned = run_lifelong(&stream, &cora_pipeline(Some(good)), 0, None)?;
        Ok((base, tuned))
    };
    let (base, tuned) = match run() {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let acc = base.aggregate.id_accuracy.unwrap_or(f64::NAN);
    let auroc = base.aggregate.auroc.unwrap_or(f64::NAN);
    let good = tuned.aggregate.auroc.unwrap_or(f64::NAN);
    let ok = (acc - CORA_ID_ACCURACY).abs() <= CORA_ID_ACCURACY_TOL
        && (auroc - CORA_AUROC).abs() <= CORA_AUROC_TOL
        && good >= auroc - GOOD_SLACK
        && good >= GOOD_MIN_AUROC
        && elapsed < CORA_BUDGET;
    verdict(
        ok,
        format!(
            "ID accuracy {acc:.3}, ODIN AUROC {auroc:.3}, GOOD AUROC {good:.3} in {:.0}s",
            elapsed.as_secs_f64()
        ),
    )
}

// Criterion 3: gradients.

const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn random_graph(n: usize, d: usize, k: usize, seed: u64) -> Graph64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..n {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    let features = random_matrix(n, d, &mut rng);
    let labels = (0..n).map(|v| if v < k { v } else { rng.gen_range(0..k) }).collect();
    build_graph(n, &edges, features, labels, k, None).unwrap()
}

fn one_hot(targets: &[usize], k: usize) -> DenseMatrix<f64> {
    let mut m = DenseMatrix::zeros(targets.len(), k);
    for (i, &t) in targets.iter().enumerate() {
        m[(i, t)] = 1.0;
    }
    m
}

fn trained(g: &Graph64, kind: BackboneKind, head: HeadKind, epochs: usize) -> ModelState<f64> {
    let mut b = BackboneConfig::new(kind, 2, 6, 0.0);
    b.contrastive.batch_size = 8;
    let all = vec![true; g.num_vertices()];
    train(g, &b, &HeadConfig::new(head), &TrainConfig::new(epochs, 0.01, 5), &all)
        .unwrap()
        .state
}

fn criterion_3() -> Outcome {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut check = |name: &str, inputs: &[DenseMatrix<f64>], build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>| {
        let r = finite_diff_check(inputs, GRAD_STEP, GRAD_TOL, build).unwrap();
        match worst.iter_mut().find(|(n, _)| n == name) {
            Some(w) => w.1 = w.1.max(r.max_relative_error),
            None => worst.push((name.to_string(), r.max_relative_error)),
        }
    };
    let targets = [0usize, 2, 1, 1, 0, 2, 2];
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check("softmax-ce", &[random_matrix(7, 3, &mut rng)], &|t, v| softmax_ce_on_tape(t, v[0], &targets));
        let w = bce_class_weights(&targets, 3).weights;
        let y = one_hot(&targets, 3);
        check("weighted-bce", &[random_matrix(7, 3, &mut rng)], &|t, v| weighted_bce_on_tape(t, v[0], &y, &w));
        let iso = [random_matrix(7, 4, &mut rng), random_matrix(3, 4, &mut rng), DenseMatrix::scalar(0.8)];
        check("isomax+", &iso, &|t, v| {
            let logits = isomax_logits(t, v[0], v[1], v[2], 10.0)?;
            softmax_ce_on_tape(t, logits, &targets)
        });
        let g = random_graph(9, 3, 2, seed);
        let mask = r_hop_mask(&g, 2).unwrap();
        let batch: Vec<usize> = (0..9).collect();
        check("ncontrast", &[random_matrix(9, 4, &mut rng)], &|t, v| ncontrast_on_tape(t, v[0], &mask, 0.5, &batch));

        for (kind, name) in [(BackboneKind::Gcn, "gcn-forward"), (BackboneKind::SageMean, "sage-forward")] {
            let g = random_graph(10, 3, 3, seed);
            let model = trained(&g, kind, HeadKind::SoftmaxCe, 3);
            let labels = g.labels().to_vec();
            let mut inputs = model.parameters();
            let np = inputs.len();
            inputs.push(g.features().clone());
            let s = structure_operator(kind, &g).expect("message passing");
            inputs.push(DenseMatrix::row_vector(s.values().to_vec()));
            check(name, &inputs, &|t, v| {
                let (_, logits) = model.forward_with_nodes(t, &v[..np], &g, v[np], Some(v[np + 1]), 1.0)?;
                softmax_ce_on_tape(t, logits, &labels)
            });
        }
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(max <= GRAD_TOL, format!("max relative error: {detail}"))
}

// Criterion 4: oracles.

const ORACLE_TOL: f64 = 1e-12;
const ORACLE_INSTANCES: usize = 100;

fn pairwise_auroc(scores: &[f64], truth: &[bool]) -> f64 {
    let (mut hits, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if truth[i] && !truth[j] {
                pairs += 1.0;
                hits += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    hits / pairs
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut auroc_err: f64 = 0.0;
    for instance in 0..ORACLE_INSTANCES {
        let n = rng.gen_range(2..=200);
        let levels = if instance % 2 == 0 { 5 } else { 1_000_000 };
        let mut truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        truth[0] = true;
        truth[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        auroc_err = auroc_err.max((metric_auroc(&scores, &truth).unwrap() - pairwise_auroc(&scores, &truth)).abs());
    }
    let mut gdoc_err: f64 = 0.0;
    for _ in 0..ORACLE_INSTANCES {
        let m = rng.gen_range(1..=60);
        let p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (alpha, delta_min) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..0.6));
        let sigma = (p.iter().map(|x| (1.0 - x).powi(2)).sum::<f64>() / m as f64).sqrt();
        let direct = f64::max(delta_min, 1.0 - alpha * sigma);
        let got = gdoc_thresholds(&DenseMatrix::column_vector(p), &vec![0; m], alpha, delta_min)
            .unwrap()
            .thresholds[0];
        gdoc_err = gdoc_err.max((got - direct).abs());
    }
    verdict(
        auroc_err <= ORACLE_TOL && gdoc_err <= ORACLE_TOL,
        format!("AUROC max error {auroc_err:.1e}, gDOC max error {gdoc_err:.1e} over {ORACLE_INSTANCES} instances each"),
    )
}

// Criteria 5 and 6: synthetic benchmark.

const SEEDS: u64 = 10;
const MIN_CLASS_INSENSITIVE: f64 = 0.7;
const GOOD_MIN_WINS: usize = 9;
const WRF_MIN_WINS: usize = 8;

fn benchmark(seed: u64) -> SynthConfig {
    SynthConfig {
        num_vertices: 600,
        num_classes: 5,
        p_in: 0.05,
        p_out: 0.002,
        feature_dim: 16,
        separation: 1.5,
        noise_std: 1.0,
        ood_class_id: Some(4),
        ood_fraction: Some(0.1),
        num_years: 0,
        first_year: 2000,
        seed,
    }
}

/// Neighborhood sweep setting: Graph-MLP with the IsoMax+ head.
fn alpha_pipeline() -> PipelineConfig {
    PipelineConfig {
        backbone: BackboneConfig::new(BackboneKind::GraphMlp, 2, 32, 0.5),
        head: HeadConfig::new(HeadKind::IsomaxPlus),
        scorer: ScorerConfig::Isomax,
        threshold: ThresholdConfig::Naive { delta: 0.5 },
        ..benchmark_pipeline()
    }
}

/// Threshold sweep setting: GCN with ODIN.
fn benchmark_pipeline() -> PipelineConfig {
    PipelineConfig {
        backbone: BackboneConfig::new(BackboneKind::Gcn, 2, 32, 0.5),
        head: HeadConfig::new(HeadKind::SoftmaxCe),
        train: TrainSettings {
            epochs: 200,
            learning_rate: 0.01,
            class_weighting: true,
        },
        scorer: ScorerConfig::Odin {
            temperature: 1000.0,
            epsilon: 0.001,
        },
        good: None,
        threshold: ThresholdConfig::OpenWrf {
            q: 0.1,
            hidden_dim: 16,
            epochs: 200,
            learning_rate: 0.01,
            score_feature: true,
        },
    }
}

struct SeedResult {
    class_insensitive: f64,
    auroc_zero: f64,
    auroc_best: f64,
    wrf_area: f64,
    naive_area: f64,
}

fn benchmark_seed(seed: u64) -> Result<SeedResult> {
    let g: Graph64 = synth_generate(&benchmark(seed))?;
    let class_insensitive = homophily_measures(&g)?.class_insensitive.unwrap_or(0.0);
    let stream = make_static_tasks(&g, &[4], [0.6, 0.2, 0.2], seed)?;
    let alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let curve = sweep_alpha(&stream, &alpha_pipeline(), &alphas, seed)?;
    let auroc_zero = curve.points[0].value;
    let auroc_best = curve.points[1..].iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
    let curves = sweep_q(&stream, &benchmark_pipeline(), &grid, &grid, seed)?;
    Ok(SeedResult {
        class_insensitive,
        auroc_zero,
        auroc_best,
        wrf_area: curves[0].area(),
        naive_area: curves[1].area(),
    })
}

fn run_benchmark() -> Result<Vec<SeedResult>> {
    thread::scope(|s| {
        let handles: Vec<_> = (0..SEEDS).map(|seed| s.spawn(move || benchmark_seed(seed))).collect();
        handles.into_iter().map(|h| h.join().expect("seed thread")).collect()
    })
}

fn criterion_5(results: &[SeedResult]) -> Outcome {
    let homophilous = results.iter().all(|r| r.class_insensitive >= MIN_CLASS_INSENSITIVE);
    let wins = results.iter().filter(|r| r.auroc_best >= r.auroc_zero).count();
    let mean_gain = results.iter().map(|r| r.auroc_best - r.auroc_zero).sum::<f64>() / results.len() as f64;
    let min_ci = results.iter().map(|r| r.class_insensitive).fold(f64::INFINITY, f64::min);
    verdict(
        homophilous && wins >= GOOD_MIN_WINS && mean_gain > 0.0,
        format!(
            "best nonzero alpha >= alpha 0 in {wins}/{SEEDS} seeds, mean AUROC gain {mean_gain:+.4}, min class-insensitive homophily {min_ci:.3}"
        ),
    )
}

fn criterion_6(results: &[SeedResult]) -> Outcome {
    let wins = results.iter().filter(|r| r.wrf_area > r.naive_area).count();
    let mean = |f: fn(&SeedResult) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    verdict(
        wins >= WRF_MIN_WINS,
        format!(
            "open-wrf area > naive area in {wins}/{SEEDS} seeds (mean {:.4} vs {:.4})",
            mean(|r| r.wrf_area),
            mean(|r| r.naive_area)
        ),
    )
}

// Criterion 7: reductions and ranges.

fn criterion_7() -> Outcome {
    let mut odin_err: f64 = 0.0;
    let mut good_identity = true;
    let mut out_of_range = 0usize;
    let mut checked = 0usize;
    let scorers = [
        ScorerConfig::Msp,
        ScorerConfig::Odin {
            temperature: 1000.0,
            epsilon: 0.002,
        },
        ScorerConfig::Gdoc,
        ScorerConfig::Isomax,
    ];
    for kind in BackboneKind::ALL {
        for seed in 0..3 {
            let g = random_graph(15, 4, 3, seed);
            let model = trained(&g, kind, HeadKind::SoftmaxCe, 20);
            let odin = score_odin(&model, &g, &OdinConfig { temperature: 1.0, epsilon: 0.0 }).unwrap();
            let msp = score_msp(&model.predict(&g).unwrap().logits);
            for (a, b) in odin.as_slice().iter().zip(msp.as_slice()) {
                odin_err = odin_err.max((a - b).abs());
            }
            good_identity &= good_aggregate(&g, &msp, &GoodConfig::new(0.0).unwrap()).unwrap() == msp;
            for scorer in &scorers {
                let m = trained(&g, kind, scorer.required_head(), 15);
                let other = random_graph(12, 4, 3, seed + 100);
                for target in [&g, &other] {
                    let (s, _) = score_with_model(&m, target, scorer, &g).unwrap();
                    checked += s.len();
                    out_of_range += s.as_slice().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
                }
            }
        }
    }
    verdict(
        odin_err <= ORACLE_TOL && good_identity && out_of_range == 0,
        format!(
            "ODIN(T=1, eps=0) vs MSP max diff {odin_err:.1e}; GOOD(alpha=0) identity {good_identity}; {out_of_range}/{checked} scores outside [0, 1]"
        ),
    )
}

// Criterion 8: determinism of the `run` subcommand.

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let g: Graph64 = synth_generate(&SynthConfig {
        num_vertices: 200,
        ..benchmark(8)
    })
    .unwrap();
    save_bundle(&g, &root.join("data")).unwrap();
    let cfg = serde_json::json!({
        "dataset": "data",
        "protocol": serde_json::to_value(ProtocolConfig::StaticLoco { holdouts: None, fractions: [0.6, 0.2, 0.2] }).unwrap(),
        "pipeline": PipelineConfig {
            good: Some(GoodSettings::tuned(graph_ood::harness::default_alpha_grid())),
            train: TrainSettings { epochs: 50, learning_rate: 0.01, class_weighting: true },
            ..benchmark_pipeline()
        },
        "seed": 8
    });
    fs::write(root.join("run.json"), cfg.to_string()).unwrap();
    let mut reports = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = root.join(format!("out{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_graph-ood"))
            .args(["run", root.join("run.json").to_str().unwrap(), "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::Fail(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    verdict(
        reports[0] == reports[1],
        format!("two invocations ({} bytes) identical: {}", reports[0].len(), reports[0] == reports[1]),
    )
}

fn main() {
    let cora = load_cora();
    let benchmark = run_benchmark();
    let from_benchmark = |f: fn(&[SeedResult]) -> Outcome| match &benchmark {
        Ok(r) => f(r),
        Err(e) => Outcome::Fail(e.to_string()),
    };
    let outcomes = [
        ("homophily reproduction on Cora", criterion_1(&cora)),
        ("OOD detection on Cora", criterion_2(&cora)),
        ("gradient correctness", criterion_3()),
        ("oracle equivalence", criterion_4()),
        ("GOOD improvement on synthetic benchmark", from_benchmark(criterion_5)),
        ("Open-WRF robustness on synthetic benchmark", from_benchmark(criterion_6)),
        ("reductions and identities", criterion_7()),
        ("determinism of run", criterion_8()),
    ];
    let mut hard_failures = 0;
    for (i, (name, outcome)) in outcomes.iter().enumerate() {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d.clone()),
            Outcome::Fail(d) => {
                hard_failures += 1;
                ("FAIL", d.clone())
            }
            Outcome::Unavailable(d) => ("FAIL", format!("not run: {d}")),
        };
        println!("criterion {}: {tag} {name}: {detail}", i + 1);
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
