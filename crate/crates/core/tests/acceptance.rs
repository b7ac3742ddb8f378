//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints its verdict; exits non-zero when any check fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dagsearch::data::{generate, SyntheticKind};
use dagsearch::graph::{connection_probability, from_json, to_json, validate, Graph, GraphLimits};
use dagsearch::hyperopt::{minimize, random_point, SearchSpace};
use dagsearch::ops::{
    edge_mutation, heredity, layer_mutation, random_graph, random_op, vertex_mutation, with_retrials, EdgeSampling,
    OperatorKind, RetrialOutcome,
};
use dagsearch::pipeline::{balanced_accuracy, cross_validate, split_train_test, train_composite, Dataset, EvalContext};
use dagsearch::report::{hpo_csv, parse_telemetry, telemetry_csv, TelemetryRow};
use dagsearch::rng::{Purpose, RngStream};
use dagsearch::run::{run_pipeline, RunOutcome};
use dagsearch::search::{SearchConfig, Status};
use dagsearch::zoo::{default_model_set, ModelKind, ModelRole, ModelSpec};
use nalgebra::DMatrix;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Verdict { name, pass, detail }
}

// Structural check written from the rules directly, without the library validator.
fn structural_faults(g: &Graph, limits: &GraphLimits) -> Vec<String> {
    let k = g.len();
    let edges = g.edges();
    let mut faults = Vec::new();
    if !(limits.min_vertices..=limits.max_vertices).contains(&k) {
        faults.push(format!("{k} vertices"));
    }
    if edges.iter().any(|&(i, j)| i >= j) {
        faults.push("edge not above the diagonal".into());
        return faults;
    }
    let mut depth = vec![1usize; k];
    for j in 0..k {
        for &(i, jj) in &edges {
            if jj == j {
                depth[j] = depth[j].max(depth[i] + 1);
            }
        }
    }
    if depth.as_slice() != g.depths() {
        faults.push("depths differ from longest path".into());
    }
    if depth.windows(2).any(|w| w[0] > w[1]) {
        faults.push("vertices not sorted by depth".into());
    }
    let layers = depth.iter().copied().max().unwrap_or(0);
    if !(limits.min_layers..=limits.max_layers).contains(&layers) {
        faults.push(format!("{layers} layers"));
    }
    if edges.iter().any(|&(i, j)| depth[i] == depth[j]) {
        faults.push("edge inside a layer".into());
    }
    let roles: Vec<ModelRole> = g.vertices().iter().map(|m| m.role()).collect();
    if roles[0] != ModelRole::Input || roles[1..].contains(&ModelRole::Input) {
        faults.push("input placement".into());
    }
    if roles[k - 1] != ModelRole::Classifier {
        faults.push("output is not a classifier".into());
    }
    for v in 0..k {
        let indeg = edges.iter().filter(|e| e.1 == v).count();
        let outdeg = edges.iter().filter(|e| e.0 == v).count();
        let ok = if v == 0 {
            indeg == 0 && outdeg > 0
        } else if v == k - 1 {
            indeg > 0 && outdeg == 0
        } else {
            indeg > 0 && outdeg > 0
        };
        if !ok {
            faults.push(format!("degree of vertex {v}"));
        }
        let parents: Vec<usize> = edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect();
        if roles[v].is_supervised() && parents.len() == 1 && roles[parents[0]].is_supervised() {
            faults.push(format!("vertex {v} fed by one supervised vertex"));
        }
    }
    faults
}

fn graph_invariants() -> Verdict {
    let start = Instant::now();
    let limits = GraphLimits::default();
    let models = default_model_set();
    let sampling = EdgeSampling::default();
    let mut produced: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut faults = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut deep = Vec::new();
        while deep.len() < 20 {
            if let Ok(g) = random_op(&limits, &models, &sampling, &mut rng) {
                if g.layer_count() >= 3 {
                    deep.push(g);
                }
            }
        }
        for n in 0..100 {
            let parent = deep[n % deep.len()].clone();
            let donor = deep[(n * 7 + 3) % deep.len()].clone();
            let outcomes: [(&str, RetrialOutcome); 5] = [
                (
                    "random",
                    with_retrials(limits.retrial_limit, &limits, |_| {
                        random_graph(&limits, &models, &sampling, &mut rng)
                    }),
                ),
                (
                    "vertex_mutation",
                    with_retrials(limits.retrial_limit, &limits, |_| vertex_mutation(&parent, &models, &mut rng)),
                ),
                ("edge_mutation", with_retrials(limits.retrial_limit, &limits, |_| edge_mutation(&parent, &mut rng))),
                (
                    "layer_mutation",
                    with_retrials(limits.retrial_limit, &limits, |_| {
                        layer_mutation(&parent, &models, &sampling, &mut rng)
                    }),
                ),
                (
                    "heredity",
                    with_retrials(limits.retrial_limit, &limits, |_| heredity(&parent, &donor, &sampling, &mut rng)),
                ),
            ];
            for (name, outcome) in outcomes {
                let entry = produced.entry(name).or_default();
                entry.0 += 1;
                if let RetrialOutcome::Accepted { graph, .. } = outcome {
                    entry.1 += 1;
                    let mut f = structural_faults(&graph, &limits);
                    f.extend(validate(&graph, &limits).into_iter().map(|v| v.to_string()));
                    faults.extend(f.into_iter().map(|x| format!("{name}: {x}")));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let summary: Vec<String> = produced.iter().map(|(k, (n, ok))| format!("{k} {ok}/{n}")).collect();
    verdict(
        "graph invariants",
        faults.is_empty() && secs < 30.0 && produced.values().all(|&(n, _)| n == 1000),
        format!("accepted {}; {} faults; {secs:.1}s", summary.join(", "), faults.len()),
    )
}

fn block_probabilities() -> Verdict {
    let sampling = EdgeSampling { p0: 0.3, gamma: 1.0, rho: 0.0 };
    let mut worst_err = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in 1..=6usize {
        for d2 in d + 1..=6 {
            let analytic = 0.3 * (1.0 + d as f64 - d2 as f64).exp();
            let engine = connection_probability(d, d2, 0.3, 1.0).unwrap();
            worst_err = worst_err.max((engine - analytic).abs());
            let n = 10_000;
            let hits = (0..n).filter(|_| sampling.sample(d, d2, &mut rng).unwrap()).count();
            let se = (analytic * (1.0 - analytic) / n as f64).sqrt();
            worst_z = worst_z.max((hits as f64 / n as f64 - analytic).abs() / se);
        }
    }
    verdict(
        "block probabilities",
        worst_err <= 1e-12 && worst_z <= 3.0,
        format!("max abs error {worst_err:.1e}, max |z| {worst_z:.2}"),
    )
}

fn desk_config(seed: u64) -> SearchConfig {
    SearchConfig { population_budget: 60, generations: 5, seed, ..SearchConfig::default() }
}

struct DeskRun {
    kind: SyntheticKind,
    seed: u64,
    outcome: RunOutcome,
    telemetry: String,
    secs: f64,
}

fn desk_run(kind: SyntheticKind, seed: u64) -> DeskRun {
    let data = generate(kind, 400, seed);
    let start = Instant::now();
    let outcome = run_pipeline(&data, &desk_config(seed)).expect("run completes");
    let telemetry = telemetry_csv(&outcome.search);
    DeskRun { kind, seed, outcome, telemetry, secs: start.elapsed().as_secs_f64() }
}

fn keep_best_monotone(runs: &[&DeskRun]) -> Verdict {
    let mut broken = Vec::new();
    for r in runs {
        let rows = parse_telemetry(&r.telemetry).expect("telemetry parses");
        let mut per_gen: BTreeMap<usize, f64> = BTreeMap::new();
        for row in rows.iter().filter(|row| row.status == "evaluated") {
            let e = per_gen.entry(row.generation).or_insert(f64::INFINITY);
            *e = e.min(row.fitness);
        }
        let bests: Vec<f64> = per_gen.values().copied().collect();
        if bests.len() < 2 || bests.windows(2).any(|w| w[1] > w[0]) {
            broken.push(format!("{:?}/{}: {bests:?}", r.kind, r.seed));
        }
    }
    verdict(
        "keep-best monotonicity",
        broken.is_empty(),
        format!("{} runs, {} violations {}", runs.len(), broken.len(), broken.join(" ")),
    )
}

fn fitness_decomposition(runs: &[&DeskRun]) -> Verdict {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for r in runs {
        let config = desk_config(r.seed);
        for ind in r.outcome.search.individuals.iter().filter(|i| i.status == Status::Evaluated) {
            let loss = if ind.carried {
                ind.loss
            } else {
                cross_validate(&ind.graph, &r.outcome.train, config.folds, None, ind.eval_seed).expect("retrains").loss
            };
            let complexity = ind.graph.len() + ind.graph.edges().len();
            let recomputed = loss + config.alpha * complexity as f64;
            worst = worst.max((recomputed - ind.fitness).abs()).max((loss - ind.loss).abs());
            checked += 1;
        }
    }
    verdict("fitness decomposition", worst <= 1e-12, format!("{checked} individuals, max deviation {worst:.1e}"))
}

fn recall_oracle(y_true: &[usize], y_pred: &[usize]) -> f64 {
    let mut recalls = Vec::new();
    for c in 0..=*y_true.iter().max().unwrap() {
        let members: Vec<usize> = (0..y_true.len()).filter(|&i| y_true[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let hits = members.iter().filter(|&&i| y_pred[i] == c).count();
        recalls.push(hits as f64 / members.len() as f64);
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

fn balanced_accuracy_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(2..6);
        let y_true: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let y_pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        worst = worst.max((balanced_accuracy(&y_true, &y_pred).unwrap() - recall_oracle(&y_true, &y_pred)).abs());
    }
    let hand = balanced_accuracy(&[0, 0, 0, 0, 1, 1, 1, 1], &[0, 0, 0, 1, 1, 1, 0, 0]).unwrap();
    verdict(
        "balanced accuracy oracle",
        worst <= 1e-12 && hand == 0.625,
        format!("max deviation {worst:.1e}, hand example {hand}"),
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn desk_accuracy(name: &'static str, runs: &[DeskRun], threshold: f64) -> Verdict {
    let accs: Vec<f64> = runs.iter().map(|r| r.outcome.test_balanced_accuracy).collect();
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let total: f64 = runs.iter().map(|r| r.secs).sum();
    let m = mean(&accs);
    let shown: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
    verdict(
        name,
        m >= threshold && total < 300.0,
        format!("mean {m:.3} over [{}], slowest run {slowest:.1}s, total {total:.1}s", shown.join(", ")),
    )
}

fn logistic_baseline(seed: u64) -> f64 {
    let data = generate(SyntheticKind::Xor, 400, seed);
    let config = desk_config(seed);
    let mut rng = RngStream::new(seed, Purpose::Split, 0, 0).rng();
    let (train, test) = split_train_test(&data, config.split_ratio, &mut rng).unwrap();
    let graph = Graph::from_edges(
        vec![ModelSpec::new(ModelKind::Input), ModelKind::LogisticRegression.default_spec()],
        &[(0, 1)],
    )
    .unwrap();
    let model =
        train_composite(&graph, &train.features, &train.labels, train.n_classes(), &EvalContext::new(seed, None))
            .unwrap();
    balanced_accuracy(&test.labels, &model.predict(&test.features).unwrap()).unwrap()
}

fn xor_composition(runs: &[DeskRun]) -> Verdict {
    let accs: Vec<f64> = runs.iter().map(|r| r.outcome.test_balanced_accuracy).collect();
    let baselines: Vec<f64> = runs.iter().map(|r| logistic_baseline(r.seed)).collect();
    let total: f64 = runs.iter().map(|r| r.secs).sum();
    let (m, b) = (mean(&accs), mean(&baselines));
    verdict(
        "xor search beats logistic baseline",
        m >= 0.90 && baselines.iter().all(|&x| x <= 0.60) && total < 300.0,
        format!(
            "search mean {m:.3}, baseline mean {b:.3} (max {:.3}), total {total:.1}s",
            baselines.iter().copied().fold(0.0, f64::max)
        ),
    )
}

fn operator_efficacy(runs: &[DeskRun]) -> Verdict {
    let mut wins = 0;
    let mut shown = Vec::new();
    for r in runs {
        let late: Vec<_> = r
            .outcome
            .search
            .individuals
            .iter()
            .filter(|i| i.generation >= 3 && i.is_evaluated() && !i.carried)
            .collect();
        let bred: Vec<f64> = late
            .iter()
            .filter(|i| i.provenance == OperatorKind::Heredity || i.provenance.is_mutation())
            .map(|i| i.fitness)
            .collect();
        let random: Vec<f64> =
            late.iter().filter(|i| i.provenance == OperatorKind::Random).map(|i| i.fitness).collect();
        let better = !bred.is_empty() && !random.is_empty() && mean(&bred) < mean(&random);
        wins += usize::from(better);
        shown.push(format!("{:.3} vs {:.3}", mean(&bred), mean(&random)));
    }
    verdict(
        "operator efficacy",
        wins >= 4,
        format!("offspring better in {wins}/{} seeds ({})", runs.len(), shown.join("; ")),
    )
}

fn quadratic(u: &[f64]) -> f64 {
    (u[0] - 0.27).powi(2) + 2.0 * (u[1] - 0.64).powi(2)
}

fn tuning(runs: &[&DeskRun]) -> Verdict {
    let mut tuned = 0;
    let mut regressions = 0;
    let mut max_proposals = 0;
    for r in runs {
        for t in &r.outcome.tuned {
            tuned += 1;
            if t.tuned_loss > t.default_loss {
                regressions += 1;
            }
            max_proposals = max_proposals.max(t.trials.iter().filter(|x| x.index > 0).count());
        }
    }
    let mut bho_wins = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = minimize(2, None, 40, 1024, &mut rng, |_, u| Some(quadratic(u)));
        max_proposals = max_proposals.max(trials.len());
        let bho = trials.iter().map(|t| t.loss).fold(f64::INFINITY, f64::min);
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let random = (0..40).map(|_| quadratic(&random_point(2, &mut rng))).fold(f64::INFINITY, f64::min);
        bho_wins += usize::from(bho < random);
    }
    verdict(
        "hyperparameter tuning",
        regressions == 0 && tuned > 0 && bho_wins >= 35 && max_proposals <= 40,
        format!("{tuned} tuned, {regressions} worse than default; gp beats random in {bho_wins}/50; max {max_proposals} proposals"),
    )
}

fn sorted_rows(text: &str) -> Vec<TelemetryRow> {
    let mut rows = parse_telemetry(text).unwrap();
    rows.sort_by_key(|r| r.id);
    rows
}

fn determinism() -> Verdict {
    let data = generate(SyntheticKind::Xor, 400, 9);
    let run = |workers| {
        let config = SearchConfig { workers, ..desk_config(9) };
        let o = run_pipeline(&data, &config).unwrap();
        (telemetry_csv(&o.search), hpo_csv(&o.tuned))
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let same_bytes = a == b;
    let same_rows = sorted_rows(&a.0) == sorted_rows(&c.0) && a.1 == c.1;
    verdict(
        "determinism",
        same_bytes && same_rows,
        format!("repeat byte-identical: {same_bytes}; 4 workers vs 1 identical: {same_rows}"),
    )
}

fn round_trips() -> Verdict {
    let limits = GraphLimits::default();
    let models = default_model_set();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut graph_faults = 0;
    for _ in 0..100 {
        let mut g = loop {
            if let Ok(g) = random_op(&limits, &models, &EdgeSampling::default(), &mut rng) {
                break g;
            }
        };
        let k = rng.gen_range(0..g.len());
        let space = SearchSpace::of(&g);
        if !space.is_empty() {
            g = space.apply(&g, &random_point(space.dims(), &mut rng));
        }
        let back = from_json(&to_json(&g)).unwrap();
        if back != g || back.depths() != g.depths() || back.vertex(k).params != g.vertex(k).params {
            graph_faults += 1;
        }
    }
    let mut split_faults = 0;
    for _ in 0..100 {
        let n_classes = rng.gen_range(2..5);
        let n = rng.gen_range(2 * n_classes..120);
        let mut labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        labels[n_classes..].iter_mut().for_each(|l| *l = rng.gen_range(0..n_classes));
        for c in 0..n_classes {
            labels[c] = c;
            labels[n_classes + c] = c;
        }
        let features = DMatrix::from_fn(n, 2, |i, j| if j == 0 { i as f64 } else { rng.gen::<f64>() });
        let classes = (0..n_classes).map(|c| format!("c{c}")).collect();
        let data = Dataset::new(features, labels, classes, vec!["row".into(), "noise".into()]).unwrap();
        let ratio = rng.gen_range(0.2..0.9);
        let (train, test) = split_train_test(&data, ratio, &mut rng).unwrap();
        let mut ids: Vec<usize> =
            train.features.column(0).iter().chain(test.features.column(0).iter()).map(|&x| x as usize).collect();
        ids.sort_unstable();
        let covered = ids == (0..n).collect::<Vec<_>>();
        let stratified = (0..n_classes).all(|c| train.labels.contains(&c) && test.labels.contains(&c));
        let labels_kept =
            train.features.column(0).iter().zip(&train.labels).all(|(&r, &l)| data.labels[r as usize] == l);
        if !(covered && stratified && labels_kept) {
            split_faults += 1;
        }
    }
    verdict(
        "round trips",
        graph_faults == 0 && split_faults == 0,
        format!("graph faults {graph_faults}/100, split faults {split_faults}/100"),
    )
}

fn main() {
    let mut results = vec![graph_invariants(), block_probabilities()];

    let gauss: Vec<DeskRun> = (0..5).map(|s| desk_run(SyntheticKind::Gauss2, s)).collect();
    let xor: Vec<DeskRun> = (0..5).map(|s| desk_run(SyntheticKind::Xor, s)).collect();
    let all: Vec<&DeskRun> = gauss.iter().chain(&xor).collect();
    results.push(keep_best_monotone(&all));
    results.push(fitness_decomposition(&all));
    results.push(balanced_accuracy_oracle());
    results.push(desk_accuracy("gauss2 desk search", &gauss, 0.95));
    results.push(xor_composition(&xor));
    results.push(operator_efficacy(&xor));
    results.push(tuning(&all));
    results.push(determinism());
    results.push(round_trips());

    let failed: Vec<&Verdict> = results.iter().filter(|v| !v.pass).collect();
    println!("{} of {} checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        for v in failed {
            eprintln!("failed: {} ({})", v.name, v.detail);
        }
        std::process::exit(1);
    }
}
