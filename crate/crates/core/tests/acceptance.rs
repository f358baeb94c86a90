//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::time::Instant;

use nalgebra::DMatrix;
use osg::dp::{g_row, DpTable};
use osg::embed::{loss_and_grad, train, video_loss_and_grad, EmbeddingModel, LossKind, TrainConfig};
use osg::k_estim::estimate_k;
use osg::losses::{block_loss, block_loss_grad, mine_semi_hard, triplet_loss_on, TargetMatrix, TripletConfig};
use osg::prob::{ce_loss_backward, prob_loss, prob_table, softmin};
use osg::synth::{generate, ideal_block_matrix, SynthSpec};
use osg::{brute_force, division_cost, f_score, solve, solve_fused, Division, DistanceMatrix, FeatureSequence, SceneLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_MIN_MAGNITUDE: f64 = 1e-8;
const TIE_GAP: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_distance(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(0.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    DistanceMatrix::from_matrix(m).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> SceneLabels {
    let mut l = vec![1];
    for _ in 1..n {
        let last = *l.last().unwrap();
        l.push(if rng.random_bool(0.35) { last + 1 } else { last });
    }
    if *l.last().unwrap() == 1 {
        *l.last_mut().unwrap() = 2;
    }
    SceneLabels::new(l).unwrap()
}

/// Every division cost by independent enumeration of all boundary sets.
fn all_division_costs(d: &DistanceMatrix, k: usize) -> Vec<(Vec<usize>, f64)> {
    let n = d.len();
    let mut out = vec![];
    for mask in 0u32..(1 << (n - 1)) {
        if mask.count_ones() as usize != k - 1 {
            continue;
        }
        let mut b: Vec<usize> = (1..n).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        b.push(n);
        let mut cost = 0.0;
        let mut start = 0;
        for &end in &b {
            for p in start..end {
                for q in start..end {
                    cost += d.get(p, q);
                }
            }
            start = end;
        }
        out.push((b, cost));
    }
    out
}

fn dp_optimality() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut cost_ok, mut tie_free, mut boundaries_ok) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=n.min(5));
        let d = random_distance(&mut rng, n);
        let (div, table) = solve(&d, k).unwrap();
        let (bdiv, bcost) = brute_force(&d, k).unwrap();
        let c = table.cost(1, k).unwrap();
        if (c - bcost).abs() <= 1e-9 && (division_cost(&d, &div).unwrap() - c).abs() <= 1e-9 {
            cost_ok += 1;
        }
        let mut costs: Vec<f64> = all_division_costs(&d, k).into_iter().map(|(_, c)| c).collect();
        costs.sort_by(f64::total_cmp);
        if costs.len() == 1 || costs[1] - costs[0] > 1e-6 {
            tie_free += 1;
            if div == bdiv {
                boundaries_ok += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        cost_ok == 200 && boundaries_ok == tie_free && secs < 10.0,
        format!("cost match {cost_ok}/200, boundaries {boundaries_ok}/{tie_free} tie-free, {secs:.2}s"),
    )
}

fn performance() -> Outcome {
    let n = 1500;
    let k = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(1439);
    let seq = FeatureSequence::new((0..n).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()).unwrap();
    let d = DistanceMatrix::build(&seq).unwrap();
    let t0 = Instant::now();
    let (div, table) = solve(&d, k).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let c = table.cost(1, k).unwrap();
    let check = division_cost(&d, &div).unwrap();
    let rel = (c - check).abs() / c.abs().max(1.0);
    // table holds K*N costs and K*N argmins next to the (N+1)^2 prefix table and N^2 matrix
    let table_cells = table.n_shots() * table.max_k();
    outcome(
        secs < 5.0 && rel <= 1e-9 && div.num_groups() == k && table_cells <= n * n,
        format!("N={n} K={k} solved in {secs:.3}s, cost {c:.6} vs recomputed {check:.6} (rel {rel:.1e}), {table_cells} table cells"),
    )
}

#[derive(Default, Clone, Copy)]
struct FdStats {
    max_rel: f64,
    /// largest absolute error among entries over the relative tolerance
    worst_abs: f64,
    over_tol: usize,
    checked: usize,
}

impl FdStats {
    fn of(pairs: &[(f64, f64)]) -> Self {
        let mut s = Self::default();
        for &(a, f) in pairs {
            let scale = a.abs().max(f.abs());
            if scale <= FD_MIN_MAGNITUDE {
                continue;
            }
            let rel = (a - f).abs() / scale;
            s.checked += 1;
            s.max_rel = s.max_rel.max(rel);
            if rel > FD_REL_TOL {
                s.over_tol += 1;
                s.worst_abs = s.worst_abs.max((a - f).abs());
            }
        }
        s
    }

    fn merge(&mut self, o: Self) {
        self.max_rel = self.max_rel.max(o.max_rel);
        self.worst_abs = self.worst_abs.max(o.worst_abs);
        self.over_tol += o.over_tol;
        self.checked += o.checked;
    }
}

/// Central differences over symmetric perturbations of the upper triangle.
fn fd_over_distances(d: &DistanceMatrix, grad: &DMatrix<f64>, loss: impl Fn(&DistanceMatrix) -> f64) -> FdStats {
    let n = d.len();
    let mut pairs = vec![];
    for i in 0..n {
        for j in i + 1..n {
            let bump = |s: f64| {
                let mut m = d.values().clone();
                m[(i, j)] += s;
                m[(j, i)] += s;
                loss(&DistanceMatrix::from_matrix(m).unwrap())
            };
            let fd = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
            pairs.push((grad[(i, j)] + grad[(j, i)], fd));
        }
    }
    FdStats::of(&pairs)
}

/// Smallest gap between the best and second-best candidate over every DP cell.
fn min_dp_gap(d: &DistanceMatrix, k: usize) -> f64 {
    let table = DpTable::build(d, k).unwrap();
    let mut gap = f64::INFINITY;
    for level in 2..=k {
        for start in 1..=d.len() + 1 - level {
            let mut v = g_row(d, &table, start, level).unwrap().values;
            if v.len() > 1 {
                v.sort_by(f64::total_cmp);
                gap = gap.min(v[1] - v[0]);
            }
        }
    }
    gap
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let cfg = TripletConfig::default();
    let mut worst = [FdStats::default(); 5];
    let mut counts = [0usize; 5];

    // distance-level paths
    while counts[..4].iter().any(|&c| c < 20) {
        let n = rng.random_range(4..=10);
        let d = random_distance(&mut rng, n);
        let labels = random_labels(&mut rng, n);
        if counts[0] < 20 {
            let triples = mine_semi_hard(d.values(), &labels, &cfg).unwrap();
            let margins_ok = triples.iter().all(|t| {
                let z = d.get(t.anchor, t.positive) - d.get(t.anchor, t.negative) + cfg.margin;
                let lo = d.get(t.anchor, t.negative) - d.get(t.anchor, t.positive);
                z > TIE_GAP && lo > TIE_GAP
            });
            if !triples.is_empty() && margins_ok {
                let (_, g) = triplet_loss_on(d.values(), &triples, &cfg);
                worst[0].merge(fd_over_distances(&d, &g, |m| triplet_loss_on(m.values(), &triples, &cfg).0));
                counts[0] += 1;
            }
        }
        let target = TargetMatrix::new(&labels);
        for (slot, adjacent) in [(1, false), (2, true)] {
            if counts[slot] < 20 {
                let (_, g) = block_loss_grad(d.values(), &target, adjacent).unwrap();
                worst[slot].merge(fd_over_distances(&d, &g, |m| block_loss(m.values(), &target, adjacent).unwrap()));
                counts[slot] += 1;
            }
        }
        let k = rng.random_range(2..=n.min(4));
        if counts[3] < 20 && min_dp_gap(&d, k) > TIE_GAP {
            let (_, g) = ce_loss_backward(&d, k, &labels).unwrap();
            worst[3].merge(fd_over_distances(&d, &g, |m| prob_loss(m, k, &labels).unwrap()));
            counts[3] += 1;
        }
    }

    // end-to-end through the embedding, cycling the four losses
    let kinds = [LossKind::Triplet, LossKind::Block, LossKind::BlockAdjacent, LossKind::Prob];
    let mut attempt = 0u64;
    while counts[4] < 20 {
        attempt += 1;
        let kind = kinds[counts[4] % 4];
        let spec = SynthSpec { n_scenes: 3, min_shots: 2, max_shots: 2, dim: 5, sigma: 0.5, seed: attempt, ..SynthSpec::default() };
        let (x, labels) = generate(&spec).unwrap();
        let tcfg = TrainConfig { loss: kind, widths: vec![6, 4], ..TrainConfig::default() };
        let model = EmbeddingModel::new(x.dim(), &tcfg.widths, 100 + attempt).unwrap();
        if !generic_embedding(&model, &x, &labels, kind, &cfg) {
            continue;
        }
        let d0 = DistanceMatrix::build(&model.forward(&x).unwrap()).unwrap();
        let triples = mine_semi_hard(d0.values(), &labels, &cfg).unwrap();
        let loss_at = |m: &EmbeddingModel| {
            let d = DistanceMatrix::build(&m.forward(&x).unwrap()).unwrap();
            match kind {
                LossKind::Triplet => triplet_loss_on(d.values(), &triples, &cfg).0,
                _ => loss_and_grad(kind, &d, &labels, &tcfg).unwrap().0,
            }
        };
        let (_, grads) = video_loss_and_grad(&model, &x, &labels, &tcfg).unwrap();
        let base = model.flat_params();
        let pairs: Vec<(f64, f64)> = grads
            .flatten()
            .into_iter()
            .enumerate()
            .map(|(p, an)| {
                let eval = |s: f64| {
                    let mut m = model.clone();
                    let mut q = base.clone();
                    q[p] += s;
                    m.set_flat_params(&q).unwrap();
                    loss_at(&m)
                };
                (an, (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP))
            })
            .collect();
        worst[4].merge(FdStats::of(&pairs));
        counts[4] += 1;
    }

    let names = ["triplet", "block", "block-adjacent", "prob", "embedding"];
    let detail = names
        .iter()
        .zip(worst)
        .zip(counts)
        .map(|((n, w), c)| {
            let mut line = format!("{n} {:.1e} on {c} instances", w.max_rel);
            if w.over_tol > 0 {
                line += &format!(" ({}/{} entries over tol, worst abs err {:.1e})", w.over_tol, w.checked, w.worst_abs);
            }
            line
        })
        .collect::<Vec<_>>()
        .join(", ");
    outcome(worst.iter().all(|w| w.max_rel <= FD_REL_TOL), format!("max rel err: {detail}"))
}

/// No ReLU input, semi-hard margin or DP candidate within the tie gap.
fn generic_embedding(model: &EmbeddingModel, x: &FeatureSequence, labels: &SceneLabels, kind: LossKind, cfg: &TripletConfig) -> bool {
    let mut h = DMatrix::from_fn(x.dim(), x.len(), |r, c| x.vectors()[c][r]);
    for l in model.layers() {
        let mut z = &l.weights * &h;
        for mut col in z.column_iter_mut() {
            col += &l.bias;
        }
        if l.relu {
            if z.iter().any(|v| v.abs() < TIE_GAP) {
                return false;
            }
            z.apply(|v| *v = v.max(0.0));
        }
        h = z;
    }
    let Ok(d) = DistanceMatrix::build(&model.forward(x).unwrap()) else {
        return false;
    };
    match kind {
        LossKind::Prob => min_dp_gap(&d, labels.num_scenes()) > TIE_GAP,
        LossKind::Triplet => {
            let t = mine_semi_hard(d.values(), labels, cfg).unwrap();
            !t.is_empty()
                && t.iter().all(|t| {
                    let gap = d.get(t.anchor, t.negative) - d.get(t.anchor, t.positive);
                    gap > TIE_GAP && cfg.margin - gap > TIE_GAP
                })
        }
        _ => true,
    }
}

fn noisy_ideal(rng: &mut ChaCha8Rng, sizes: &[usize], amplitude: f64) -> DistanceMatrix {
    let ideal = ideal_block_matrix(sizes).unwrap();
    let n = ideal.len();
    let mut m = ideal.values().clone();
    for i in 0..n {
        for j in i + 1..n {
            let v = (m[(i, j)] + rng.random_range(-amplitude..=amplitude)).clamp(0.0, 1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    DistanceMatrix::from_matrix(m).unwrap()
}

const K_NOISE_SEED: u64 = 4242;
const K_NOISE_MIN_RECOVERED: usize = 90;

fn k_estimation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut exact = 0;
    for _ in 0..100 {
        let k = rng.random_range(2..=8);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(3..=10)).collect();
        if estimate_k(&ideal_block_matrix(&sizes).unwrap()).unwrap() == k {
            exact += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(K_NOISE_SEED);
    let mut noisy = 0;
    for _ in 0..100 {
        let k = rng.random_range(2..=8);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(3..=10)).collect();
        if estimate_k(&noisy_ideal(&mut rng, &sizes, 0.05)).unwrap() == k {
            noisy += 1;
        }
    }
    outcome(
        exact == 100 && noisy >= K_NOISE_MIN_RECOVERED,
        format!("noiseless {exact}/100, noise 0.05 {noisy}/100 (seed {K_NOISE_SEED}, need >= {K_NOISE_MIN_RECOVERED})"),
    )
}

fn metrics_fixture() -> Outcome {
    let gt = SceneLabels::new(vec![1, 1, 1, 2, 2, 2]).unwrap();
    let r = f_score(&Division::new(vec![2, 6], 6).unwrap(), &gt).unwrap();
    let perfect = f_score(&Division::new(vec![3, 6], 6).unwrap(), &gt).unwrap();
    let ok = (r.coverage - 5.0 / 6.0).abs() <= 1e-9
        && (r.overflow - 2.0 / 3.0).abs() <= 1e-9
        && (r.f_score - 10.0 / 21.0).abs() <= 1e-9
        && perfect.f_score == 1.0;
    outcome(ok, format!("C={:.12} O={:.12} F={:.12}, perfect F={}", r.coverage, r.overflow, r.f_score, perfect.f_score))
}

fn mean_f(model: &EmbeddingModel, videos: &[(FeatureSequence, SceneLabels)]) -> f64 {
    videos
        .iter()
        .map(|(x, l)| {
            let d = DistanceMatrix::build(&model.forward(x).unwrap()).unwrap();
            let (div, _) = solve(&d, l.num_scenes()).unwrap();
            f_score(&div, l).unwrap().f_score
        })
        .sum::<f64>()
        / videos.len() as f64
}

fn learning_improves() -> Outcome {
    let t0 = Instant::now();
    let corpus: Vec<_> = (0..20)
        .map(|i| {
            generate(&SynthSpec {
                n_scenes: 5,
                min_shots: 3,
                max_shots: 8,
                dim: 8,
                min_center_distance: 0.3,
                sigma: 0.2,
                seed: 1000 + i,
                nuisance_dim: 16,
                nuisance_sigma: 0.5,
            })
            .unwrap()
        })
        .collect();
    let (train_set, test_set) = corpus.split_at(15);
    let mut pass = true;
    let mut parts = vec![];
    for kind in [LossKind::Triplet, LossKind::Block, LossKind::BlockAdjacent, LossKind::Prob] {
        let cfg = TrainConfig { loss: kind, max_epochs: 30, seed: 7, ..TrainConfig::default() };
        let untrained = EmbeddingModel::new(train_set[0].0.dim(), &cfg.widths, cfg.seed).unwrap();
        let before = mean_f(&untrained, test_set);
        let out = train(train_set, &cfg).unwrap();
        let after = mean_f(&out.model, test_set);
        pass &= (0.4..=0.8).contains(&before) && after >= before;
        parts.push(format!("{kind:?} {before:.3}->{after:.3}"));
        if kind == LossKind::Prob {
            let gt = train_set[out.trace_video.unwrap()].1.division_points();
            let mean_t = |row: &Vec<f64>| gt.iter().map(|&i| row[i - 1]).sum::<f64>() / gt.len() as f64;
            match (out.traces.first(), out.traces.get(10)) {
                (Some(t0), Some(t10)) => {
                    pass &= mean_t(t10) > mean_t(t0);
                    parts.push(format!("T at GT {:.4}->{:.4}", mean_t(t0), mean_t(t10)));
                }
                _ => {
                    pass = false;
                    parts.push("prob training stopped before epoch 10".into());
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("test mean F {}, {secs:.1}s", parts.join(", ")))
}

fn softmin_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..=20);
        let k = rng.random_range(2..=n.min(8));
        let scale = rng.random_range(0.1..50.0);
        let d = random_distance(&mut rng, n).scaled(scale).unwrap();
        let pt = prob_table(&d, k).unwrap();
        for row in &pt.rows {
            worst_sum = worst_sum.max((row.probs.iter().sum::<f64>() - 1.0).abs());
        }
        let table = DpTable::build(&d, k).unwrap();
        let g = g_row(&d, &table, 1, k).unwrap().values;
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = g.iter().map(|v| v + c).collect();
        for (a, b) in softmin(&g).iter().zip(softmin(&shifted)) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    outcome(worst_sum <= 1e-9 && worst_shift <= 1e-12, format!("max |row sum - 1| {worst_sum:.1e}, max shift change {worst_shift:.1e}"))
}

fn fusion_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let (mut same, mut flat) = (0, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=20);
        let k = rng.random_range(1..=n.min(6));
        let d = random_distance(&mut rng, n);
        let single = solve(&d, k).unwrap().0;
        if solve_fused(&d, &d, k).unwrap() == single {
            same += 1;
        }
        let zero = DistanceMatrix::from_matrix(DMatrix::zeros(n, n)).unwrap();
        if solve_fused(&d, &zero, k).unwrap() == single {
            flat += 1;
        }
    }
    outcome(same == 50 && flat == 50, format!("identical modalities {same}/50, constant second modality {flat}/50"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("DP optimality vs brute force", dp_optimality),
        ("performance N=1500 K=60", performance),
        ("gradient correctness", gradient_correctness),
        ("K estimation", k_estimation),
        ("metrics fixture", metrics_fixture),
        ("learning improves segmentation", learning_improves),
        ("softmin invariants", softmin_invariants),
        ("fusion sanity", fusion_sanity),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
