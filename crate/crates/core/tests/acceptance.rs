//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use sebayes::backends::{GroundTruth, Scenario, SimulatedLm, TfCosine};
use sebayes::eval::{auroc, calibrate_from_trajectories, capped_runs, generate_workload, prompt_seed, Backends};
use sebayes::posterior::{snis_entropy_moments_with, ConstraintSet, Proposal, DEFAULT_DRAWS};
use sebayes::{
    baseline_semantic_entropy, dirichlet_entropy_mean_closed_form, estimate_semantic_entropy, replay, EntropyEstimate,
    EstimatorConfig, TrajectoryPoint,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(name: &str, started: Instant, o: &Outcome) {
    println!(
        "{} {name} ({:.1}s): {}",
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
}

/// Entropy of a probability vector, `0 ln 0 = 0`.
fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn dirichlet(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g: Vec<f64> = alpha.iter().map(|a| Gamma::new(*a, 1.0).unwrap().sample(rng)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

fn snis_vs_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [vec![1.0, 1.0], vec![2.0, 3.0, 5.0], vec![0.5, 0.5, 0.5]] {
        let t = Instant::now();
        let c = ConstraintSet::unconstrained(alpha.len()).unwrap();
        let r = snis_entropy_moments_with(&alpha, &c, 20_000, Proposal::Adapted, &mut rng).unwrap();
        let elapsed = t.elapsed();
        let exact = dirichlet_entropy_mean_closed_form(&alpha).unwrap();
        let err = (r.mean - exact).abs();
        pass &= err <= 0.01 && elapsed < Duration::from_secs(1);
        parts.push(format!("{alpha:?} err {err:.4} in {:.1} ms", elapsed.as_secs_f64() * 1e3));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

struct TruncatedCase {
    alpha: Vec<f64>,
    bounds: Vec<f64>,
}

/// Random hypotheses with up to four meanings, counts, and floors on the
/// observed meanings totalling at most 0.6.
fn truncated_cases(rng: &mut ChaCha8Rng) -> Vec<TruncatedCase> {
    (0..20)
        .map(|_| {
            let k = rng.random_range(1..=4usize);
            let observed = rng.random_range(1..=k);
            let counts: Vec<f64> = (0..k)
                .map(|j| if j < observed { rng.random_range(1..=6) as f64 } else { 0.0 })
                .collect();
            let total = rng.random_range(0.05..0.6);
            let split = dirichlet(&vec![1.0; observed], rng);
            let mut bounds: Vec<f64> = split.iter().map(|s| s * total).collect();
            bounds.resize(k, 0.0);
            TruncatedCase {
                alpha: counts.iter().map(|n| 1.0 + n).collect(),
                bounds,
            }
        })
        .collect()
}

/// Entropy mean and variance of `Dir(alpha)` restricted to `p >= bounds`, by rejection.
fn rejection_moments(case: &TruncatedCase, draws: usize, rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    let (mut n, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for _ in 0..draws {
        let p = dirichlet(&case.alpha, rng);
        if p.iter().zip(&case.bounds).all(|(x, b)| x >= b) {
            let h = entropy(&p);
            n += 1;
            s1 += h;
            s2 += h * h;
        }
    }
    let mean = s1 / n as f64;
    (mean, s2 / n as f64 - mean * mean, n)
}

fn truncated_posterior_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = truncated_cases(&mut rng);
    let (mut worst_mean, mut worst_var, mut fewest_accepted) = (0.0f64, 0.0f64, usize::MAX);
    let (mut prior_worst_mean, mut prior_worst_var) = (0.0f64, 0.0f64);
    for case in &cases {
        let c = ConstraintSet::new(case.bounds.clone()).unwrap();
        let (m, v, accepted) = rejection_moments(case, 1_000_000, &mut rng);
        let r = snis_entropy_moments_with(&case.alpha, &c, DEFAULT_DRAWS, Proposal::Adapted, &mut rng).unwrap();
        worst_mean = worst_mean.max((r.mean - m).abs());
        worst_var = worst_var.max((r.variance - v).abs());
        fewest_accepted = fewest_accepted.min(accepted);
        let p = snis_entropy_moments_with(&case.alpha, &c, DEFAULT_DRAWS, Proposal::Prior, &mut rng).unwrap();
        prior_worst_mean = prior_worst_mean.max((p.mean - m).abs());
        prior_worst_var = prior_worst_var.max((p.variance - v).abs());
    }
    let elapsed = started.elapsed();
    Outcome {
        pass: worst_mean <= 0.02 && worst_var <= 0.005 && elapsed < Duration::from_secs(60),
        detail: format!(
            "20 cases, {DEFAULT_DRAWS} draws: max |mean err| {worst_mean:.4}, max |var err| {worst_var:.5}, \
             fewest accepted {fewest_accepted}; prior-only proposal {prior_worst_mean:.4} / {prior_worst_var:.5}"
        ),
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn single_prompt(seqs: &[(&str, f64, usize)]) -> Arc<SimulatedLm> {
    let seqs: Vec<_> = seqs.iter().map(|(s, p, m)| (toks(s), *p, *m)).collect();
    let spec = Scenario::from_sequences(&seqs, Some(0)).unwrap();
    Arc::new(SimulatedLm::from_prompts(BTreeMap::from([("q".to_string(), spec)])).unwrap())
}

/// Checks total variance against an independent recomputation from the
/// per-hypothesis moments, and every trajectory point's decomposition.
fn variance_identity_error(e: &EntropyEstimate) -> f64 {
    let by_k: BTreeMap<usize, (f64, f64)> = e.conditional_moments().into_iter().map(|(k, m, v)| (k, (m, v))).collect();
    let (mut m1, mut m2, mut within) = (0.0, 0.0, 0.0);
    for (k, w) in e.k_posterior.support.iter().zip(&e.k_posterior.probs) {
        let (m, v) = by_k[k];
        m1 += w * m;
        m2 += w * m * m;
        within += w * v;
    }
    let between = (m2 - m1 * m1).max(0.0);
    let direct = (e.variance - (within + between)).abs();
    let reported = (e.variance - (e.within + e.between)).abs();
    let mean = (e.mean - m1).abs();
    e.trajectory
        .iter()
        .map(trajectory_identity_error)
        .fold(direct.max(reported).max(mean), f64::max)
}

fn trajectory_identity_error(p: &TrajectoryPoint) -> f64 {
    (p.variance - (p.within + p.between)).abs()
}

fn unbiasedness(identity: &mut f64, runs_checked: &mut usize) -> Outcome {
    let scenarios = [
        (
            "single meaning",
            0.0,
            single_prompt(&[("paris city", 0.5, 0), ("paris town", 0.3, 0), ("paris capital", 0.2, 0)]),
        ),
        (
            "0.6/0.4",
            -(0.6f64 * 0.6f64.ln() + 0.4 * 0.4f64.ln()),
            single_prompt(&[
                ("paris city", 0.35, 0),
                ("paris town", 0.25, 0),
                ("london city", 0.25, 1),
                ("london town", 0.15, 1),
            ]),
        ),
        (
            "four meanings",
            4f64.ln(),
            single_prompt(&[
                ("a x", 0.125, 0),
                ("a y", 0.125, 0),
                ("b x", 0.125, 1),
                ("b y", 0.125, 1),
                ("c x", 0.125, 2),
                ("c y", 0.125, 2),
                ("d x", 0.125, 3),
                ("d y", 0.125, 3),
            ]),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, exact, lm) in &scenarios {
        assert!((lm.simulated_exact_entropy("q").unwrap() - exact).abs() < 1e-12);
        let oracle = GroundTruth::new(lm.clone());
        let mut means = [0.0; 2];
        for (slot, guided) in [true, false].into_iter().enumerate() {
            let mut sum = 0.0;
            for seed in 0..200 {
                let cfg = EstimatorConfig {
                    gamma: 1e-4,
                    n_max: 30,
                    top_k: 3,
                    guided,
                    seed,
                    ..EstimatorConfig::default()
                };
                let e = estimate_semantic_entropy("q", lm.as_ref(), &oracle, &TfCosine, &cfg).unwrap();
                *identity = identity.max(variance_identity_error(&e));
                *runs_checked += 1;
                sum += e.mean;
            }
            means[slot] = sum / 200.0;
        }
        let (guided, direct) = (means[0], means[1]);
        pass &= (guided - exact).abs() <= 0.05 && (direct - exact).abs() <= 0.05 && (guided - direct).abs() <= 0.05;
        parts.push(format!("{name}: exact {exact:.4} guided {guided:.4} direct {direct:.4}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Capped runs over the 500-prompt mixture, shared by the efficiency and
/// stopping-rule criteria.
struct Mixture {
    lm: Arc<SimulatedLm>,
    records: Vec<sebayes::eval::QueryRecord>,
    truth: Vec<f64>,
    labels: Vec<bool>,
    trajectories: Vec<Vec<TrajectoryPoint>>,
    config: EstimatorConfig,
}

fn mixture() -> Mixture {
    let w = generate_workload(500, 2024).unwrap();
    let lm = Arc::new(w.lm);
    let oracle = GroundTruth::new(lm.clone());
    let config = EstimatorConfig {
        seed: 11,
        ..EstimatorConfig::default()
    };
    let backends = Backends {
        generator: lm.as_ref(),
        oracle: &oracle,
        sim: &TfCosine,
    };
    let runs = capped_runs(&w.records, backends, &config, 1).unwrap();
    Mixture {
        truth: w.records.iter().map(|r| w.exact_entropy[&r.id]).collect(),
        labels: w.records.iter().map(|r| r.label == Some(1)).collect(),
        trajectories: runs.into_iter().map(|r| r.trajectory).collect(),
        records: w.records,
        lm,
        config,
    }
}

fn fixed_budget(m: &Mixture, n: usize) -> Vec<f64> {
    let oracle = GroundTruth::new(m.lm.clone());
    m.records
        .iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(prompt_seed(m.config.seed, &r.id));
            rng.set_stream(n as u64 + 1);
            baseline_semantic_entropy(&r.prompt, m.lm.as_ref(), &oracle, n, &mut rng).unwrap()
        })
        .collect()
}

fn adaptive_at(m: &Mixture, target: f64) -> (f64, f64, Vec<f64>) {
    let c = calibrate_from_trajectories(&m.trajectories, target, m.config.n0, m.config.n_max).unwrap();
    let est = m.trajectories.iter().map(|t| replay(t, c.gamma).0.mean).collect();
    (c.gamma, c.achieved_mean, est)
}

fn efficiency(m: &Mixture) -> Outcome {
    let (g25, n25, adaptive_25) = adaptive_at(m, 2.5);
    let (g2, n2, adaptive_2) = adaptive_at(m, 2.0);
    let fixed_5 = fixed_budget(m, 5);
    let fixed_2 = fixed_budget(m, 2);
    let rmse_adaptive = rmse(&adaptive_25, &m.truth);
    let rmse_fixed = rmse(&fixed_5, &m.truth);
    let auroc_adaptive = auroc(&adaptive_2, &m.labels).unwrap();
    let auroc_fixed = auroc(&fixed_2, &m.labels).unwrap();
    Outcome {
        pass: rmse_adaptive <= 1.1 * rmse_fixed && auroc_adaptive >= auroc_fixed,
        detail: format!(
            "RMSE adaptive (gamma {g25:.3e}, mean N {n25:.3}) {rmse_adaptive:.4} vs fixed N=5 {rmse_fixed:.4}; \
             AUROC adaptive (gamma {g2:.3e}, mean N {n2:.3}) {auroc_adaptive:.4} vs fixed N=2 {auroc_fixed:.4}"
        ),
    }
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn mode(counts: &[usize]) -> usize {
    (0..counts.len()).rev().max_by_key(|&i| counts[i]).unwrap()
}

fn stopping_rule(m: &Mixture) -> Outcome {
    let gammas: Vec<f64> = (0..10).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 9.0)).collect();
    let mean_used: Vec<f64> = gammas
        .iter()
        .map(|g| {
            m.trajectories.iter().map(|t| replay(t, *g).0.samples_used as f64).sum::<f64>() / m.trajectories.len() as f64
        })
        .collect();
    let rho = spearman(&gammas, &mean_used);

    let n_max = m.config.n_max;
    let mut low = vec![0usize; n_max + 1];
    let mut high = vec![0usize; n_max + 1];
    for (t, h) in m.trajectories.iter().zip(&m.truth) {
        let used = replay(t, gammas[0]).0.samples_used;
        if *h < 0.05 {
            low[used] += 1;
        } else if *h > 1.0 {
            high[used] += 1;
        }
    }
    let low_total: usize = low.iter().sum();
    let high_total: usize = high.iter().sum();
    let low_near_floor: usize = low[..=2].iter().sum();
    let pattern = mode(&low) <= 2
        && 2 * low_near_floor > low_total
        && mode(&high) == n_max
        && 2 * high[n_max] > high_total;
    Outcome {
        pass: rho <= -0.9 && pattern,
        detail: format!(
            "Spearman {rho:.3}, mean samples {:?}; at gamma 1e-4 low-entropy {low_near_floor}/{low_total} within 2 samples \
             (counts {:?}), high-entropy {}/{high_total} at cap {n_max} (counts {:?})",
            mean_used.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            &low[1..],
            high[n_max],
            &high[1..]
        ),
    }
}

/// Probability that a random positive outscores a random negative, ties half.
fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, si) in scores.iter().enumerate() {
        for (j, sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn auroc_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..80);
        let levels = rng.random_range(2..12) as f64;
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        worst = worst.max((auroc(&scores, &labels).unwrap() - auroc_pairs(&scores, &labels)).abs());
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("1000 tied instances, max |diff| {worst:.2e}"),
    }
}

fn benchmark_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_sebayes");
    let run = |args: &[&str]| {
        let o = Command::new(bin).current_dir(dir.path()).args(args).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["simulate", "--out", "data.jsonl", "--scenario", "scenario.json", "--n-prompts", "40", "--seed", "9"]);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = format!("report{i}.json");
        run(&[
            "benchmark", "--dataset", "data.jsonl", "--scenario", "scenario.json", "--out", &out, "--budgets", "2,4",
            "--seed", "21", "--workers", workers,
        ]);
        outputs.push((read(&out), read(Path::new(&out).with_extension("csv").to_str().unwrap())));
    }
    let same = outputs[0] == outputs[1];
    Outcome {
        pass: same,
        detail: format!(
            "two runs (1 and 2 workers): report {} bytes, csv {} bytes, {}",
            outputs[0].0.len(),
            outputs[0].1.len(),
            if same { "identical" } else { "different" }
        ),
    }
}

fn main() {
    let mut failed = 0;
    let mut check = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(name, t, &o);
        failed += usize::from(!o.pass);
    };
    check("snis-vs-closed-form", &mut snis_vs_closed_form);
    check("truncated-posterior-oracle", &mut truncated_posterior_oracle);

    let mut identity = 0.0f64;
    let mut runs_checked = 0usize;
    check("unbiasedness", &mut || unbiasedness(&mut identity, &mut runs_checked));

    let t = Instant::now();
    let m = mixture();
    println!("     (500 capped runs in {:.1}s)", t.elapsed().as_secs_f64());
    for t in &m.trajectories {
        identity = t.iter().map(trajectory_identity_error).fold(identity, f64::max);
    }
    runs_checked += m.trajectories.len();
    check("efficiency", &mut || efficiency(&m));
    check("stopping-rule", &mut || stopping_rule(&m));
    check("auroc-exactness", &mut auroc_exactness);
    check("total-variance-identity", &mut || Outcome {
        pass: identity <= 1e-9,
        detail: format!("{runs_checked} runs, max |total - (within + between)| {identity:.2e}"),
    });
    check("benchmark-determinism", &mut benchmark_determinism);

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
