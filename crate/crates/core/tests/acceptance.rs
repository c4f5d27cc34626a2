//! Acceptance run: one line per criterion, non-zero exit if any fails.

mod common;

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use mfkmeans::eval::silhouette_from_distances;
use mfkmeans::experiment::{run_experiment, write_summary_csv};
use mfkmeans::simgen::rho;
use mfkmeans::*;
use rand::Rng;

const SEED: u64 = 42;
const REPLICATES: usize = 50;
const L2: MetricChoice = MetricChoice::L2;
const TRUNC: MetricChoice = MetricChoice::Truncated { k: 3 };
const DP_LOW: MetricChoice = MetricChoice::Dp { log10_p: -2.0 };
const DP_HIGH: MetricChoice = MetricChoice::Dp { log10_p: 8.0 };

struct Check {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Check {
    Check { ok, detail: detail.into() }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn simulate(case: Case) -> (ExperimentReport, Duration) {
    let start = Instant::now();
    let cfg = ExperimentConfig::new(ScenarioSpec::new(case, 0), vec![L2, TRUNC, DP_LOW, DP_HIGH], REPLICATES, SEED);
    let report = run_experiment(&cfg).expect("experiment runs");
    (report, start.elapsed())
}

fn rate(r: &ExperimentReport, m: MetricChoice) -> f64 {
    r.summary(&m).expect("metric present").mean_correct_rate
}

fn criterion_case_i() -> Vec<Check> {
    let (r, took) = simulate(Case::I);
    let (dp, l2) = (rate(&r, DP_LOW), rate(&r, L2));
    vec![
        check(within(dp, 0.72, 0.82), format!("dp(-2) {dp:.4} in [0.72, 0.82]")),
        check(within(l2, 0.71, 0.81), format!("l2 {l2:.4} in [0.71, 0.81]")),
        check(dp >= l2 - 0.02, format!("dp(-2) {dp:.4} >= l2 - 0.02")),
        check(took <= Duration::from_secs(300), format!("runtime {:.1}s <= 300s", took.as_secs_f64())),
    ]
}

fn criterion_case_ii() -> Vec<Check> {
    let (r, _) = simulate(Case::Ii);
    let (dp, l2, tr) = (rate(&r, DP_HIGH), rate(&r, L2), rate(&r, TRUNC));
    vec![
        check(within(dp, 0.78, 0.87), format!("dp(8) {dp:.4} in [0.78, 0.87]")),
        check(within(l2, 0.50, 0.60), format!("l2 {l2:.4} in [0.50, 0.60]")),
        check(within(tr, 0.50, 0.60), format!("truncated(3) {tr:.4} in [0.50, 0.60]")),
        check(dp - l2 >= 0.20, format!("gap dp(8) - l2 = {:.4} >= 0.20", dp - l2)),
    ]
}

fn criterion_case_iii() -> Vec<Check> {
    let (r, _) = simulate(Case::Iii);
    let (low, high) = (rate(&r, DP_LOW), rate(&r, DP_HIGH));
    vec![
        check(within(low, 0.83, 0.93), format!("dp(-2) {low:.4} in [0.83, 0.93]")),
        check(high < low, format!("dp(8) {high:.4} < dp(-2) {low:.4}")),
    ]
}

fn criterion_case_iv() -> Vec<Check> {
    let (r, _) = simulate(Case::Iv);
    let high = r.summary(&DP_HIGH).unwrap();
    let mut out = vec![
        check(within(high.mean_correct_rate, 0.88, 0.96), format!("dp(8) {:.4} in [0.88, 0.96]", high.mean_correct_rate)),
        check(high.max_sd_diagonal() <= 3.5, format!("dp(8) diagonal sd {:.3} <= 3.5", high.max_sd_diagonal())),
    ];
    for m in [L2, TRUNC, DP_LOW] {
        let v = rate(&r, m);
        out.push(check(v <= 0.60, format!("{m} {v:.4} <= 0.60")));
    }
    out
}

fn criterion_growth() -> Vec<Check> {
    let s = datasets::growth().unwrap();
    let truth = s.labels().unwrap().to_vec();
    let spectrum = Arc::new(sample_spectrum(&s).unwrap());
    let run = |m: MetricChoice| {
        let cfg = KMeansConfig::new(2, m.bind(Some(spectrum.clone())).unwrap(), 7).with_restarts(10);
        score(&run_kmeans(&s, &cfg).unwrap().labels, &truth).unwrap().correct_rate
    };
    let (high, l2, low) = (run(DP_HIGH), run(L2), run(DP_LOW));
    vec![
        check(s.len() == 93, format!("{} curves", s.len())),
        check(within(high, 0.84, 0.91), format!("dp(8) {high:.4} in [0.84, 0.91]")),
        check(within(l2, 0.60, 0.70), format!("l2 {l2:.4} in [0.60, 0.70]")),
        check(within(low, 0.60, 0.70), format!("dp(-2) {low:.4} in [0.60, 0.70]")),
    ]
}

fn criterion_properties() -> Vec<Check> {
    let mut r = rng(SEED);
    let mut out = Vec::new();

    // metric axioms on 1000 random triples
    let g = grid(0.0, 2.0, 20);
    let base = random_sample(&mut r, &g, 2, 8);
    let spec = Arc::new(sample_spectrum(&base).unwrap());
    let (mut sym, mut ident, mut tri) = (true, true, true);
    for _ in 0..1000 {
        let p = 10f64.powf(r.random_range(-4.0..6.0));
        let (a, b, c) = (random_curve(&mut r, &g, 2), random_curve(&mut r, &g, 2), random_curve(&mut r, &g, 2));
        let ab = dp_distance(&a, &b, p, &spec).unwrap();
        sym &= ab == dp_distance(&b, &a, p, &spec).unwrap();
        ident &= dp_distance(&a, &a, p, &spec).unwrap() == 0.0 && ab > 0.0;
        tri &= ab <= (dp_distance(&a, &c, p, &spec).unwrap() + dp_distance(&c, &b, p, &spec).unwrap()) * (1.0 + 1e-10);
    }
    out.push(check(sym && ident && tri, format!("metric axioms on 1000 triples (symmetry {sym}, identity {ident}, triangle {tri})")));

    // monotone in p, bounded by sqrt(p)·L2, small-p limit
    let (mut mono, mut bound, mut worst_small) = (true, true, 0.0f64);
    for _ in 0..200 {
        let (a, b) = (random_curve(&mut r, &g, 2), random_curve(&mut r, &g, 2));
        let l2 = l2_distance(&a, &b).unwrap();
        let mut prev = 0.0;
        for lp in [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0] {
            let p = 10f64.powf(lp);
            let d = dp_distance(&a, &b, p, &spec).unwrap();
            mono &= d >= prev * (1.0 - 1e-12);
            bound &= d <= p.sqrt() * l2 * (1.0 + 1e-12);
            prev = d;
        }
        let ratio = dp_distance(&a, &b, 1e-8, &spec).unwrap() / 1e-4 / l2;
        worst_small = worst_small.max((ratio - 1.0).abs());
    }
    out.push(check(mono, "d_p nondecreasing in p over the default grid"));
    out.push(check(bound, "d_p <= sqrt(p)·L2"));
    out.push(check(worst_small <= 1e-3, format!("small-p limit error {worst_small:.2e} <= 1e-3")));

    // residual form against an explicit complement basis
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let j = r.random_range(1..=2);
        let t = r.random_range(2..=12 / j);
        let n = r.random_range(2..=6);
        let g = grid(0.0, r.random_range(0.5..4.0), t);
        let s = FunctionalSample::new((0..n).map(|_| random_curve(&mut r, &g, j)).collect(), None).unwrap();
        let sp = sample_spectrum(&s).unwrap();
        let (a, b) = (random_curve(&mut r, &g, j), random_curve(&mut r, &g, j));
        let p = 10f64.powf(r.random_range(-3.0..4.0));
        let fast = dp_distance(&a, &b, p, &sp).unwrap();
        let slow = explicit_dp(&rows_of(&s), g.weight(), a.values(), b.values(), p);
        worst = worst.max((fast - slow).abs() / slow);
    }
    out.push(check(worst <= 1e-9, format!("explicit-basis oracle relative error {worst:.2e} <= 1e-9")));

    // k-means objective monotone
    let mut monotone = true;
    for seed in 0..20 {
        let s = random_sample(&mut r, &grid(0.0, 1.0, 9), 1, 30);
        let sp = Arc::new(sample_spectrum(&s).unwrap());
        let res = run_kmeans(&s, &KMeansConfig::new(3, MetricSpec::dp(10.0, sp).unwrap(), seed)).unwrap();
        monotone &= res.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
    }
    out.push(check(monotone, "k-means objective nonincreasing per iteration"));

    // silhouettes
    let (mut bounded, mut singleton) = (true, true);
    for _ in 0..50 {
        let s = random_sample(&mut r, &grid(0.0, 1.0, 6), 1, 12);
        let mut labels: Vec<usize> = (0..12).map(|_| r.random_range(1..=3)).collect();
        labels[0] = 4;
        let d = distance_matrix(s.curves(), &MetricSpec::l2()).unwrap();
        let rep = silhouette_from_distances(&d, &labels);
        bounded &= rep.values.iter().all(|v| (-1.0..=1.0).contains(v));
        singleton &= rep.values[0] == 0.0;
    }
    out.push(check(bounded && singleton, "silhouettes in [-1, 1], singletons 0"));

    // eigenfunction orthonormality on the simulation scenarios
    let mut worst_orth = 0.0f64;
    for case in Case::ALL {
        let s = generate(&ScenarioSpec::new(case, SEED)).unwrap();
        worst_orth = worst_orth.max(sample_spectrum(&s).unwrap().orthonormality_residual());
    }
    out.push(check(worst_orth <= 1e-8, format!("orthonormality residual {worst_orth:.2e} <= 1e-8")));

    // eigenvalue recovery at n = 500
    let n = 500;
    let spec = ScenarioSpec { n1: n, n2: 1, ..ScenarioSpec::new(Case::I, SEED) };
    let full = generate(&spec).unwrap();
    let s = FunctionalSample::new(full.curves()[..n].to_vec(), None).unwrap();
    let ev = sample_spectrum(&s).unwrap().eigenvalues()[..3].to_vec();
    let ok = (1..=3).all(|k| {
        let target = rho(k).unwrap();
        (ev[k - 1] - target).abs() <= 3.0 * target * (2.0 / n as f64).sqrt()
    });
    out.push(check(ok, format!("leading eigenvalues {:.4?} vs [0.5, 0.3333, 0.25]", ev)));
    out
}

fn criterion_determinism() -> Vec<Check> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_mfkmeans"))
            .current_dir(d)
            .args(["experiment", "--case", "iv", "--seed", "5", "--replicates", "8", "--out", out])
            .status()
            .expect("binary runs")
            .success()
    };
    let ran = run("a") && run("b");
    let same = |ext: &str| std::fs::read(d.join(format!("a.{ext}"))).ok() == std::fs::read(d.join(format!("b.{ext}"))).ok();
    let cfg = ExperimentConfig::new(ScenarioSpec::new(Case::Ii, 0), vec![L2, DP_HIGH], 8, 3);
    let (x, y) = (run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    write_summary_csv(&mut bx, &x).unwrap();
    write_summary_csv(&mut by, &y).unwrap();
    vec![
        check(ran && same("json") && same("csv"), "CLI experiment reruns byte-identical"),
        check(bx == by && x == y, "library experiment reruns identical"),
    ]
}

type Criterion = (&'static str, fn() -> Vec<Check>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 case (i) rates", criterion_case_i),
        ("2 case (ii) rates", criterion_case_ii),
        ("3 case (iii) rates", criterion_case_iii),
        ("4 case (iv) rates", criterion_case_iv),
        ("5 growth rates", criterion_growth),
        ("6 property suites", criterion_properties),
        ("7 determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let checks = f();
        let ok = checks.iter().all(|c| c.ok);
        let parts: Vec<String> = checks.iter().map(|c| format!("{}{}", if c.ok { "" } else { "!" }, c.detail)).collect();
        println!("{} criterion {name}: {}", if ok { "PASS" } else { "FAIL" }, parts.join("; "));
        failed += usize::from(!ok);
    }
    println!("acceptance: {} of 7 criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
