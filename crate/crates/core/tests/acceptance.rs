//! End-to-end acceptance checks. Each test prints one `criterion N: PASS` or
//! `criterion N: FAIL` line with the measured quantities.

use std::time::Instant;

use rand::Rng as _;
use slide_core::adversary::{adversarial_batch, AdversaryConfig};
use slide_core::constraint::{
    empirical_constraint, empirical_uif, ConstraintSpec, CriterionKind, ScoredBatch,
};
use slide_core::data::synth::BiasedGroups;
use slide_core::data::{split_and_standardize, Column, Dataset, SplitSpec, SynthKind, SynthSpec};
use slide_core::eval::{
    accuracy, consistency, dominated_flags, indicator_constraint, mnf_diagnostic,
};
use slide_core::geometry::{
    analytic_gap_curve, hausdorff, hausdorff_grid, simulate_convergence, toy_gap_curve,
    GeometryConfig, ParamGrid, SimulationConfig,
};
use slide_core::matrix::Matrix;
use slide_core::nn::{Architecture, ModelParams};
use slide_core::rng::{derive_seed, substream, Rng};
use slide_core::surrogate::{slide_concave, slide_convex, SurrogateSpec};
use slide_core::train::{
    penalized_objective, select_model, train_cccp, train_restarts, CccpConfig, InnerSolver,
    ModelSpec, TrainConfig, TrainMode, TrainResult,
};

fn report(id: u32, pass: bool, detail: String) {
    println!(
        "criterion {id}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn continuous_dataset(x: Matrix, y: Vec<i8>, z: Vec<u8>) -> Dataset {
    let cols = (0..x.cols())
        .map(|j| Column::continuous(&format!("x{j}")))
        .collect();
    Dataset::new(x, y, z, cols, "acceptance").unwrap()
}

fn random_dataset(rng: &mut Rng, n: usize, d: usize) -> Dataset {
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
        .collect();
    let mut z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
    z[0] = 0;
    z[1] = 1;
    continuous_dataset(Matrix::from_vec(n, d, data).unwrap(), y, z)
}

fn hidden_preacts(model: &ModelParams, x: &[f64]) -> Vec<f64> {
    match model.architecture() {
        Architecture::Mlp {
            input_dim: d,
            hidden_width: h,
        } => {
            let p = model.params();
            (0..h)
                .map(|k| p[h * d + k] + (0..d).map(|j| p[k * d + j] * x[j]).sum::<f64>())
                .collect()
        }
        Architecture::Linear { .. } => Vec::new(),
    }
}

/// Smallest distance of any quantity that enters a kink to that kink.
fn kink_distance(model: &ModelParams, data: &Dataset, adv: &Matrix, tau: f64, gamma: f64) -> f64 {
    let f = model.forward(&data.x).unwrap();
    let fv = model.forward(adv).unwrap();
    let mut dist = f64::INFINITY;
    for i in 0..data.n() {
        for k in [0.0, tau] {
            dist = dist.min((f[i] - k).abs());
        }
        let m = (f[i] - fv[i]).abs() - gamma;
        for k in [0.0, tau] {
            dist = dist.min((m - k).abs());
        }
        for row in [data.x.row(i), adv.row(i)] {
            for a in hidden_preacts(model, row) {
                dist = dist.min(a.abs());
            }
        }
    }
    dist
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let tau = 0.5;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut models = 0usize;
    let mut attempt = 0u64;
    while models < 20 {
        attempt += 1;
        let mut rng = substream(1, "c1", attempt);
        let d = rng.gen_range(2..=5);
        let arch = if models.is_multiple_of(2) {
            Architecture::Linear { input_dim: d }
        } else {
            Architecture::Mlp {
                input_dim: d,
                hidden_width: rng.gen_range(2..=8),
            }
        };
        let mut model = ModelParams::init(arch, derive_seed(1, "model", attempt)).unwrap();
        // Fresh models have zero biases; shift every parameter so no row
        // sits exactly on a kink.
        for p in model.params_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let data = random_dataset(&mut rng, 30, d);
        let adv = adversarial_batch(
            &model,
            &data.x,
            &data.perturbable_mask(),
            &AdversaryConfig {
                epsilon: 0.5,
                ..Default::default()
            },
            attempt,
            0,
        )
        .unwrap();
        let gamma = 0.05;
        if kink_distance(&model, &data, &adv, tau, gamma) < 1e-3 {
            continue;
        }
        let surrogate = SurrogateSpec::slide(tau).unwrap();
        for (spec, adv) in [
            (ConstraintSpec::new(CriterionKind::Di), None),
            (
                ConstraintSpec::new(CriterionKind::Uif).with_gamma(gamma),
                Some(&adv),
            ),
        ] {
            let lambda = 2.0;
            let ev = penalized_objective(&model, &data, adv, lambda, &surrogate, &spec).unwrap();
            for j in 0..model.params().len() {
                let mut plus = model.clone();
                plus.params_mut()[j] += h;
                let mut minus = model.clone();
                minus.params_mut()[j] -= h;
                let fp = penalized_objective(&plus, &data, adv, lambda, &surrogate, &spec)
                    .unwrap()
                    .total;
                let fm = penalized_objective(&minus, &data, adv, lambda, &surrogate, &spec)
                    .unwrap()
                    .total;
                let fd = (fp - fm) / (2.0 * h);
                let rel = (fd - ev.grad[j]).abs() / fd.abs().max(ev.grad[j].abs()).max(1.0);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        models += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-4 && secs < 30.0,
        format!(
            "{models} models, {checked} partials, worst relative error {worst:.2e}, {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_2_surrogate_exactness() {
    let mut rng = substream(2, "c2", 0);
    let mut worst: f64 = 0.0;
    let mut sandwich_ok = true;
    let mut cccp_ok = true;
    for &tau in &[0.01, 0.1, 0.125, 0.5] {
        let slide = SurrogateSpec::slide(tau).unwrap();
        let opp = SurrogateSpec::opposite_slide(tau).unwrap();
        let psi = SurrogateSpec {
            kind: slide_core::surrogate::SurrogateKind::Psi,
            tau,
        };
        let hinge = SurrogateSpec::hinge();
        for _ in 0..10_000 {
            let z: f64 = rng.gen_range(-3.0 * tau - 1.5..3.0 * tau + 1.5);
            let want_slide = (z / tau).clamp(0.0, 1.0);
            let want_opp = (1.0 + z / tau).clamp(0.0, 1.0);
            let want_hinge = if 1.0 + z > 0.0 { 1.0 + z } else { 0.0 };
            for (got, want) in [
                (slide.value(z), want_slide),
                (opp.value(z), want_opp),
                (psi.value(z), want_opp),
                (hinge.value(z), want_hinge),
            ] {
                worst = worst.max((got - want).abs());
            }
            let ind = if z > 0.0 { 1.0 } else { 0.0 };
            sandwich_ok &= slide.value(z) <= ind && ind <= opp.value(z);
        }
    }
    // The DC split is exact in floating point for dyadic tau and z.
    for &tau in &[0.5, 0.125, 1.0 / 1024.0] {
        for _ in 0..10_000 {
            let z = f64::from(rng.gen_range(-(1i32 << 22)..(1 << 22))) / f64::from(1 << 20);
            let s = SurrogateSpec::slide(tau).unwrap().value(z);
            cccp_ok &= s == slide_convex(z, tau) + slide_concave(z, tau);
        }
        for z in [-tau, 0.0, tau, 2.0 * tau] {
            let s = SurrogateSpec::slide(tau).unwrap().value(z);
            cccp_ok &= s == slide_convex(z, tau) + slide_concave(z, tau);
        }
    }
    report(
        2,
        worst <= 1e-15 && sandwich_ok && cccp_ok,
        format!("max closed-form error {worst:.1e}, sandwich {sandwich_ok}, dc identity {cccp_ok}"),
    );
}

fn gap_check(kind: SynthKind, alphas: &[f64]) -> (bool, String) {
    let cfg = GeometryConfig {
        dataset: kind,
        alphas: alphas.to_vec(),
        taus: vec![0.01, 0.1],
        ..Default::default()
    };
    let curve = toy_gap_curve(&cfg).unwrap();
    let hinge = &curve.series("hinge").unwrap().d;
    let slide = &curve.series("slide_tau01").unwrap().d;
    let mut ok = true;
    for (i, &a) in alphas.iter().enumerate() {
        if a >= 0.15 - 1e-12 || kind == SynthKind::TwoMoon {
            ok &= matches!((slide[i], hinge[i]), (Some(s), Some(h)) if s < h);
        }
    }
    let first = hinge.first().copied().flatten();
    let last = hinge.last().copied().flatten();
    ok &= matches!((first, last), (Some(a), Some(b)) if b > a);
    let fmt = |v: &[Option<f64>]| {
        v.iter()
            .map(|x| x.map_or("-".into(), |x| format!("{x:.3}")))
            .collect::<Vec<_>>()
            .join(",")
    };
    (
        ok,
        format!("{kind}: hinge [{}] slide0.1 [{}]", fmt(hinge), fmt(slide)),
    )
}

#[test]
fn criterion_3_geometry_gap() {
    let start = Instant::now();
    let (gm_ok, gm) = gap_check(
        SynthKind::GaussianMixture2d,
        &[0.10, 0.15, 0.20, 0.25, 0.30],
    );
    let (tm_ok, tm) = gap_check(SynthKind::TwoMoon, &[0.10, 0.15, 0.20, 0.25]);
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        gm_ok && tm_ok && secs < 300.0,
        format!("{gm}; {tm}; {secs:.1}s"),
    );
}

#[test]
fn criterion_4_analytic_inconsistency() {
    let start = Instant::now();
    let alphas: Vec<f64> = (0..10).map(|k| 0.05 + 0.55 * k as f64 / 9.0).collect();
    let curve = analytic_gap_curve(101, &alphas, 201).unwrap();
    let d: Vec<f64> = curve
        .series("hinge")
        .unwrap()
        .d
        .iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect();
    let monotone = d.windows(2).all(|w| w[1] >= w[0]);
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        monotone && d[9] > 0.0 && secs < 60.0,
        format!(
            "d_hinge = {:?}, {secs:.1}s",
            d.iter()
                .map(|v| (v * 1e3).round() / 1e3)
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_5_convergence() {
    let start = Instant::now();
    let rows = simulate_convergence(&SimulationConfig::default()).unwrap();
    let (a, b) = (&rows[0], rows.last().unwrap());
    let secs = start.elapsed().as_secs_f64();
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "n={} excess={:.5} dev={:.5}",
                r.n, r.excess_risk_median, r.fairness_dev_median
            )
        })
        .collect();
    report(
        5,
        b.excess_risk_median < 0.5 * a.excess_risk_median
            && b.fairness_dev_median < 0.5 * a.fairness_dev_median
            && secs < 600.0,
        format!("{}; {secs:.1}s", summary.join("; ")),
    );
}

#[test]
fn criterion_6_cccp_descent() {
    let start = Instant::now();
    let mut worst_rise = f64::NEG_INFINITY;
    let mut max_grad: f64 = 0.0;
    for seed in 0..10u64 {
        let data = SynthSpec::BiasedGroups(BiasedGroups::default())
            .generate(400, seed)
            .unwrap();
        let cfg = TrainConfig {
            lambda: 1.0,
            surrogate: SurrogateSpec::slide(0.1).unwrap(),
            mode: TrainMode::Cccp,
            seed,
            cccp: CccpConfig {
                solver: InnerSolver::Newton,
                grad_tol: 1e-10,
                max_outer: 15,
                rel_tol: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let res = train_cccp(&data, &cfg).unwrap();
        let trace = res.cccp.unwrap();
        let mut prev = trace.initial_objective;
        for &o in &trace.objectives {
            worst_rise = worst_rise.max(o - prev);
            prev = o;
        }
        max_grad = trace
            .inner_grad_norms
            .iter()
            .copied()
            .fold(max_grad, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        worst_rise <= 1e-8 && max_grad <= 1e-10 && secs < 60.0,
        format!("largest objective increase {worst_rise:.2e}, largest inner grad norm {max_grad:.1e}, {secs:.1}s"),
    );
}

fn biased_splits(n: usize, seed: u64) -> (Dataset, Dataset, Dataset) {
    let law = SynthSpec::BiasedGroups(BiasedGroups::default());
    let all = law.generate(n, seed).unwrap();
    let spec = SplitSpec {
        seed,
        ..Default::default()
    };
    let (tr, va, te, _) = split_and_standardize(&all, &spec).unwrap();
    (tr, va, te)
}

fn benchmark_config(lambda: f64, surrogate: SurrogateSpec, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2000,
        lr: 0.5,
        lambda,
        surrogate,
        tau_range: (surrogate.kind == slide_core::surrogate::SurrogateKind::Slide)
            .then_some([0.01, 0.2]),
        restarts: 5,
        model: ModelSpec::Linear,
        seed,
        ..Default::default()
    }
}

const LAMBDAS: [f64; 6] = [0.3, 1.0, 3.0, 10.0, 30.0, 100.0];

/// Train every lambda with 5 restarts and pick the fairest model within
/// `band` of `target` validation accuracy.
fn selected(
    train: &Dataset,
    val: &Dataset,
    surrogate: SurrogateSpec,
    target: f64,
    band: f64,
) -> TrainResult {
    let mut pool = Vec::new();
    for (k, &l) in LAMBDAS.iter().enumerate() {
        pool.extend(
            train_restarts(train, &benchmark_config(l, surrogate, 100 + k as u64)).unwrap(),
        );
    }
    let spec = ConstraintSpec::new(CriterionKind::Di);
    select_model(
        &pool,
        val,
        &spec,
        &AdversaryConfig::default(),
        target,
        band,
        0,
    )
    .unwrap()
    .clone()
}

/// Best test accuracy over linear rules `a x1 + b x2 + c_s` on a grid,
/// subject to test DI <= `max_di`.
fn linear_oracle(data: &Dataset, max_di: f64) -> f64 {
    let n = data.n();
    let (n0, n1) = data.group_counts();
    let mut best: f64 = 0.0;
    for t in 0..72 {
        let th = std::f64::consts::PI * 2.0 * t as f64 / 72.0;
        let (a, b) = (th.cos(), th.sin());
        let proj: Vec<f64> = (0..n)
            .map(|i| a * data.x.get(i, 0) + b * data.x.get(i, 1))
            .collect();
        let cs: Vec<f64> = (0..81).map(|k| -4.0 + 0.1 * k as f64).collect();
        // Per-group correct counts and positive counts as a function of c_s.
        let tally = |g: u8| -> Vec<(usize, usize)> {
            cs.iter()
                .map(|&c| {
                    let mut correct = 0;
                    let mut pos = 0;
                    for (i, &pr) in proj.iter().enumerate().take(n) {
                        if data.z[i] != g {
                            continue;
                        }
                        let p = pr + c > 0.0;
                        pos += usize::from(p);
                        correct += usize::from(p == (data.y[i] == 1));
                    }
                    (correct, pos)
                })
                .collect()
        };
        let (t0, t1) = (tally(0), tally(1));
        for &(c0, p0) in &t0 {
            for &(c1, p1) in &t1 {
                let di = (p0 as f64 / n0 as f64 - p1 as f64 / n1 as f64).abs();
                if di <= max_di {
                    best = best.max(100.0 * (c0 + c1) as f64 / n as f64);
                }
            }
        }
    }
    best
}

#[test]
fn criterion_7_and_8_biased_benchmark() {
    let start = Instant::now();
    let (train, val, test) = biased_splits(5000, 8);
    let spec = ConstraintSpec::new(CriterionKind::Di);
    let adv = AdversaryConfig::default();

    let base = train_restarts(
        &train,
        &benchmark_config(0.0, SurrogateSpec::slide(0.1).unwrap(), 7),
    )
    .unwrap();
    let base_model = select_model(&base, &val, &spec, &adv, 100.0, 100.0, 0).unwrap();
    let base_val = accuracy(base_model.model(), &val).unwrap();
    let base_acc = accuracy(base_model.model(), &test).unwrap();
    let base_di = indicator_constraint(base_model.model(), &test, &spec, &adv, 0).unwrap();

    let target = base_val - 2.0;
    let slide = selected(
        &train,
        &val,
        SurrogateSpec::slide(0.1).unwrap(),
        target,
        1.0,
    );
    let acc = accuracy(slide.model(), &test).unwrap();
    let di = indicator_constraint(slide.model(), &test, &spec, &adv, 0).unwrap();
    // The hinge model is matched to the SLIDE model's validation accuracy.
    let slide_val = accuracy(slide.model(), &val).unwrap();
    let hinge = selected(&train, &val, SurrogateSpec::hinge(), slide_val, 0.5);
    let hinge_acc = accuracy(hinge.model(), &test).unwrap();
    let hinge_di = indicator_constraint(hinge.model(), &test, &spec, &adv, 0).unwrap();
    let oracle = linear_oracle(&test, di + 0.005);

    // Criterion 7, second half: M_ratio of the selected DI+SLIDE model.
    let mnf = mnf_diagnostic(slide.model(), &test, &spec, slide.tau, &adv, 0, 0.10).unwrap();

    // Criterion 7, first half: the UIF identity against direct summation.
    let uif = ConstraintSpec::new(CriterionKind::Uif).with_gamma(0.01);
    let mut worst: f64 = 0.0;
    for (k, tau) in [0.01, 0.05, 0.1, 0.2].into_iter().enumerate() {
        let m = ModelParams::init(
            Architecture::Mlp {
                input_dim: 4,
                hidden_width: 6,
            },
            k as u64,
        )
        .unwrap();
        let r = mnf_diagnostic(&m, &test, &uif, tau, &adv, 3, 0.10).unwrap();
        let v = adversarial_batch(&m, &test.x, &test.perturbable_mask(), &adv, 3, 0).unwrap();
        let (f, fv) = (m.forward(&test.x).unwrap(), m.forward(&v).unwrap());
        let mut sum = 0.0;
        for i in 0..test.n() {
            let z = (f[i] - fv[i]).abs() - 0.01;
            let opp = if z <= -tau {
                0.0
            } else if z <= 0.0 {
                1.0 + z / tau
            } else {
                1.0
            };
            let sl = if z <= 0.0 {
                0.0
            } else if z <= tau {
                z / tau
            } else {
                1.0
            };
            sum += opp - sl;
        }
        worst = worst.max((r.m_nf * tau - (sum / test.n() as f64).abs()).abs());
    }
    report(
        7,
        worst <= 1e-12 && mnf.m_ratio < 0.25,
        format!(
            "identity error {worst:.1e}; selected model tau={:.3} M_nf={:.4} M_ratio={:.4} verdict {:?}",
            slide.tau, mnf.m_nf, mnf.m_ratio, mnf.verdict
        ),
    );

    let secs = start.elapsed().as_secs_f64();
    let reduction = 1.0 - di / base_di;
    let pass = reduction >= 0.8
        && base_acc - acc <= 3.0
        && acc >= oracle - 3.0
        && di <= hinge_di
        && secs < 1800.0;
    report(
        8,
        pass,
        format!(
            "synthetic fallback: base acc {base_acc:.2} DI {base_di:.4}; slide acc {acc:.2} DI {di:.4} \
             (reduction {:.1}%); hinge acc {hinge_acc:.2} DI {hinge_di:.4}; oracle acc at DI<={:.4}: {oracle:.2}; {secs:.1}s",
            100.0 * reduction,
            di + 0.005
        ),
    );
}

// Criterion 9: brute-force oracles on 50 random small instances each.

fn brute_rate(f: &[f64], y: &[i8], z: &[u8], g: u8, yf: Option<i8>) -> Option<f64> {
    let idx: Vec<usize> = (0..f.len())
        .filter(|&i| z[i] == g && yf.is_none_or(|v| y[i] == v))
        .collect();
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().filter(|&&i| f[i] > 0.0).count() as f64 / idx.len() as f64)
}

#[test]
fn criterion_9_oracle_equivalences() {
    let ind = SurrogateSpec::indicator();
    let mut failures = Vec::new();
    let mut rng = substream(9, "c9", 0);
    for trial in 0..50 {
        let n = rng.gen_range(8..30);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fv: Vec<f64> = f.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let mut y: Vec<i8> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
            .collect();
        let mut z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        // Every (z, y) cell is non-empty.
        for (i, (zz, yy)) in [(0u8, 1i8), (0, -1), (1, 1), (1, -1)]
            .into_iter()
            .enumerate()
        {
            z[i] = zz;
            y[i] = yy;
        }
        let b = ScoredBatch::new(&f, &y, &z).unwrap();

        let di = empirical_constraint(&b, &ConstraintSpec::new(CriterionKind::Di), &ind)
            .unwrap()
            .value;
        let want = (brute_rate(&f, &y, &z, 0, None).unwrap()
            - brute_rate(&f, &y, &z, 1, None).unwrap())
        .abs();
        if di != want {
            failures.push(format!("di trial {trial}"));
        }

        let eo = empirical_constraint(&b, &ConstraintSpec::new(CriterionKind::Eo), &ind)
            .unwrap()
            .value;
        let want = [-1i8, 1]
            .iter()
            .map(|&v| {
                (brute_rate(&f, &y, &z, 0, Some(v)).unwrap()
                    - brute_rate(&f, &y, &z, 1, Some(v)).unwrap())
                .abs()
            })
            .fold(0.0, f64::max);
        if eo != want {
            failures.push(format!("eo trial {trial}"));
        }

        let gamma = 0.1;
        let uif = empirical_uif(&b.with_adversarial(&fv).unwrap(), gamma, &ind)
            .unwrap()
            .value;
        let hits = (0..n).filter(|&i| (f[i] - fv[i]).abs() > gamma).count();
        if uif != hits as f64 / n as f64 {
            failures.push(format!("uif trial {trial}"));
        }

        // Consistency: a linear model on (x, one-hot a with 3 levels).
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let lvl = rng.gen_range(0..3);
                let mut r = vec![rng.gen_range(-1.0..1.0)];
                r.extend((0..3).map(|k| if k == lvl { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        let cols = vec![
            Column::continuous("x"),
            Column::one_hot("a", "p"),
            Column::one_hot("a", "q"),
            Column::one_hot("a", "r"),
        ];
        let ds = Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            y.clone(),
            z.clone(),
            cols,
            "c9",
        )
        .unwrap();
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = ModelParams::linear(&w, 0.0);
        let got = consistency(&model, &ds, &["a".to_string()]).unwrap();
        let same = rows
            .iter()
            .filter(|r| {
                let preds: Vec<bool> = (0..3).map(|k| w[0] * r[0] + w[1 + k] > 0.0).collect();
                preds.iter().all(|&p| p == preds[0])
            })
            .count();
        if got != same as f64 / n as f64 {
            failures.push(format!("consistency trial {trial}"));
        }

        // Hausdorff on random grid masks against a double loop.
        let grid = ParamGrid::new([-1.0, -2.0], [1.0, 2.0], [9, 13]).unwrap();
        let a: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.15)).collect();
        let bm: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.15)).collect();
        let pa: Vec<[f64; 2]> = (0..grid.len())
            .filter(|&k| a[k])
            .map(|k| grid.node(k))
            .collect();
        let pb: Vec<[f64; 2]> = (0..grid.len())
            .filter(|&k| bm[k])
            .map(|k| grid.node(k))
            .collect();
        if !pa.is_empty() && !pb.is_empty() {
            let dd =
                |p: &[f64; 2], q: &[f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            let mut brute: f64 = 0.0;
            for p in &pa {
                brute = brute.max(pb.iter().map(|q| dd(p, q)).fold(f64::INFINITY, f64::min));
            }
            for q in &pb {
                brute = brute.max(pa.iter().map(|p| dd(p, q)).fold(f64::INFINITY, f64::min));
            }
            let h1 = hausdorff(&pa, &pb).unwrap();
            let h2 = hausdorff_grid(&grid, &a, &bm).unwrap();
            if (h1 - brute).abs() > 1e-12 || (h2 - brute).abs() > 1e-12 {
                failures.push(format!("hausdorff trial {trial}"));
            }
        }

        // Pareto dominance against the quadratic definition, with ties.
        let pts: Vec<(f64, f64)> = (0..rng.gen_range(1..12))
            .map(|_| {
                (
                    f64::from(rng.gen_range(0..5)),
                    f64::from(rng.gen_range(0..5)) / 10.0,
                )
            })
            .collect();
        let flags = dominated_flags(&pts);
        for (i, p) in pts.iter().enumerate() {
            let dom = pts
                .iter()
                .any(|q| q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1));
            if dom != flags[i] {
                failures.push(format!("pareto trial {trial}"));
            }
        }
    }
    report(
        9,
        failures.is_empty(),
        if failures.is_empty() {
            "di, eo, uif, consistency, hausdorff, pareto: 50 instances each".into()
        } else {
            failures.join(", ")
        },
    );
}
