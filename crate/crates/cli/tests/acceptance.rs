//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fsdc::classifiers::{hinge_loss_gradient, logistic_loss_gradient, ModelGradient};
use fsdc::dataset::{read_binary, write_binary};
use fsdc::harness::paired_difference;
use fsdc::rng::{stream, Rng};
use fsdc::{
    calibrate, class_covariance, class_mean, generate_synthetic, mean_marginal_skewness, sample_features,
    tukey_transform, BaseStatsTable, Baseline, Benchmark, CalibrationParams, ClassStatistics, EpisodeSpec, EvalReport,
    LinearModel, Matrix, ModelKind, PipelineConfig, SamplerConfig, SweepParam, SyntheticSpec, TrainSet, TukeyParams,
};
use rand::Rng as _;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let mut outcome = f();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(b)) = (&outcome, budget) {
            if elapsed > b {
                outcome = Err(format!(
                    "{detail}; took {:.1}s, budget {:.0}s",
                    elapsed.as_secs_f64(),
                    b.as_secs_f64()
                ));
            }
        }
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{id}] {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
    }
}

fn rng(seed: u64) -> Rng {
    stream(seed, &[0xacce])
}

fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Covariance with the `1/n` normalization, by plain loops.
fn sample_cov(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut mean = vec![0.0; d];
    for x in xs {
        for j in 0..d {
            mean[j] += x[j] / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for x in xs {
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += da * (x[b] - mean[b]) / n;
            }
        }
    }
    (mean, cov)
}

fn rel_frobenius(est: &[f64], target: &[f64]) -> f64 {
    let diff: f64 = est.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = target.iter().map(|v| v * v).sum();
    (diff / norm).sqrt()
}

/// `A Aᵀ / d + floor·I` for a Gaussian `A`.
fn random_spd(rng: &mut Rng, d: usize, floor: f64) -> Matrix {
    let a = normals(rng, d * d);
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|t| a[i * d + t] * a[j * d + t]).sum();
            m[(i, j)] = s / d as f64 + if i == j { floor } else { 0.0 };
        }
    }
    m
}

fn table(entries: Vec<(Vec<f64>, Matrix)>) -> BaseStatsTable {
    let d = entries[0].0.len();
    let stats = entries
        .into_iter()
        .enumerate()
        .map(|(i, (mean, covariance))| ClassStatistics {
            class_id: i as u32,
            mean,
            covariance,
            count: 100,
        });
    BaseStatsTable::new(d, stats).unwrap()
}

fn equation_fidelity() -> Check {
    // class_mean
    ensure(
        class_mean(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap() == vec![1.0, 1.0],
        || "midpoint mean".into(),
    )?;
    let v = vec![0.3, -1.7, 4.0];
    ensure(class_mean(std::slice::from_ref(&v)).unwrap() == v, || {
        "single-vector mean".into()
    })?;
    let mut r = rng(1);
    let mu: Vec<f64> = (0..6).map(|j| j as f64 - 2.5).collect();
    let draws: Vec<Vec<f64>> = (0..1000)
        .map(|_| mu.iter().zip(normals(&mut r, 6)).map(|(m, z)| m + z).collect())
        .collect();
    ensure(close(&class_mean(&draws).unwrap(), &mu, 0.15), || {
        "mean of 1000 N(mu, I) draws".into()
    })?;

    // class_covariance
    let pair = [vec![0.0, 0.0], vec![2.0, 2.0]];
    let c = class_covariance(&pair, &[1.0, 1.0]).unwrap();
    ensure(c.as_slice() == [2.0, 2.0, 2.0, 2.0], || {
        format!("hand covariance {:?}", c.as_slice())
    })?;
    let copies = vec![vec![1.5, -2.0, 0.25]; 7];
    let z = class_covariance(&copies, &class_mean(&copies).unwrap()).unwrap();
    ensure(z.as_slice().iter().all(|&v| v == 0.0), || {
        "copies give a zero matrix".into()
    })?;
    // Known factor L gives Σ = L Lᵀ.
    let l = [[1.2, 0.0, 0.0], [0.5, 0.9, 0.0], [-0.3, 0.4, 0.6]];
    let mut sigma = vec![0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            sigma[i * 3 + j] = (0..3).map(|t| l[i][t] * l[j][t]).sum();
        }
    }
    let draws: Vec<Vec<f64>> = (0..5000)
        .map(|_| {
            let z = normals(&mut r, 3);
            (0..3)
                .map(|i| 1.0 + (0..3).map(|t| l[i][t] * z[t]).sum::<f64>())
                .collect()
        })
        .collect();
    let est = class_covariance(&draws, &class_mean(&draws).unwrap()).unwrap();
    ensure(est.is_symmetric(), || "covariance not symmetric".into())?;
    let err = rel_frobenius(est.as_slice(), &sigma);
    ensure(err < 0.10, || format!("5000-draw covariance error {err:.3}"))?;

    // calibrate
    let m = vec![0.7, -0.2, 1.9];
    let cov = random_spd(&mut r, 3, 0.1);
    let t1 = table(vec![(m.clone(), cov.clone())]);
    let x = vec![0.1, 0.4, -0.5];
    let p = CalibrationParams {
        k: 1,
        alpha: 0.0,
        ..CalibrationParams::default()
    };
    let d = calibrate(&x, &t1, &p, 0).unwrap();
    let expect: Vec<f64> = m.iter().zip(&x).map(|(a, b)| (a + b) / 2.0).collect();
    ensure(d.mean == expect, || format!("k=1 mean {:?} vs {:?}", d.mean, expect))?;
    ensure(d.covariance == cov, || "k=1, alpha=0 covariance".into())?;
    let d = calibrate(&x, &t1, &CalibrationParams { alpha: 0.21, ..p }, 0).unwrap();
    let shifted: Vec<f64> = cov.as_slice().iter().map(|v| v + 0.21).collect();
    ensure(close(d.covariance.as_slice(), &shifted, 1e-15), || {
        "alpha added to every entry".into()
    })?;
    ensure(d.covariance.is_symmetric(), || {
        "calibrated covariance not symmetric".into()
    })?;
    let (m1, m2, far) = (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![9.0, 9.0, 9.0]);
    let t3 = table(vec![
        (m1.clone(), cov.clone()),
        (far, cov.clone()),
        (m2.clone(), cov.clone()),
    ]);
    let d = calibrate(&x, &t3, &CalibrationParams { k: 2, ..p }, 0).unwrap();
    let expect: Vec<f64> = (0..3).map(|j| (m1[j] + m2[j] + x[j]) / 3.0).collect();
    ensure(close(&d.mean, &expect, 1e-15), || {
        format!("k=2 mean {:?} vs {:?}", d.mean, expect)
    })?;

    // tukey_transform
    let half = TukeyParams::with_lambda(0.5);
    ensure(tukey_transform(&[4.0, 9.0], &half).unwrap() == vec![2.0, 3.0], || {
        "square roots".into()
    })?;
    let any = vec![0.0, 0.37, 12.5, 1e-9];
    ensure(
        tukey_transform(&any, &TukeyParams::with_lambda(1.0)).unwrap() == any,
        || "lambda=1 identity".into(),
    )?;
    let logs = tukey_transform(&[1.0, std::f64::consts::E], &TukeyParams::with_lambda(0.0)).unwrap();
    ensure(close(&logs, &[0.0, 1.0], 1e-15), || format!("logs {logs:?}"))?;
    ensure(tukey_transform(&[1.0, -0.5], &half).is_err(), || {
        "negative input accepted".into()
    })?;

    Ok("hand and oracle examples for mean, covariance, calibration and transform".into())
}

fn sampler_moments() -> Check {
    let mut worst: f64 = 0.0;
    for (d, seed) in [(2usize, 1u64), (5, 2), (16, 3)] {
        let mut r = rng(100 + seed);
        let entries = (0..8).map(|_| {
            (
                normals(&mut r, d).iter().map(|v| 2.0 * v).collect(),
                random_spd(&mut r, d, 0.05),
            )
        });
        let tbl = table(entries.collect());
        let x = normals(&mut r, d);
        let dist = calibrate(&x, &tbl, &CalibrationParams::default(), 0).unwrap();
        let n = 100_000;
        let cfg = SamplerConfig {
            total_per_class: n,
            seed,
            jitter: 1e-6,
        };
        let out = sample_features(&BTreeMap::from([(0usize, vec![dist.clone()])]), &cfg).map_err(|e| e.to_string())?;
        ensure(out.samples.len() == n, || {
            format!("d={d}: {} samples", out.samples.len())
        })?;
        let c = out.repairs.iter().map(|r| r.2).fold(0.0, f64::max);
        let xs: Vec<Vec<f64>> = out.samples.into_iter().map(|(x, _)| x).collect();
        let mut target = dist.covariance.clone();
        target.add_diagonal(c);
        let (mean, cov) = sample_cov(&xs);
        for j in 0..d {
            let bound = 5.0 * target[(j, j)].sqrt() / (n as f64).sqrt();
            ensure((mean[j] - dist.mean[j]).abs() < bound, || {
                format!(
                    "d={d} dim {j}: mean {} vs {} (bound {bound:.2e})",
                    mean[j], dist.mean[j]
                )
            })?;
        }
        let err = rel_frobenius(&cov, target.as_slice());
        ensure(err < 0.10, || format!("d={d}: covariance error {err:.3}"))?;
        worst = worst.max(err);
    }
    Ok(format!(
        "d = 2, 5, 16 at 1e5 samples; worst covariance error {:.2}%",
        100.0 * worst
    ))
}

const H: f64 = 1e-6;

type Objective = fn(&LinearModel, &TrainSet, f64) -> fsdc::Result<(f64, ModelGradient)>;

fn random_problem(seed: u64, kind: ModelKind) -> (LinearModel, TrainSet) {
    let mut r = rng(200 + seed);
    let (k, d, n) = (4, 6, 40);
    let mut ts = TrainSet::new(d, (0..k as u32).collect());
    for i in 0..n {
        ts.push(&normals(&mut r, d), i % k).unwrap();
    }
    let mut model = LinearModel::zeros(k, d, kind);
    for c in 0..k {
        model.weights.row_mut(c).copy_from_slice(&normals(&mut r, d));
    }
    model.bias = normals(&mut r, k);
    (model, ts)
}

fn kink_distance(model: &LinearModel, ts: &TrainSet) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..ts.len() {
        let y = ts.labels()[i];
        for (c, s) in model.scores(ts.feature(i)).unwrap().into_iter().enumerate() {
            let margin = if c == y { s } else { -s };
            best = best.min((1.0 - margin).abs());
        }
    }
    best
}

fn gradient_error(f: Objective, model: &LinearModel, ts: &TrainSet, l2: f64) -> f64 {
    let g = f(model, ts, l2).unwrap().1;
    let loss = |m: &LinearModel| f(m, ts, l2).unwrap().0;
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for c in 0..model.num_classes() {
        for j in 0..=model.dim() {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let analytic = if j < model.dim() {
                plus.weights[(c, j)] += H;
                minus.weights[(c, j)] -= H;
                g.weights[(c, j)]
            } else {
                plus.bias[c] += H;
                minus.bias[c] -= H;
                g.bias[c]
            };
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            diff += (analytic - numeric) * (analytic - numeric);
            na += analytic * analytic;
            nn += numeric * numeric;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}

fn gradient_checks() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (model, ts) = random_problem(seed, ModelKind::Logistic);
        let err = gradient_error(logistic_loss_gradient, &model, &ts, 0.1);
        ensure(err < 1e-5, || {
            format!("logistic point {seed}: relative error {err:.2e}")
        })?;
        worst = worst.max(err);
    }
    let (mut checked, mut seed) = (0, 100);
    while checked < 10 {
        seed += 1;
        let (model, ts) = random_problem(seed, ModelKind::Svm);
        if kink_distance(&model, &ts) < 1e3 * H {
            continue;
        }
        let err = gradient_error(hinge_loss_gradient, &model, &ts, 0.1);
        ensure(err < 1e-5, || format!("hinge point {seed}: relative error {err:.2e}"))?;
        worst = worst.max(err);
        checked += 1;
    }
    Ok(format!(
        "10 logistic and 10 hinge points; worst relative error {worst:.1e}"
    ))
}

/// Evaluates pipeline settings on the synthetic benchmark, reusing reports of identical settings.
struct Cells<'a> {
    bench: Benchmark<'a>,
    spec: EpisodeSpec,
    cache: HashMap<String, EvalReport>,
}

impl Cells<'_> {
    fn get(&mut self, cfg: &PipelineConfig) -> Result<EvalReport, String> {
        let key = serde_json::to_string(cfg).unwrap();
        if let Some(r) = self.cache.get(&key) {
            return Ok(r.clone());
        }
        let r = self.bench.evaluate(&self.spec, cfg).map_err(|e| e.to_string())?;
        self.cache.insert(key, r.clone());
        Ok(r)
    }
}

fn show(r: &EvalReport) -> String {
    format!("{} ± {}", pct(r.mean_accuracy), pct(r.ci95_halfwidth))
}

fn neither() -> PipelineConfig {
    PipelineConfig {
        use_tukey: false,
        use_generation: false,
        ..PipelineConfig::default()
    }
}

fn relative_improvement(cells: &mut Cells) -> Check {
    let tg = cells.get(&PipelineConfig::default())?;
    let nn = cells.get(&neither())?;
    let tn = cells.get(&PipelineConfig {
        use_generation: false,
        ..PipelineConfig::default()
    })?;
    let ng = cells.get(&PipelineConfig {
        use_tukey: false,
        ..PipelineConfig::default()
    })?;
    let detail = format!(
        "both {} | neither {} | tukey only {} | generation only {}",
        show(&tg),
        show(&nn),
        show(&tn),
        show(&ng)
    );
    let gap = tg.mean_accuracy - nn.mean_accuracy;
    ensure(gap >= 0.03, || format!("{detail}; gap {} < 3 points", pct(gap)))?;
    ensure(
        tg.mean_accuracy - tg.ci95_halfwidth > nn.mean_accuracy + nn.ci95_halfwidth,
        || format!("{detail}; confidence intervals overlap"),
    )?;
    ensure(
        tg.mean_accuracy > tn.mean_accuracy && tg.mean_accuracy > ng.mean_accuracy,
        || format!("{detail}; a single-flag cell is not beaten"),
    )?;
    Ok(format!("{detail} over {} episodes", tg.num_episodes))
}

fn lambda_sweep(cells: &mut Cells) -> Check {
    let base = PipelineConfig::default();
    let mut rows = Vec::new();
    for lambda in [0.2, 0.5, 1.0, 1.5] {
        let cfg = SweepParam::Lambda.apply(&base, lambda).map_err(|e| e.to_string())?;
        rows.push((lambda, cells.get(&cfg)?));
    }
    let detail = rows
        .iter()
        .map(|(l, r)| format!("{l}: {}", show(r)))
        .collect::<Vec<_>>()
        .join(" | ");
    let (best, winner) = rows
        .iter()
        .max_by(|a, b| a.1.mean_accuracy.total_cmp(&b.1.mean_accuracy))
        .unwrap();
    ensure(*best < 1.0, || format!("{detail}; maximized at lambda {best}"))?;
    let one = &rows.iter().find(|(l, _)| *l == 1.0).unwrap().1;
    let (diff, ci) = paired_difference(winner, one).map_err(|e| e.to_string())?;
    ensure(diff - ci > 0.0, || {
        format!("{detail}; paired gain {} ± {} at lambda {best}", pct(diff), pct(ci))
    })?;
    Ok(format!(
        "{detail}; lambda {best} beats 1.0 by {} ± {} paired",
        pct(diff),
        pct(ci)
    ))
}

fn retrieval_baselines(cells: &mut Cells) -> Check {
    let base = PipelineConfig::default();
    let support_only = cells.get(&neither())?;
    let m1 = cells.get(&PipelineConfig {
        baseline: Baseline::NearestClass(1),
        ..base
    })?;
    let m100 = cells.get(&PipelineConfig {
        baseline: Baseline::NearestClass(100),
        ..base
    })?;
    let dc100 = cells.get(
        &SweepParam::NumGenerated
            .apply(&base, 100.0)
            .map_err(|e| e.to_string())?,
    )?;
    let (d1, c1) = paired_difference(&m1, &support_only).map_err(|e| e.to_string())?;
    let (d2, c2) = paired_difference(&dc100, &m100).map_err(|e| e.to_string())?;
    let detail = format!(
        "m=1 minus support-only {} ± {} | DC-100 minus m=100 {} ± {}",
        pct(d1),
        pct(c1),
        pct(d2),
        pct(c2)
    );
    ensure(d1 >= 0.01 && d2 >= 0.01, || format!("{detail}; a gap is below 1 point"))?;
    Ok(detail)
}

fn novel_feature(cells: &mut Cells) -> Check {
    let base = PipelineConfig::default();
    let dc = cells.get(&base)?;
    let without = cells.get(&PipelineConfig {
        calib: CalibrationParams {
            use_novel_feature: false,
            ..base.calib
        },
        ..base
    })?;
    let (d, c) = paired_difference(&dc, &without).map_err(|e| e.to_string())?;
    let detail = format!(
        "default {} | without novel feature {} | paired gap {} ± {}",
        show(&dc),
        show(&without),
        pct(d),
        pct(c)
    );
    ensure(d >= 0.02, || format!("{detail}; gap below 2 points"))?;
    Ok(detail)
}

fn skewness_reduction() -> Check {
    let half = TukeyParams::with_lambda(0.5);
    let (mut before_sum, mut after_sum, mut n) = (0.0, 0.0, 0);
    for seed in 0..10 {
        let (ds, split, _) = generate_synthetic(&SyntheticSpec::benchmark(seed)).map_err(|e| e.to_string())?;
        for &c in &split.novel_classes {
            let raw = ds.class_features(c).map_err(|e| e.to_string())?;
            let transformed: Vec<Vec<f64>> = raw.iter().map(|x| tukey_transform(x, &half).unwrap()).collect();
            let before = mean_marginal_skewness(&raw).map_err(|e| e.to_string())?;
            let after = mean_marginal_skewness(&transformed).map_err(|e| e.to_string())?;
            ensure(after < before, || {
                format!("seed {seed} class {c}: {after:.3} >= {before:.3}")
            })?;
            before_sum += before;
            after_sum += after;
            n += 1;
        }
    }
    let n = n as f64;
    Ok(format!(
        "every novel class on 10 seeds; average skewness {:.3} -> {:.3}",
        before_sum / n,
        after_sum / n
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fsdc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "fsdc {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn determinism(dir: &Path) -> Check {
    let d = dir.to_str().unwrap();
    run_cli(&["synth", "--seed", "3", "--out-dir", d])?;
    let dataset = dir.join("dataset.fsdc");
    let split = dir.join("split.json");
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.join(name);
        run_cli(&[
            "eval",
            "--dataset",
            dataset.to_str().unwrap(),
            "--split",
            split.to_str().unwrap(),
            "--episodes",
            "40",
            "--out",
            out.to_str().unwrap(),
        ])?;
        reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(!reports[0].is_empty() && reports[0] == reports[1], || {
        "reports differ".into()
    })?;

    let bytes = std::fs::read(&dataset).map_err(|e| e.to_string())?;
    let ds = read_binary(bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_binary(&ds, &mut again).map_err(|e| e.to_string())?;
    ensure(again == bytes, || "rewritten dataset differs".into())?;
    let back = read_binary(again.as_slice()).map_err(|e| e.to_string())?;
    let same_bits = ds.records().iter().zip(back.records()).all(|(a, b)| {
        a.class_id == b.class_id
            && a.values
                .iter()
                .map(|v| v.to_bits())
                .eq(b.values.iter().map(|v| v.to_bits()))
    });
    ensure(same_bits && ds.len() == back.len(), || {
        "values changed in round-trip".into()
    })?;
    Ok(format!(
        "two eval runs gave identical {}-byte reports; {}-byte dataset round-trips bit-exactly",
        reports[0].len(),
        bytes.len()
    ))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    suite.run(1, "equation fidelity", Some(Duration::from_secs(1)), equation_fidelity);
    suite.run(2, "sampler moments", Some(Duration::from_secs(30)), sampler_moments);
    suite.run(3, "gradient checks", Some(Duration::from_secs(5)), gradient_checks);

    let spec = SyntheticSpec::benchmark(0);
    let (ds, split, _) = generate_synthetic(&spec).expect("benchmark dataset");
    let mut cells = Cells {
        bench: Benchmark::new(&ds, &split).expect("benchmark statistics"),
        spec: EpisodeSpec {
            num_episodes: 1000,
            ..EpisodeSpec::default()
        },
        cache: HashMap::new(),
    };
    suite.run(4, "relative improvement", Some(Duration::from_secs(600)), || {
        relative_improvement(&mut cells)
    });
    suite.run(5, "lambda sweep shape", None, || lambda_sweep(&mut cells));
    suite.run(6, "nearest-class retrieval", None, || retrieval_baselines(&mut cells));
    suite.run(7, "novel feature in the mean", None, || novel_feature(&mut cells));
    suite.run(8, "skewness reduction", None, skewness_reduction);

    let dir = tempfile::tempdir().expect("temporary directory");
    suite.run(9, "determinism", None, || determinism(dir.path()));

    if suite.failures > 0 {
        println!("{} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
