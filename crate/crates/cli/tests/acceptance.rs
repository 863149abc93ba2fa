//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.
//!
//! Run with `cargo test -p cbrw-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cbrw_cli::{cmd_simulate, ModelConfig, SimParams};
use cbrw_core::asymptotics::{s0_root, AsymptoticLaw, Theorem};
use cbrw_core::excursion::{excursion_matrix, excursion_probs_single};
use cbrw_core::monte_carlo::{estimate_tail, estimate_tail_steps, BelowBarrier, SimConfig, StepLimits};
use cbrw_core::oracle::absorption_oracle;
use cbrw_core::solver::{solve_level, solve_single, solve_system};
use cbrw_core::{CatalystSet, Model, OffspringDist, WalkSpec};

type Check = Result<String, String>;

fn law(pairs: &[(usize, f64)]) -> OffspringDist {
    OffspringDist::from_pairs(pairs.iter().copied()).unwrap()
}

fn single(p: f64, alpha: f64, pairs: &[(usize, f64)]) -> Model {
    Model::new(
        WalkSpec::simple(p).unwrap(),
        CatalystSet::single(alpha, law(pairs)).unwrap(),
    )
}

const CRIT: &[(usize, f64)] = &[(0, 0.5), (2, 0.5)];
const HALF_MEAN: &[(usize, f64)] = &[(0, 0.75), (2, 0.25)];
// mean 1.2 = 1 + r (1 - alpha) / alpha with r = 0.2, alpha = 0.5
const DRIFT_CRIT: &[(usize, f64)] = &[(0, 0.4), (2, 0.6)];

/// The five single-catalyst instances used by the asymptotic criteria.
fn instances() -> Vec<(&'static str, Model)> {
    vec![
        ("critical symmetric", single(0.5, 0.5, CRIT)),
        ("subcritical symmetric", single(0.5, 0.5, HALF_MEAN)),
        ("critical drift left", single(0.4, 0.5, DRIFT_CRIT)),
        ("critical drift right", single(0.6, 0.5, DRIFT_CRIT)),
        ("subcritical drift left", single(0.3, 0.5, HALF_MEAN)),
    ]
}

fn tail(model: &Model, x: i64) -> f64 {
    solve_level(model, 0, x).unwrap().value
}

fn geometric(from: f64, to: f64, per_decade: usize) -> Vec<i64> {
    let n = ((to / from).log10() * per_decade as f64).round() as usize;
    let mut v: Vec<i64> = (0..=n)
        .map(|k| (from * (to / from).powf(k as f64 / n as f64)).round() as i64)
        .collect();
    v.dedup();
    v
}

/// `|ratio - 1|` does not grow along the grid, up to rounding noise.
fn monotone_approach(xs: &[i64], ratio: impl Fn(i64) -> f64) -> Result<(), String> {
    let dev: Vec<f64> = xs.iter().map(|&x| (ratio(x) - 1.0).abs()).collect();
    for (i, w) in dev.windows(2).enumerate() {
        if w[1] > w[0] + 1e-12 {
            return Err(format!(
                "deviation grew from {:e} at x={} to {:e} at x={}",
                w[0],
                xs[i],
                w[1],
                xs[i + 1]
            ));
        }
    }
    Ok(())
}

fn within_time(t: Duration, limit: Duration) -> Result<(), String> {
    if t < limit {
        Ok(())
    } else {
        Err(format!("took {t:?}, limit {limit:?}"))
    }
}

/// Excursion probabilities from one catalyst at 0, rebuilt from first-passage
/// probabilities of the absorbing chain rather than the closed forms.
fn oracle_excursion(walk: &WalkSpec, p: f64, x: i64) -> (f64, f64, f64) {
    let table = absorption_oracle(walk, &[0], -2_000, x).unwrap();
    let left = table.row(-1).unwrap();
    let (right_return, right_exceed) = match table.row(1) {
        Some(r) => (r.targets[0], r.above),
        None => (0.0, 1.0),
    };
    let q = 1.0 - p;
    (
        p * right_return + q * left.targets[0],
        p * right_exceed + q * left.above,
        q * left.below,
    )
}

fn c1_symmetric_excursions() -> Check {
    let walk = WalkSpec::simple(0.5).unwrap();
    let t = Instant::now();
    let mut worst = 0.0f64;
    for x in 0..=10_000i64 {
        let e = excursion_probs_single(&walk, x).unwrap();
        let xf = x as f64;
        let p1 = (2.0 * xf + 1.0) / (2.0 * (xf + 1.0));
        let p2 = 1.0 / (2.0 * (xf + 1.0));
        worst = worst
            .max((e.p1 - p1).abs())
            .max((e.p2 - p2).abs())
            .max((e.p1 + e.p2 + e.p_escape - 1.0).abs());
    }
    let elapsed = t.elapsed();
    if worst > 1e-12 {
        return Err(format!("max deviation {worst:e}"));
    }
    let e1 = excursion_probs_single(&walk, 1).unwrap();
    if e1.p1 != 0.75 || e1.p2 != 0.25 {
        return Err(format!("p1(1)={}, p2(1)={}", e1.p1, e1.p2));
    }
    let mut oracle_worst = 0.0f64;
    for x in [0, 1, 2, 5, 10, 50, 100, 500] {
        let e = excursion_probs_single(&walk, x).unwrap();
        let (p1, p2, _) = oracle_excursion(&walk, 0.5, x);
        oracle_worst = oracle_worst.max((e.p1 - p1).abs()).max((e.p2 - p2).abs());
    }
    if oracle_worst > 1e-9 {
        return Err(format!("oracle deviation {oracle_worst:e}"));
    }
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "max |closed - formula| {worst:e}, max |closed - oracle| {oracle_worst:e}, {elapsed:?}"
    ))
}

fn c2_drift_excursions_vs_oracle() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for p in [0.3, 0.4, 0.45, 0.55, 0.6, 0.7] {
        let walk = WalkSpec::simple(p).unwrap();
        for x in 0..=50 {
            let e = excursion_probs_single(&walk, x).unwrap();
            let (p1, p2, esc) = oracle_excursion(&walk, p, x);
            let d = (e.p1 - p1).abs().max((e.p2 - p2).abs()).max((e.p_escape - esc).abs());
            if d > 1e-9 {
                return Err(format!("p={p} x={x}: deviation {d:e}"));
            }
            worst = worst.max(d);
        }
    }
    let elapsed = t.elapsed();
    within_time(elapsed, Duration::from_secs(10))?;
    Ok(format!("max deviation {worst:e}, {elapsed:?}"))
}

fn c3_critical_symmetric() -> Check {
    let m = single(0.5, 0.5, CRIT);
    let t = Instant::now();
    let xs = geometric(1e3, 1e6, 10);
    let ratio = |x: i64| tail(&m, x) * (x as f64).sqrt();
    monotone_approach(&xs, ratio)?;
    let r = ratio(1_000_000);
    let elapsed = t.elapsed();
    if (r - 1.0).abs() >= 0.02 {
        return Err(format!("tail*sqrt(x) = {r} at x=1e6"));
    }
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(format!("tail*sqrt(x) = {r} at x=1e6, monotone from 1e3, {elapsed:?}"))
}

fn c4_subcritical_symmetric() -> Check {
    let m = single(0.5, 0.5, HALF_MEAN);
    let ratio = |x: i64| tail(&m, x) * x as f64;
    monotone_approach(&geometric(1e2, 1e5, 10), ratio)?;
    let r = ratio(100_000);
    if (r - 1.0).abs() >= 0.01 {
        return Err(format!("tail*x = {r} at x=1e5"));
    }
    Ok(format!("tail*x = {r} at x=1e5"))
}

fn law_ratio(m: &Model, theorem: Theorem, x_check: i64, tol: f64) -> Check {
    let law = AsymptoticLaw::for_model(m, theorem).map_err(|e| e.to_string())?;
    let ratio = |x: i64| tail(m, x) / law.predict(x).unwrap();
    monotone_approach(&geometric(10.0, x_check as f64, 10), ratio)?;
    let r = ratio(x_check);
    if (r - 1.0).abs() >= tol {
        return Err(format!("ratio {r} at x={x_check}"));
    }
    Ok(format!("ratio {r} at x={x_check}"))
}

fn c5_critical_drift_left() -> Check {
    law_ratio(&single(0.4, 0.5, DRIFT_CRIT), Theorem::CriticalDrift, 200, 0.02)
}

fn c6_drift_right_limit() -> Check {
    let mut lines = Vec::new();
    for (name, m, theorem) in [
        ("critical", single(0.6, 0.5, DRIFT_CRIT), Theorem::CriticalDrift),
        ("subcritical", single(0.7, 0.5, HALF_MEAN), Theorem::SubcriticalDrift),
    ] {
        AsymptoticLaw::for_model(&m, theorem).map_err(|e| format!("{name}: {e}"))?;
        let c = m.catalysts.get(0);
        let p = m.walk.as_simple().unwrap();
        let s0 = s0_root(c.alpha, &c.offspring, p, 1.0 - p)
            .map_err(|e| e.to_string())?
            .value;
        let v = tail(&m, 200);
        if (v - s0).abs() >= 1e-6 {
            return Err(format!("{name}: tail(200) = {v}, s0 = {s0}"));
        }
        lines.push(format!("{name}: |tail(200) - s0| = {:e}", (v - s0).abs()));
    }
    Ok(lines.join("; "))
}

fn c7_subcritical_drift_left() -> Check {
    law_ratio(&single(0.3, 0.5, HALF_MEAN), Theorem::SubcriticalDrift, 100, 0.02)
}

fn c8_solver_vs_mc() -> Check {
    let t = Instant::now();
    let n = 1_000_000u64;
    let mut worst = 0.0f64;
    for (k, (name, m)) in instances().into_iter().enumerate() {
        for x in [0, 1, 2, 5, 10] {
            let exact = tail(&m, x);
            let cfg = SimConfig::new(n, 1_000 + k as u64);
            let est = estimate_tail(&m, 0, x, &cfg).map_err(|e| e.to_string())?;
            if est.censored_trials != 0 {
                return Err(format!("{name} x={x}: {} censored", est.censored_trials));
            }
            let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
            let z = (est.estimate - exact).abs() / sigma;
            if z > 3.5 {
                return Err(format!("{name} x={x}: mc {} vs solver {exact} ({z:.2} sigma)", est.estimate));
            }
            worst = worst.max(z);
        }
    }
    let elapsed = t.elapsed();
    within_time(elapsed, Duration::from_secs(300))?;
    Ok(format!("25 cells, worst {worst:.2} sigma, no censoring, {elapsed:?}"))
}

fn step_limits() -> StepLimits {
    StepLimits {
        step_cap: 100_000_000,
        left_barrier: -200,
        below_barrier: BelowBarrier::Return,
    }
}

fn c9_step_vs_excursion() -> Check {
    let m = single(0.5, 0.5, CRIT);
    let n = 100_000u64;
    let mut worst = 0.0f64;
    for x in [1, 3, 5] {
        let a = estimate_tail(&m, 0, x, &SimConfig::new(n, 77)).map_err(|e| e.to_string())?;
        let b = estimate_tail_steps(&m, 0, x, &SimConfig::new(n, 78), step_limits())
            .map_err(|e| e.to_string())?;
        if b.censored_trials != 0 {
            return Err(format!("x={x}: {} step-level trials censored", b.censored_trials));
        }
        let sigma = (a.stderr().powi(2) + b.stderr().powi(2)).sqrt();
        let z = (a.estimate - b.estimate).abs() / sigma;
        if z > 3.0 {
            return Err(format!("x={x}: excursion {} vs step {} ({z:.2} sigma)", a.estimate, b.estimate));
        }
        worst = worst.max(z);
    }
    Ok(format!("worst {worst:.2} sigma over x in {{1,3,5}}"))
}

fn c10_multi_catalyst() -> Check {
    let cats = CatalystSet::new(
        [0, 4]
            .into_iter()
            .map(|w| cbrw_core::Catalyst {
                position: w,
                alpha: 0.5,
                beta: 1.0,
                offspring: law(CRIT),
            })
            .collect(),
    )
    .unwrap();
    let m = Model::new(WalkSpec::simple(0.5).unwrap(), cats);
    let regime = m.classify().map_err(|e| e.to_string())?;
    if regime.label != cbrw_core::RegimeLabel::Critical {
        return Err(format!("two-catalyst instance classified {}", regime.label));
    }
    let n = 100_000u64;
    let mut worst = 0.0f64;
    for x in [5, 10] {
        let exact = tail(&m, x);
        let est = estimate_tail_steps(&m, 0, x, &SimConfig::new(n, 90 + x as u64), step_limits())
            .map_err(|e| e.to_string())?;
        if est.censored_trials != 0 {
            return Err(format!("x={x}: {} censored", est.censored_trials));
        }
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        let z = (est.estimate - exact).abs() / sigma;
        if z > 3.5 {
            return Err(format!("x={x}: step mc {} vs system {exact} ({z:.2} sigma)", est.estimate));
        }
        worst = worst.max(z);
    }

    let mut reduction = 0.0f64;
    for (_, m1) in instances() {
        let c = m1.catalysts.get(0);
        for x in [0, 1, 5, 20, 100] {
            let one = solve_single(x, c.alpha, &c.offspring, &excursion_probs_single(&m1.walk, x).unwrap())
                .unwrap()
                .value;
            let em = excursion_matrix(&m1.walk, &[0], x).unwrap();
            let sys = solve_system(x, &m1.catalysts, &em).unwrap().values[0];
            reduction = reduction.max((one - sys).abs());
        }
    }
    if reduction >= 1e-14 {
        return Err(format!("N=1 system differs from single by {reduction:e}"));
    }
    Ok(format!("N=2 worst {worst:.2} sigma; N=1 max difference {reduction:e}"))
}

fn c11_determinism() -> Check {
    let cfg = ModelConfig::from_json(include_str!("fixtures/critical_symmetric.json"))
        .map_err(|e| e.to_string())?;
    let run = |streams| {
        let sim = SimParams {
            trials: 50_000,
            seed: 2024,
            streams,
            max_population: 1_000_000,
        };
        cmd_simulate(&cfg, &[0, 1, 2, 5, 10], &sim).map_err(|e| e.to_string())
    };
    let base = run(1)?;
    for streams in [4, 8] {
        if run(streams)? != base {
            return Err(format!("output with {streams} streams differs from 1 stream"));
        }
    }
    Ok(format!("{} bytes identical for 1, 4, 8 streams", base.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("excursion probabilities, symmetric walk", c1_symmetric_excursions),
        ("excursion probabilities vs absorbing chain", c2_drift_excursions_vs_oracle),
        ("critical symmetric law", c3_critical_symmetric),
        ("subcritical symmetric law", c4_subcritical_symmetric),
        ("critical drift-left law", c5_critical_drift_left),
        ("drift-right limit s0", c6_drift_right_limit),
        ("subcritical drift-left law", c7_subcritical_drift_left),
        ("solver vs excursion Monte Carlo", c8_solver_vs_mc),
        ("step-level vs excursion-level Monte Carlo", c9_step_vs_excursion),
        ("multi-catalyst solver", c10_multi_catalyst),
        ("simulate output independent of streams", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{:.1?}]", i + 1, t.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{:.1?}]", i + 1, t.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
