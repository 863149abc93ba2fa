//! Subcommand bodies. Each returns the full text of its output file.

use std::fmt::Write as _;

use cbrw_core::asymptotics::{convergence_report, AsymptoticLaw, DriftTag, Theorem};
use cbrw_core::monte_carlo::{estimate_tail, SimConfig};
use cbrw_core::solver::tail_curve;

use crate::config::ModelConfig;
use crate::error::CliError;
use crate::output::{fmt_float, join_levels, RunRecord};

/// Lin grids list every level unless `points` is given; longer grids must be geometric.
pub const MAX_LIN_LEVELS: i64 = 1_000_000;
pub const DEFAULT_GEO_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GridKind {
    Lin,
    Geo,
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridKind::Lin => "lin",
            GridKind::Geo => "geo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub from: i64,
    pub to: i64,
    pub kind: GridKind,
    pub points: Option<usize>,
}

impl GridSpec {
    pub fn levels(&self) -> Result<Vec<i64>, CliError> {
        let (from, to) = (self.from, self.to);
        if to < from {
            return Err(CliError::Config(format!("--x-to {to} is below --x-from {from}")));
        }
        if self.points == Some(0) {
            return Err(CliError::Config("--points must be at least 1".into()));
        }
        let mut xs: Vec<i64> = match (self.kind, self.points) {
            (GridKind::Lin, None) => {
                if to - from >= MAX_LIN_LEVELS {
                    return Err(CliError::Config(format!(
                        "linear grid of {} levels is too long; pass --points or --grid geo",
                        to - from + 1
                    )));
                }
                (from..=to).collect()
            }
            (GridKind::Lin, Some(n)) => spaced(n, |t| from as f64 + (to - from) as f64 * t),
            (GridKind::Geo, points) => {
                let n = points.unwrap_or(DEFAULT_GEO_POINTS);
                let lo = from.max(1);
                if to < lo {
                    vec![from]
                } else {
                    let ratio = to as f64 / lo as f64;
                    let mut v = vec![from];
                    v.extend(spaced(n, |t| lo as f64 * ratio.powf(t)));
                    v
                }
            }
        };
        xs.sort_unstable();
        xs.dedup();
        xs.retain(|&x| (from..=to).contains(&x));
        Ok(xs)
    }

    fn describe(&self) -> String {
        let mut s = format!("{}..{} {}", self.from, self.to, self.kind);
        if let Some(n) = self.points {
            let _ = write!(s, " points={n}");
        }
        s
    }
}

fn spaced(n: usize, at: impl Fn(f64) -> f64) -> Vec<i64> {
    if n == 1 {
        return vec![at(1.0).round() as i64];
    }
    (0..n)
        .map(|k| at(k as f64 / (n - 1) as f64).round() as i64)
        .collect()
}

pub fn cmd_classify(cfg: &ModelConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let regime = model.classify()?;
    let mut out = RunRecord::new("classify", cfg.digest()).render();
    let _ = writeln!(out, "{}, rho={:.9}", regime.label, regime.perron_root);
    let _ = writeln!(out, "perron_root: {}", fmt_float(regime.perron_root));
    if regime.near_critical {
        let _ = writeln!(out, "warning: near critical, the label may flip under small parameter changes");
    }
    let _ = writeln!(out, "positions: {}", join_levels(&model.positions()));
    let _ = writeln!(out, "matrix D:");
    for row in &regime.matrix {
        let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}

pub fn cmd_tail(cfg: &ModelConfig, grid: &GridSpec) -> Result<String, CliError> {
    let model = cfg.model()?;
    let levels = grid.levels()?;
    let curve = tail_curve(&model, cfg.start, &levels)?;
    let mut out = RunRecord::new("tail", cfg.digest())
        .param("start", cfg.start)
        .param("grid", grid.describe())
        .render();
    out.push_str("x,tail,residual,iterations\n");
    for i in 0..curve.levels.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            curve.levels[i],
            fmt_float(curve.values[i]),
            fmt_float(curve.residuals[i]),
            curve.iterations[i]
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimParams {
    pub trials: u64,
    pub seed: u64,
    pub streams: usize,
    pub max_population: u64,
}

pub fn cmd_simulate(cfg: &ModelConfig, xs: &[i64], sim: &SimParams) -> Result<String, CliError> {
    if xs.is_empty() {
        return Err(CliError::Config("no levels to simulate".into()));
    }
    let model = cfg.model()?;
    let sc = SimConfig {
        trials: sim.trials,
        seed: sim.seed,
        max_population: sim.max_population,
        parallel_streams: sim.streams,
    };
    sc.validate()?;
    let mut record = RunRecord::new("simulate", cfg.digest())
        .param("start", cfg.start)
        .param("x", join_levels(xs))
        .param("trials", sim.trials)
        .param("max_population", sim.max_population);
    record.seed = Some(sim.seed);
    let mut out = record.render();
    out.push_str("x,estimate,ci_lo,ci_hi,n,censored\n");
    for &x in xs {
        let est = estimate_tail(&model, cfg.start, x, &sc)?;
        let _ = writeln!(
            out,
            "{x},{},{},{},{},{}",
            fmt_float(est.estimate),
            fmt_float(est.ci.0),
            fmt_float(est.ci.1),
            est.trials,
            est.censored_trials
        );
    }
    Ok(out)
}

/// What the verdict line checks for one theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyTarget {
    /// Relative tolerance on `solver / predicted` at the last level, or the
    /// absolute tolerance on `|solver - s0|` for drift to the right.
    pub tol: f64,
    pub default_grid: GridSpec,
}

pub fn verify_target(theorem: Theorem, drift: DriftTag) -> VerifyTarget {
    let lin = |to| GridSpec {
        from: 1,
        to,
        kind: GridKind::Lin,
        points: None,
    };
    let geo = |to| GridSpec {
        from: 10,
        to,
        kind: GridKind::Geo,
        points: Some(25),
    };
    match (theorem, drift) {
        (_, DriftTag::Right) => VerifyTarget { tol: 1e-6, default_grid: lin(200) },
        (Theorem::CriticalSymmetric, _) => VerifyTarget { tol: 0.02, default_grid: geo(1_000_000) },
        (Theorem::SubcriticalSymmetric, _) => VerifyTarget { tol: 0.01, default_grid: geo(100_000) },
        (Theorem::CriticalDrift, _) => VerifyTarget { tol: 0.02, default_grid: lin(200) },
        (Theorem::SubcriticalDrift, _) => VerifyTarget { tol: 0.02, default_grid: lin(100) },
    }
}

/// Convergence table for one theorem. A failed check still yields the full
/// report, inside [`CliError::VerificationFailed`].
pub fn cmd_verify(cfg: &ModelConfig, theorem: u8, grid: Option<&GridSpec>) -> Result<String, CliError> {
    let theorem = Theorem::from_number(theorem)
        .ok_or_else(|| CliError::Config(format!("--theorem must be 1, 2, 3 or 4, got {theorem}")))?;
    let model = cfg.model()?;
    let law = AsymptoticLaw::for_model(&model, theorem)?;
    let target = verify_target(theorem, law.drift());
    let grid = match grid {
        Some(g) => *g,
        None => {
            let w = law.catalyst();
            let g = target.default_grid;
            GridSpec { from: g.from + w, to: g.to + w, ..g }
        }
    };
    let curve = tail_curve(&model, cfg.start, &grid.levels()?)?;
    let rows = convergence_report(&curve, &law)?;
    let last = rows
        .last()
        .ok_or_else(|| CliError::Config("grid has no level above the catalyst".into()))?;

    let mut out = RunRecord::new("verify", cfg.digest())
        .param("theorem", theorem.number())
        .param("start", cfg.start)
        .param("grid", grid.describe())
        .render();
    let (deviation, what) = match law.limit() {
        Some(s0) => {
            let _ = writeln!(out, "# s0: {}", fmt_float(s0));
            let _ = writeln!(out, "# solver at x={}: {}", last.x, fmt_float(last.solver));
            ((last.solver - s0).abs(), "|tail-s0|")
        }
        None => ((last.ratio - 1.0).abs(), "|ratio-1|"),
    };
    out.push_str("x,solver,predicted,ratio\n");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.x,
            fmt_float(r.solver),
            fmt_float(r.predicted),
            fmt_float(r.ratio)
        );
    }
    let pass = deviation < target.tol;
    let _ = writeln!(
        out,
        "# {} theorem {}: {what}={} at x={} (tol {})",
        if pass { "PASS" } else { "FAIL" },
        theorem.number(),
        fmt_float(deviation),
        last.x,
        fmt_float(target.tol)
    );
    if pass {
        Ok(out)
    } else {
        Err(CliError::VerificationFailed(out))
    }
}
