//! Exact tails `P_z(M > x)` from the fixed-point equations that tie the
//! catalysts together.
//!
//! For a particle at catalyst `i` the tail `s_i` solves
//!
//! ```text
//! s_i = alpha_i (1 - f_i(1 - s_i)) + (1 - alpha_i) (sum_j A_ij s_j + b_i)
//! ```
//!
//! with `A`, `b` the excursion law at level `x`. Everything is evaluated in
//! the rearranged form
//!
//! ```text
//! G_i(s) = alpha_i c_i(s_i) + kappa_i s_i
//!        + (1 - alpha_i) (b_i (1 - s_i) + sum_{j != i} A_ij (s_j - s_i))
//! ```
//!
//! where `c_i(s) = 1 - f_i(1 - s) - m_i s` and
//! `kappa_i = alpha_i (m_i - 1) - (1 - alpha_i) e_i`. At criticality the linear
//! terms of the original form cancel; here they never appear, so roots of
//! order 1e-18 keep full relative precision.

use rayon::prelude::*;

use crate::criticality::{CatalystSet, OffspringDist};
use crate::error::{CbrwError, Result};
use crate::excursion::{entry_row, excursion_matrix, ExcursionMatrix, ExcursionProbs};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSolution {
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `G(s)` for a single catalyst; the tail is its smallest root in `[0, 1]`.
pub fn single_gap(alpha: f64, f: &OffspringDist, exc: &ExcursionProbs, s: f64) -> f64 {
    let kappa = alpha * (f.mean() - 1.0) - (1.0 - alpha) * exc.p_escape;
    (1.0 - alpha) * exc.p2 * (1.0 - s) + kappa * s + alpha * f.survival_curvature(s)
}

fn single_gap_slope(alpha: f64, f: &OffspringDist, exc: &ExcursionProbs, s: f64) -> f64 {
    alpha * f.survival_slope(s) + (1.0 - alpha) * exc.p1 - 1.0
}

/// Solves the single-catalyst equation by bisection with Newton polishing.
pub fn solve_single(x: i64, alpha: f64, f: &OffspringDist, exc: &ExcursionProbs) -> Result<Root> {
    let gap = |s: f64| single_gap(alpha, f, exc, s);
    let at_zero = gap(0.0);
    if at_zero <= 0.0 {
        return Ok(Root {
            value: 0.0,
            residual: at_zero.abs(),
            iterations: 0,
        });
    }
    let at_one = gap(1.0);
    if at_one > 1e-12 {
        return Err(CbrwError::Numerical(format!(
            "no root in [0,1] at level {x}: G(1) = {at_one:e}"
        ))
        .at_level(x));
    }
    if at_one >= 0.0 {
        return Ok(Root {
            value: 1.0,
            residual: at_one,
            iterations: 0,
        });
    }

    // G is concave with G(0) > 0 > G(1): exactly one crossing.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    while hi - lo > 1e-13 * hi && iterations < 2_000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let mut s = 0.5 * (lo + hi);
    let mut g = gap(s);
    for _ in 0..5 {
        let slope = single_gap_slope(alpha, f, exc, s);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = s - g / slope;
        if !(next >= lo && next <= hi) {
            break;
        }
        let g_next = gap(next);
        iterations += 1;
        if g_next.abs() >= g.abs() {
            break;
        }
        s = next;
        g = g_next;
    }
    Ok(Root {
        value: s,
        residual: g.abs(),
        iterations,
    })
}

/// Per-catalyst data the system solver evaluates repeatedly.
struct SystemTerms<'a> {
    em: &'a ExcursionMatrix,
    catalysts: &'a CatalystSet,
    live: Vec<usize>,
    kappa: Vec<f64>,
}

impl<'a> SystemTerms<'a> {
    fn new(em: &'a ExcursionMatrix, catalysts: &'a CatalystSet) -> Self {
        let live: Vec<usize> = (0..em.len()).filter(|&i| !em.is_above(i)).collect();
        let kappa = (0..em.len())
            .map(|i| {
                let c = catalysts.get(i);
                c.alpha * (c.offspring.mean() - 1.0) - (1.0 - c.alpha) * em.escape[i]
            })
            .collect();
        SystemTerms {
            em,
            catalysts,
            live,
            kappa,
        }
    }

    /// Full-length vector with the catalysts above the level pinned to 1.
    fn expand(&self, live_values: &[f64]) -> Vec<f64> {
        let mut s = vec![1.0; self.em.len()];
        for (k, &i) in self.live.iter().enumerate() {
            s[i] = live_values[k];
        }
        s
    }

    fn map(&self, s: &[f64]) -> Vec<f64> {
        self.live
            .iter()
            .map(|&i| {
                let c = self.catalysts.get(i);
                let walk: f64 = self.em.a[i].iter().zip(s).map(|(a, v)| a * v).sum();
                c.alpha * c.offspring.survival_transform(s[i]) + (1.0 - c.alpha) * (walk + self.em.b[i])
            })
            .collect()
    }

    fn gap(&self, s: &[f64]) -> Vec<f64> {
        self.live
            .iter()
            .map(|&i| {
                let c = self.catalysts.get(i);
                let si = s[i];
                let coupling: f64 = self.em.a[i]
                    .iter()
                    .zip(s)
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, (a, v))| a * (v - si))
                    .sum();
                c.alpha * c.offspring.survival_curvature(si)
                    + self.kappa[i] * si
                    + (1.0 - c.alpha) * (self.em.b[i] * (1.0 - si) + coupling)
            })
            .collect()
    }

    fn jacobian(&self, s: &[f64]) -> Vec<Vec<f64>> {
        self.live
            .iter()
            .map(|&i| {
                let c = self.catalysts.get(i);
                self.live
                    .iter()
                    .map(|&j| {
                        let mut v = (1.0 - c.alpha) * self.em.a[i][j];
                        if i == j {
                            v += c.alpha * c.offspring.survival_slope(s[i]) - 1.0;
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the coupled equations for every catalyst.
///
/// Monotone fixed-point iteration from zero (the map is nondecreasing, so the
/// iterates climb to the least fixed point), accelerated by Aitken's
/// extrapolation every 64 steps, then polished with damped Newton.
pub fn solve_system(x: i64, catalysts: &CatalystSet, em: &ExcursionMatrix) -> Result<SystemSolution> {
    if em.len() != catalysts.len() || em.level != x {
        return Err(CbrwError::Domain(
            "excursion matrix does not match the catalysts or level".into(),
        ));
    }
    let terms = SystemTerms::new(em, catalysts);
    let n = terms.live.len();
    if n == 0 {
        return Ok(SystemSolution {
            values: vec![1.0; em.len()],
            residual: 0.0,
            iterations: 0,
        });
    }

    const MAX_ITER: usize = 1_000_000;
    let mut s = vec![0.0; n];
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let full = terms.expand(&s);
        let next = terms.map(&full);
        iterations += 1;
        if next.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) {
            return Err(CbrwError::Numerical(format!(
                "fixed-point iterate left [0,1]^N: {next:?}"
            ))
            .at_level(x));
        }
        let step = next
            .iter()
            .zip(&s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        s = next;
        let scale = sup_norm(&s);
        if step <= 1e-13 * scale || scale == 0.0 {
            break;
        }
        if iterations % 64 >= 61 {
            history.push(s.clone());
        }
        if iterations % 64 == 0 && history.len() == 3 {
            let candidate = aitken(&history[0], &history[1], &history[2]);
            let current = sup_norm(&terms.gap(&terms.expand(&s)));
            if candidate.iter().all(|v| (0.0..=1.0).contains(v))
                && sup_norm(&terms.gap(&terms.expand(&candidate))) < current
            {
                s = candidate;
            }
            history.clear();
        }
    }

    let (s, polish_iters) = newton_polish(&terms, s);
    iterations += polish_iters;
    let full = terms.expand(&s);
    let residual = sup_norm(&terms.gap(&full));
    if residual > 1e-12 {
        return Err(CbrwError::NonConvergence {
            iterations,
            residual,
        }
        .at_level(x));
    }
    Ok(SystemSolution {
        values: full,
        residual,
        iterations,
    })
}

fn aitken(s0: &[f64], s1: &[f64], s2: &[f64]) -> Vec<f64> {
    s0.iter()
        .zip(s1)
        .zip(s2)
        .map(|((&a, &b), &c)| {
            let denom = (c - b) - (b - a);
            if denom.abs() < 1e-300 {
                c
            } else {
                c - (c - b) * (c - b) / denom
            }
        })
        .collect()
}

fn newton_polish(terms: &SystemTerms<'_>, mut s: Vec<f64>) -> (Vec<f64>, usize) {
    let mut g = terms.gap(&terms.expand(&s));
    let mut norm = sup_norm(&g);
    let mut iterations = 0;
    for _ in 0..50 {
        if norm == 0.0 {
            break;
        }
        let jac = terms.jacobian(&terms.expand(&s));
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(delta) = dense_solve(jac, rhs) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = s.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            if trial.iter().all(|v| (0.0..=1.0).contains(v)) {
                let g_trial = terms.gap(&terms.expand(&trial));
                let n_trial = sup_norm(&g_trial);
                if n_trial < norm {
                    s = trial;
                    g = g_trial;
                    norm = n_trial;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted || sup_norm(&delta) * t <= 1e-16 * sup_norm(&s) {
            break;
        }
    }
    (s, iterations)
}

/// Gaussian elimination with partial pivoting for the small Newton systems.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let factor = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= factor * a[k][j];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - tail) / a[k][k];
    }
    Some(x)
}

/// `P_z(M > x)` given the catalyst tails `solved` at level `x`.
pub fn tail_from_start(model: &Model, z: i64, x: i64, solved: &[f64]) -> Result<f64> {
    if x < z {
        return Ok(1.0);
    }
    let positions = model.positions();
    if let Ok(i) = positions.binary_search(&z) {
        return Ok(solved[i]);
    }
    let row = entry_row(&model.walk, &positions, x, z)?;
    Ok(row.exceed
        + row
            .catalysts
            .iter()
            .zip(solved)
            .map(|(p, s)| p * s)
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Solver,
    MonteCarlo,
    Asymptotic,
}

/// `x -> P_z(M > x)` on an increasing grid of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    pub start: i64,
    pub levels: Vec<i64>,
    pub values: Vec<f64>,
    pub source: CurveSource,
    /// Standard errors, Monte Carlo curves only.
    pub stderr: Option<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
}

/// Tail and solver diagnostics at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSolution {
    pub x: i64,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_level(model: &Model, z: i64, x: i64) -> Result<LevelSolution> {
    if x < z {
        return Ok(LevelSolution {
            x,
            value: 1.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let positions = model.positions();
    let em = excursion_matrix(&model.walk, &positions, x).map_err(|e| e.at_level(x))?;
    let solved = if positions.len() == 1 {
        let c = model.catalysts.get(0);
        if em.is_above(0) {
            SystemSolution {
                values: vec![1.0],
                residual: 0.0,
                iterations: 0,
            }
        } else {
            let exc = ExcursionProbs {
                level: x - c.position,
                p1: em.a[0][0],
                p2: em.b[0],
                p_escape: em.escape[0],
            };
            let root = solve_single(x, c.alpha, &c.offspring, &exc)?;
            SystemSolution {
                values: vec![root.value],
                residual: root.residual,
                iterations: root.iterations,
            }
        }
    } else {
        solve_system(x, &model.catalysts, &em)?
    };
    let value = tail_from_start(model, z, x, &solved.values).map_err(|e| e.at_level(x))?;
    Ok(LevelSolution {
        x,
        value,
        residual: solved.residual,
        iterations: solved.iterations,
    })
}

/// Solves every level of `grid` (independently, in parallel) and checks that
/// the result is nonincreasing in `x`.
pub fn tail_curve(model: &Model, z: i64, grid: &[i64]) -> Result<TailCurve> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CbrwError::Domain("level grid must be strictly increasing".into()));
    }
    let points: Vec<LevelSolution> = grid
        .par_iter()
        .map(|&x| solve_level(model, z, x))
        .collect::<Result<_>>()?;
    for w in points.windows(2) {
        if w[1].value > w[0].value * (1.0 + 1e-10) + 1e-300 {
            return Err(CbrwError::Numerical(format!(
                "tail increased from {} at x={} to {}",
                w[0].value, w[0].x, w[1].value
            ))
            .at_level(w[1].x));
        }
    }
    Ok(TailCurve {
        start: z,
        levels: grid.to_vec(),
        values: points.iter().map(|p| p.value).collect(),
        source: CurveSource::Solver,
        stderr: None,
        residuals: points.iter().map(|p| p.residual).collect(),
        iterations: points.iter().map(|p| p.iterations).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::Catalyst;
    use crate::excursion::{excursion_matrix_simple, excursion_probs_single};
    use crate::walk::WalkSpec;

    fn law(pairs: &[(usize, f64)]) -> OffspringDist {
        OffspringDist::from_pairs(pairs.iter().copied()).unwrap()
    }

    fn single_model(p: f64, alpha: f64, f: OffspringDist) -> Model {
        Model::new(
            WalkSpec::simple(p).unwrap(),
            CatalystSet::single(alpha, f).unwrap(),
        )
    }

    /// Probability that a critical symmetric instance exceeds level 0, by
    /// summing over the depth of the catalyst-visit tree: the extinction-type
    /// recursion q_{n+1} = T(q_n) from q_0 = 0 gives P(exceed within n
    /// generations), increasing to the answer.
    fn depth_recursion(alpha: f64, f: &OffspringDist, p1: f64, p2: f64, depth: usize) -> f64 {
        let mut q = 0.0;
        for _ in 0..depth {
            q = alpha * (1.0 - f.pgf(1.0 - q).unwrap()) + (1.0 - alpha) * (p1 * q + p2);
        }
        q
    }

    #[test]
    fn zero_exceedance_mass_gives_zero() {
        let f = law(&[(0, 0.5), (2, 0.5)]);
        let exc = ExcursionProbs {
            level: 3,
            p1: 1.0,
            p2: 0.0,
            p_escape: 0.0,
        };
        assert_eq!(solve_single(3, 0.5, &f, &exc).unwrap().value, 0.0);
    }

    #[test]
    fn critical_symmetric_level_zero_matches_depth_recursion() {
        // s = (1/2)(1 - (1 + (1-s)^2)/2) + s/4 + 1/4
        let f = law(&[(0, 0.5), (2, 0.5)]);
        let w = WalkSpec::simple(0.5).unwrap();
        let exc = excursion_probs_single(&w, 0).unwrap();
        let root = solve_single(0, 0.5, &f, &exc).unwrap();
        let brute = depth_recursion(0.5, &f, 0.5, 0.5, 200_000);
        assert!((root.value - brute).abs() < 1e-9, "{} vs {}", root.value, brute);
        // the same equation rearranges to s^2 + s - 1 = 0
        let closed = (5.0f64.sqrt() - 1.0) / 2.0;
        assert!((root.value - closed).abs() < 1e-15);
        assert!(root.residual < 1e-12);
    }

    #[test]
    fn single_and_system_agree() {
        for (p, pairs, alpha) in [
            (0.5, vec![(0, 0.5), (2, 0.5)], 0.5),
            (0.5, vec![(0, 0.75), (2, 0.25)], 0.3),
            (0.4, vec![(0, 0.4), (2, 0.6)], 0.5),
            (0.6, vec![(0, 0.4), (2, 0.6)], 0.5),
            (0.3, vec![(0, 0.75), (2, 0.25)], 0.5),
        ] {
            let model = single_model(p, alpha, law(&pairs));
            for x in [0, 1, 2, 5, 10, 40] {
                let exc = excursion_probs_single(&model.walk, x).unwrap();
                let single = solve_single(x, alpha, &model.catalysts.get(0).offspring, &exc).unwrap();
                let em = excursion_matrix_simple(&model.walk, &[0], x).unwrap();
                let sys = solve_system(x, &model.catalysts, &em).unwrap();
                let diff = (single.value - sys.values[0]).abs();
                assert!(diff < 1e-14, "p={p} x={x}: {diff:e}");
            }
        }
    }

    #[test]
    fn system_with_no_exceedance_is_zero() {
        let w = WalkSpec::simple(0.5).unwrap();
        let cat = |position| Catalyst {
            position,
            alpha: 0.5,
            beta: 1.0,
            offspring: law(&[(0, 0.5), (2, 0.5)]),
        };
        let set = CatalystSet::new(vec![cat(0), cat(4)]).unwrap();
        let mut em = excursion_matrix_simple(&w, &[0, 4], 10).unwrap();
        for i in 0..2 {
            let b = em.b[i];
            em.a[i][i] += b;
            em.b[i] = 0.0;
        }
        let sol = solve_system(10, &set, &em).unwrap();
        assert_eq!(sol.values, vec![0.0, 0.0]);
    }

    #[test]
    fn start_below_level_reductions() {
        let model = single_model(0.5, 0.5, law(&[(0, 0.5), (2, 0.5)]));
        // x < z
        let at = solve_level(&model, 5, 3).unwrap();
        assert_eq!(at.value, 1.0);
        // catalyst start equals the catalyst tail
        let lv = solve_level(&model, 0, 7).unwrap();
        let exc = excursion_probs_single(&model.walk, 7).unwrap();
        let root = solve_single(7, 0.5, &model.catalysts.get(0).offspring, &exc).unwrap();
        assert_eq!(lv.value, root.value);
        // z = 3, x = 7: hit 8 before 0 w.p. 3/8, else behave like a start at 0
        let from3 = solve_level(&model, 3, 7).unwrap();
        assert!((from3.value - (3.0 / 8.0 + 5.0 / 8.0 * root.value)).abs() < 1e-15);
    }

    #[test]
    fn drift_left_start_right_of_catalyst() {
        // p < q, start at 4 with the catalyst at 0: ruin between 0 and x+1
        let model = single_model(0.3, 0.5, law(&[(0, 0.75), (2, 0.25)]));
        let x = 9;
        let lv = solve_level(&model, 4, x).unwrap();
        let cat = solve_level(&model, 0, x).unwrap();
        let table = crate::oracle::absorption_oracle(&model.walk, &[0], -500, x).unwrap();
        let r = table.row(4).unwrap();
        let composed = r.above + r.targets[0] * cat.value;
        assert!((lv.value - composed).abs() < 1e-12);
    }

    #[test]
    fn catalyst_above_level_is_certain() {
        let w = WalkSpec::simple(0.5).unwrap();
        let cat = |position| Catalyst {
            position,
            alpha: 0.5,
            beta: 1.0,
            offspring: law(&[(0, 0.5), (2, 0.5)]),
        };
        let model = Model::new(w, CatalystSet::new(vec![cat(0), cat(6)]).unwrap());
        let em = excursion_matrix_simple(&model.walk, &[0, 6], 3).unwrap();
        let sol = solve_system(3, &model.catalysts, &em).unwrap();
        assert_eq!(sol.values[1], 1.0);
        assert!(sol.values[0] < 1.0);
    }

    #[test]
    fn curve_is_nonincreasing_and_fast_at_large_level() {
        let model = single_model(0.5, 0.5, law(&[(0, 0.5), (2, 0.5)]));
        let grid: Vec<i64> = (1..=100).collect();
        let curve = tail_curve(&model, 0, &grid).unwrap();
        assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
        let t = std::time::Instant::now();
        let far = tail_curve(&model, 0, &[1_000_000]).unwrap();
        assert!(t.elapsed().as_secs_f64() < 1.0);
        assert!((far.values[0] * 1000.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn drift_right_curve_levels_off() {
        let model = single_model(0.6, 0.5, law(&[(0, 0.4), (2, 0.6)]));
        let curve = tail_curve(&model, 0, &[50, 100, 200]).unwrap();
        assert!(curve.values[2] > 0.1);
        assert!((curve.values[1] - curve.values[2]).abs() < 1e-9);
    }

    #[test]
    fn general_walk_curve_runs() {
        let w = WalkSpec::general([(1, 1.0), (-1, 1.0), (-2, 0.5)]).unwrap();
        let model = Model::new(w, CatalystSet::single(0.5, law(&[(0, 0.5), (2, 0.5)])).unwrap());
        let curve = tail_curve(&model, 0, &[0, 2, 5]).unwrap();
        assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(curve.values.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn unique_crossing_on_grid() {
        for (p, pairs) in [(0.5, vec![(0, 0.5), (2, 0.5)]), (0.6, vec![(0, 0.4), (2, 0.6)])] {
            let w = WalkSpec::simple(p).unwrap();
            let f = law(&pairs);
            for x in [0, 3, 30] {
                let exc = excursion_probs_single(&w, x).unwrap();
                let signs: Vec<bool> = (0..=1000)
                    .map(|k| single_gap(0.5, &f, &exc, k as f64 / 1000.0) > 0.0)
                    .collect();
                let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
                assert!(changes <= 1);
            }
        }
    }
}
