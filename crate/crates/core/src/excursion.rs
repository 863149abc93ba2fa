//! Excursion probabilities of the walk between visits to catalysts.
//!
//! For nearest-neighbour walks every quantity reduces to a gambler's-ruin
//! split between two barriers; the [`oracle`](crate::oracle) route computes
//! the same numbers by a linear solve and works for any finite-support walk.

use crate::error::{CbrwError, Result};
use crate::oracle::{AdaptiveOracle, HittingRow, RightEdge};
use crate::walk::WalkSpec;

/// A barrier of the ruin problem, either a lattice site or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Barrier {
    At(i64),
    Infinite,
}

/// Geometric ratio of a simple walk, `min(p,q)/max(p,q)`, handled in log space.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    ln: f64,
}

impl Ratio {
    fn new(p: f64) -> Self {
        let q = 1.0 - p;
        Ratio {
            ln: (p.min(q) / p.max(q)).ln(),
        }
    }

    /// `λ^j`
    fn pow(self, j: i64) -> f64 {
        (j as f64 * self.ln).exp()
    }

    /// `1 - λ^j`
    fn one_minus_pow(self, j: i64) -> f64 {
        -(j as f64 * self.ln).exp_m1()
    }
}

/// Gambler's-ruin split: probability that a simple walk started at `start`
/// reaches `lower` before `upper`, and the converse. An infinite barrier
/// stands for drifting off to that infinity without touching the other one.
pub fn ruin_exit_probs(p: f64, lower: Barrier, upper: Barrier, start: i64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CbrwError::Domain(format!("p must lie in (0,1), got {p}")));
    }
    let q = 1.0 - p;
    let symmetric = p == 0.5;
    let ratio = Ratio::new(p);
    match (lower, upper) {
        (Barrier::At(lo), Barrier::At(hi)) => {
            if !(lo < start && start < hi) {
                return Err(CbrwError::Domain(format!(
                    "start {start} must lie strictly between {lo} and {hi}"
                )));
            }
            let k = start - lo;
            let n = hi - lo;
            if symmetric {
                return Ok(((n - k) as f64 / n as f64, k as f64 / n as f64));
            }
            let denom = ratio.one_minus_pow(n);
            if p < q {
                // hitting `hi` needs n-k up-steps against the drift
                let up = (ratio.pow(n - k) - ratio.pow(n)) / denom;
                let down = ratio.one_minus_pow(n - k) / denom;
                Ok((down, up))
            } else {
                let up = ratio.one_minus_pow(k) / denom;
                let down = (ratio.pow(k) - ratio.pow(n)) / denom;
                Ok((down, up))
            }
        }
        (Barrier::At(lo), Barrier::Infinite) => {
            if start <= lo {
                return Err(CbrwError::Domain(format!(
                    "start {start} must lie above {lo}"
                )));
            }
            let k = start - lo;
            if p > q {
                Ok((ratio.pow(k), ratio.one_minus_pow(k)))
            } else {
                Ok((1.0, 0.0))
            }
        }
        (Barrier::Infinite, Barrier::At(hi)) => {
            if start >= hi {
                return Err(CbrwError::Domain(format!(
                    "start {start} must lie below {hi}"
                )));
            }
            let d = hi - start;
            if p < q {
                Ok((ratio.one_minus_pow(d), ratio.pow(d)))
            } else {
                Ok((0.0, 1.0))
            }
        }
        (Barrier::Infinite, Barrier::Infinite) => Err(CbrwError::Domain(
            "at least one ruin barrier must be finite".into(),
        )),
    }
}

/// Excursion from a single catalyst at the origin, seen against level `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionProbs {
    pub level: i64,
    /// Returns to the catalyst without rising above `x`.
    pub p1: f64,
    /// Rises above `x` before returning.
    pub p2: f64,
    /// Never returns and never rises above `x`.
    pub p_escape: f64,
}

/// Closed-form excursion probabilities of a simple walk leaving a catalyst at 0.
pub fn excursion_probs_single(walk: &WalkSpec, x: i64) -> Result<ExcursionProbs> {
    let p = walk
        .as_simple()
        .ok_or_else(|| CbrwError::Unsupported("closed forms need a simple walk".into()))?;
    if x < 0 {
        return Err(CbrwError::Domain(format!("level must be nonnegative, got {x}")));
    }
    let q = 1.0 - p;
    if p == 0.5 {
        let denom = 2.0 * (x as f64 + 1.0);
        return Ok(ExcursionProbs {
            level: x,
            p1: (2.0 * x as f64 + 1.0) / denom,
            p2: 1.0 / denom,
            p_escape: 0.0,
        });
    }
    let ratio = Ratio::new(p);
    let denom = ratio.one_minus_pow(x + 1);
    let (p1, p2, p_escape) = if p < q {
        (
            p * ratio.one_minus_pow(x) / denom + p,
            (q - p) * ratio.pow(x + 1) / denom,
            q - p,
        )
    } else {
        (
            p * (ratio.pow(1) - ratio.pow(x + 1)) / denom + q,
            (p - q) / denom,
            0.0,
        )
    };
    Ok(ExcursionProbs {
        level: x,
        p1,
        p2,
        p_escape,
    })
}

/// `1 - |p - q|`: probability that a simple walk ever returns to its start.
pub fn return_probability(walk: &WalkSpec) -> Result<f64> {
    let p = walk
        .as_simple()
        .ok_or_else(|| CbrwError::Unsupported("closed forms need a simple walk".into()))?;
    Ok(2.0 * p.min(1.0 - p))
}

/// Excursion law out of every catalyst at level `x`.
///
/// Row `i` describes a particle that leaves catalyst `i`: `a[i][j]` is the
/// probability of next landing on catalyst `j` with the path staying at or
/// below `x`; `b[i]` of rising above `x` first; `escape[i]` of never doing
/// either. Catalysts already above `x` get `b = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionMatrix {
    pub level: i64,
    pub positions: Vec<i64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub escape: Vec<f64>,
}

impl ExcursionMatrix {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Catalysts sitting above the level; a particle there has already won.
    pub fn is_above(&self, i: usize) -> bool {
        self.positions[i] > self.level
    }
}

/// Where a particle started off the catalysts ends its first excursion.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryRow {
    pub catalysts: Vec<f64>,
    pub exceed: f64,
    pub escape: f64,
}

pub(crate) fn check_positions(positions: &[i64]) -> Result<()> {
    if positions.is_empty() {
        return Err(CbrwError::InvalidCatalysts("no catalysts".into()));
    }
    for w in positions.windows(2) {
        if w[0] == w[1] {
            return Err(CbrwError::InvalidCatalysts(format!(
                "duplicate catalyst position {}",
                w[0]
            )));
        }
        if w[0] > w[1] {
            return Err(CbrwError::InvalidCatalysts(
                "catalyst positions must be increasing".into(),
            ));
        }
    }
    Ok(())
}

/// One gap of a nearest-neighbour excursion: the walk sits at `start` strictly
/// between the left catalyst (if any) and the first blocking site on the right,
/// which is either a catalyst or the level barrier `x + 1`.
#[derive(Debug, Clone, Copy)]
struct Gap {
    left: Option<usize>,
    right_catalyst: Option<usize>,
    upper: Option<i64>,
}

impl Gap {
    fn around(positions: &[i64], start: i64, level: Option<i64>) -> Gap {
        let idx = positions.partition_point(|&w| w < start);
        let left = idx.checked_sub(1);
        let right = (idx < positions.len()).then_some(idx);
        let right_catalyst_pos = right.map(|j| positions[j]);
        let (upper, right_catalyst) = match (right_catalyst_pos, level) {
            (Some(c), Some(x)) if c <= x => (Some(c), right),
            (_, Some(x)) => (Some(x + 1), None),
            (Some(c), None) => (Some(c), right),
            (None, None) => (None, None),
        };
        Gap {
            left,
            right_catalyst,
            upper,
        }
    }

    /// Splits the mass `weight` of a walk started at `start` into catalysts,
    /// exceedance, and escape.
    fn spread(
        self,
        p: f64,
        positions: &[i64],
        start: i64,
        weight: f64,
        row: &mut [f64],
        exceed: &mut f64,
        escape: &mut f64,
    ) -> Result<()> {
        let lower = self.left.map_or(Barrier::Infinite, |i| Barrier::At(positions[i]));
        let upper = self.upper.map_or(Barrier::Infinite, Barrier::At);
        let land_up = |mass: f64, row: &mut [f64], exceed: &mut f64, escape: &mut f64| {
            match (self.right_catalyst, self.upper) {
                (Some(j), _) => row[j] += mass,
                (None, Some(_)) => *exceed += mass,
                (None, None) => *escape += mass,
            }
        };
        if Barrier::At(start) == upper {
            land_up(weight, row, exceed, escape);
            return Ok(());
        }
        if Barrier::At(start) == lower {
            row[self.left.expect("finite lower barrier is a catalyst")] += weight;
            return Ok(());
        }
        let (down, up) = ruin_exit_probs(p, lower, upper, start)?;
        match self.left {
            Some(i) => row[i] += weight * down,
            None => *escape += weight * down,
        }
        land_up(weight * up, row, exceed, escape);
        Ok(())
    }
}

fn simple_rows(p: f64, positions: &[i64], level: Option<i64>) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    check_positions(positions)?;
    let n = positions.len();
    let q = 1.0 - p;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let mut e = vec![0.0; n];
    for (i, &w) in positions.iter().enumerate() {
        if level.is_some_and(|x| w > x) {
            b[i] = 1.0;
            continue;
        }
        for (start, weight) in [(w + 1, p), (w - 1, q)] {
            // the excursion's own catalyst counts as a lower/upper neighbour
            let gap = Gap::around(positions, start, level);
            gap.spread(p, positions, start, weight, &mut a[i], &mut b[i], &mut e[i])?;
        }
    }
    Ok((a, b, e))
}

/// Closed-form excursion matrix for a simple walk.
pub fn excursion_matrix_simple(walk: &WalkSpec, positions: &[i64], x: i64) -> Result<ExcursionMatrix> {
    let p = walk
        .as_simple()
        .ok_or_else(|| CbrwError::Unsupported("closed forms need a simple walk".into()))?;
    let (a, b, escape) = simple_rows(p, positions, Some(x))?;
    Ok(ExcursionMatrix {
        level: x,
        positions: positions.to_vec(),
        a,
        b,
        escape,
    })
}

/// Excursion matrix by linear solves on a truncated window; any walk.
pub fn excursion_matrix_oracle(walk: &WalkSpec, positions: &[i64], x: i64) -> Result<ExcursionMatrix> {
    check_positions(positions)?;
    let n = positions.len();
    let live: Vec<i64> = positions.iter().copied().filter(|&w| w <= x).collect();
    let steps = walk.embedded_step_dist();

    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let mut escape = vec![0.0; n];

    let mut starts: Vec<i64> = Vec::new();
    for &w in &live {
        for &(d, _) in &steps {
            let y = w + d;
            if y <= x && positions.binary_search(&y).is_err() {
                starts.push(y);
            }
        }
    }
    starts.sort_unstable();
    starts.dedup();
    let rows = if starts.is_empty() {
        Vec::new()
    } else {
        AdaptiveOracle::new(walk, live.clone(), RightEdge::Level(x)).rows(&starts)?
    };

    for (i, &w) in positions.iter().enumerate() {
        if w > x {
            b[i] = 1.0;
            continue;
        }
        for &(d, weight) in &steps {
            let y = w + d;
            if y > x {
                b[i] += weight;
            } else if let Ok(j) = positions.binary_search(&y) {
                a[i][j] += weight;
            } else {
                let r = &rows[starts.binary_search(&y).expect("start was queued")];
                scatter(r, &live, positions, weight, &mut a[i], &mut b[i], &mut escape[i]);
            }
        }
    }
    Ok(ExcursionMatrix {
        level: x,
        positions: positions.to_vec(),
        a,
        b,
        escape,
    })
}

fn scatter(
    r: &HittingRow,
    live: &[i64],
    positions: &[i64],
    weight: f64,
    row: &mut [f64],
    exceed: &mut f64,
    escape: &mut f64,
) {
    for (k, &t) in live.iter().enumerate() {
        let j = positions.binary_search(&t).expect("live catalyst");
        row[j] += weight * r.targets[k];
    }
    *exceed += weight * r.above;
    *escape += weight * r.below;
}

/// Excursion matrix by the cheapest exact route for the walk.
pub fn excursion_matrix(walk: &WalkSpec, positions: &[i64], x: i64) -> Result<ExcursionMatrix> {
    match walk {
        WalkSpec::Simple { .. } => excursion_matrix_simple(walk, positions, x),
        WalkSpec::General(_) => excursion_matrix_oracle(walk, positions, x),
    }
}

/// First excursion of a particle started at a non-catalyst site `z <= x`.
pub fn entry_row(walk: &WalkSpec, positions: &[i64], x: i64, z: i64) -> Result<EntryRow> {
    check_positions(positions)?;
    if positions.binary_search(&z).is_ok() {
        return Err(CbrwError::Domain(format!("start {z} is a catalyst")));
    }
    if z > x {
        return Err(CbrwError::Domain(format!("start {z} already above level {x}")));
    }
    let n = positions.len();
    let mut row = vec![0.0; n];
    let mut exceed = 0.0;
    let mut escape = 0.0;
    match walk {
        WalkSpec::Simple { p } => {
            Gap::around(positions, z, Some(x)).spread(
                *p,
                positions,
                z,
                1.0,
                &mut row,
                &mut exceed,
                &mut escape,
            )?;
        }
        WalkSpec::General(_) => {
            let live: Vec<i64> = positions.iter().copied().filter(|&w| w <= x).collect();
            let r = AdaptiveOracle::new(walk, live.clone(), RightEdge::Level(x)).rows(&[z])?;
            scatter(&r[0], &live, positions, 1.0, &mut row, &mut exceed, &mut escape);
        }
    }
    Ok(EntryRow {
        catalysts: row,
        exceed,
        escape,
    })
}

/// Taboo hitting probabilities with no level: entry `(i, j)` is the chance
/// that a walk leaving catalyst `i` next lands on catalyst `j`.
pub fn taboo_hitting_matrix(walk: &WalkSpec, positions: &[i64]) -> Result<Vec<Vec<f64>>> {
    match walk {
        WalkSpec::Simple { p } => Ok(simple_rows(*p, positions, None)?.0),
        WalkSpec::General(_) => {
            check_positions(positions)?;
            let n = positions.len();
            let steps = walk.embedded_step_dist();
            let mut starts: Vec<i64> = positions
                .iter()
                .flat_map(|&w| steps.iter().map(move |&(d, _)| w + d))
                .filter(|y| positions.binary_search(y).is_err())
                .collect();
            starts.sort_unstable();
            starts.dedup();
            let rows = AdaptiveOracle::new(walk, positions.to_vec(), RightEdge::Open).rows(&starts)?;
            let mut a = vec![vec![0.0; n]; n];
            for (i, &w) in positions.iter().enumerate() {
                for &(d, weight) in &steps {
                    let y = w + d;
                    if let Ok(j) = positions.binary_search(&y) {
                        a[i][j] += weight;
                    } else {
                        let r = &rows[starts.binary_search(&y).expect("queued")];
                        for (j, t) in r.targets.iter().enumerate() {
                            a[i][j] += weight * t;
                        }
                    }
                }
            }
            Ok(a)
        }
    }
}
