//! Absorption probabilities of the embedded jump chain on a truncated window
//! of the lattice, by a direct banded linear solve.
//!
//! This is the reference route for every excursion probability: it knows
//! nothing about gambler's-ruin closed forms and works for any finite-support
//! walk.

use crate::error::{CbrwError, Result};
use crate::walk::WalkSpec;

/// What happens to a jump that leaves the window on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// The particle is absorbed in a dedicated "outside" state.
    Absorb,
    /// The particle lands on the outermost site of the window instead.
    Clamp,
}

/// Absorption law for every start state of the window `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct AbsorptionTable {
    lo: i64,
    hi: i64,
    targets: Vec<i64>,
    // row-major: (hi - lo + 1) rows of (targets.len() + 2) columns
    data: Vec<f64>,
}

/// First-absorption probabilities seen from one start state.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingRow {
    /// Mass absorbed in each target state, in the order the targets were given.
    pub targets: Vec<f64>,
    /// Mass that left the window through the top.
    pub above: f64,
    /// Mass that left the window through the bottom.
    pub below: f64,
}

impl HittingRow {
    fn max_abs_diff(&self, other: &HittingRow) -> f64 {
        self.targets
            .iter()
            .zip(&other.targets)
            .map(|(a, b)| (a - b).abs())
            .chain([(self.above - other.above).abs(), (self.below - other.below).abs()])
            .fold(0.0, f64::max)
    }
}

impl AbsorptionTable {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn targets(&self) -> &[i64] {
        &self.targets
    }

    /// Absorption law started from `state`, which must lie in the window.
    pub fn row(&self, state: i64) -> Option<HittingRow> {
        if state < self.lo || state > self.hi {
            return None;
        }
        let k = self.targets.len();
        let width = k + 2;
        let i = (state - self.lo) as usize;
        let r = &self.data[i * width..(i + 1) * width];
        Some(HittingRow {
            targets: r[..k].to_vec(),
            above: r[k],
            below: r[k + 1],
        })
    }
}

/// Solves for first-absorption probabilities on the window `[lo, hi]`.
///
/// `targets` are absorbing sites inside the window. Jumps past `hi` go to the
/// "above" state (or clamp), jumps past `lo` to the "below" state (or clamp).
pub fn solve_window(
    walk: &WalkSpec,
    targets: &[i64],
    lo: i64,
    hi: i64,
    below: Boundary,
    above: Boundary,
) -> Result<AbsorptionTable> {
    if lo > hi {
        return Err(CbrwError::Domain(format!("empty window [{lo}, {hi}]")));
    }
    if let Some(&t) = targets.iter().find(|&&t| t < lo || t > hi) {
        return Err(CbrwError::Domain(format!(
            "absorbing state {t} outside window [{lo}, {hi}]"
        )));
    }
    let steps = walk.embedded_step_dist();
    let (up, down) = walk.reach();
    let n = (hi - lo + 1) as usize;
    let k = targets.len();
    let width = k + 2;
    let col_above = k;
    let col_below = k + 1;

    let mut target_index = vec![usize::MAX; n];
    for (j, &t) in targets.iter().enumerate() {
        target_index[(t - lo) as usize] = j;
    }

    let mut band = Band::new(n, down as usize, up as usize);
    let mut rhs = vec![0.0; n * width];

    for i in 0..n {
        band.add(i, i, 1.0);
        if target_index[i] != usize::MAX {
            rhs[i * width + target_index[i]] = 1.0;
            continue;
        }
        let y = lo + i as i64;
        for &(d, w) in &steps {
            let dest = y + d;
            let col = if dest > hi {
                match above {
                    Boundary::Absorb => {
                        rhs[i * width + col_above] += w;
                        continue;
                    }
                    Boundary::Clamp => n - 1,
                }
            } else if dest < lo {
                match below {
                    Boundary::Absorb => {
                        rhs[i * width + col_below] += w;
                        continue;
                    }
                    Boundary::Clamp => 0,
                }
            } else {
                (dest - lo) as usize
            };
            band.add(i, col, -w);
        }
    }

    band.solve_in_place(&mut rhs, width)?;
    Ok(AbsorptionTable {
        lo,
        hi,
        targets: targets.to_vec(),
        data: rhs,
    })
}

/// Absorption oracle on `[left_barrier, x_barrier]`: sites above `x_barrier`
/// absorb as "above", sites below `left_barrier` absorb as "below" for walks
/// with drift and are clamped for driftless ones.
pub fn absorption_oracle(
    walk: &WalkSpec,
    absorbing: &[i64],
    left_barrier: i64,
    x_barrier: i64,
) -> Result<AbsorptionTable> {
    solve_window(
        walk,
        absorbing,
        left_barrier,
        x_barrier,
        default_boundary(walk),
        Boundary::Absorb,
    )
}

pub(crate) fn default_boundary(walk: &WalkSpec) -> Boundary {
    if walk.is_driftless() {
        Boundary::Clamp
    } else {
        Boundary::Absorb
    }
}

/// Where the right edge of the window sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RightEdge {
    /// Fixed level: anything above it counts as exceedance.
    Level(i64),
    /// No level; the edge is pushed out with the left one.
    Open,
}

/// Hitting rows for the given start states, with the truncation width doubled
/// until two successive windows agree to `tol` in every entry.
#[derive(Debug, Clone)]
pub struct AdaptiveOracle<'a> {
    pub walk: &'a WalkSpec,
    pub targets: Vec<i64>,
    pub right: RightEdge,
    pub initial_width: i64,
    pub tol: f64,
    pub max_width: i64,
}

impl<'a> AdaptiveOracle<'a> {
    pub fn new(walk: &'a WalkSpec, targets: Vec<i64>, right: RightEdge) -> Self {
        let span = match right {
            RightEdge::Level(x) => {
                let min = targets.iter().copied().min().unwrap_or(x);
                (x - min).max(0)
            }
            RightEdge::Open => {
                let min = targets.iter().copied().min().unwrap_or(0);
                let max = targets.iter().copied().max().unwrap_or(0);
                max - min
            }
        };
        AdaptiveOracle {
            walk,
            targets,
            right,
            initial_width: 64 * (span + 2),
            tol: 1e-10,
            max_width: 1 << 22,
        }
    }

    pub fn rows(&self, starts: &[i64]) -> Result<Vec<HittingRow>> {
        let boundary = default_boundary(self.walk);
        let anchor_lo = self
            .targets
            .iter()
            .chain(starts)
            .copied()
            .min()
            .unwrap_or(0);
        let anchor_hi = self
            .targets
            .iter()
            .chain(starts)
            .copied()
            .max()
            .unwrap_or(0);

        let mut width = self.initial_width.max(8);
        let mut previous: Option<Vec<HittingRow>> = None;
        loop {
            let lo = anchor_lo - width;
            let (hi, above) = match self.right {
                RightEdge::Level(x) => (x, Boundary::Absorb),
                RightEdge::Open => (anchor_hi + width, boundary),
            };
            let table = solve_window(self.walk, &self.targets, lo, hi, boundary, above)?;
            let rows = starts
                .iter()
                .map(|&s| {
                    table.row(s).ok_or_else(|| {
                        CbrwError::Domain(format!("start {s} outside window [{lo}, {hi}]"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(prev) = &previous {
                let diff = prev
                    .iter()
                    .zip(&rows)
                    .map(|(a, b)| a.max_abs_diff(b))
                    .fold(0.0, f64::max);
                if diff < self.tol {
                    return Ok(rows);
                }
                if width >= self.max_width {
                    return Err(CbrwError::NonConvergence {
                        iterations: (width / self.initial_width.max(8)) as usize,
                        residual: diff,
                    });
                }
            }
            previous = Some(rows);
            width *= 2;
        }
    }
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let stride = kl + ku + 1;
        Band {
            n,
            kl,
            ku,
            stride,
            data: vec![0.0; n * stride],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        self.data[i * self.stride + j + self.kl - i] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j + self.kl - i]
    }

    fn sub(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.stride + j + self.kl - i] -= v;
    }

    /// Gaussian elimination without pivoting. `I - P` restricted to transient
    /// states is row diagonally dominant, which keeps this stable.
    fn solve_in_place(&mut self, rhs: &mut [f64], width: usize) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.abs() < 1e-300 {
                return Err(CbrwError::Numerical(format!(
                    "singular absorption system at row {k}"
                )));
            }
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku).min(n - 1);
            for i in k + 1..=last_row {
                let factor = self.get(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                for j in k..=last_col {
                    let v = factor * self.get(k, j);
                    self.sub(i, j, v);
                }
                let (top, bottom) = rhs.split_at_mut(i * width);
                let src = &top[k * width..(k + 1) * width];
                for (dst, s) in bottom[..width].iter_mut().zip(src) {
                    *dst -= factor * s;
                }
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.ku).min(n - 1);
            for j in k + 1..=last_col {
                let a = self.get(k, j);
                if a == 0.0 {
                    continue;
                }
                let (top, bottom) = rhs.split_at_mut(j * width);
                let src = &bottom[..width];
                for (dst, s) in top[k * width..(k + 1) * width].iter_mut().zip(src) {
                    *dst -= a * s;
                }
            }
            let pivot = self.get(k, k);
            for v in &mut rhs[k * width..(k + 1) * width] {
                *v /= pivot;
            }
        }
        Ok(())
    }
}
