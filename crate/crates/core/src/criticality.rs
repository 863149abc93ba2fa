//! Offspring laws, catalysts, and the supercritical / critical / subcritical
//! classification through the Perron root of the mean matrix.

use crate::error::{CbrwError, Result};
use crate::excursion::taboo_hitting_matrix;
use crate::walk::WalkSpec;

/// Offspring number law with finite support, stored densely by count.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringDist {
    pmf: Vec<f64>,
}

impl OffspringDist {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(CbrwError::InvalidOffspring("empty pmf".into()));
        }
        if let Some((k, p)) = pmf
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(CbrwError::InvalidOffspring(format!(
                "P(xi = {k}) = {p} is not a probability"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CbrwError::InvalidOffspring(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut pmf = pmf;
        while pmf.len() > 1 && pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        Ok(OffspringDist { pmf })
    }

    /// Builds a law from `(count, probability)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        let len = pairs.iter().map(|&(k, _)| k + 1).max().unwrap_or(0);
        let mut pmf = vec![0.0; len];
        for (k, p) in pairs {
            pmf[k] += p;
        }
        Self::new(pmf)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max_count(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn is_unit_mass_at_one(&self) -> bool {
        self.pmf.len() == 2 && self.pmf[1] == 1.0
    }

    pub fn pgf(&self, s: f64) -> Result<f64> {
        check_unit(s)?;
        Ok(self.pgf_unchecked(s))
    }

    pub fn pgf_derivative(&self, s: f64) -> Result<f64> {
        check_unit(s)?;
        Ok(self
            .pmf
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &p)| acc * s + k as f64 * p))
    }

    pub(crate) fn pgf_unchecked(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    /// `f'(1)`
    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    /// `f''(1) = E[xi (xi - 1)]`. Not the variance.
    pub fn second_factorial_moment(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum()
    }

    /// `1 - f(1 - s)`, accurate in relative terms for small `s`.
    pub fn survival_transform(&self, s: f64) -> f64 {
        let ln = (-s).ln_1p();
        self.pmf
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &p)| p * -(k as f64 * ln).exp_m1())
            .sum()
    }

    /// `1 - f(1 - s) - m s`, the part of the survival transform beyond its
    /// linear term. Of order `s^2`; computed without cancelling against `m s`.
    pub fn survival_curvature(&self, s: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, &p)| p * binomial_tail(k, s))
            .sum()
    }

    /// Derivative of [`survival_transform`](Self::survival_transform): `f'(1 - s)`.
    pub fn survival_slope(&self, s: f64) -> f64 {
        self.pgf_derivative(1.0 - s.clamp(0.0, 1.0)).unwrap_or(0.0)
    }

    /// Draws a count from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // u landed in the rounding slack above the last partial sum
        self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// `1 - (1-s)^k - k s` for `k >= 2`.
fn binomial_tail(k: usize, s: f64) -> f64 {
    let kf = k as f64;
    if kf * s < 0.25 {
        // alternating series -C(k,2) s^2 + C(k,3) s^3 - ...; terms shrink by < k s
        let mut term = -kf * (kf - 1.0) / 2.0 * s * s;
        let mut sum = term;
        for j in 3..=k {
            term *= -(kf - j as f64 + 1.0) / j as f64 * s;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        -(kf * (-s).ln_1p()).exp_m1() - kf * s
    }
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(CbrwError::Domain(format!("pgf argument {s} outside [0,1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalyst {
    pub position: i64,
    /// Probability of branching rather than jumping away.
    pub alpha: f64,
    /// Rate of the exponential holding time. It only rescales calendar time,
    /// so no displacement quantity depends on it.
    pub beta: f64,
    pub offspring: OffspringDist,
}

/// Catalysts sorted by strictly increasing position.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalystSet {
    entries: Vec<Catalyst>,
}

impl CatalystSet {
    pub fn new(mut entries: Vec<Catalyst>) -> Result<Self> {
        if entries.is_empty() {
            return Err(CbrwError::InvalidCatalysts("at least one catalyst is required".into()));
        }
        for c in &entries {
            if !(0.0..1.0).contains(&c.alpha) {
                return Err(CbrwError::InvalidCatalysts(format!(
                    "alpha at {} must lie in [0,1), got {}",
                    c.position, c.alpha
                )));
            }
            if !(c.beta > 0.0 && c.beta.is_finite()) {
                return Err(CbrwError::InvalidCatalysts(format!(
                    "beta at {} must be positive, got {}",
                    c.position, c.beta
                )));
            }
        }
        entries.sort_by_key(|c| c.position);
        if let Some(w) = entries.windows(2).find(|w| w[0].position == w[1].position) {
            return Err(CbrwError::InvalidCatalysts(format!(
                "duplicate catalyst position {}",
                w[0].position
            )));
        }
        if entries.iter().all(|c| c.offspring.is_unit_mass_at_one()) {
            return Err(CbrwError::InvalidCatalysts(
                "every catalyst has the deterministic one-offspring law".into(),
            ));
        }
        Ok(CatalystSet { entries })
    }

    /// A single catalyst at the origin.
    pub fn single(alpha: f64, offspring: OffspringDist) -> Result<Self> {
        Self::new(vec![Catalyst {
            position: 0,
            alpha,
            beta: 1.0,
            offspring,
        }])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Catalyst> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> &Catalyst {
        &self.entries[i]
    }

    pub fn positions(&self) -> Vec<i64> {
        self.entries.iter().map(|c| c.position).collect()
    }

    pub fn index_of(&self, position: i64) -> Option<usize> {
        self.entries
            .binary_search_by_key(&position, |c| c.position)
            .ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeLabel {
    Supercritical,
    Critical,
    Subcritical,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegimeLabel::Supercritical => "supercritical",
            RegimeLabel::Critical => "critical",
            RegimeLabel::Subcritical => "subcritical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub perron_root: f64,
    pub label: RegimeLabel,
    pub tolerance: f64,
    /// `|rho - 1| < 1e-6` but outside the tolerance: the label is assigned
    /// yet may flip under tiny parameter changes.
    pub near_critical: bool,
    pub matrix: Vec<Vec<f64>>,
}

/// `D[i][j] = delta_ij alpha_i m_i + (1 - alpha_i) F_ij`, with `F` the taboo
/// hitting probabilities between catalysts.
pub fn criticality_matrix(walk: &WalkSpec, catalysts: &CatalystSet) -> Result<Vec<Vec<f64>>> {
    let f = taboo_hitting_matrix(walk, &catalysts.positions())?;
    Ok(catalysts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            f[i].iter()
                .enumerate()
                .map(|(j, &fij)| {
                    let diag = if i == j { c.alpha * c.offspring.mean() } else { 0.0 };
                    diag + (1.0 - c.alpha) * fij
                })
                .collect()
        })
        .collect())
}

/// Dominant eigenvalue of a nonnegative matrix.
///
/// Power iteration on `D + I` (primitive whenever `D` is irreducible), stopped
/// when the Collatz–Wielandt bounds `min (Dv)_i / v_i <= rho <= max (Dv)_i / v_i`
/// agree to a relative 1e-12.
pub fn perron_root(d: &[Vec<f64>]) -> Result<f64> {
    let n = d.len();
    if n == 0 || d.iter().any(|row| row.len() != n) {
        return Err(CbrwError::Domain("matrix must be square and nonempty".into()));
    }
    if d.iter().flatten().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(CbrwError::Domain("matrix must be entrywise nonnegative".into()));
    }
    if n == 1 {
        return Ok(d[0][0]);
    }
    const MAX_ITER: usize = 100_000;
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut gap = f64::INFINITY;
    for _ in 0..MAX_ITER {
        for (wi, row) in w.iter_mut().zip(d) {
            *wi = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (wi, vi) in w.iter().zip(&v) {
            if *vi <= 0.0 {
                continue;
            }
            let r = wi / vi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        gap = hi - lo;
        if gap <= 1e-12 * hi.max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
        // shift by the identity and renormalize
        let mut norm = 0.0;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi += wi;
            norm += *vi;
        }
        if norm == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|vi| *vi /= norm);
    }
    Err(CbrwError::NonConvergence {
        iterations: MAX_ITER,
        residual: gap,
    })
}

pub fn classify(walk: &WalkSpec, catalysts: &CatalystSet, tol: f64) -> Result<Regime> {
    let matrix = criticality_matrix(walk, catalysts)?;
    let rho = perron_root(&matrix)?;
    let label = if (rho - 1.0).abs() <= tol {
        RegimeLabel::Critical
    } else if rho > 1.0 {
        RegimeLabel::Supercritical
    } else {
        RegimeLabel::Subcritical
    };
    let near_critical = label != RegimeLabel::Critical && (rho - 1.0).abs() < 1e-6;
    Ok(Regime {
        perron_root: rho,
        label,
        tolerance: tol,
        near_critical,
        matrix,
    })
}

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
