//! Space-homogeneous random walks on the integer lattice.
//!
//! Only jump offsets are stored; the rate of a jump from `x` to `y` depends on
//! `y - x` alone. The embedded jump chain is normalized once at construction.

use crate::error::{CbrwError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum WalkSpec {
    /// Nearest-neighbour walk: `+1` with probability `p`, `-1` with `1 - p`.
    Simple { p: f64 },
    /// Finite-support walk given by jump rates.
    General(GeneralWalk),
}

/// A finite-support walk, kept both as raw rates and as the normalized step
/// law of its embedded chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralWalk {
    rates: Vec<(i64, f64)>,
    total_rate: f64,
    steps: Vec<(i64, f64)>,
}

impl WalkSpec {
    pub fn simple(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CbrwError::InvalidWalk(format!(
                "simple walk needs p in (0,1), got {p}"
            )));
        }
        Ok(WalkSpec::Simple { p })
    }

    /// Builds a walk from `(offset, rate)` pairs. Zero rates are dropped,
    /// repeated offsets are summed.
    pub fn general<I>(rates: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, f64)>,
    {
        let mut merged: Vec<(i64, f64)> = Vec::new();
        for (offset, rate) in rates {
            if offset == 0 {
                return Err(CbrwError::InvalidWalk("offset 0 is not a jump".into()));
            }
            if !rate.is_finite() || rate < 0.0 {
                return Err(CbrwError::InvalidWalk(format!(
                    "rate for offset {offset} must be finite and nonnegative, got {rate}"
                )));
            }
            if rate == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(o, _)| *o == offset) {
                Some(entry) => entry.1 += rate,
                None => merged.push((offset, rate)),
            }
        }
        merged.sort_by_key(|&(o, _)| o);

        if merged.is_empty() {
            return Err(CbrwError::InvalidWalk("no offset has a positive rate".into()));
        }
        let has_up = merged.iter().any(|&(o, _)| o > 0);
        let has_down = merged.iter().any(|&(o, _)| o < 0);
        if !(has_up && has_down) {
            return Err(CbrwError::InvalidWalk(
                "walk must jump in both directions".into(),
            ));
        }
        let g = merged.iter().fold(0u64, |g, &(o, _)| gcd(g, o.unsigned_abs()));
        if g != 1 {
            return Err(CbrwError::InvalidWalk(format!(
                "offsets generate {g}Z, not Z (reducible walk)"
            )));
        }

        let total_rate: f64 = merged.iter().map(|&(_, r)| r).sum();
        let mut steps: Vec<(i64, f64)> = merged.iter().map(|&(o, r)| (o, r / total_rate)).collect();
        // Put the rounding slack on the largest entry so the law sums to 1.
        let head: f64 = steps.iter().map(|&(_, w)| w).sum::<f64>();
        if let Some(max) = steps
            .iter_mut()
            .max_by(|a, b| a.1.total_cmp(&b.1))
        {
            max.1 += 1.0 - head;
        }

        Ok(WalkSpec::General(GeneralWalk {
            rates: merged,
            total_rate,
            steps,
        }))
    }

    /// Jump law of the embedded discrete chain, sorted by offset.
    pub fn embedded_step_dist(&self) -> Vec<(i64, f64)> {
        match self {
            WalkSpec::Simple { p } => vec![(-1, 1.0 - p), (1, *p)],
            WalkSpec::General(g) => g.steps.clone(),
        }
    }

    /// `-q(0,0)`. The simple walk carries no rate scale, so it reports 1.
    pub fn total_rate(&self) -> f64 {
        match self {
            WalkSpec::Simple { .. } => 1.0,
            WalkSpec::General(g) => g.total_rate,
        }
    }

    pub fn drift(&self) -> f64 {
        match self {
            WalkSpec::Simple { p } => 2.0 * p - 1.0,
            WalkSpec::General(g) => g.steps.iter().map(|&(o, w)| o as f64 * w).sum(),
        }
    }

    pub fn is_recurrent(&self) -> Result<bool> {
        match self {
            WalkSpec::Simple { p } => Ok(*p == 0.5),
            WalkSpec::General(_) => Err(CbrwError::Unsupported(
                "recurrence test is implemented for simple walks only".into(),
            )),
        }
    }

    pub fn as_simple(&self) -> Option<f64> {
        match self {
            WalkSpec::Simple { p } => Some(*p),
            WalkSpec::General(_) => None,
        }
    }

    /// Largest upward and downward jump sizes, both as positive numbers.
    pub fn reach(&self) -> (i64, i64) {
        match self {
            WalkSpec::Simple { .. } => (1, 1),
            WalkSpec::General(g) => {
                let up = g.steps.iter().map(|&(o, _)| o).max().unwrap_or(1).max(0);
                let down = g.steps.iter().map(|&(o, _)| -o).max().unwrap_or(1).max(0);
                (up, down)
            }
        }
    }

    /// Whether the drift vanishes, to the tolerance used for general walks.
    pub(crate) fn is_driftless(&self) -> bool {
        match self {
            WalkSpec::Simple { p } => *p == 0.5,
            WalkSpec::General(_) => self.drift().abs() < 1e-12,
        }
    }
}

impl GeneralWalk {
    pub fn rates(&self) -> &[(i64, f64)] {
        &self.rates
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_step_laws() {
        let sym = WalkSpec::simple(0.5).unwrap();
        assert_eq!(sym.embedded_step_dist(), vec![(-1, 0.5), (1, 0.5)]);
        let w = WalkSpec::simple(0.3).unwrap();
        assert_eq!(w.embedded_step_dist(), vec![(-1, 0.7), (1, 0.3)]);
    }

    #[test]
    fn general_normalizes_rates() {
        let w = WalkSpec::general([(1, 2.0), (-1, 1.0), (-2, 1.0)]).unwrap();
        assert_eq!(w.embedded_step_dist(), vec![(-2, 0.25), (-1, 0.25), (1, 0.5)]);
        assert_eq!(w.total_rate(), 4.0);
    }

    #[test]
    fn drift_values() {
        assert_eq!(WalkSpec::simple(0.5).unwrap().drift(), 0.0);
        assert!((WalkSpec::simple(0.6).unwrap().drift() - 0.2).abs() < 1e-15);
        let g = WalkSpec::general([(1, 1.0), (-2, 1.0)]).unwrap();
        assert_eq!(g.drift(), -0.5);
    }

    #[test]
    fn recurrence_of_simple_walks() {
        assert!(WalkSpec::simple(0.5).unwrap().is_recurrent().unwrap());
        assert!(!WalkSpec::simple(0.4).unwrap().is_recurrent().unwrap());
        assert!(!WalkSpec::simple(0.7).unwrap().is_recurrent().unwrap());
        let g = WalkSpec::general([(1, 1.0), (-1, 1.0)]).unwrap();
        assert!(matches!(g.is_recurrent(), Err(CbrwError::Unsupported(_))));
    }

    #[test]
    fn rejects_bad_walks() {
        assert!(WalkSpec::simple(0.0).is_err());
        assert!(WalkSpec::simple(1.0).is_err());
        assert!(WalkSpec::simple(f64::NAN).is_err());
        assert!(WalkSpec::general([(2, 1.0), (-2, 1.0)]).is_err());
        assert!(WalkSpec::general([(1, 1.0), (2, 3.0)]).is_err());
        assert!(WalkSpec::general([(1, 0.0), (-1, 0.0)]).is_err());
        assert!(WalkSpec::general([(1, -1.0), (-1, 1.0)]).is_err());
        assert!(WalkSpec::general(Vec::new()).is_err());
        // gcd(2,3) = 1 with both signs is fine
        assert!(WalkSpec::general([(2, 1.0), (-3, 1.0)]).is_ok());
    }

    proptest! {
        #[test]
        fn step_law_sums_to_one(
            rates in proptest::collection::vec((1i64..6, 0.001f64..100.0), 1..5),
            down in proptest::collection::vec((1i64..6, 0.001f64..100.0), 1..5),
        ) {
            let mut all: Vec<(i64, f64)> = rates;
            all.extend(down.into_iter().map(|(o, r)| (-o, r)));
            all.push((1, 0.5));
            let w = WalkSpec::general(all).unwrap();
            let total: f64 = w.embedded_step_dist().iter().map(|&(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-15);
        }

        #[test]
        fn simple_drift_is_2p_minus_1(p in 0.001f64..0.999) {
            prop_assert_eq!(WalkSpec::simple(p).unwrap().drift(), 2.0 * p - 1.0);
        }
    }
}
