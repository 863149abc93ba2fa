//! Large-`x` behaviour of `P_0(M > x)` for a single catalyst and a simple walk.
//!
//! | regime      | walk             | tail                                              |
//! |-------------|------------------|---------------------------------------------------|
//! | critical    | symmetric        | `sqrt(1-a) / (sqrt(a s2) sqrt(x))`                |
//! | subcritical | symmetric        | `(1-a) / (2 a (1-m) x)`                           |
//! | critical    | drift left       | `sqrt(2(1-a)(q-p)) / sqrt(a s2) (p/q)^((x+1)/2)`  |
//! | subcritical | drift left       | `(1-a)(q-p) / (1 - 2p(1-a) - a m) (p/q)^(x+1)`    |
//! | either      | drift right      | tends to the root `s0` of the limiting equation  |
//!
//! Here `a` is the branching probability, `m = f'(1)` and `s2 = f''(1)`.

use crate::criticality::{OffspringDist, RegimeLabel};
use crate::error::{CbrwError, Result};
use crate::model::Model;
use crate::solver::TailCurve;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CbrwError::Domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(CbrwError::Hypothesis(format!(
            "second factorial moment must lie in (0, inf), got {sigma2}"
        )))
    }
}

fn check_level(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(CbrwError::Domain(format!("level must be positive, got {x}")))
    }
}

fn check_drift_left(p: f64, q: f64) -> Result<()> {
    if p > 0.0 && p < q && (p + q - 1.0).abs() < 1e-12 {
        Ok(())
    } else {
        Err(CbrwError::Hypothesis(format!("needs 0 < p < q, p + q = 1; got p={p}, q={q}")))
    }
}

pub fn critical_symmetric(x: f64, alpha: f64, sigma2: f64) -> Result<f64> {
    check_level(x)?;
    check_alpha(alpha)?;
    check_sigma2(sigma2)?;
    Ok((1.0 - alpha).sqrt() / ((alpha * sigma2).sqrt() * x.sqrt()))
}

pub fn subcritical_symmetric(x: f64, alpha: f64, m: f64) -> Result<f64> {
    check_level(x)?;
    check_alpha(alpha)?;
    if !(0.0..1.0).contains(&m) {
        return Err(CbrwError::Hypothesis(format!("needs m in [0,1), got {m}")));
    }
    Ok((1.0 - alpha) / (2.0 * alpha * (1.0 - m) * x))
}

pub fn critical_drift_left(x: f64, alpha: f64, sigma2: f64, p: f64, q: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sigma2(sigma2)?;
    check_drift_left(p, q)?;
    let prefactor = (2.0 * (1.0 - alpha) * (q - p)).sqrt() / (alpha * sigma2).sqrt();
    Ok(prefactor * ((x + 1.0) / 2.0 * (p / q).ln()).exp())
}

pub fn subcritical_drift_left(x: f64, alpha: f64, m: f64, p: f64, q: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_drift_left(p, q)?;
    let denom = 1.0 - 2.0 * p * (1.0 - alpha) - alpha * m;
    if denom <= 0.0 {
        return Err(CbrwError::Hypothesis(format!(
            "1 - 2p(1-alpha) - alpha m = {denom} is not positive; instance is not subcritical"
        )));
    }
    Ok((1.0 - alpha) * (q - p) / denom * ((x + 1.0) * (p / q).ln()).exp())
}

/// Root of `alpha (1 - f(1-s)) + (2q(1-alpha) - 1) s + (1-alpha)(p-q) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S0Root {
    pub value: f64,
    /// The only root is `s = 1` (no death without offspring); the limit then
    /// sits on the boundary rather than inside `(0, 1)`.
    pub on_boundary: bool,
}

pub fn s0_equation(alpha: f64, f: &OffspringDist, p: f64, q: f64, s: f64) -> f64 {
    alpha * f.survival_transform(s) + (2.0 * q * (1.0 - alpha) - 1.0) * s + (1.0 - alpha) * (p - q)
}

pub fn s0_root(alpha: f64, f: &OffspringDist, p: f64, q: f64) -> Result<S0Root> {
    if p <= q || p.is_nan() || q.is_nan() {
        return Err(CbrwError::Hypothesis(format!(
            "the limit s0 exists only for p > q; got p={p}, q={q}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(CbrwError::Domain(format!("alpha must lie in [0,1), got {alpha}")));
    }
    let h = |s: f64| s0_equation(alpha, f, p, q, s);

    // concave in s: at most one sign change from + to -
    let mut changes = 0;
    let mut prev = h(0.0) > 0.0;
    for k in 1..=1000 {
        let cur = h(k as f64 / 1000.0) > 0.0;
        if cur != prev {
            changes += 1;
        }
        prev = cur;
    }
    if changes > 1 {
        return Err(CbrwError::Numerical(format!(
            "s0 equation changes sign {changes} times on [0,1]"
        )));
    }

    let at_one = h(1.0);
    if at_one >= 0.0 {
        return Ok(S0Root {
            value: 1.0,
            on_boundary: true,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(S0Root {
        value: 0.5 * (lo + hi),
        on_boundary: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Critical, symmetric walk.
    CriticalSymmetric,
    /// Subcritical, symmetric walk.
    SubcriticalSymmetric,
    /// Critical, walk with drift.
    CriticalDrift,
    /// Subcritical, walk with drift.
    SubcriticalDrift,
}

impl Theorem {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Theorem::CriticalSymmetric),
            2 => Some(Theorem::SubcriticalSymmetric),
            3 => Some(Theorem::CriticalDrift),
            4 => Some(Theorem::SubcriticalDrift),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Theorem::CriticalSymmetric => 1,
            Theorem::SubcriticalSymmetric => 2,
            Theorem::CriticalDrift => 3,
            Theorem::SubcriticalDrift => 4,
        }
    }

    fn regime(self) -> RegimeLabel {
        match self {
            Theorem::CriticalSymmetric | Theorem::CriticalDrift => RegimeLabel::Critical,
            Theorem::SubcriticalSymmetric | Theorem::SubcriticalDrift => RegimeLabel::Subcritical,
        }
    }

    fn symmetric(self) -> bool {
        matches!(self, Theorem::CriticalSymmetric | Theorem::SubcriticalSymmetric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftTag {
    Symmetric,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawParams {
    pub alpha: f64,
    pub mean: f64,
    pub second_factorial_moment: f64,
    pub p: f64,
    pub q: f64,
}

/// An asymptotic law bound to an instance that satisfies its hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLaw {
    theorem: Theorem,
    drift: DriftTag,
    params: LawParams,
    catalyst: i64,
    s0: Option<f64>,
}

impl AsymptoticLaw {
    /// Checks the theorem's hypotheses against `model` and refuses if any fails.
    pub fn for_model(model: &Model, theorem: Theorem) -> Result<Self> {
        let p = model.walk.as_simple().ok_or_else(|| {
            CbrwError::Hypothesis("asymptotic laws need a simple walk".into())
        })?;
        if model.catalysts.len() != 1 {
            return Err(CbrwError::Hypothesis(format!(
                "asymptotic laws need a single catalyst, got {}",
                model.catalysts.len()
            )));
        }
        let q = 1.0 - p;
        let drift = if p == 0.5 {
            DriftTag::Symmetric
        } else if p < q {
            DriftTag::Left
        } else {
            DriftTag::Right
        };
        if theorem.symmetric() != (drift == DriftTag::Symmetric) {
            return Err(CbrwError::Hypothesis(format!(
                "theorem {} needs a {} walk, got p = {p}",
                theorem.number(),
                if theorem.symmetric() { "symmetric" } else { "drifting" }
            )));
        }
        let regime = model.classify()?;
        if regime.label != theorem.regime() {
            return Err(CbrwError::Hypothesis(format!(
                "theorem {} needs a {} instance, got {} (rho = {})",
                theorem.number(),
                theorem.regime(),
                regime.label,
                regime.perron_root
            )));
        }
        let c = model.catalysts.get(0);
        let params = LawParams {
            alpha: c.alpha,
            mean: c.offspring.mean(),
            second_factorial_moment: c.offspring.second_factorial_moment(),
            p,
            q,
        };
        check_alpha(params.alpha)?;
        if theorem.regime() == RegimeLabel::Critical {
            check_sigma2(params.second_factorial_moment)?;
        }
        let s0 = if drift == DriftTag::Right {
            let root = s0_root(c.alpha, &c.offspring, p, q)?;
            if root.on_boundary {
                return Err(CbrwError::Hypothesis(
                    "s0 sits on the boundary s = 1; the limit is not in (0,1)".into(),
                ));
            }
            Some(root.value)
        } else {
            None
        };
        let law = AsymptoticLaw {
            theorem,
            drift,
            params,
            catalyst: c.position,
            s0,
        };
        // surface parameter problems (e.g. a nonpositive denominator) now
        law.predict(1)?;
        Ok(law)
    }

    pub fn theorem(&self) -> Theorem {
        self.theorem
    }

    pub fn drift(&self) -> DriftTag {
        self.drift
    }

    pub fn params(&self) -> LawParams {
        self.params
    }

    pub fn catalyst(&self) -> i64 {
        self.catalyst
    }

    /// The limit `s0` for drift to the right.
    pub fn limit(&self) -> Option<f64> {
        self.s0
    }

    /// Predicted tail at absolute level `x`, measured from the catalyst.
    pub fn predict(&self, x: i64) -> Result<f64> {
        let LawParams {
            alpha,
            mean,
            second_factorial_moment: sigma2,
            p,
            q,
        } = self.params;
        let rel = (x - self.catalyst) as f64;
        if let Some(s0) = self.s0 {
            return Ok(s0);
        }
        match self.theorem {
            Theorem::CriticalSymmetric => critical_symmetric(rel, alpha, sigma2),
            Theorem::SubcriticalSymmetric => subcritical_symmetric(rel, alpha, mean),
            Theorem::CriticalDrift => critical_drift_left(rel, alpha, sigma2, p, q),
            Theorem::SubcriticalDrift => subcritical_drift_left(rel, alpha, mean, p, q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub x: i64,
    pub solver: f64,
    pub predicted: f64,
    pub ratio: f64,
}

/// Solver tail against the law at every level of `curve` above the catalyst.
pub fn convergence_report(curve: &TailCurve, law: &AsymptoticLaw) -> Result<Vec<ConvergenceRow>> {
    if curve.start != law.catalyst {
        return Err(CbrwError::Hypothesis(format!(
            "laws describe a start at the catalyst {}, curve starts at {}",
            law.catalyst, curve.start
        )));
    }
    curve
        .levels
        .iter()
        .zip(&curve.values)
        .filter(|(&x, _)| x > law.catalyst)
        .map(|(&x, &solver)| {
            let predicted = law.predict(x)?;
            let ratio = solver / predicted;
            if !ratio.is_finite() {
                return Err(CbrwError::Numerical(format!(
                    "ratio at x={x} is not finite ({solver} / {predicted})"
                )));
            }
            Ok(ConvergenceRow {
                x,
                solver,
                predicted,
                ratio,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::CatalystSet;
    use crate::walk::WalkSpec;

    fn law(pairs: &[(usize, f64)]) -> OffspringDist {
        OffspringDist::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn critical_symmetric_values() {
        assert!((critical_symmetric(4.0, 0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        for x in [1.0, 7.0, 1e4] {
            let a = critical_symmetric(x, 0.3, 2.0).unwrap();
            let b = critical_symmetric(4.0 * x, 0.3, 2.0).unwrap();
            assert!((b - a / 2.0).abs() < 1e-15 * a);
        }
        assert!(critical_symmetric(10.0, 0.999999, 1.0).unwrap() < 1e-3);
        assert!(critical_symmetric(10.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn subcritical_symmetric_values() {
        assert!((subcritical_symmetric(10.0, 0.5, 0.5).unwrap() - 0.1).abs() < 1e-15);
        let a = subcritical_symmetric(3.0, 0.4, 0.2).unwrap();
        let b = subcritical_symmetric(6.0, 0.4, 0.2).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
        assert!(subcritical_symmetric(10.0, 0.5, 1.0 - 1e-12).unwrap() > 1e9);
        assert!(subcritical_symmetric(10.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn drift_left_geometric_ratios() {
        let (p, q) = (0.4, 0.6);
        for x in [1.0, 9.0, 50.0] {
            let a = critical_drift_left(x, 0.5, 1.0, p, q).unwrap();
            let b = critical_drift_left(x + 2.0, 0.5, 1.0, p, q).unwrap();
            assert!((b / a - p / q).abs() < 1e-12);
            let c = subcritical_drift_left(x, 0.5, 0.5, 0.3, 0.7).unwrap();
            let d = subcritical_drift_left(x + 1.0, 0.5, 0.5, 0.3, 0.7).unwrap();
            assert!((d / c - 0.3 / 0.7).abs() < 1e-12);
        }
        let v = critical_drift_left(9.0, 0.5, 1.0, p, q).unwrap();
        let expect = (2.0f64 * 0.5 * 0.2).sqrt() / 0.5f64.sqrt() * (2.0f64 / 3.0).powi(5);
        assert!((v - expect).abs() < 1e-15);
        let near = critical_drift_left(9.0, 0.5, 1.0, 0.5 - 1e-9, 0.5 + 1e-9).unwrap();
        assert!(near < 1e-3);
        let v = subcritical_drift_left(4.0, 0.5, 0.5, 0.3, 0.7).unwrap();
        let expect = 0.5 * 0.4 / (1.0 - 0.3 - 0.25) * (0.3f64 / 0.7).powi(5);
        assert!((v - expect).abs() < 1e-15);
        assert!(critical_drift_left(9.0, 0.5, 1.0, 0.6, 0.4).is_err());
    }

    #[test]
    fn subcritical_denominator_positive_on_grid() {
        // subcritical means alpha m + (1-alpha)(1-r) < 1 with r = q - p
        for p in [0.1, 0.2, 0.3, 0.4, 0.45] {
            for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let r = 1.0 - 2.0 * p;
                let m_crit = 1.0 + r * (1.0 - alpha) / alpha;
                for frac in [0.0, 0.25, 0.5, 0.9, 0.999] {
                    let m = frac * m_crit;
                    let denom = 1.0 - 2.0 * p * (1.0 - alpha) - alpha * m;
                    assert!(denom > 0.0, "p={p} alpha={alpha} m={m}");
                }
            }
        }
    }

    #[test]
    fn s0_root_endpoints() {
        let f = law(&[(0, 0.4), (2, 0.6)]);
        let (alpha, p, q) = (0.5, 0.6, 0.4);
        assert!((s0_equation(alpha, &f, p, q, 0.0) - (1.0 - alpha) * (p - q)).abs() < 1e-15);
        let at_one = alpha * (1.0 - f.pgf(0.0).unwrap()) + 2.0 * q * (1.0 - alpha) - 1.0
            + (1.0 - alpha) * (p - q);
        assert!((s0_equation(alpha, &f, p, q, 1.0) - at_one).abs() < 1e-15);
        assert!(at_one < 0.0);
        let root = s0_root(alpha, &f, p, q).unwrap();
        assert!(!root.on_boundary);
        assert!(s0_equation(alpha, &f, p, q, root.value).abs() < 1e-12);
        // quadratic: 0.5 (1.2 s - 0.6 s^2) + (0.4 - 1) s + 0.1 = -0.3 s^2 + 0.1
        assert!((root.value - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn s0_with_sterile_law() {
        // f = {0: 1} makes the branching term vanish: -0.7 s + 0.2 = 0
        let f = law(&[(0, 1.0)]);
        let root = s0_root(0.5, &f, 0.7, 0.3).unwrap();
        assert!((root.value - 2.0 / 7.0).abs() < 1e-12);
        assert!(!root.on_boundary);
        // no death without offspring: the only root is s = 1
        let g = law(&[(2, 1.0)]);
        assert!(s0_root(0.5, &g, 0.7, 0.3).unwrap().on_boundary);
        assert!(s0_root(0.5, &f, 0.3, 0.7).is_err());
    }

    #[test]
    fn hypothesis_guard() {
        let sym = WalkSpec::simple(0.5).unwrap();
        let crit = Model::new(sym.clone(), CatalystSet::single(0.5, law(&[(0, 0.5), (2, 0.5)])).unwrap());
        assert!(AsymptoticLaw::for_model(&crit, Theorem::CriticalSymmetric).is_ok());
        for t in [Theorem::SubcriticalSymmetric, Theorem::CriticalDrift, Theorem::SubcriticalDrift] {
            assert!(matches!(
                AsymptoticLaw::for_model(&crit, t),
                Err(CbrwError::Hypothesis(_))
            ));
        }
        let drift = Model::new(
            WalkSpec::simple(0.4).unwrap(),
            CatalystSet::single(0.5, law(&[(0, 0.4), (2, 0.6)])).unwrap(),
        );
        assert!(AsymptoticLaw::for_model(&drift, Theorem::CriticalSymmetric).is_err());
        assert!(AsymptoticLaw::for_model(&drift, Theorem::CriticalDrift).is_ok());
        let supercritical = Model::new(sym, CatalystSet::single(0.5, law(&[(0, 0.2), (2, 0.8)])).unwrap());
        for n in 1..=4 {
            let t = Theorem::from_number(n).unwrap();
            assert!(AsymptoticLaw::for_model(&supercritical, t).is_err());
        }
    }

    #[test]
    fn drift_right_law_reports_limit() {
        let m = Model::new(
            WalkSpec::simple(0.6).unwrap(),
            CatalystSet::single(0.5, law(&[(0, 0.4), (2, 0.6)])).unwrap(),
        );
        let l = AsymptoticLaw::for_model(&m, Theorem::CriticalDrift).unwrap();
        assert_eq!(l.drift(), DriftTag::Right);
        assert!((l.limit().unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(l.predict(1000).unwrap(), l.limit().unwrap());
    }
}
