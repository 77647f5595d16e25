//! Legendre-Fenchel transforms of pressure curves and the entropy
//! spectrum alpha -> H(alpha), with an exact counting oracle for depth-1
//! potentials.

use crate::dp::{WindowConstraint, WordLattice};
use crate::error::{Result, SpectraError};
use crate::pressure::{self, PressureCurve};
use crate::symbolic::{
    enumerate_words, finite_time_exponent, BoundaryMode, CenterCocycle, SymbolicSystem,
};

/// Outward tolerance on the domain endpoints detected from end slopes.
pub const DOMAIN_TOL: f64 = 1e-9;
pub const CONCAVITY_TOL: f64 = 1e-9;

/// Entropy spectrum sampled on an alpha grid restricted to the domain.
#[derive(Debug, Clone)]
pub struct SpectrumCurve {
    pub alpha_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Closed domain [alpha_min, alpha_max] from the pressure end slopes.
    pub domain: (f64, f64),
}

impl SpectrumCurve {
    fn check_invariants(&self, p0: f64) -> Result<()> {
        for i in 1..self.alpha_grid.len().saturating_sub(1) {
            let (a0, a1, a2) = (
                self.alpha_grid[i - 1],
                self.alpha_grid[i],
                self.alpha_grid[i + 1],
            );
            let left = (self.values[i] - self.values[i - 1]) / (a1 - a0);
            let right = (self.values[i + 1] - self.values[i]) / (a2 - a1);
            if left - right < -CONCAVITY_TOL {
                return Err(SpectraError::Config(format!(
                    "spectrum not concave at alpha = {a1}"
                )));
            }
        }
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > p0 + 1e-8 {
            return Err(SpectraError::Config(format!(
                "spectrum max {max} exceeds P(0) = {p0}"
            )));
        }
        if self.values.iter().any(|&v| v < -1e-9) {
            return Err(SpectraError::Config("negative spectrum value".into()));
        }
        Ok(())
    }

    /// Value at the grid point nearest to `alpha`.
    pub fn value_near(&self, alpha: f64) -> Option<f64> {
        self.alpha_grid
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - alpha)
                    .abs()
                    .partial_cmp(&(b.1 - alpha).abs())
                    .unwrap()
            })
            .map(|(i, _)| self.values[i])
    }

    /// One-sided limits at 0: values at the grid points closest to 0 from
    /// strictly below and strictly above. Differ from the true limits by at
    /// most grid-step times the Lipschitz bound of H.
    pub fn one_sided_limits_at_zero(&self) -> (Option<f64>, Option<f64>) {
        // Collect the two grid points nearest 0 on each side and extrapolate
        // linearly to 0; with a single point available, use its value. This
        // removes the O(grid-step) bias a raw endpoint value would carry.
        let mut below: Vec<(f64, f64)> = Vec::new();
        let mut above: Vec<(f64, f64)> = Vec::new();
        for (&a, &h) in self.alpha_grid.iter().zip(&self.values) {
            if a < 0.0 {
                below.push((a, h));
            } else if a > 0.0 {
                above.push((a, h));
            }
        }
        below.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        above.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let extrapolate = |p: (f64, f64), q: (f64, f64)| -> f64 {
            // value at 0 of the line through p and q
            q.1 + (0.0 - q.0) * (q.1 - p.1) / (q.0 - p.0)
        };
        let lo = match below.len() {
            0 => None,
            1 => Some(below[0].1),
            n => Some(extrapolate(below[n - 2], below[n - 1])),
        };
        let hi = match above.len() {
            0 => None,
            1 => Some(above[0].1),
            _ => Some(extrapolate(above[1], above[0])),
        };
        (lo, hi)
    }
}

/// Convex conjugate inf_q (P(q) - q*alpha) using grid values only; `None`
/// when alpha falls outside the end-slope range (inf diverges to -inf).
pub fn lf_transform(p: &PressureCurve, alpha: f64) -> Option<f64> {
    let (amin, amax) = p.asymptotic_slopes;
    if alpha < amin - DOMAIN_TOL || alpha > amax + DOMAIN_TOL {
        return None;
    }
    p.q_grid
        .iter()
        .zip(&p.values)
        .map(|(&q, &v)| v - q * alpha)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

/// As [`lf_transform`] but sharpened by golden-section minimization of the
/// true pressure around the grid argmin (P convex, so the local bracket is
/// globally correct).
pub fn lf_transform_with(
    p: &PressureCurve,
    pressure_eval: impl Fn(f64) -> f64,
    alpha: f64,
) -> Option<f64> {
    let (amin, amax) = p.asymptotic_slopes;
    if alpha < amin - DOMAIN_TOL || alpha > amax + DOMAIN_TOL {
        return None;
    }
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for (i, (&q, &v)) in p.q_grid.iter().zip(&p.values).enumerate() {
        let g = v - q * alpha;
        if g < best {
            best = g;
            best_i = i;
        }
    }
    let lo = p.q_grid[best_i.saturating_sub(1)];
    let hi = p.q_grid[(best_i + 1).min(p.q_grid.len() - 1)];
    let refined = -pressure::golden_max(lo, hi, |q| -(pressure_eval(q) - q * alpha));
    Some(best.min(refined))
}

/// Entropy spectrum of the system on `alpha_grid` via Legendre duality.
pub fn spectrum(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    alpha_grid: &[f64],
) -> Result<SpectrumCurve> {
    let curve = PressureCurve::compute(sys, c, pressure::linspace(-50.0, 50.0, 1001))?;
    spectrum_with(sys, c, &curve, alpha_grid)
}

/// As [`spectrum`] but reusing a precomputed pressure curve.
pub fn spectrum_with(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    curve: &PressureCurve,
    alpha_grid: &[f64],
) -> Result<SpectrumCurve> {
    let (amin, amax) = curve.asymptotic_slopes;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for &a in alpha_grid {
        if let Some(h) = lf_transform_with(curve, |q| pressure_full(sys, c, q), a) {
            grid.push(a);
            // endpoint values can round to tiny negatives
            values.push(h.max(0.0));
        }
    }
    if grid.is_empty() {
        return Err(SpectraError::GridOutsideDomain { lo: amin, hi: amax });
    }
    let sc = SpectrumCurve {
        alpha_grid: grid,
        values,
        domain: (amin, amax),
    };
    sc.check_invariants(pressure_full(sys, c, 0.0))?;
    Ok(sc)
}

fn pressure_full(sys: &SymbolicSystem, c: &CenterCocycle, q: f64) -> f64 {
    pressure::pressure_full(sys, c, q).unwrap_or(f64::NAN)
}

/// Independent counting oracle: (1/n) log of the number of admissible
/// n-words with finite-time exponent within `window` of `alpha`. Exact
/// integer DP for depth-1 cocycles; enumeration (budgeted) otherwise.
pub fn spectrum_brute_force(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    alpha: f64,
    window: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(SpectraError::DegenerateLength);
    }
    if c.depth() == 1 {
        let lattice = WordLattice::build(
            sys,
            c,
            n,
            WindowConstraint::Final {
                alpha,
                half_width: window,
            },
        )?;
        if num_traits::Zero::is_zero(lattice.total()) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lattice.rate())
    } else {
        let words = enumerate_words(sys, n, None)?;
        let count = words
            .iter()
            .filter(|w| {
                finite_time_exponent(sys, w, c, BoundaryMode::Truncated)
                    .map(|e| (e - alpha).abs() <= window + 1e-9)
                    .unwrap_or(false)
            })
            .count();
        if count == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok((count as f64).ln() / n as f64)
    }
}

/// Closed-form Bernoulli (Besicovitch-Eggleston) spectrum for full shifts
/// with depth-1 potentials: the max-entropy product measure with mean
/// exponent `alpha`. For two symbols the tilt parameter is explicit; for
/// more, it is found by Newton's method on the Gibbs mean.
pub fn bernoulli_spectrum_oracle(phi: &[f64], alpha: f64) -> Option<f64> {
    let lo = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if alpha < lo - DOMAIN_TOL || alpha > hi + DOMAIN_TOL {
        return None;
    }
    if hi - lo < 1e-15 {
        return Some((phi.len() as f64).ln());
    }
    if alpha <= lo {
        return Some(entropy_of_counts(phi, lo));
    }
    if alpha >= hi {
        return Some(entropy_of_counts(phi, hi));
    }
    if phi.len() == 2 {
        let p = (phi[1] - alpha) / (phi[1] - phi[0]);
        return Some(-p * p.ln() - (1.0 - p) * (1.0 - p).ln());
    }
    // Newton on q: mean of the Gibbs weights e^{q phi_i} equals alpha
    let mut q = 0.0f64;
    for _ in 0..200 {
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for &f in phi {
            let w = (q * f).exp();
            z += w;
            m1 += w * f;
            m2 += w * f * f;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        let step = (alpha - mean) / var.max(1e-300);
        q += step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    let z: f64 = phi.iter().map(|&f| (q * f).exp()).sum();
    Some(z.ln() - q * alpha)
}

fn entropy_of_counts(phi: &[f64], extreme: f64) -> f64 {
    // uniform measure on the symbols attaining the extreme value
    let c = phi.iter().filter(|&&f| (f - extreme).abs() < 1e-12).count();
    (c as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const LOG2: f64 = std::f64::consts::LN_2;

    fn reference() -> (SymbolicSystem, CenterCocycle, PressureCurve) {
        let sys = SymbolicSystem::full_shift(2).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[(0.25f64).ln(), 2f64.ln()]).unwrap();
        let curve =
            PressureCurve::compute(&sys, &c, pressure::linspace(-50.0, 50.0, 1001)).unwrap();
        (sys, c, curve)
    }

    #[test]
    fn lf_values() {
        let (sys, c, curve) = reference();
        let h0 = lf_transform_with(&curve, |q| pressure_full(&sys, &c, q), 0.0).unwrap();
        assert_abs_diff_eq!(h0, 3f64.ln() - 2.0 / 3.0 * LOG2, epsilon = 1e-9);
        let h_end = lf_transform_with(&curve, |q| pressure_full(&sys, &c, q), LOG2).unwrap();
        assert!(h_end.abs() < 1e-6, "endpoint value {h_end}");
        assert!(lf_transform(&curve, LOG2 + 0.1).is_none());
    }

    #[test]
    fn spectrum_matches_bernoulli_oracle() {
        let (sys, c, curve) = reference();
        let phi = [(0.25f64).ln(), LOG2];
        let grid = pressure::linspace(phi[0], phi[1], 101);
        let sc = spectrum_with(&sys, &c, &curve, &grid).unwrap();
        assert_eq!(sc.alpha_grid.len(), 101);
        for (&a, &h) in sc.alpha_grid.iter().zip(&sc.values) {
            let oracle = bernoulli_spectrum_oracle(&phi, a).unwrap();
            assert!((h - oracle).abs() <= 1e-4, "alpha={a}: {h} vs {oracle}");
        }
        // E4
        let max = sc.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(max, LOG2, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_model_symmetry() {
        let sys = SymbolicSystem::full_shift(2).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[-LOG2, LOG2]).unwrap();
        let grid = pressure::linspace(-LOG2, LOG2, 41);
        let sc = spectrum(&sys, &c, &grid).unwrap();
        let n = sc.values.len();
        for i in 0..n {
            assert_abs_diff_eq!(sc.values[i], sc.values[n - 1 - i], epsilon = 1e-7);
        }
        assert_abs_diff_eq!(sc.value_near(0.0).unwrap(), LOG2, epsilon = 1e-8);
    }

    #[test]
    fn constant_cocycle_point_domain() {
        let sys = SymbolicSystem::full_shift(3).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[0.7, 0.7, 0.7]).unwrap();
        let sc = spectrum(&sys, &c, &[0.7]).unwrap();
        assert_abs_diff_eq!(sc.values[0], 3f64.ln(), epsilon = 1e-7);
        let err = spectrum(&sys, &c, &[0.0]).unwrap_err();
        assert!(matches!(err, SpectraError::GridOutsideDomain { .. }));
    }

    #[test]
    fn one_sided_limits() {
        let (sys, c, curve) = reference();
        let grid = pressure::linspace((0.25f64).ln(), LOG2, 401);
        let sc = spectrum_with(&sys, &c, &curve, &grid).unwrap();
        let (hm, hp) = sc.one_sided_limits_at_zero();
        let step = grid[1] - grid[0];
        let lip = 20.0; // generous slope bound near 0 for this model
        assert!((hm.unwrap() - hp.unwrap()).abs() <= 2.0 * step * lip);
        let h0 = 3f64.ln() - 2.0 / 3.0 * LOG2;
        assert!((hm.unwrap() - h0).abs() < 0.02);
    }

    #[test]
    fn brute_force_dp_oracle() {
        let (sys, c, _) = reference();
        let h0 = 3f64.ln() - 2.0 / 3.0 * LOG2;
        let rate = spectrum_brute_force(&sys, &c, 0.0, 0.05, 200).unwrap();
        assert!((rate - h0).abs() < 0.06, "rate {rate} vs {h0}");
        // single-word cases
        let r = spectrum_brute_force(&sys, &c, LOG2, 0.0, 37).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        let r = spectrum_brute_force(&sys, &c, (0.25f64).ln(), 0.0, 37).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_matches_enumeration_for_depth2() {
        // depth-2 cocycle goes down the enumeration path
        let sys = SymbolicSystem::full_shift(2).unwrap();
        let mut vals = std::collections::BTreeMap::new();
        for (w, v) in [("00", -1.0), ("01", 0.5), ("10", 0.5), ("11", 1.0)] {
            vals.insert(crate::symbolic::Word::parse(w).unwrap(), v);
        }
        let c = CenterCocycle::new(&sys, 2, &vals).unwrap();
        let r = spectrum_brute_force(&sys, &c, 0.5, 0.1, 10).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn oracle_three_symbols() {
        // k=3 Newton path: symmetric phi, alpha=0 -> uniform, H=log3
        let phi = [-1.0, 0.0, 1.0];
        let h = bernoulli_spectrum_oracle(&phi, 0.0).unwrap();
        assert_abs_diff_eq!(h, 3f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(bernoulli_spectrum_oracle(&phi, 1.0).unwrap(), 0.0);
        assert!(bernoulli_spectrum_oracle(&phi, 1.5).is_none());
    }
}
