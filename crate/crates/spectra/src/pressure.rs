//! Pressure functions of q*phi over the symbolic system.
//!
//! The full pressure is the log spectral radius of the weighted transfer
//! matrix; the sign-restricted pressures go through the entropy spectrum
//! (one-dimensional concave maximization), mirroring Legendre duality.

use crate::error::{Result, SpectraError};
use crate::legendre;
use crate::symbolic::{CenterCocycle, Symbol, SymbolicSystem, Word};

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITERS: usize = 100_000;
/// Convexity slack for discrete second differences.
pub const CONVEXITY_TOL: f64 = 1e-9;
pub const RESTRICTED_TOL: f64 = 1e-8;

/// Which class of ergodic measures the pressure ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Restriction {
    None,
    NegativeExponent,
    PositiveExponent,
}

/// Sampled pressure curve q -> P(q) with end-slope estimates.
#[derive(Debug, Clone)]
pub struct PressureCurve {
    pub q_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// (alpha_min, alpha_max) estimated from the end slopes.
    pub asymptotic_slopes: (f64, f64),
    pub restriction: Restriction,
}

impl PressureCurve {
    /// Samples the full pressure on `q_grid` and validates convexity and
    /// P(0) = h_top when 0 is on the grid.
    pub fn compute(sys: &SymbolicSystem, c: &CenterCocycle, q_grid: Vec<f64>) -> Result<Self> {
        if q_grid.len() < 3 {
            return Err(SpectraError::Config("q grid needs at least 3 points".into()));
        }
        if q_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpectraError::Config("q grid must be strictly increasing".into()));
        }
        let values: Vec<f64> = q_grid
            .iter()
            .map(|&q| pressure_full(sys, c, q))
            .collect::<Result<_>>()?;
        let n = q_grid.len();
        let left = (values[1] - values[0]) / (q_grid[1] - q_grid[0]);
        let right = (values[n - 1] - values[n - 2]) / (q_grid[n - 1] - q_grid[n - 2]);
        let curve = PressureCurve {
            q_grid,
            values,
            asymptotic_slopes: (left, right),
            restriction: Restriction::None,
        };
        curve.check_invariants(sys)?;
        Ok(curve)
    }

    fn check_invariants(&self, sys: &SymbolicSystem) -> Result<()> {
        for i in 1..self.q_grid.len() - 1 {
            let (q0, q1, q2) = (self.q_grid[i - 1], self.q_grid[i], self.q_grid[i + 1]);
            let (p0, p1, p2) = (self.values[i - 1], self.values[i], self.values[i + 1]);
            let left = (p1 - p0) / (q1 - q0);
            let right = (p2 - p1) / (q2 - q1);
            if right - left < -CONVEXITY_TOL {
                return Err(SpectraError::Config(format!(
                    "pressure curve not convex at q = {q1}: slopes {left} > {right}"
                )));
            }
        }
        if let Some(i) = self.q_grid.iter().position(|&q| q.abs() < 1e-12) {
            let h_top = topological_entropy(sys)?;
            if (self.values[i] - h_top).abs() > 1e-8 {
                return Err(SpectraError::Config(format!(
                    "P(0) = {} does not match h_top = {h_top}",
                    self.values[i]
                )));
            }
        }
        Ok(())
    }
}

/// Uniform grid helper.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 2 && hi > lo);
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// log of the spectral radius of the 0/1 transition matrix.
pub fn topological_entropy(sys: &SymbolicSystem) -> Result<f64> {
    let zero = CenterCocycle::per_symbol(sys, &vec![0.0; sys.alphabet_size()])?;
    pressure_full(sys, &zero, 0.0)
}

/// Full variational pressure of q*phi: log spectral radius of the transfer
/// matrix indexed by d-words with entries e^{q phi(word)} on allowed
/// transitions, by power iteration to relative tolerance 1e-12.
pub fn pressure_full(sys: &SymbolicSystem, c: &CenterCocycle, q: f64) -> Result<f64> {
    let d = c.depth();
    let states = admissible_words(sys, d);
    let n = states.len();
    // transition (u -> v) allowed iff u and v overlap in d-1 symbols and the
    // joined (d+1)-word is admissible; weight e^{q phi(v)}
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (ui, u) in states.iter().enumerate() {
        for (vi, v) in states.iter().enumerate() {
            // for d >= 2 every adjacency of the joined (d+1)-word lies inside
            // u or v, so the overlap condition alone suffices
            let overlap_ok = if d == 1 {
                sys.allowed(u.0[0], v.0[0])
            } else {
                u.0[1..] == v.0[..d - 1]
            };
            if overlap_ok {
                edges[ui].push((vi, (q * c.value(&v.0)).exp()));
            }
        }
    }
    spectral_radius_log(&edges, n)
}

fn spectral_radius_log(edges: &[Vec<(usize, f64)>], n: usize) -> Result<f64> {
    let mut v = vec![1.0f64; n];
    let mut lambda_prev = f64::NAN;
    // running log of accumulated normalizations keeps entries bounded
    for _ in 0..POWER_MAX_ITERS {
        let mut next = vec![0.0f64; n];
        for (i, out) in edges.iter().enumerate() {
            for &(j, w) in out {
                next[j] += w * v[i];
            }
        }
        let norm: f64 = next.iter().fold(0.0f64, |m, &x| m.max(x));
        if norm == 0.0 || !norm.is_finite() {
            return Err(SpectraError::PowerIterationDiverged {
                max_iters: POWER_MAX_ITERS,
                tol: POWER_TOL,
            });
        }
        // Rayleigh-style estimate: ratio of weighted sums
        let num: f64 = next.iter().sum();
        let den: f64 = v.iter().sum();
        let lambda = num / den;
        for x in next.iter_mut() {
            *x /= norm;
        }
        if (lambda - lambda_prev).abs() <= POWER_TOL * lambda.abs() {
            return Ok(lambda.ln());
        }
        lambda_prev = lambda;
        v = next;
    }
    Err(SpectraError::PowerIterationDiverged {
        max_iters: POWER_MAX_ITERS,
        tol: POWER_TOL,
    })
}

fn admissible_words(sys: &SymbolicSystem, len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(len);
    fn rec(sys: &SymbolicSystem, len: usize, stack: &mut Vec<Symbol>, out: &mut Vec<Word>) {
        if stack.len() == len {
            out.push(Word(stack.clone()));
            return;
        }
        for s in 0..sys.alphabet_size() as Symbol {
            if stack.is_empty() || sys.allowed(*stack.last().unwrap(), s) {
                stack.push(s);
                rec(sys, len, stack, out);
                stack.pop();
            }
        }
    }
    rec(sys, len, &mut stack, &mut out);
    out
}

/// A stationary Markov measure compatible with the transition structure.
#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    pub matrix: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

impl MarkovMeasure {
    pub fn new(sys: &SymbolicSystem, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let k = sys.alphabet_size();
        if matrix.len() != k || matrix.iter().any(|r| r.len() != k) {
            return Err(SpectraError::Config(format!("stochastic matrix must be {k}x{k}")));
        }
        for (i, row) in matrix.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(SpectraError::Config(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    return Err(SpectraError::Config(format!("negative entry p[{i}][{j}]")));
                }
                if p > 0.0 && !sys.allowed(i as Symbol, j as Symbol) {
                    return Err(SpectraError::Config(format!(
                        "support violates transitions at ({i},{j})"
                    )));
                }
            }
        }
        let stationary = stationary_vector(&matrix)?;
        Ok(MarkovMeasure { matrix, stationary })
    }

    /// Bernoulli measure (equal rows) on a full shift.
    pub fn bernoulli(sys: &SymbolicSystem, p: &[f64]) -> Result<Self> {
        Self::new(sys, vec![p.to_vec(); sys.alphabet_size()])
    }

    /// Point mass on the fixed point of a self-looping symbol.
    pub fn dirac(sys: &SymbolicSystem, s: Symbol) -> Result<Self> {
        if !sys.allowed(s, s) {
            return Err(SpectraError::Config(format!("symbol {s} has no self-loop")));
        }
        let k = sys.alphabet_size();
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            // off-support rows route to s so the chain is well defined
            m[i][s as usize] = 1.0;
        }
        Self::new(sys, m)
    }
}

fn stationary_vector(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = matrix.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..POWER_MAX_ITERS {
        let mut next = vec![0.0f64; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * matrix[i][j];
            }
        }
        let sum: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= sum;
        }
        let delta: f64 = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    // residual check: pi must be a fixed left eigenvector
    let mut residual = 0.0f64;
    for j in 0..k {
        let image: f64 = (0..k).map(|i| pi[i] * matrix[i][j]).sum();
        residual = residual.max((image - pi[j]).abs());
    }
    if residual > 1e-12 {
        return Err(SpectraError::Config(format!(
            "stationary vector residual {residual:e} exceeds 1e-12"
        )));
    }
    Ok(pi)
}

/// Entropy rate and center exponent of a Markov measure.
///
/// chi integrates phi against stationary word probabilities; any cocycle
/// depth is handled by enumerating admissible d-words.
pub fn measure_entropy_and_exponent(
    sys: &SymbolicSystem,
    m: &MarkovMeasure,
    c: &CenterCocycle,
) -> (f64, f64) {
    let k = sys.alphabet_size();
    let mut h = 0.0;
    for i in 0..k {
        for j in 0..k {
            let p = m.matrix[i][j];
            if p > 0.0 {
                h -= m.stationary[i] * p * p.ln();
            }
        }
    }
    let d = c.depth();
    let mut chi = 0.0;
    for w in admissible_words(sys, d) {
        let mut prob = m.stationary[w.0[0] as usize];
        for pair in w.0.windows(2) {
            prob *= m.matrix[pair[0] as usize][pair[1] as usize];
        }
        if prob > 0.0 {
            chi += prob * c.value(&w.0);
        }
    }
    (h, chi)
}

/// Which strict exponent sign the restricted pressure ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentSign {
    Negative,
    Positive,
}

/// Restricted pressure P_{<0}(q) or P_{>0}(q): sup over measures with
/// exponent of the given strict sign of h + q*chi, computed through the
/// entropy spectrum on a sign-restricted alpha grid with refinement.
pub fn pressure_restricted(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    q: f64,
    sign: ExponentSign,
) -> Result<f64> {
    let curve = PressureCurve::compute(sys, c, linspace(-50.0, 50.0, 1001))?;
    pressure_restricted_with(sys, c, &curve, q, sign)
}

/// As [`pressure_restricted`] but reusing a precomputed full-pressure curve.
pub fn pressure_restricted_with(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    curve: &PressureCurve,
    q: f64,
    sign: ExponentSign,
) -> Result<f64> {
    let (alpha_min, alpha_max) = curve.asymptotic_slopes;
    match sign {
        ExponentSign::Negative if alpha_min >= 0.0 => {
            let (lo, hi) = c.value_range();
            return Err(SpectraError::EmptyRestrictionClass { min: lo, max: hi });
        }
        ExponentSign::Positive if alpha_max <= 0.0 => {
            let (lo, hi) = c.value_range();
            return Err(SpectraError::EmptyRestrictionClass { min: lo, max: hi });
        }
        _ => {}
    }
    // open-grid sampling: exclude 0 itself but approach it to 1e-6
    let (lo, hi) = match sign {
        ExponentSign::Negative => (alpha_min, (-1e-6f64).min(alpha_max)),
        ExponentSign::Positive => ((1e-6f64).max(alpha_min), alpha_max),
    };
    let eval = |alpha: f64| -> Option<f64> {
        legendre::lf_transform_with(curve, |qq| pressure_full(sys, c, qq).unwrap_or(f64::NAN), alpha)
            .map(|h| h + q * alpha)
    };
    let mut steps = 129usize;
    let mut best_prev = f64::NEG_INFINITY;
    loop {
        let grid = linspace(lo, hi, steps);
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0usize;
        for (i, &a) in grid.iter().enumerate() {
            if let Some(v) = eval(a) {
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
        }
        if best == f64::NEG_INFINITY {
            let (vlo, vhi) = c.value_range();
            return Err(SpectraError::EmptyRestrictionClass { min: vlo, max: vhi });
        }
        // golden-section refinement around the grid argmax (concave in alpha)
        let bl = grid[best_i.saturating_sub(1)];
        let bh = grid[(best_i + 1).min(grid.len() - 1)];
        let refined = golden_max(bl, bh, |a| eval(a).unwrap_or(f64::NEG_INFINITY));
        let best = best.max(refined);
        if (best - best_prev).abs() < RESTRICTED_TOL {
            return Ok(best);
        }
        best_prev = best;
        steps = steps * 2 - 1;
        if steps > 1 << 16 {
            return Ok(best);
        }
    }
}

/// Golden-section maximization of a unimodal function on [lo, hi].
pub fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut a = hi - (hi - lo) * INV_PHI;
    let mut b = lo + (hi - lo) * INV_PHI;
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..120 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + (hi - lo) * INV_PHI;
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - (hi - lo) * INV_PHI;
            fa = f(a);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    fa.max(fb)
}
