//! Entropy rate estimation from exact separated/spanning counts.
//!
//! In the symbolic metric two points are (n, 2^{-j})-separated exactly when
//! their (n+j)-prefixes differ, so separated and spanning counts coincide
//! with the number of distinct (n+j)-prefixes and all counting is exact.
//! Rates are recovered by least-squares regression of log-count against n.

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeSet;

use crate::dp::{ln_biguint, WordLattice};
use crate::error::{Result, SpectraError};
use crate::symbolic::{Resolution, Word};

/// Word set the estimator counts over. Large families are handled through
/// a counting lattice or precomputed log-counts instead of explicit lists.
pub enum Support<'a> {
    Words(&'a [Word]),
    Lattice(&'a WordLattice),
    /// (depth, ln separated count) pairs, e.g. from an implicit tower.
    /// Must be sorted by depth (lookups binary-search the slice).
    LnCounts(&'a [(usize, f64)]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Separated,
    Spanning,
    CoverCost,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyEstimate {
    pub rate: f64,
    pub n_lo: usize,
    pub n_hi: usize,
    pub resolution: usize,
    pub method: Method,
    /// RMS of the regression residuals.
    pub residual: f64,
}

/// Exact log of the (n, 2^{-j}) separated count = distinct (n+j)-prefix
/// count of the support.
pub fn ln_separated_count(sup: &Support, n: usize, res: Resolution) -> Result<f64> {
    let depth = n + res.depth_j;
    match sup {
        Support::Words(words) => {
            if words.is_empty() {
                return Err(SpectraError::EmptySupport);
            }
            if words.iter().any(|w| w.0.len() < depth) {
                return Err(SpectraError::RangeTooLong {
                    lo: depth,
                    hi: depth,
                    len: words.iter().map(|w| w.0.len()).min().unwrap_or(0),
                });
            }
            let prefixes: BTreeSet<&[u8]> =
                words.iter().map(|w| &w.0[..depth]).collect();
            Ok((prefixes.len() as f64).ln())
        }
        Support::Lattice(l) => {
            if l.total().is_zero() {
                return Err(SpectraError::EmptySupport);
            }
            if depth > l.word_len() {
                return Err(SpectraError::RangeTooLong {
                    lo: depth,
                    hi: depth,
                    len: l.word_len(),
                });
            }
            Ok(ln_biguint(&l.distinct_prefixes(depth)))
        }
        Support::LnCounts(pairs) => {
            debug_assert!(pairs.is_sorted_by_key(|&(d, _)| d));
            pairs
                .binary_search_by_key(&depth, |&(d, _)| d)
                .map(|i| pairs[i].1)
                .map_err(|_| SpectraError::RangeTooLong {
                    lo: depth,
                    hi: depth,
                    len: pairs.last().map_or(0, |&(d, _)| d),
                })
        }
    }
}

/// Least-squares slope and residual RMS of y against x.
fn regress(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    (slope, (rss / n).sqrt())
}

/// Entropy rate of the support: least-squares slope of the exact
/// log separated count over `n` in `[n_lo, n_hi]`.
///
/// Separated, spanning, and cylinder-cover counts coincide in the symbolic
/// metric, so the method only labels the report.
pub fn estimate_entropy(
    sup: &Support,
    n_range: (usize, usize),
    res: Resolution,
    method: Method,
) -> Result<EntropyEstimate> {
    let (n_lo, n_hi) = n_range;
    if n_lo >= n_hi {
        return Err(SpectraError::Config(format!(
            "entropy range [{n_lo}, {n_hi}] needs at least two depths"
        )));
    }
    let xs: Vec<f64> = (n_lo..=n_hi).map(|n| n as f64).collect();
    let ys = (n_lo..=n_hi)
        .map(|n| ln_separated_count(sup, n, res))
        .collect::<Result<Vec<f64>>>()?;
    let (rate, residual) = regress(&xs, &ys);
    Ok(EntropyEstimate {
        rate,
        n_lo,
        n_hi,
        resolution: res.depth_j,
        method,
        residual,
    })
}

/// Lower/upper capacity proxies: minimum and maximum regression slope over
/// sliding sub-windows of the range. The lower value never exceeds the
/// upper one.
pub fn capacitive_entropies(
    sup: &Support,
    n_range: (usize, usize),
    res: Resolution,
) -> Result<(f64, f64)> {
    let (n_lo, n_hi) = n_range;
    if n_lo >= n_hi {
        return Err(SpectraError::Config(format!(
            "entropy range [{n_lo}, {n_hi}] needs at least two depths"
        )));
    }
    let ys = (n_lo..=n_hi)
        .map(|n| ln_separated_count(sup, n, res))
        .collect::<Result<Vec<f64>>>()?;
    let len = ys.len();
    let width = (len / 4).max(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for start in 0..=(len - width) {
        let xs: Vec<f64> = (start..start + width)
            .map(|i| (n_lo + i) as f64)
            .collect();
        let (slope, _) = regress(&xs, &ys[start..start + width]);
        lo = lo.min(slope);
        hi = hi.max(slope);
    }
    Ok((lo, hi))
}

/// Exact admissible-word counts of a k-state transition matrix up to
/// length `n_max`, as log values; a small independent oracle for tests and
/// property checks. Counts use unsigned 128-bit arithmetic and error on
/// overflow.
pub fn matrix_ln_counts(transitions: &[Vec<bool>], n_max: usize) -> Result<Vec<(usize, f64)>> {
    let k = transitions.len();
    let mut v: Vec<u128> = vec![1; k];
    let mut out = Vec::with_capacity(n_max);
    let total: u128 = v.iter().sum();
    out.push((1usize, (total as f64).ln()));
    for n in 2..=n_max {
        let mut next = vec![0u128; k];
        for a in 0..k {
            for (b, next_b) in next.iter_mut().enumerate() {
                if transitions[a][b] {
                    *next_b = next_b.checked_add(v[a]).ok_or_else(|| {
                        SpectraError::Unsupported("count overflow".into())
                    })?;
                }
            }
        }
        v = next;
        let total: u128 = v.iter().sum();
        if total == 0 {
            return Err(SpectraError::EmptySupport);
        }
        out.push((n, (total as f64).ln()));
    }
    Ok(out)
}

/// Exact count of admissible words of length `n` for a transition matrix,
/// arbitrary precision.
pub fn matrix_count(transitions: &[Vec<bool>], n: usize) -> BigUint {
    let k = transitions.len();
    let mut v: Vec<BigUint> = vec![BigUint::from(1u32); k];
    for _ in 1..n {
        let mut next = vec![BigUint::zero(); k];
        for a in 0..k {
            for (b, next_b) in next.iter_mut().enumerate() {
                if transitions[a][b] {
                    *next_b += &v[a];
                }
            }
        }
        v = next;
    }
    v.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::WindowConstraint;
    use crate::symbolic::{CenterCocycle, SymbolicSystem};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn full_shift_lattice(m: usize) -> WordLattice {
        let sys = SymbolicSystem::full_shift(2).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[0.25f64.ln(), 2f64.ln()]).unwrap();
        WordLattice::build(&sys, &c, m, WindowConstraint::Unconstrained).unwrap()
    }

    #[test]
    fn full_shift_rate_is_log_two() {
        let l = full_shift_lattice(70);
        let est = estimate_entropy(
            &Support::Lattice(&l),
            (10, 60),
            Resolution::new(0),
            Method::Separated,
        )
        .unwrap();
        assert_abs_diff_eq!(est.rate, 2f64.ln(), epsilon = 1e-12);
        assert!(est.residual < 1e-12);
    }

    #[test]
    fn fixed_word_rate_is_zero() {
        let words = vec![Word(vec![0u8; 80])];
        let est = estimate_entropy(
            &Support::Words(&words),
            (5, 60),
            Resolution::new(1),
            Method::Separated,
        )
        .unwrap();
        assert_abs_diff_eq!(est.rate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn golden_mean_rate_matches_golden_ratio() {
        let sys = SymbolicSystem::from_forbidden(2, &[Word(vec![1, 1])]).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[0.0, 1.0]).unwrap();
        let l = WordLattice::build(&sys, &c, 70, WindowConstraint::Unconstrained).unwrap();
        let est = estimate_entropy(
            &Support::Lattice(&l),
            (20, 60),
            Resolution::new(0),
            Method::Separated,
        )
        .unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((est.rate - phi.ln()).abs() < 1e-3);
    }

    #[test]
    fn spanning_not_above_separated() {
        let l = full_shift_lattice(40);
        let sep = estimate_entropy(
            &Support::Lattice(&l),
            (5, 30),
            Resolution::new(2),
            Method::Separated,
        )
        .unwrap();
        let span = estimate_entropy(
            &Support::Lattice(&l),
            (5, 30),
            Resolution::new(2),
            Method::Spanning,
        )
        .unwrap();
        assert!(span.rate <= sep.rate + sep.residual + span.residual + 1e-12);
    }

    #[test]
    fn capacitive_bounds_order_and_selfsimilar_collapse() {
        let l = full_shift_lattice(50);
        let (lo, hi) =
            capacitive_entropies(&Support::Lattice(&l), (5, 40), Resolution::new(0))
                .unwrap();
        assert!(lo <= hi);
        assert_abs_diff_eq!(lo, 2f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn two_point_set_has_zero_capacity() {
        let mut a = vec![0u8; 60];
        let b = vec![1u8; 60];
        a[0] = 0;
        let words = vec![Word(a), Word(b)];
        let (lo, hi) =
            capacitive_entropies(&Support::Words(&words), (2, 50), Resolution::new(0))
                .unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn range_past_stored_length_errors() {
        let words = vec![Word(vec![0, 1, 0, 1])];
        let err = estimate_entropy(
            &Support::Words(&words),
            (2, 10),
            Resolution::new(0),
            Method::Separated,
        )
        .unwrap_err();
        assert!(matches!(err, SpectraError::RangeTooLong { .. }));
    }

    #[test]
    fn cover_cost_monotone_in_resolution() {
        // coarser resolution never costs more than finer on the same set
        let sys = SymbolicSystem::from_forbidden(2, &[Word(vec![1, 1])]).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[0.0, 1.0]).unwrap();
        let l = WordLattice::build(&sys, &c, 30, WindowConstraint::Unconstrained).unwrap();
        for n in 2..20 {
            let coarse =
                ln_separated_count(&Support::Lattice(&l), n, Resolution::new(1)).unwrap();
            let fine =
                ln_separated_count(&Support::Lattice(&l), n, Resolution::new(4)).unwrap();
            assert!(coarse <= fine + 1e-12);
        }
    }

    /// Random k-state transition matrix in which every row has at least
    /// one outgoing edge.
    fn arb_transitions(k: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
        proptest::collection::vec(
            (proptest::collection::vec(any::<bool>(), k), 0..k),
            k,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(mut row, forced)| {
                    row[forced] = true;
                    row
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        /// Removing edges never raises the estimated rate beyond the
        /// regression tolerance, and never raises any exact count.
        #[test]
        fn subset_monotonicity(
            t in arb_transitions(3),
            drop_row in 0usize..3,
            drop_col in 0usize..3,
        ) {
            let mut sub = t.clone();
            sub[drop_row][drop_col] = false;
            if sub[drop_row].iter().all(|&b| !b) {
                // keep every row alive so the sub-shift is nonempty
                sub[drop_row][drop_col] = true;
            }
            let super_counts = matrix_ln_counts(&t, 60).unwrap();
            let sub_counts = matrix_ln_counts(&sub, 60).unwrap();
            for (s, p) in sub_counts.iter().zip(&super_counts) {
                prop_assert!(s.1 <= p.1 + 1e-12);
            }
            let res = Resolution::new(0);
            let es = estimate_entropy(
                &Support::LnCounts(&super_counts), (20, 60), res, Method::Separated,
            ).unwrap();
            let eb = estimate_entropy(
                &Support::LnCounts(&sub_counts), (20, 60), res, Method::Separated,
            ).unwrap();
            prop_assert!(eb.rate <= es.rate + es.residual + eb.residual + 1e-9);
        }

        /// A disjoint union with a relabeled copy of itself doubles every
        /// count, so the estimated rate is unchanged (countable stability).
        #[test]
        fn countable_stability_on_disjoint_doubling(t in arb_transitions(3)) {
            let counts = matrix_ln_counts(&t, 60).unwrap();
            let doubled: Vec<(usize, f64)> = counts
                .iter()
                .map(|&(n, v)| (n, v + 2f64.ln()))
                .collect();
            let res = Resolution::new(0);
            let a = estimate_entropy(
                &Support::LnCounts(&counts), (20, 60), res, Method::Separated,
            ).unwrap();
            let b = estimate_entropy(
                &Support::LnCounts(&doubled), (20, 60), res, Method::Separated,
            ).unwrap();
            prop_assert!((a.rate - b.rate).abs() < 1e-9);
        }

        /// Changing the resolution shifts every count by a bounded prefix
        /// extension, leaving the fitted rate stable.
        #[test]
        fn resolution_stability(t in arb_transitions(3), j in 1usize..4) {
            let counts = matrix_ln_counts(&t, 70).unwrap();
            let res0 = Resolution::new(0);
            let at = |jj: usize| {
                let shifted: Vec<(usize, f64)> = counts
                    .iter()
                    .filter(|&&(n, _)| n > jj)
                    .map(|&(n, v)| (n - jj, v))
                    .collect();
                estimate_entropy(
                    &Support::LnCounts(&shifted), (20, 60), res0, Method::Separated,
                ).unwrap()
            };
            let base = at(0);
            let fine = at(j);
            let tol = 2.0 * (base.residual + fine.residual) + 1e-6;
            prop_assert!((base.rate - fine.rate).abs() <= tol);
        }
    }
}
