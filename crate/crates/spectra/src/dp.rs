//! Exact lattice-path counting for depth-1 cocycles.
//!
//! For a locally constant potential the Birkhoff sum of a word is a
//! function of its symbol counts, so counting words under exponent-window
//! constraints is exact integer dynamic programming over
//! (position, last symbol, count vector) states. The same table supports
//! lexicographic rank/unrank and conditional prefix counts, which lets
//! very large word families be handled implicitly.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Result, SpectraError};
use crate::symbolic::{CenterCocycle, Symbol, SymbolicSystem, Word};

/// Exponent constraint applied along the lattice.
#[derive(Debug, Clone, Copy)]
pub enum WindowConstraint {
    /// |S_l - l*alpha| <= log_k0 + l*eps_e for every prefix length l.
    Prefix { alpha: f64, eps_e: f64, log_k0: f64 },
    /// |S_m/m - alpha| <= half_width at the final length only.
    Final { alpha: f64, half_width: f64 },
    /// No exponent constraint (counts all admissible words).
    Unconstrained,
}

impl WindowConstraint {
    fn admits(&self, len: usize, total_len: usize, sum: f64) -> bool {
        // small outward slack so lattice points on the window boundary are
        // not lost to floating rounding
        const SLACK: f64 = 1e-9;
        match *self {
            WindowConstraint::Prefix { alpha, eps_e, log_k0 } => {
                let l = len as f64;
                (sum - l * alpha).abs() <= log_k0 + l * eps_e + SLACK
            }
            WindowConstraint::Final { alpha, half_width } => {
                if len < total_len {
                    true
                } else {
                    let m = total_len as f64;
                    (sum / m - alpha).abs() <= half_width + SLACK
                }
            }
            WindowConstraint::Unconstrained => true,
        }
    }
}

/// DP state: last symbol (None at the root) plus symbol counts.
type State = (Option<Symbol>, Vec<u16>);

/// Counting lattice for admissible length-`m` words of a depth-1 cocycle
/// under a [`WindowConstraint`].
///
/// Words are ordered lexicographically; `rank_range`/`unrank` use that
/// order. All counts are exact.
#[derive(Debug)]
pub struct WordLattice {
    k: usize,
    m: usize,
    phi: Vec<f64>,
    transitions: Vec<Vec<bool>>,
    constraint: WindowConstraint,
    /// suffix[l]: completions from a state at position l to a valid word.
    suffix: Vec<BTreeMap<State, BigUint>>,
    /// forward[l]: number of valid prefixes reaching a state at position l.
    forward: Vec<BTreeMap<State, BigUint>>,
    total: BigUint,
}

impl WordLattice {
    pub fn build(
        sys: &SymbolicSystem,
        c: &CenterCocycle,
        m: usize,
        constraint: WindowConstraint,
    ) -> Result<Self> {
        if m == 0 {
            return Err(SpectraError::DegenerateLength);
        }
        let phi = c
            .symbol_values()
            .ok_or_else(|| {
                SpectraError::Unsupported(
                    "lattice counting requires a depth-1 cocycle".into(),
                )
            })?
            .to_vec();
        let k = sys.alphabet_size();
        let transitions = sys.transitions().to_vec();

        // forward sweep: reachable states with valid windows at every step
        let mut forward: Vec<BTreeMap<State, BigUint>> = Vec::with_capacity(m + 1);
        let root: State = (None, vec![0u16; k]);
        let mut level0 = BTreeMap::new();
        level0.insert(root.clone(), BigUint::one());
        forward.push(level0);
        for l in 0..m {
            let mut next: BTreeMap<State, BigUint> = BTreeMap::new();
            for ((last, counts), paths) in &forward[l] {
                for s in 0..k {
                    if let Some(prev) = last {
                        if !transitions[*prev as usize][s] {
                            continue;
                        }
                    }
                    let mut nc = counts.clone();
                    nc[s] += 1;
                    let sum = dot(&nc, &phi);
                    if !constraint.admits(l + 1, m, sum) {
                        continue;
                    }
                    let key = (Some(s as Symbol), nc);
                    *next.entry(key).or_insert_with(BigUint::zero) += paths;
                }
            }
            forward.push(next);
        }

        // backward sweep: suffix completion counts over reachable states
        let mut suffix: Vec<BTreeMap<State, BigUint>> = vec![BTreeMap::new(); m + 1];
        for (st, _) in &forward[m] {
            suffix[m].insert(st.clone(), BigUint::one());
        }
        for l in (0..m).rev() {
            let mut lvl: BTreeMap<State, BigUint> = BTreeMap::new();
            for (st @ (last, counts), _) in &forward[l] {
                let mut acc = BigUint::zero();
                for s in 0..k {
                    if let Some(prev) = last {
                        if !transitions[*prev as usize][s] {
                            continue;
                        }
                    }
                    let mut nc = counts.clone();
                    nc[s] += 1;
                    let key = (Some(s as Symbol), nc);
                    if let Some(cnt) = suffix[l + 1].get(&key) {
                        acc += cnt;
                    }
                }
                if !acc.is_zero() {
                    lvl.insert(st.clone(), acc);
                }
            }
            suffix[l] = lvl;
        }
        let total = suffix[0].get(&root).cloned().unwrap_or_else(BigUint::zero);
        Ok(WordLattice {
            k,
            m,
            phi,
            transitions,
            constraint,
            suffix,
            forward,
            total,
        })
    }

    pub fn word_len(&self) -> usize {
        self.m
    }

    /// Exact number of valid words.
    pub fn total(&self) -> &BigUint {
        &self.total
    }

    /// (1/m) log(count); zero words gives -inf.
    pub fn rate(&self) -> f64 {
        if self.total.is_zero() {
            f64::NEG_INFINITY
        } else {
            ln_biguint(&self.total) / self.m as f64
        }
    }

    fn step(&self, st: &State, s: Symbol, pos: usize) -> Option<State> {
        let (last, counts) = st;
        if let Some(prev) = last {
            if !self.transitions[*prev as usize][s as usize] {
                return None;
            }
        }
        let mut nc = counts.clone();
        nc[s as usize] += 1;
        let sum = dot(&nc, &self.phi);
        if !self.constraint.admits(pos + 1, self.m, sum) {
            return None;
        }
        Some((Some(s), nc))
    }

    /// Number of valid words extending `prefix`.
    pub fn count_with_prefix(&self, prefix: &[Symbol]) -> BigUint {
        if prefix.len() > self.m {
            return BigUint::zero();
        }
        let mut st: State = (None, vec![0u16; self.k]);
        for (i, &s) in prefix.iter().enumerate() {
            match self.step(&st, s, i) {
                Some(next) => st = next,
                None => return BigUint::zero(),
            }
        }
        self.suffix[prefix.len()]
            .get(&st)
            .cloned()
            .unwrap_or_else(BigUint::zero)
    }

    /// Lexicographic rank interval [lo, lo + count) of the words starting
    /// with `prefix`. Returns zero-width interval if none do.
    pub fn rank_range(&self, prefix: &[Symbol]) -> (BigUint, BigUint) {
        let mut lo = BigUint::zero();
        let mut st: State = (None, vec![0u16; self.k]);
        for (i, &s) in prefix.iter().enumerate() {
            for smaller in 0..s {
                if let Some(branch) = self.step(&st, smaller, i) {
                    if let Some(cnt) = self.suffix[i + 1].get(&branch) {
                        lo += cnt;
                    }
                }
            }
            match self.step(&st, s, i) {
                Some(next) => st = next,
                None => return (lo.clone(), lo),
            }
        }
        let cnt = self.suffix[prefix.len()]
            .get(&st)
            .cloned()
            .unwrap_or_else(BigUint::zero);
        let hi = &lo + &cnt;
        (lo, hi)
    }

    /// The rank-`r` valid word in lexicographic order (0-based).
    pub fn unrank(&self, r: &BigUint) -> Option<Word> {
        if r >= &self.total {
            return None;
        }
        let mut rem = r.clone();
        let mut st: State = (None, vec![0u16; self.k]);
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let mut chosen = None;
            for s in 0..self.k as Symbol {
                if let Some(next) = self.step(&st, s, i) {
                    if let Some(cnt) = self.suffix[i + 1].get(&next) {
                        if &rem < cnt {
                            chosen = Some((s, next));
                            break;
                        }
                        rem -= cnt;
                    }
                }
            }
            let (s, next) = chosen?;
            out.push(s);
            st = next;
        }
        Some(Word(out))
    }

    /// Number of distinct length-`n` prefixes among valid words.
    pub fn distinct_prefixes(&self, n: usize) -> BigUint {
        if n > self.m {
            return BigUint::zero();
        }
        let mut acc = BigUint::zero();
        for (st, paths) in &self.forward[n] {
            if self.suffix[n].contains_key(st) {
                acc += paths;
            }
        }
        acc
    }

    /// Largest completion count over the reachable length-`n` prefixes,
    /// i.e. the biggest prefix class at that depth.
    pub fn max_prefix_class_count(&self, n: usize) -> BigUint {
        if n > self.m {
            return BigUint::zero();
        }
        let mut best = BigUint::zero();
        for st in self.forward[n].keys() {
            if let Some(cnt) = self.suffix[n].get(st) {
                if cnt > &best {
                    best = cnt.clone();
                }
            }
        }
        best
    }

    /// Materializes all valid words; intended for small counts.
    pub fn materialize(&self, cap: u64) -> Result<Vec<Word>> {
        let total = self
            .total
            .to_u64()
            .ok_or(SpectraError::BudgetExceeded {
                requested: ln_biguint(&self.total).exp(),
                budget: cap,
            })?;
        if total > cap {
            return Err(SpectraError::BudgetExceeded {
                requested: total as f64,
                budget: cap,
            });
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut r = BigUint::zero();
        for _ in 0..total {
            out.push(self.unrank(&r).expect("rank < total"));
            r += 1u32;
        }
        Ok(out)
    }
}

/// Natural log of a positive big integer, accurate to ~1e-15 relative.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 960 {
        return x.to_f64().expect("fits f64 range").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit mantissa");
    top.ln() + (shift as f64) * std::f64::consts::LN_2
}

fn dot(counts: &[u16], phi: &[f64]) -> f64 {
    counts
        .iter()
        .zip(phi)
        .map(|(&c, &v)| c as f64 * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{enumerate_words, finite_time_exponent, BoundaryMode};

    fn reference() -> (SymbolicSystem, CenterCocycle) {
        let sys = SymbolicSystem::full_shift(2).unwrap();
        let c = CenterCocycle::per_symbol(&sys, &[(0.25f64).ln(), 2f64.ln()]).unwrap();
        (sys, c)
    }

    #[test]
    fn unconstrained_count_matches_shift() {
        let (sys, c) = reference();
        let lat = WordLattice::build(&sys, &c, 10, WindowConstraint::Unconstrained).unwrap();
        assert_eq!(lat.total(), &BigUint::from(1024u32));
        let gm = SymbolicSystem::from_forbidden(2, &[Word::parse("11").unwrap()]).unwrap();
        let cg = CenterCocycle::per_symbol(&gm, &[0.0, 1.0]).unwrap();
        let lat = WordLattice::build(&gm, &cg, 5, WindowConstraint::Unconstrained).unwrap();
        // Fibonacci: F_7 = 13 admissible 5-words
        assert_eq!(lat.total(), &BigUint::from(13u32));
    }

    #[test]
    fn final_window_count_matches_enumeration() {
        let (sys, c) = reference();
        for n in [6, 9, 12] {
            for alpha in [-0.8, 0.0, 0.4] {
                let lat = WordLattice::build(
                    &sys,
                    &c,
                    n,
                    WindowConstraint::Final { alpha, half_width: 0.3 },
                )
                .unwrap();
                let brute = enumerate_words(&sys, n, None)
                    .unwrap()
                    .into_iter()
                    .filter(|w| {
                        let e = finite_time_exponent(&sys, w, &c, BoundaryMode::Truncated).unwrap();
                        (e - alpha).abs() <= 0.3 + 1e-9
                    })
                    .count();
                assert_eq!(lat.total(), &BigUint::from(brute), "n={n} alpha={alpha}");
            }
        }
    }

    #[test]
    fn prefix_window_count_matches_enumeration() {
        let (sys, c) = reference();
        let log_k0 = 2f64.ln();
        for m in [6, 10, 12] {
            let lat = WordLattice::build(
                &sys,
                &c,
                m,
                WindowConstraint::Prefix { alpha: 0.0, eps_e: 0.1, log_k0 },
            )
            .unwrap();
            let phi = c.symbol_values().unwrap();
            let brute = enumerate_words(&sys, m, None)
                .unwrap()
                .into_iter()
                .filter(|w| {
                    let mut sum = 0.0;
                    w.0.iter().enumerate().all(|(i, &s)| {
                        sum += phi[s as usize];
                        sum.abs() <= log_k0 + (i + 1) as f64 * 0.1 + 1e-9
                    })
                })
                .count();
            assert_eq!(lat.total(), &BigUint::from(brute), "m={m}");
        }
    }

    #[test]
    fn rank_unrank_roundtrip_lexicographic() {
        let (sys, c) = reference();
        let lat = WordLattice::build(
            &sys,
            &c,
            8,
            WindowConstraint::Final { alpha: 0.0, half_width: 0.5 },
        )
        .unwrap();
        let total = lat.total().to_u64().unwrap();
        assert!(total > 2);
        let mut prev: Option<Word> = None;
        for r in 0..total {
            let w = lat.unrank(&BigUint::from(r)).unwrap();
            if let Some(p) = &prev {
                assert!(p < &w, "lex order violated at rank {r}");
            }
            let (lo, hi) = lat.rank_range(&w.0);
            assert_eq!(lo, BigUint::from(r));
            assert_eq!(hi, BigUint::from(r + 1));
            prev = Some(w);
        }
        assert!(lat.unrank(&BigUint::from(total)).is_none());
    }

    #[test]
    fn prefix_counts_consistent() {
        let (sys, c) = reference();
        let lat = WordLattice::build(
            &sys,
            &c,
            10,
            WindowConstraint::Prefix { alpha: 0.0, eps_e: 0.2, log_k0: 1.0 },
        )
        .unwrap();
        // counts over one-symbol extensions partition each prefix count
        for prefix in [&[][..], &[0], &[1], &[0, 1]] {
            let whole = lat.count_with_prefix(prefix);
            let mut parts = BigUint::zero();
            for s in 0..2u8 {
                let mut ext = prefix.to_vec();
                ext.push(s);
                parts += lat.count_with_prefix(&ext);
            }
            assert_eq!(whole, parts);
        }
        // distinct prefixes at full length = total
        assert_eq!(lat.distinct_prefixes(10), lat.total().clone());
    }

    #[test]
    fn ln_biguint_accuracy() {
        let x = BigUint::from(12345u32);
        assert!((ln_biguint(&x) - (12345f64).ln()).abs() < 1e-12);
        let big = BigUint::from(3u32).pow(3000);
        let expect = 3000.0 * 3f64.ln();
        assert!((ln_biguint(&big) - expect).abs() / expect < 1e-12);
    }
}
