//! Pre-skeleton extraction: separated word sets whose every prefix
//! satisfies an exponent window, with certified cardinality rates.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::dp::{ln_biguint, WindowConstraint, WordLattice};
use crate::error::{Result, SpectraError};
use crate::symbolic::{
    birkhoff_sum, enumerate_words, BoundaryMode, CenterCocycle, Resolution, SymbolicSystem, Word,
};

/// Materialization threshold for extracted word sets.
const MATERIALIZE_CAP: u64 = 1 << 16;

/// The extracted word family: explicit for small sets, lattice-backed for
/// sets too large to list.
#[derive(Debug)]
pub enum FamilyWords {
    Materialized(Vec<Word>),
    Implicit(WordLattice),
}

impl FamilyWords {
    pub fn cardinality(&self) -> BigUint {
        match self {
            FamilyWords::Materialized(v) => BigUint::from(v.len()),
            FamilyWords::Implicit(l) => l.total().clone(),
        }
    }

    /// The i-th word in lexicographic order.
    pub fn member(&self, i: &BigUint) -> Option<Word> {
        match self {
            FamilyWords::Materialized(v) => i.to_usize().and_then(|i| v.get(i).cloned()),
            FamilyWords::Implicit(l) => l.unrank(i),
        }
    }

    /// Lexicographic rank of an exact member word, if present.
    pub fn rank_of(&self, w: &Word) -> Option<BigUint> {
        match self {
            FamilyWords::Materialized(v) => v
                .iter()
                .position(|x| x.0 == w.0)
                .map(BigUint::from),
            FamilyWords::Implicit(l) => {
                if w.0.len() != l.word_len() {
                    return None;
                }
                let (lo, hi) = l.rank_range(&w.0);
                if hi == &lo + BigUint::one() {
                    Some(lo)
                } else {
                    None
                }
            }
        }
    }

    /// Ceiling of log(max prefix-class size) at the given depth; used for
    /// worst-case mass bounds.
    pub fn max_prefix_class(&self, n: usize) -> BigUint {
        match self {
            FamilyWords::Materialized(v) => {
                let mut classes: std::collections::BTreeMap<&[u8], u64> = Default::default();
                for w in v {
                    if w.0.len() >= n {
                        *classes.entry(&w.0[..n]).or_insert(0) += 1;
                    }
                }
                BigUint::from(classes.values().copied().max().unwrap_or(0))
            }
            FamilyWords::Implicit(l) => l.max_prefix_class_count(n),
        }
    }

    /// Exact number of members extending `prefix`.
    pub fn prefix_count(&self, prefix: &[u8]) -> BigUint {
        match self {
            FamilyWords::Materialized(v) => BigUint::from(
                v.iter()
                    .filter(|w| w.0.len() >= prefix.len() && &w.0[..prefix.len()] == prefix)
                    .count(),
            ),
            FamilyWords::Implicit(l) => l.count_with_prefix(prefix),
        }
    }
}

/// An (m, 2^{-j})-separated word set with a certified prefix-exponent
/// window and cardinality rate.
#[derive(Debug)]
pub struct Skeleton {
    pub alpha: f64,
    pub eps_e: f64,
    pub eps_h: f64,
    pub log_k0: f64,
    pub m: usize,
    pub resolution: Resolution,
    pub words: FamilyWords,
    pub cardinality: BigUint,
    /// (1/m) log cardinality.
    pub certified_rate: f64,
    /// certified_rate >= h_target - eps_h.
    pub success: bool,
}

/// Extracts the set of ALL admissible m-words satisfying
/// |S_l phi - l*alpha| <= log K0 + l*eps_e for every prefix length l,
/// thinned to distinct (m+j)-prefix classes.
///
/// `log_k0 = None` uses the default log K0 = depth * max|phi|, the minimal
/// constant that never rejects the first `depth` steps.
#[allow(clippy::too_many_arguments)]
pub fn extract_preskeleton(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    alpha: f64,
    eps_e: f64,
    eps_h: f64,
    h_target: f64,
    m: usize,
    res: Resolution,
    log_k0: Option<f64>,
) -> Result<Skeleton> {
    if m == 0 {
        return Err(SpectraError::DegenerateLength);
    }
    let log_k0 = log_k0.unwrap_or(c.depth() as f64 * c.max_abs());
    let words = if c.depth() == 1 {
        let lattice = WordLattice::build(
            sys,
            c,
            m,
            WindowConstraint::Prefix {
                alpha,
                eps_e,
                log_k0,
            },
        )?;
        if lattice.total() <= &BigUint::from(MATERIALIZE_CAP) {
            FamilyWords::Materialized(lattice.materialize(MATERIALIZE_CAP)?)
        } else {
            FamilyWords::Implicit(lattice)
        }
    } else {
        let all = enumerate_words(sys, m, None)?;
        let kept: Vec<Word> = all
            .into_iter()
            .filter(|w| prefix_window_holds(sys, c, w, alpha, eps_e, log_k0))
            .collect();
        FamilyWords::Materialized(kept)
    };

    // Distinct m-words with m <= m + j always differ inside the first m
    // symbols, so the separation thinning keeps everything; the class
    // count is computed anyway as the certified cardinality.
    let cardinality = match &words {
        FamilyWords::Materialized(v) => BigUint::from(v.len()),
        FamilyWords::Implicit(l) => l.distinct_prefixes(m.min(m + res.depth_j)),
    };
    if cardinality.is_zero() {
        let suggested = minimal_log_k0(sys, c, alpha, eps_e, m)?;
        return Err(SpectraError::EmptyWindow {
            alpha,
            k0: log_k0.exp(),
            suggested: suggested.exp(),
        });
    }
    let certified_rate = ln_biguint(&cardinality) / m as f64;
    let skel = Skeleton {
        alpha,
        eps_e,
        eps_h,
        log_k0,
        m,
        resolution: res,
        words,
        cardinality: cardinality.clone(),
        certified_rate,
        success: certified_rate >= h_target - eps_h,
    };
    skel.verify(sys, c)?;
    Ok(skel)
}

/// Smallest log K0 for which the prefix window admits at least one word,
/// by tracking the reachable deviation minima level by level.
fn minimal_log_k0(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    alpha: f64,
    eps_e: f64,
    m: usize,
) -> Result<f64> {
    if c.depth() != 1 {
        // conservative bound from the first `depth` steps
        return Ok(c.depth() as f64 * (c.max_abs() + alpha.abs()));
    }
    let phi = c.symbol_values().unwrap();
    let k = sys.alphabet_size();
    // needed(state) = max over prefix lengths so far of |S_l - l*alpha| - l*eps_e
    let mut states: Vec<Vec<f64>> = vec![vec![f64::INFINITY; k]];
    let mut frontier: std::collections::BTreeMap<(usize, i64), f64> = Default::default();
    // deviation depends on the running sum only; quantize sums to dedup
    let quant = |x: f64| (x * 1e9).round() as i64;
    for s in 0..k {
        let sum = phi[s];
        let need = (sum - alpha).abs() - eps_e;
        frontier.insert((s, quant(sum)), need);
    }
    states.clear();
    let mut best = f64::INFINITY;
    for l in 2..=m.min(200) {
        let mut next: std::collections::BTreeMap<(usize, i64), f64> = Default::default();
        for (&(last, qsum), &need) in &frontier {
            let sum = qsum as f64 / 1e9;
            for s in 0..k {
                if !sys.allowed(last as u8, s as u8) {
                    continue;
                }
                let nsum = sum + phi[s];
                let nneed = need.max((nsum - l as f64 * alpha).abs() - l as f64 * eps_e);
                let key = (s, quant(nsum));
                let e = next.entry(key).or_insert(f64::INFINITY);
                if nneed < *e {
                    *e = nneed;
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    for &need in frontier.values() {
        best = best.min(need);
    }
    Ok(best.max(0.0))
}

fn prefix_window_holds(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    w: &Word,
    alpha: f64,
    eps_e: f64,
    log_k0: f64,
) -> bool {
    const SLACK: f64 = 1e-9;
    for l in 1..=w.0.len() {
        let s = match birkhoff_sum(sys, &Word(w.0[..l].to_vec()), c, BoundaryMode::Truncated) {
            Ok(s) => s,
            Err(_) => return false,
        };
        if (s - l as f64 * alpha).abs() > log_k0 + l as f64 * eps_e + SLACK {
            return false;
        }
    }
    true
}

impl Skeleton {
    /// Independent re-verification of both invariants: the prefix window on
    /// every word (or a strided sample of an implicit family) and pairwise
    /// separation via distinct-prefix counting.
    pub fn verify(&self, sys: &SymbolicSystem, c: &CenterCocycle) -> Result<()> {
        const SAMPLE: u64 = 500;
        let card = self.words.cardinality();
        let check = |w: &Word| -> Result<()> {
            if !prefix_window_holds(sys, c, w, self.alpha, self.eps_e, self.log_k0) {
                return Err(SpectraError::Config(format!(
                    "skeleton window violated by {w}"
                )));
            }
            sys.check_admissible(&w.0)?;
            Ok(())
        };
        match &self.words {
            FamilyWords::Materialized(v) => {
                for w in v {
                    check(w)?;
                }
                // separation: distinct (m+j)-prefixes, i.e. distinct words here
                let mut seen = std::collections::BTreeSet::new();
                for w in v {
                    if !seen.insert(&w.0) {
                        return Err(SpectraError::Config("duplicate skeleton word".into()));
                    }
                }
            }
            FamilyWords::Implicit(l) => {
                let step = (&card / BigUint::from(SAMPLE)).max(BigUint::one());
                let mut i = BigUint::zero();
                let mut prev: Option<Word> = None;
                while i < card {
                    let w = l.unrank(&i).ok_or_else(|| {
                        SpectraError::Config("unrank failed during verification".into())
                    })?;
                    check(&w)?;
                    // unrank is strictly increasing in lex order: separation
                    if let Some(p) = &prev {
                        if p.0 >= w.0 {
                            return Err(SpectraError::Config(
                                "lex order violated in implicit family".into(),
                            ));
                        }
                    }
                    prev = Some(w);
                    i += &step;
                }
            }
        }
        Ok(())
    }
}

/// Runs extraction at each length in `m_list` and reports the rates.
#[allow(clippy::too_many_arguments)]
pub fn skeleton_rate_curve(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    alpha: f64,
    eps_e: f64,
    log_k0: Option<f64>,
    m_list: &[usize],
    res: Resolution,
) -> Result<Vec<(usize, f64)>> {
    m_list
        .iter()
        .map(|&m| {
            extract_preskeleton(sys, c, alpha, eps_e, f64::INFINITY, 0.0, m, res, log_k0)
                .map(|s| (m, s.certified_rate))
        })
        .collect()
}

/// A fixed-size arithmetic-progression subfamily of a skeleton, in lex
/// order: member i is the (i*step)-th word. Supports the same exact
/// prefix counting as the full family, so astronomically large families
/// stay implicit.
pub struct StridedFamily<'a> {
    pub family: &'a FamilyWords,
    pub step: BigUint,
    pub size: BigUint,
}

impl<'a> StridedFamily<'a> {
    /// Largest stride keeping at least `target` members; falls back to the
    /// whole family when it is smaller than the target.
    pub fn thin(family: &'a FamilyWords, target: &BigUint) -> Self {
        let card = family.cardinality();
        if &card <= target || target.is_zero() {
            return StridedFamily {
                family,
                step: BigUint::one(),
                size: card,
            };
        }
        let step = &card / target;
        let size = (&card + &step - BigUint::one()) / &step; // ceil(card/step) >= target
        StridedFamily { family, step, size }
    }

    pub fn member(&self, i: &BigUint) -> Option<Word> {
        if i >= &self.size {
            return None;
        }
        self.family.member(&(i * &self.step))
    }

    /// Exact count of members whose word extends `prefix`: the lex ranks
    /// extending a prefix form an interval, intersected with the stride.
    pub fn prefix_count(&self, prefix: &[u8]) -> BigUint {
        match self.family {
            FamilyWords::Materialized(v) => {
                let mut n = BigUint::zero();
                let mut i = BigUint::zero();
                while i < self.size {
                    let idx = (&i * &self.step).to_usize().unwrap();
                    let w = &v[idx];
                    if w.0.len() >= prefix.len() && &w.0[..prefix.len()] == prefix {
                        n += 1u32;
                    }
                    i += 1u32;
                }
                n
            }
            FamilyWords::Implicit(l) => {
                let (lo, hi) = l.rank_range(prefix);
                if hi <= lo {
                    return BigUint::zero();
                }
                // strided ranks in [lo, hi): ceil(lo/step) .. ceil(hi/step),
                // clipped to [0, size)
                let first = (&lo + &self.step - BigUint::one()) / &self.step;
                let last = (&hi + &self.step - BigUint::one()) / &self.step;
                let last = last.min(self.size.clone());
                if last <= first {
                    BigUint::zero()
                } else {
                    last - first
                }
            }
        }
    }
}
