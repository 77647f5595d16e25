//! Symbolic base dynamics: shift spaces of finite type, words and cylinders,
//! the center cocycle, and exact separation counts at dyadic resolutions.
//!
//! The metric is d(x, y) = 2^{-min{i : x_i != y_i}}, so two one-sided
//! sequences are (n, 2^{-j})-separated iff their prefixes of length n + j
//! differ. All separation and cover counts are exact integers.

use std::collections::BTreeMap;
use std::collections::HashSet;

use crate::error::{Result, SpectraError};

/// Default cap on enumerated word counts (2^26).
pub const ENUM_BUDGET: u64 = 1 << 26;

pub type Symbol = u8;

/// A finite admissible word over the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<Symbol>);

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Word(symbols)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, n: usize) -> &[Symbol] {
        &self.0[..n.min(self.0.len())]
    }

    /// Parses "0110" style ASCII digit strings (alphabet up to 10 symbols).
    pub fn parse(s: &str) -> Result<Self> {
        let mut v = Vec::with_capacity(s.len());
        for ch in s.chars() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| SpectraError::Config(format!("bad symbol '{ch}' in word '{s}'")))?;
            v.push(d as Symbol);
        }
        Ok(Word(v))
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Dyadic resolution: epsilon = 2^{-depth_j} in the symbolic metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub depth_j: usize,
}

impl Resolution {
    pub fn new(depth_j: usize) -> Self {
        Resolution { depth_j }
    }
}

/// A subshift of finite type with a bridging (specification) table.
///
/// `bridge_length` is the mixing gap: for every ordered symbol pair (a, b)
/// the table holds a connecting word w of exactly that length such that
/// a·w·b is admissible. For the full shift the gap is zero and all entries
/// are empty.
#[derive(Debug, Clone)]
pub struct SymbolicSystem {
    alphabet_size: usize,
    transitions: Vec<Vec<bool>>,
    bridge_length: usize,
    bridge_table: BTreeMap<(Symbol, Symbol), Word>,
}

impl SymbolicSystem {
    /// Full shift on k symbols.
    pub fn full_shift(k: usize) -> Result<Self> {
        Self::new(k, vec![vec![true; k]; k])
    }

    /// SFT from an explicit transition matrix; the bridge table is derived
    /// by shortest-path search once primitivity is established.
    pub fn new(k: usize, transitions: Vec<Vec<bool>>) -> Result<Self> {
        if k < 2 {
            return Err(SpectraError::Config(format!(
                "alphabet size must be >= 2, got {k}"
            )));
        }
        if transitions.len() != k || transitions.iter().any(|r| r.len() != k) {
            return Err(SpectraError::Config(format!(
                "transition matrix must be {k}x{k}"
            )));
        }
        let bridge_length = primitivity_gap(&transitions)?;
        let bridge_table = derive_bridge_table(&transitions, bridge_length)?;
        let sys = SymbolicSystem {
            alphabet_size: k,
            transitions,
            bridge_length,
            bridge_table,
        };
        sys.check_bridge_closure()?;
        Ok(sys)
    }

    /// SFT defined by a list of forbidden words of length 2.
    pub fn from_forbidden(k: usize, forbidden: &[Word]) -> Result<Self> {
        let mut transitions = vec![vec![true; k]; k];
        for w in forbidden {
            if w.len() != 2 {
                return Err(SpectraError::Unsupported(format!(
                    "only forbidden words of length 2 are supported, got '{w}'"
                )));
            }
            let (a, b) = (w.0[0] as usize, w.0[1] as usize);
            if a >= k || b >= k {
                return Err(SpectraError::Config(format!(
                    "forbidden word '{w}' uses symbols outside alphabet of size {k}"
                )));
            }
            transitions[a][b] = false;
        }
        Self::new(k, transitions)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn transitions(&self) -> &[Vec<bool>] {
        &self.transitions
    }

    pub fn is_full_shift(&self) -> bool {
        self.transitions.iter().flatten().all(|&b| b)
    }

    pub fn bridge_length(&self) -> usize {
        self.bridge_length
    }

    pub fn allowed(&self, a: Symbol, b: Symbol) -> bool {
        self.transitions[a as usize][b as usize]
    }

    /// Connecting word of length exactly `bridge_length` from a to b.
    pub fn bridge(&self, a: Symbol, b: Symbol) -> &Word {
        &self.bridge_table[&(a, b)]
    }

    /// Checks admissibility; on failure reports the first violating index.
    pub fn check_admissible(&self, symbols: &[Symbol]) -> Result<()> {
        for (i, pair) in symbols.windows(2).enumerate() {
            if !self.allowed(pair[0], pair[1]) {
                return Err(SpectraError::InadmissibleWord {
                    index: i,
                    from: pair[0],
                    to: pair[1],
                });
            }
        }
        Ok(())
    }

    /// Lexicographically smallest admissible word w with |w| = len such
    /// that a·w·b is admissible. Exists for every len >= bridge_length on
    /// a primitive system.
    pub fn connector(&self, a: Symbol, b: Symbol, len: usize) -> Result<Word> {
        if len == 0 {
            return if self.allowed(a, b) {
                Ok(Word::empty())
            } else {
                Err(SpectraError::BadBridge {
                    from: a,
                    to: b,
                    reason: "symbols not adjacent and gap is zero".into(),
                })
            };
        }
        let k = self.alphabet_size;
        // reach[i][s]: an admissible path of length (len - i) from s to b exists.
        let mut reach = vec![vec![false; k]; len + 1];
        for s in 0..k {
            reach[len][s] = self.allowed(s as Symbol, b);
        }
        for i in (0..len).rev() {
            for s in 0..k {
                reach[i][s] = (0..k).any(|t| self.transitions[s][t] && reach[i + 1][t]);
            }
        }
        let mut out = Vec::with_capacity(len);
        let mut cur = a;
        for i in 0..len {
            let next = (0..k)
                .find(|&t| self.transitions[cur as usize][t] && reach[i + 1][t])
                .ok_or_else(|| SpectraError::BadBridge {
                    from: a,
                    to: b,
                    reason: format!("no admissible connector of length {len}"),
                })?;
            out.push(next as Symbol);
            cur = next as Symbol;
        }
        Ok(Word(out))
    }

    /// Number of admissible words of length n (exact, via the transition count DP).
    pub fn word_count(&self, n: usize) -> num_bigint::BigUint {
        use num_bigint::BigUint;
        use num_traits::{One, Zero};
        if n == 0 {
            return BigUint::one();
        }
        let k = self.alphabet_size;
        let mut v = vec![BigUint::one(); k];
        for _ in 1..n {
            let mut next = vec![BigUint::zero(); k];
            for a in 0..k {
                for b in 0..k {
                    if self.transitions[a][b] {
                        next[a] += &v[b];
                    }
                }
            }
            v = next;
        }
        v.iter().sum()
    }

    fn check_bridge_closure(&self) -> Result<()> {
        for (&(a, b), w) in &self.bridge_table {
            let mut full = Vec::with_capacity(w.len() + 2);
            full.push(a);
            full.extend_from_slice(&w.0);
            full.push(b);
            self.check_admissible(&full).map_err(|_| SpectraError::BadBridge {
                from: a,
                to: b,
                reason: format!("concatenation {a}·{w}·{b} is inadmissible"),
            })?;
            if w.len() != self.bridge_length {
                return Err(SpectraError::BadBridge {
                    from: a,
                    to: b,
                    reason: format!(
                        "entry has length {}, expected {}",
                        w.len(),
                        self.bridge_length
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Smallest L such that every ordered symbol pair is connected by an
/// admissible word of length exactly L. Errors if the matrix is not
/// primitive.
fn primitivity_gap(transitions: &[Vec<bool>]) -> Result<usize> {
    let k = transitions.len();
    let max_power = 2 * k * k + 2;
    let mut reach = transitions.to_vec(); // paths of length 1 (gap 0)
    for gap in 0..max_power {
        if reach.iter().flatten().all(|&b| b) {
            return Ok(gap);
        }
        let mut next = vec![vec![false; k]; k];
        for a in 0..k {
            for m in 0..k {
                if reach[a][m] {
                    for b in 0..k {
                        if transitions[m][b] {
                            next[a][b] = true;
                        }
                    }
                }
            }
        }
        reach = next;
    }
    Err(SpectraError::NotPrimitive { checked: max_power })
}

fn derive_bridge_table(
    transitions: &[Vec<bool>],
    gap: usize,
) -> Result<BTreeMap<(Symbol, Symbol), Word>> {
    let k = transitions.len();
    let sys_tmp = SymbolicSystem {
        alphabet_size: k,
        transitions: transitions.to_vec(),
        bridge_length: gap,
        bridge_table: BTreeMap::new(),
    };
    let mut table = BTreeMap::new();
    for a in 0..k {
        for b in 0..k {
            let w = sys_tmp.connector(a as Symbol, b as Symbol, gap)?;
            table.insert((a as Symbol, b as Symbol), w);
        }
    }
    Ok(table)
}

/// How finite words are closed off when evaluating a depth-d cocycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Sum the |w| - d + 1 fully determined terms only.
    #[default]
    Truncated,
    /// Wrap around periodically for the trailing d - 1 positions.
    Periodic,
}

/// Per-cylinder log-derivative values of depth d.
#[derive(Debug, Clone)]
pub struct CenterCocycle {
    depth: usize,
    /// Values indexed by the d-word read as a base-k integer.
    values: Vec<f64>,
    alphabet_size: usize,
    variation: f64,
    max_abs: f64,
}

impl CenterCocycle {
    /// `values` maps every admissible d-word to its value. Entries for
    /// inadmissible words may be present and are ignored.
    pub fn new(sys: &SymbolicSystem, depth: usize, values: &BTreeMap<Word, f64>) -> Result<Self> {
        if depth == 0 {
            return Err(SpectraError::Config("cocycle depth must be >= 1".into()));
        }
        let k = sys.alphabet_size();
        let size = k.pow(depth as u32);
        let mut table = vec![f64::NAN; size];
        for (w, &v) in values {
            if w.len() != depth {
                return Err(SpectraError::Config(format!(
                    "cocycle value for word '{w}' of length {}, expected depth {depth}",
                    w.len()
                )));
            }
            if !v.is_finite() {
                return Err(SpectraError::Config(format!(
                    "cocycle value for '{w}' is not finite"
                )));
            }
            table[word_index(&w.0, k)] = v;
        }
        // every admissible d-word must be covered
        for idx in 0..size {
            let w = index_word(idx, depth, k);
            if sys.check_admissible(&w).is_ok() && table[idx].is_nan() {
                return Err(SpectraError::MissingCocycleValue {
                    word: Word(w).to_string(),
                });
            }
        }
        let max_abs = table
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let variation = variation_constant(sys, depth, &table);
        Ok(CenterCocycle {
            depth,
            values: table,
            alphabet_size: k,
            variation,
            max_abs,
        })
    }

    /// Depth-1 cocycle from per-symbol values.
    pub fn per_symbol(sys: &SymbolicSystem, phi: &[f64]) -> Result<Self> {
        let map = phi
            .iter()
            .enumerate()
            .map(|(i, &v)| (Word(vec![i as Symbol]), v))
            .collect();
        Self::new(sys, 1, &map)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// max over (d-1)-cylinders of the value spread; zero when d = 1.
    pub fn variation(&self) -> f64 {
        self.variation
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// C_max = 2 * max |phi|.
    pub fn c_max(&self) -> f64 {
        2.0 * self.max_abs
    }

    /// min and max of phi over admissible d-words.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn value(&self, window: &[Symbol]) -> f64 {
        debug_assert_eq!(window.len(), self.depth);
        self.values[word_index(window, self.alphabet_size)]
    }

    /// Per-symbol values; only meaningful for depth 1.
    pub fn symbol_values(&self) -> Option<&[f64]> {
        (self.depth == 1).then_some(self.values.as_slice())
    }

    /// Distortion control time: number of extra symbols needed before a
    /// depth-d window is fully determined. Zero for locally constant
    /// potentials.
    pub fn distortion_time(&self) -> usize {
        self.depth - 1
    }
}

fn word_index(w: &[Symbol], k: usize) -> usize {
    w.iter().fold(0usize, |acc, &s| acc * k + s as usize)
}

fn index_word(mut idx: usize, len: usize, k: usize) -> Vec<Symbol> {
    let mut out = vec![0 as Symbol; len];
    for i in (0..len).rev() {
        out[i] = (idx % k) as Symbol;
        idx /= k;
    }
    out
}

fn variation_constant(sys: &SymbolicSystem, depth: usize, table: &[f64]) -> f64 {
    if depth == 1 {
        return 0.0;
    }
    let k = sys.alphabet_size();
    // group d-words by their (d-1)-prefix
    let size = k.pow(depth as u32);
    let mut var = 0.0f64;
    for prefix in 0..k.pow((depth - 1) as u32) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for last in 0..k {
            let idx = prefix * k + last;
            debug_assert!(idx < size);
            let v = table[idx];
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi > lo {
            var = var.max(hi - lo);
        }
    }
    var
}

/// S_n phi: sum of the cocycle over all depth-d windows of `w`.
pub fn birkhoff_sum(
    sys: &SymbolicSystem,
    w: &Word,
    c: &CenterCocycle,
    mode: BoundaryMode,
) -> Result<f64> {
    sys.check_admissible(&w.0)?;
    let d = c.depth();
    let n = w.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    match mode {
        BoundaryMode::Truncated => {
            if n >= d {
                for i in 0..=(n - d) {
                    sum += c.value(&w.0[i..i + d]);
                }
            }
        }
        BoundaryMode::Periodic => {
            let mut window = Vec::with_capacity(d);
            for i in 0..n {
                window.clear();
                for t in 0..d {
                    window.push(w.0[(i + t) % n]);
                }
                sys.check_admissible(&window)?;
                sum += c.value(&window);
            }
        }
    }
    Ok(sum)
}

/// (1/|w|) S_{|w|} phi.
pub fn finite_time_exponent(
    sys: &SymbolicSystem,
    w: &Word,
    c: &CenterCocycle,
    mode: BoundaryMode,
) -> Result<f64> {
    if w.is_empty() {
        return Err(SpectraError::WordTooShort { len: 0, need: 1 });
    }
    Ok(birkhoff_sum(sys, w, c, mode)? / w.len() as f64)
}

/// All admissible words of length n in lexicographic order.
///
/// Refuses when k^n exceeds `budget` (default [`ENUM_BUDGET`]).
pub fn enumerate_words(
    sys: &SymbolicSystem,
    n: usize,
    budget: Option<u64>,
) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(SpectraError::DegenerateLength);
    }
    let budget = budget.unwrap_or(ENUM_BUDGET);
    let k = sys.alphabet_size() as f64;
    let requested = k.powi(n as i32);
    if requested > budget as f64 {
        return Err(SpectraError::BudgetExceeded { requested, budget });
    }
    let mut out = Vec::new();
    let mut stack: Vec<Symbol> = Vec::with_capacity(n);
    enumerate_rec(sys, n, &mut stack, &mut out);
    Ok(out)
}

fn enumerate_rec(sys: &SymbolicSystem, n: usize, stack: &mut Vec<Symbol>, out: &mut Vec<Word>) {
    if stack.len() == n {
        out.push(Word(stack.clone()));
        return;
    }
    for s in 0..sys.alphabet_size() as Symbol {
        if stack.is_empty() || sys.allowed(*stack.last().unwrap(), s) {
            stack.push(s);
            enumerate_rec(sys, n, stack, out);
            stack.pop();
        }
    }
}

/// Maximal (n, 2^{-j})-separated subset cardinality: the number of distinct
/// (n + j)-prefixes among `words`.
pub fn separated_count(words: &[Word], n: usize, res: Resolution) -> Result<usize> {
    let need = n + res.depth_j;
    let offenders: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.len() < need)
        .map(|(i, _)| i)
        .collect();
    if let Some(&i) = offenders.first() {
        return Err(SpectraError::WordTooShort {
            len: words[i].len(),
            need,
        });
    }
    let prefixes: HashSet<&[Symbol]> = words.iter().map(|w| w.prefix(need)).collect();
    Ok(prefixes.len())
}
