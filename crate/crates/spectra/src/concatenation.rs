//! The quantifier schedule, the concatenated family tower, finite-time
//! exponent envelope verification, and backward extension.
//!
//! Towers are kept implicit: a member is addressed by a global rank whose
//! mixed-radix digits select one skeleton block per slot, and words are
//! streamed symbol by symbol, never stored whole.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::dp::ln_biguint;
use crate::error::{Result, SpectraError};
use crate::legendre::SpectrumCurve;
use crate::pressure::ExponentSign;
use crate::skeleton::{extract_preskeleton, Skeleton, StridedFamily};
use crate::symbolic::{CenterCocycle, Resolution, SymbolicSystem, Word};

/// Cap on the pre-skeleton length probe when sizing levels.
const B_SHARP_CAP: usize = 20_000;

/// Per-level schedule parameters.
#[derive(Debug, Clone, Serialize)]
pub struct LevelParams {
    pub eps: f64,
    /// Target exponent, strictly of the schedule's sign, tending to 0.
    pub chi: f64,
    /// Entropy at the target exponent.
    pub h: f64,
    /// Block length.
    pub n: usize,
    /// Blocks per level.
    pub big_n: usize,
    /// Gap between blocks within the level.
    pub ell: usize,
    /// Bridge length into the next level.
    pub m: usize,
    /// Distortion time (cocycle depth minus one).
    pub ell_flat: usize,
    /// log of the level distortion constant.
    pub log_k: f64,
    /// Smallest block length whose skeleton rate clears the target.
    pub b_sharp: usize,
}

/// A fully sized construction schedule with its derived clocks.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub levels: Vec<LevelParams>,
    pub c_max: f64,
    pub ell_sharp: usize,
    /// t[0] = 0, t[k] = t[k-1] + T_k + m_k.
    pub t: Vec<usize>,
    /// big_t[k-1] = T_k = N_k (n_k + ell_k).
    pub big_t: Vec<usize>,
    pub sign: SignedTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignedTarget {
    Negative,
    Positive,
}

/// One checked inequality, for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub level: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl Schedule {
    /// Derives clocks without validating; used by tests to build broken
    /// fixtures on purpose.
    pub fn unchecked(
        levels: Vec<LevelParams>,
        c_max: f64,
        ell_sharp: usize,
        sign: SignedTarget,
    ) -> Self {
        let mut t = vec![0usize];
        let mut big_t = Vec::new();
        for lp in &levels {
            let tk = lp.big_n * (lp.n + lp.ell);
            big_t.push(tk);
            t.push(t.last().unwrap() + tk + lp.m);
        }
        Schedule {
            levels,
            c_max,
            ell_sharp,
            t,
            big_t,
            sign,
        }
    }

    pub fn new(
        levels: Vec<LevelParams>,
        c_max: f64,
        ell_sharp: usize,
        sign: SignedTarget,
    ) -> Result<Self> {
        let s = Self::unchecked(levels, c_max, ell_sharp, sign);
        s.validate()?;
        Ok(s)
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// All eight inequality families, evaluated per level.
    pub fn check_inequalities(&self) -> Vec<InequalityCheck> {
        let mut out = Vec::new();
        let k_max = self.levels.len();
        let mut push = |name, level, lhs: f64, rhs: f64, strict: bool| {
            let ok = if strict { lhs < rhs } else { lhs <= rhs };
            out.push(InequalityCheck {
                name,
                level,
                lhs,
                rhs,
                ok,
            });
        };
        for (i, lp) in self.levels.iter().enumerate() {
            let k = i + 1;
            let n = lp.n as f64;
            // symbolic analog of the warm-up time is 0
            let t_sharp = 0.0f64;
            push(
                "block-length-floor",
                k,
                (lp.ell_flat as f64).max(lp.b_sharp as f64).max(t_sharp),
                n,
                true,
            );
            push("bridge-rate", k, lp.m as f64 / n * self.c_max, lp.eps, true);
            push(
                "block-density",
                k,
                1.0 - lp.eps,
                n / (n + self.ell_sharp as f64 + lp.m as f64),
                false,
            );
            push(
                "distortion-per-block",
                k,
                lp.log_k / (lp.big_n as f64 * (lp.n + lp.ell) as f64),
                lp.eps,
                true,
            );
            if k < k_max {
                let next = &self.levels[i + 1];
                push("next-distortion", k, next.log_k / n, lp.eps, true);
                push(
                    "next-overhead",
                    k,
                    (next.log_k + (next.m + next.ell_flat) as f64 * self.c_max) / n,
                    lp.eps,
                    true,
                );
                push(
                    "next-block-vs-clock",
                    k,
                    (next.n + self.ell_sharp) as f64 / self.t[k] as f64,
                    lp.eps,
                    true,
                );
                push(
                    "clock-growth",
                    k,
                    self.t[k] as f64 / self.t[k + 1] as f64,
                    next.eps / self.c_max,
                    true,
                );
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(SpectraError::Config("empty schedule".into()));
        }
        for c in self.check_inequalities() {
            if !c.ok {
                return Err(SpectraError::ScheduleInfeasible {
                    inequality: c.name,
                    level: c.level,
                    detail: format!("{} !< {}", c.lhs, c.rhs),
                });
            }
        }
        Ok(())
    }
}

fn check_eps_seq(eps_seq: &[f64]) -> Result<()> {
    if eps_seq.is_empty()
        || eps_seq.iter().any(|&e| !(e > 0.0))
        || eps_seq.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(SpectraError::BadEpsilonSequence);
    }
    Ok(())
}

/// Greedy-minimal schedule: per level, the exponent target is the grid
/// point of the requested sign closest to 0 whose entropy clears the
/// floor; block lengths are the smallest integers satisfying every
/// length inequality AND certifying the trimmed-family rate h_k - eps_k/2
/// (the extra headroom feeds the mass audit); block counts then satisfy
/// the clock inequalities. Everything is re-verified post hoc.
pub fn build_schedule_signed(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    spectrum: &SpectrumCurve,
    eps_seq: &[f64],
    res: Resolution,
    sign: ExponentSign,
) -> Result<Schedule> {
    check_eps_seq(eps_seq)?;
    let k_levels = eps_seq.len();
    let c_max = 2.0 * c.max_abs();
    let ell_sharp = sys.bridge_length();
    let ell_flat = c.depth() - 1;
    let log_k0 = c.depth() as f64 * c.max_abs();
    let sign_tag = match sign {
        ExponentSign::Negative => SignedTarget::Negative,
        ExponentSign::Positive => SignedTarget::Positive,
    };

    // exponent and entropy targets per level
    let h_ceiling = match sign {
        ExponentSign::Negative => spectrum.one_sided_limits_at_zero().0,
        ExponentSign::Positive => spectrum.one_sided_limits_at_zero().1,
    }
    .ok_or_else(|| SpectraError::Config("spectrum has no grid point of that sign".into()))?;
    let mut chis = Vec::with_capacity(k_levels);
    for &eps in eps_seq {
        let mut best: Option<(f64, f64)> = None;
        for (&a, &h) in spectrum.alpha_grid.iter().zip(&spectrum.values) {
            let right_side = match sign {
                ExponentSign::Negative => a < 0.0,
                ExponentSign::Positive => a > 0.0,
            };
            if right_side && h >= h_ceiling - eps && best.map_or(true, |(b, _)| a.abs() < b.abs())
            {
                best = Some((a, h));
            }
        }
        let (chi, h) = best.ok_or_else(|| SpectraError::ScheduleInfeasible {
            inequality: "exponent-target".into(),
            level: chis.len() + 1,
            detail: format!("no grid exponent with entropy >= {}", h_ceiling - eps),
        })?;
        chis.push((chi, h));
    }

    // block lengths: smallest n with the skeleton rate certifying
    // h_k - eps_k/2 and all length inequalities satisfied
    let mut levels: Vec<LevelParams> = Vec::with_capacity(k_levels);
    for (i, &eps) in eps_seq.iter().enumerate() {
        let (chi, h) = chis[i];
        let m_bridge = ell_sharp;
        let rate_target = h - eps / 2.0;
        let probe = |n: usize| -> Result<bool> {
            match extract_preskeleton(sys, c, chi, eps, 0.0, 0.0, n, res, Some(log_k0)) {
                Ok(s) => Ok(s.certified_rate >= rate_target),
                Err(SpectraError::EmptyWindow { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        };
        // exponential probe then bisection for the minimal passing length
        let mut hi = 8usize;
        while !probe(hi)? {
            hi *= 2;
            if hi > B_SHARP_CAP {
                return Err(SpectraError::ScheduleInfeasible {
                    inequality: "pre-skeleton-rate".into(),
                    level: i + 1,
                    detail: format!(
                        "no block length <= {B_SHARP_CAP} certifies rate {rate_target}"
                    ),
                });
            }
        }
        let mut lo = hi / 2; // probe(lo) failed (or lo < 8)
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if probe(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let b_sharp = hi;
        // numeric floors from the length inequalities
        let next_log_k = log_k0; // constant distortion across levels
        let mut n = b_sharp + 1;
        let floors = [
            (m_bridge as f64 * c_max / eps).floor() as usize + 1,
            (((ell_sharp + m_bridge) as f64) * (1.0 - eps) / eps).ceil() as usize,
            (next_log_k / eps).floor() as usize + 1,
            ((next_log_k + (m_bridge + ell_flat) as f64 * c_max) / eps).floor() as usize + 1,
            ell_flat + 1,
        ];
        for f in floors {
            n = n.max(f);
        }
        // the rate requirement must also hold at n itself
        while !probe(n)? {
            n += 1 + n / 16;
            if n > B_SHARP_CAP {
                return Err(SpectraError::ScheduleInfeasible {
                    inequality: "pre-skeleton-rate".into(),
                    level: i + 1,
                    detail: "rate target lost when raising the block length".into(),
                });
            }
        }
        levels.push(LevelParams {
            eps,
            chi,
            h,
            n,
            big_n: 1,
            ell: ell_sharp,
            m: m_bridge,
            ell_flat,
            log_k: log_k0,
            b_sharp,
        });
    }

    // block counts forward: every clock constraint is a floor on t_k
    let mut t_prev = 0usize;
    for i in 0..k_levels {
        let eps = levels[i].eps;
        let slot = levels[i].n + levels[i].ell;
        let mut n_big = 1usize;
        // distortion-per-block: log K / (N slot) < eps
        n_big = n_big.max((levels[i].log_k / (eps * slot as f64)).floor() as usize + 1);
        let mut t_req = 0f64;
        if i + 1 < k_levels {
            // next-block-vs-clock at level k
            t_req = t_req.max((levels[i + 1].n + levels[i].ell) as f64 / eps);
        }
        if i > 0 {
            // clock-growth at level k-1: t_{k-1}/t_k < eps_k / c_max
            t_req = t_req.max(t_prev as f64 * c_max / eps);
        }
        let need = t_req - t_prev as f64 - levels[i].m as f64;
        if need > 0.0 {
            n_big = n_big.max((need / slot as f64).floor() as usize + 1);
        }
        levels[i].big_n = n_big;
        t_prev += n_big * slot + levels[i].m;
    }

    Schedule::new(levels, c_max, ell_sharp, sign_tag)
}

/// Negative-exponent schedule (the default construction).
pub fn build_schedule(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    spectrum: &SpectrumCurve,
    eps_seq: &[f64],
    res: Resolution,
) -> Result<Schedule> {
    build_schedule_signed(sys, c, spectrum, eps_seq, res, ExponentSign::Negative)
}

/// Extracts the per-level skeletons a schedule calls for.
pub fn level_skeletons(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    sched: &Schedule,
    res: Resolution,
) -> Result<Vec<Skeleton>> {
    sched
        .levels
        .iter()
        .map(|lp| {
            extract_preskeleton(
                sys,
                c,
                lp.chi,
                lp.eps,
                lp.eps,
                lp.h,
                lp.n,
                res,
                Some(lp.log_k),
            )
        })
        .collect()
}

/// Joins blocks with admissible bridge words of length `ell` between
/// consecutive blocks (lex-smallest connector per junction).
pub fn concat_map_psi(sys: &SymbolicSystem, blocks: &[Word], ell: usize) -> Result<Word> {
    let mut out: Vec<u8> = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        if b.is_empty() {
            return Err(SpectraError::DegenerateLength);
        }
        if i > 0 {
            let from = *out.last().unwrap();
            let bridge = sys.connector(from, b.0[0], ell)?;
            out.extend_from_slice(&bridge.0);
        }
        sys.check_admissible(&b.0)?;
        out.extend_from_slice(&b.0);
    }
    let w = Word(out);
    sys.check_admissible(&w.0)?;
    Ok(w)
}

/// One tower level: a skeleton trimmed (by lex stride) to the scheduled
/// cardinality e^{n_k (h_k - eps_k/2)}.
pub struct TowerLevel {
    pub skeleton: Skeleton,
    pub step: BigUint,
    pub size: BigUint,
    /// card D_k = size^{N_k}.
    pub card_d: BigUint,
}

impl TowerLevel {
    pub fn family(&self) -> StridedFamily<'_> {
        StridedFamily {
            family: &self.skeleton.words,
            step: self.step.clone(),
            size: self.size.clone(),
        }
    }
}

/// The concatenated family tower E_1 subset-prefix E_2 ... E_K, implicit.
pub struct FamilyTower {
    pub sched: Schedule,
    pub levels: Vec<TowerLevel>,
    /// card_e[k-1] = card E_k = prod_{j<=k} card D_j.
    pub card_e: Vec<BigUint>,
    /// Recorded sub-sample of members (empty when the tower fits the
    /// budget and full enumeration is possible).
    pub sample_seed: Option<u64>,
    pub sample_keys: Vec<MemberKey>,
}

/// Builds the tower from a schedule and per-level skeletons. If
/// card E_K exceeds `budget`, a sub-sample of `size` member ranks drawn
/// with the given seed is recorded; without a sub-sample spec this is an
/// error.
pub fn build_tower(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    sched: Schedule,
    skeletons: Vec<Skeleton>,
    budget: f64,
    subsample: Option<(usize, u64)>,
) -> Result<FamilyTower> {
    if c.depth() != 1 {
        return Err(SpectraError::Unsupported(
            "towers require a depth-1 cocycle".into(),
        ));
    }
    if skeletons.len() != sched.levels.len() {
        return Err(SpectraError::Config(
            "one skeleton per schedule level required".into(),
        ));
    }
    let mut levels = Vec::with_capacity(skeletons.len());
    let mut card_e: Vec<BigUint> = Vec::new();
    let mut ln_card_e = 0f64;
    for (lp, skel) in sched.levels.iter().zip(skeletons) {
        if skel.m != lp.n || (skel.alpha - lp.chi).abs() > 1e-12 {
            return Err(SpectraError::Config(format!(
                "level skeleton mismatch: length {} target {}, exponent {} target {}",
                skel.m, lp.n, skel.alpha, lp.chi
            )));
        }
        let target = ((lp.n as f64 * (lp.h - lp.eps / 2.0)).exp().ceil()).min(1e300);
        let target = big_from_f64(target);
        let strided = StridedFamily::thin(&skel.words, &target);
        if strided.size.is_zero() {
            return Err(SpectraError::EmptySupport);
        }
        let card_d = strided.size.pow(lp.big_n as u32);
        let (step, size) = (strided.step, strided.size);
        ln_card_e += lp.big_n as f64 * ln_biguint(&size);
        card_e.push(match card_e.last() {
            Some(prev) => prev * &card_d,
            None => card_d.clone(),
        });
        levels.push(TowerLevel {
            skeleton: skel,
            step,
            size,
            card_d,
        });
    }
    let _ = sys;
    let (sample_seed, sample_keys) = if ln_card_e > budget.ln() {
        let (count, seed) = subsample.ok_or(SpectraError::FamilyBudgetExceeded {
            level: sched.levels.len(),
            needed: ln_card_e,
            budget: budget as u64,
        })?;
        let keys = (0..count as u64)
            .map(|index| MemberKey::Seeded { seed, index })
            .collect();
        (Some(seed), keys)
    } else {
        (None, Vec::new())
    };
    Ok(FamilyTower {
        sched,
        levels,
        card_e,
        sample_seed,
        sample_keys,
    })
}

fn big_from_f64(x: f64) -> BigUint {
    // exact for the magnitudes used here: mantissa times power of two
    if x < 1.0 {
        return BigUint::one();
    }
    let bits = x.log2().floor() as u64;
    if bits <= 52 {
        return BigUint::from(x.ceil() as u64);
    }
    let mantissa = x / 2f64.powi((bits - 52) as i32);
    BigUint::from(mantissa.ceil() as u64) << (bits - 52)
}

/// Addresses one tower member. Small towers use explicit lexicographic
/// ranks; for astronomically large families a member is drawn by seeded
/// per-slot sampling (rank decomposition of a multi-megabit integer is
/// needlessly slow).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberKey {
    Rank(BigUint),
    Seeded { seed: u64, index: u64 },
}

impl FamilyTower {
    pub fn word_len(&self) -> usize {
        // E_K words end with the last level's blocks (no trailing bridge)
        *self.sched.t.last().unwrap() - self.sched.levels.last().unwrap().m
    }

    pub fn cardinality(&self) -> &BigUint {
        self.card_e.last().unwrap()
    }

    /// Per-slot block indices for a member, most significant digit first
    /// (level 1, slot 1). Rank keys decompose lexicographically; seeded
    /// keys draw each digit uniformly from an index-keyed stream.
    fn digits(&self, key: &MemberKey) -> Vec<Vec<BigUint>> {
        match key {
            MemberKey::Rank(rank) => {
                let mut digs: Vec<Vec<BigUint>> = Vec::new();
                let mut r = rank.clone();
                // peel least significant level last and reverse at the end
                for (lv, lp) in self.sched.levels.iter().enumerate().rev() {
                    let mut level_digits = Vec::with_capacity(lp.big_n);
                    for _ in 0..lp.big_n {
                        let q = &r / &self.levels[lv].size;
                        level_digits.push(&r - &q * &self.levels[lv].size);
                        r = q;
                    }
                    level_digits.reverse();
                    digs.push(level_digits);
                }
                digs.reverse();
                digs
            }
            MemberKey::Seeded { seed, index } => {
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                rng.set_stream(*index);
                self.sched
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(lv, lp)| {
                        (0..lp.big_n)
                            .map(|_| rng.gen_biguint_below(&self.levels[lv].size))
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Streams a member's word, invoking `f(position, symbol)` with
    /// 0-based positions, up to `max_len` symbols. The word is never held
    /// in memory.
    pub fn walk_member(
        &self,
        sys: &SymbolicSystem,
        key: &MemberKey,
        max_len: usize,
        mut f: impl FnMut(usize, u8),
    ) -> Result<()> {
        let digits = self.digits(key);
        let mut pos = 0usize;
        let mut last: Option<u8> = None;
        let mut emit = |seg_word: &[u8], pos: &mut usize, last: &mut Option<u8>| {
            for &s in seg_word {
                if *pos >= max_len {
                    return false;
                }
                f(*pos, s);
                *last = Some(s);
                *pos += 1;
            }
            true
        };
        let k_levels = self.sched.levels.len();
        for lv in 0..k_levels {
            let lp = &self.sched.levels[lv];
            let fam = self.levels[lv].family();
            for slot in 0..lp.big_n {
                let block = fam
                    .member(&digits[lv][slot])
                    .ok_or_else(|| SpectraError::Config("rank out of range".into()))?;
                if let Some(prev) = last {
                    // gap into this block: every block carries a trailing
                    // intra-level gap, and a level change adds the bridge,
                    // so level k starts at t_{k-1} and has length T_k
                    let gap = if slot == 0 {
                        self.sched.levels[lv - 1].ell + self.sched.levels[lv - 1].m
                    } else {
                        lp.ell
                    };
                    let bridge = sys.connector(prev, block.0[0], gap)?;
                    if !emit(&bridge.0, &mut pos, &mut last) {
                        return Ok(());
                    }
                } else if slot == 0 && lv > 0 {
                    unreachable!("previous levels always emit symbols");
                }
                if !emit(&block.0, &mut pos, &mut last) {
                    return Ok(());
                }
            }
        }
        // the last block's trailing gap completes the declared length
        // t_{K-1} + T_K; any admissible continuation serves
        let tail = self.sched.levels[k_levels - 1].ell;
        if tail > 0 {
            let prev = last.expect("tower emits symbols");
            let filler = (0..sys.alphabet_size() as u8)
                .find_map(|b| sys.connector(prev, b, tail).ok())
                .ok_or_else(|| SpectraError::Unsupported("no admissible tail".into()))?;
            emit(&filler.0, &mut pos, &mut last);
        }
        Ok(())
    }

    /// Materializes a member's word, truncated to `max_len`.
    pub fn member_word(
        &self,
        sys: &SymbolicSystem,
        key: &MemberKey,
        max_len: usize,
    ) -> Result<Word> {
        let mut v = Vec::with_capacity(max_len.min(self.word_len()));
        self.walk_member(sys, key, max_len, |_, s| v.push(s))?;
        Ok(Word(v))
    }

    /// Members used for checks: the recorded sub-sample, or `count` ranks
    /// evenly strided through the family.
    pub fn check_members(&self, count: usize) -> Vec<MemberKey> {
        if !self.sample_keys.is_empty() {
            return self.sample_keys.clone();
        }
        let total = self.cardinality();
        let count = BigUint::from(count.max(1));
        let mut out = Vec::new();
        let mut i = BigUint::zero();
        while i < count {
            let r = (&i * total) / &count;
            if out.last() != Some(&MemberKey::Rank(r.clone())) {
                out.push(MemberKey::Rank(r));
            }
            i += 1u32;
        }
        out
    }
}

/// Finite-level approximations to the limsup set: member words in rank
/// order, evenly spread, truncated to `length`.
pub fn limsup_points(
    tower: &FamilyTower,
    sys: &SymbolicSystem,
    count: usize,
    length: usize,
) -> Result<Vec<Word>> {
    if length > tower.word_len() {
        return Err(SpectraError::RangeTooLong {
            lo: 1,
            hi: tower.word_len(),
            len: length,
        });
    }
    tower
        .check_members(count)
        .iter()
        .map(|k| tower.member_word(sys, k, length))
        .collect()
}

/// Envelope verification report.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Per k0 < K: (k0, bound, worst |S_n|/n over n in (t_{k0+1}, end]).
    pub per_level: Vec<(usize, f64, f64)>,
    pub max_ratio: f64,
    pub pass: bool,
    pub words_checked: usize,
}

/// Verifies |S_n / n| <= |chi_k0| + 6 eps_k0 for n in (t_{k0+1}, end] for
/// every k0 < K, streaming over the sampled member ranks. For a
/// single-level tower the one-block bound |S_n/n - chi| <= log K1 / n is
/// checked instead.
pub fn exponent_envelope_check(
    tower: &FamilyTower,
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    members: &[MemberKey],
) -> Result<EnvelopeReport> {
    let phi = c.symbol_values().ok_or_else(|| {
        SpectraError::Unsupported("envelope streaming requires depth-1 cocycles".into())
    })?;
    let sched = &tower.sched;
    let k_levels = sched.levels.len();
    let end = tower.word_len();
    let mut per_level: Vec<(usize, f64, f64)> = if k_levels == 1 {
        vec![(1, 0.0, 0.0)]
    } else {
        (1..k_levels)
            .map(|k0| {
                let lp = &sched.levels[k0 - 1];
                (k0, lp.chi.abs() + 6.0 * lp.eps, 0.0)
            })
            .collect()
    };
    for key in members {
        let mut s = 0f64;
        let mut worst: Vec<f64> = vec![0.0; per_level.len()];
        let single = k_levels == 1;
        let lp1 = &sched.levels[0];
        tower.walk_member(sys, key, end, |pos, sym| {
            s += phi[sym as usize];
            let n = pos + 1;
            if single {
                // one-block bound: |S_n - n chi| <= log K1 + n eps_1 along
                // the first block (the skeleton's prefix window)
                if n <= lp1.n {
                    let dev = s - n as f64 * lp1.chi;
                    // small additive slack absorbs the counting lattice's
                    // outward window rounding
                    let denom = lp1.log_k + n as f64 * lp1.eps + 1e-6;
                    worst[0] = worst[0].max(dev.abs() / denom);
                }
            } else {
                let ratio = (s / n as f64).abs();
                for (idx, k0) in (1..k_levels).enumerate() {
                    if n > sched.t[k0 + 1] {
                        worst[idx] = worst[idx].max(ratio);
                    }
                }
            }
        })?;
        for (idx, w) in worst.iter().enumerate() {
            if single {
                // already a ratio against the one-block window bound
                per_level[idx].1 = 1.0;
            }
            per_level[idx].2 = per_level[idx].2.max(*w);
        }
    }
    let max_ratio = per_level
        .iter()
        .map(|(_, bound, worst)| if *bound > 0.0 { worst / bound } else { 0.0 })
        .fold(0.0f64, f64::max);
    Ok(EnvelopeReport {
        per_level,
        max_ratio,
        pass: max_ratio <= 1.0,
        words_checked: members.len(),
    })
}

/// A two-sided word: `negative[i]` is the symbol at index -(i+1).
#[derive(Debug)]
pub struct TwoSidedWord {
    pub negative: Vec<u8>,
    pub positive: Vec<u8>,
}

impl TwoSidedWord {
    /// Admissibility across the junction and on both sides.
    pub fn verify(&self, sys: &SymbolicSystem) -> Result<()> {
        let mut full: Vec<u8> = self.negative.iter().rev().cloned().collect();
        full.extend_from_slice(&self.positive);
        sys.check_admissible(&full)
    }
}

/// The transition-transposed system: words of the reversed system read
/// backward are admissible in the original.
pub fn reversed_system(sys: &SymbolicSystem) -> Result<SymbolicSystem> {
    let k = sys.alphabet_size();
    let mut transposed = vec![vec![false; k]; k];
    for a in 0..k {
        for b in 0..k {
            transposed[a][b] = sys.allowed(b as u8, a as u8);
        }
    }
    SymbolicSystem::new(k, transposed)
}

/// Extends a forward word to a two-sided word whose backward averages
/// follow a positive-exponent schedule built on the reversed system. The
/// backward part is the lex-least member of the backward tower.
pub fn extend_backward(
    sys: &SymbolicSystem,
    c: &CenterCocycle,
    forward_word: &Word,
    sched_back: &Schedule,
    res: Resolution,
) -> Result<TwoSidedWord> {
    if sched_back.sign != SignedTarget::Positive {
        return Err(SpectraError::Config(
            "backward extension needs a positive-exponent schedule".into(),
        ));
    }
    let rsys = reversed_system(sys)?;
    let skels = level_skeletons(&rsys, c, sched_back, res)?;
    let tower = build_tower(&rsys, c, sched_back.clone(), skels, 1e6, Some((16, 0)))?;
    let key = MemberKey::Rank(BigUint::zero());
    let back = tower.member_word(&rsys, &key, tower.word_len())?;
    // mirrored envelope on the backward tower
    let report = exponent_envelope_check(&tower, &rsys, c, &[key])?;
    if !report.pass {
        return Err(SpectraError::Config(format!(
            "backward envelope failed with ratio {}",
            report.max_ratio
        )));
    }
    let mut negative = back.0;
    if let Some(&first_fwd) = forward_word.0.first() {
        // junction: negative[0] must lead into the forward word, inserting
        // the shortest admissible bridge if needed
        if !sys.allowed(negative[0], first_fwd) {
            let mut joined = None;
            for len in 1..=(sys.bridge_length() + 1) {
                if let Ok(b) = sys.connector(negative[0], first_fwd, len) {
                    joined = Some(b);
                    break;
                }
            }
            let bridge = joined.ok_or_else(|| SpectraError::BadBridge {
                from: negative[0],
                to: first_fwd,
                reason: "no junction bridge".into(),
            })?;
            for s in bridge.0.into_iter().rev() {
                negative.insert(0, s);
            }
        }
    }
    let out = TwoSidedWord {
        negative,
        positive: forward_word.0.clone(),
    };
    out.verify(sys)?;
    Ok(out)
}
