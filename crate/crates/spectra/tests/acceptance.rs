//! End-to-end acceptance suite for the reference model: the full 2-shift
//! with per-symbol potential (log 1/4, log 2). Every check is validated
//! against an exact count or a closed form, and each criterion prints one
//! PASS/FAIL line.
//!
//! Closed forms used throughout:
//!   P(q)  = log(4^{-q} + 2^q)
//!   H(a)  = -p log p - (1-p) log(1-p) with p = (log2 - a) / (3 log2)
//!   hmax  = H(0) = log 3 - (2/3) log 2 = 0.63651...

use std::sync::OnceLock;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use spectra::concatenation::{
    build_schedule, build_tower, exponent_envelope_check, level_skeletons,
    FamilyTower, MemberKey, Schedule,
};
use spectra::distribution::{edp_certificate, local_entropy_audit, CylinderMeasure};
use spectra::dp::{WindowConstraint, WordLattice};
use spectra::entropy::{estimate_entropy, matrix_ln_counts, Method, Support};
use spectra::legendre::{
    bernoulli_spectrum_oracle, spectrum, spectrum_brute_force, SpectrumCurve,
};
use spectra::pressure::{linspace, pressure_full};
use spectra::skeleton::extract_preskeleton;
use spectra::symbolic::{
    enumerate_words, CenterCocycle, Resolution, SymbolicSystem, Word,
};

const LOG2: f64 = std::f64::consts::LN_2;

fn reference() -> (SymbolicSystem, CenterCocycle) {
    let sys = SymbolicSystem::full_shift(2).unwrap();
    let c = CenterCocycle::per_symbol(&sys, &[(0.25f64).ln(), 2f64.ln()]).unwrap();
    (sys, c)
}

fn oracle_h(alpha: f64) -> f64 {
    bernoulli_spectrum_oracle(&[(0.25f64).ln(), 2f64.ln()], alpha).unwrap()
}

fn res0() -> Resolution {
    Resolution::new(0)
}

fn report(criterion: usize, what: &str, pass: bool) {
    println!(
        "criterion {criterion} ({what}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {what}");
}

/// Shared reference spectrum (computed once; several criteria reuse it).
fn ref_spectrum() -> &'static SpectrumCurve {
    static SPEC: OnceLock<SpectrumCurve> = OnceLock::new();
    SPEC.get_or_init(|| {
        let (sys, c) = reference();
        let grid = linspace((0.25f64).ln() + 1e-6, LOG2 - 1e-6, 401);
        spectrum(&sys, &c, &grid).unwrap()
    })
}

/// Shared reference tower: eps (0.4, 0.2, 0.1, 0.05), budget 1e6,
/// 128 seeded sample members.
fn ref_tower() -> &'static (SymbolicSystem, CenterCocycle, FamilyTower) {
    static TOWER: OnceLock<(SymbolicSystem, CenterCocycle, FamilyTower)> =
        OnceLock::new();
    TOWER.get_or_init(|| {
        let (sys, c) = reference();
        let sched = build_schedule(
            &sys,
            &c,
            ref_spectrum(),
            &[0.4, 0.2, 0.1, 0.05],
            res0(),
        )
        .unwrap();
        sched.validate().unwrap();
        let skels = level_skeletons(&sys, &c, &sched, res0()).unwrap();
        let tower = build_tower(&sys, &c, sched, skels, 1e6, Some((128, 17))).unwrap();
        (sys, c, tower)
    })
}

#[test]
fn criterion_1_pressure_closed_form() {
    let (sys, c) = reference();
    let start = Instant::now();
    let mut worst = 0f64;
    for q in linspace(-20.0, 20.0, 401) {
        let got = pressure_full(&sys, &c, q).unwrap();
        let want = ((4f64).powf(-q) + (2f64).powf(q)).ln();
        worst = worst.max((got - want).abs());
    }
    let elapsed = start.elapsed();
    report(
        1,
        "pressure closed form",
        worst <= 1e-10 && elapsed.as_secs_f64() < 1.0,
    );
}

#[test]
fn criterion_2_spectrum_oracle_and_invariants() {
    let (sys, c) = reference();
    let start = Instant::now();
    let grid = linspace((0.25f64).ln() + 1e-6, LOG2 - 1e-6, 101);
    let curve = spectrum(&sys, &c, &grid).unwrap();
    let mut worst = 0f64;
    for (a, h) in curve.alpha_grid.iter().zip(&curve.values) {
        worst = worst.max((h - oracle_h(*a)).abs());
    }
    // E1 concavity + E5 nonnegativity + E4 ceiling are re-checked here
    // independently of the library's own invariant pass
    let mut concave = true;
    for w in curve.values.windows(3) {
        if w[0] + w[2] - 2.0 * w[1] > 1e-7 {
            concave = false;
        }
    }
    let nonneg = curve.values.iter().all(|&h| h >= -1e-9);
    let max_h = curve.values.iter().cloned().fold(f64::MIN, f64::max);
    let e4 = (max_h - LOG2).abs() <= 1e-8;
    // E2: the spectrum's domain is the interval of attainable exponents
    let (dlo, dhi) = curve.domain;
    let e2 = dlo <= (0.25f64).ln() + 1e-3 && dhi >= LOG2 - 1e-3;
    let elapsed = start.elapsed();
    report(
        2,
        "spectrum oracle + E1/E2/E4/E5",
        worst <= 1e-4 && concave && nonneg && e4 && e2 && elapsed.as_secs_f64() < 10.0,
    );
}

#[test]
fn criterion_3_brute_force_equivalence() {
    let (sys, c) = reference();
    let start = Instant::now();
    let mut ok = true;
    for alpha in [-0.8, -0.4, 0.0, 0.3, 0.6] {
        let window = 0.05;
        let bf = spectrum_brute_force(&sys, &c, alpha, window, 400).unwrap();
        // The window count converges to sup over [alpha-w, alpha+w] of H,
        // so the closed-form comparison point is that sup: H is concave
        // with its peak at -log2/2, hence the sup sits at the clamp of the
        // peak into the window. The 0.02 tolerance then covers purely the
        // finite-n counting error (the window drift itself reaches
        // Lip * w ~ 0.07 near the domain edge and is not an error term).
        let peak = -LOG2 / 2.0;
        let want = oracle_h(peak.clamp(alpha - window, alpha + window));
        if (bf - want).abs() > 0.02 {
            eprintln!("alpha {alpha}: brute force {bf} vs windowed closed form {want}");
            ok = false;
        }
    }
    let elapsed = start.elapsed();
    report(
        3,
        "brute-force spectrum within 0.02",
        ok && elapsed.as_secs_f64() < 30.0,
    );
}

#[test]
fn criterion_4_skeleton_certification() {
    let (sys, c) = reference();
    // DP path at m = 400
    let skel = extract_preskeleton(&sys, &c, 0.0, 0.1, 0.1, 0.5865, 400, res0(), None)
        .unwrap();
    let rate_ok = skel.certified_rate >= 0.5865;
    let verify_ok = skel.verify(&sys, &c).is_ok();
    // exhaustive DP vs enumeration cross-check for all m <= 20
    let mut exact = true;
    for m in 1..=20usize {
        let lattice = WordLattice::build(
            &sys,
            &c,
            m,
            WindowConstraint::Prefix {
                alpha: 0.0,
                eps_e: 0.1,
                log_k0: c.max_abs(),
            },
        )
        .unwrap();
        let brute = enumerate_words(&sys, m, None)
            .unwrap()
            .into_iter()
            .filter(|w| {
                let phi = c.symbol_values().unwrap();
                let mut s = 0.0;
                for (l, &sym) in w.0.iter().enumerate() {
                    s += phi[sym as usize];
                    if (s).abs() > c.max_abs() + 0.1 * (l + 1) as f64 + 1e-9 {
                        return false;
                    }
                }
                true
            })
            .count();
        if lattice.total() != &BigUint::from(brute) {
            exact = false;
        }
    }
    report(
        4,
        "skeleton rate + reverify + DP=enumeration",
        rate_ok && verify_ok && exact,
    );
}

#[test]
fn criterion_5_schedule_and_tower() {
    let start = Instant::now();
    let (sys, _c, tower) = ref_tower();
    let sched: &Schedule = &tower.sched;
    let all_ineq = sched.check_inequalities().iter().all(|c| c.ok);
    // exact cardinality identity at every level
    let mut card_ok = true;
    let mut acc = BigUint::one();
    for (lv, ce) in tower.levels.iter().zip(&tower.card_e) {
        acc *= &lv.card_d;
        if &acc != ce {
            card_ok = false;
        }
    }
    // prefix nesting: members with the same level-1 digits share the
    // level-1 prefix; changing a level-1 digit changes it
    let len1 = sched.big_t[0];
    let stride = tower.cardinality() / &tower.card_e[0];
    let w0 = tower
        .member_word(sys, &MemberKey::Rank(BigUint::one()), len1)
        .unwrap();
    let w_same = tower
        .member_word(sys, &MemberKey::Rank(&stride - BigUint::one()), len1)
        .unwrap();
    let w_next = tower
        .member_word(sys, &MemberKey::Rank(stride.clone()), len1)
        .unwrap();
    let nesting_ok = w0.0 == w_same.0 && w0.0 != w_next.0;
    // separation: distinct members differ within the declared length
    let mut sep_ok = true;
    let probe = tower.word_len().min(4096);
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..16u32 {
        let r = (tower.cardinality() * BigUint::from(i)) / BigUint::from(16u32);
        let w = tower.member_word(sys, &MemberKey::Rank(r), probe).unwrap();
        if !seen.insert(w.0) {
            sep_ok = false;
        }
    }
    let elapsed = start.elapsed();
    report(
        5,
        "schedule inequalities + tower identities",
        all_ineq && card_ok && nesting_ok && sep_ok && elapsed.as_secs_f64() < 60.0,
    );
}

#[test]
fn criterion_6_exponent_envelope() {
    let (sys, c, tower) = ref_tower();
    let members = tower.check_members(128);
    let enough = members.len() >= 100;
    let rep = exponent_envelope_check(tower, sys, c, &members).unwrap();
    // fixture deliberately violating the bridge-rate inequality must FAIL
    let good = build_schedule(sys, c, ref_spectrum(), &[0.8, 0.4, 0.2], res0()).unwrap();
    let mut levels = good.levels.clone();
    levels[1].m = good.t[2] * 2;
    levels[1].eps = 0.02;
    levels[0].eps = 0.04;
    let broken = Schedule::unchecked(levels, good.c_max, good.ell_sharp, good.sign);
    let skels = level_skeletons(sys, c, &broken, res0()).unwrap();
    let bad_tower = build_tower(sys, c, broken, skels, 1e6, Some((8, 5))).unwrap();
    let bad = exponent_envelope_check(&bad_tower, sys, c, &bad_tower.check_members(8))
        .unwrap();
    report(
        6,
        "envelope ratio <= 1 and fixture FAIL",
        enough && rep.pass && rep.max_ratio <= 1.0 && !bad.pass,
    );
}

#[test]
fn criterion_7_edp_certificate() {
    let (sys, _c, tower) = ref_tower();
    let h_frak = ref_spectrum().one_sided_limits_at_zero().0.unwrap();
    let closed_form = 3f64.ln() - (2.0 / 3.0) * LOG2;
    assert!(
        (h_frak - closed_form).abs() < 1e-3,
        "spectrum limit at 0- should match the closed form"
    );
    let theta = 0.05;
    let m = CylinderMeasure::Tower { tower, sys };
    let n_hi = tower.word_len();
    let audit = local_entropy_audit(&m, h_frak, theta, (1, n_hi), res0()).unwrap();
    let n0 = audit.n_stable;
    let stable = n0.is_some_and(|n0| n0 < n_hi);
    let mut cert_ok = false;
    let mut agree = false;
    if let Some(n0) = n0 {
        let cert = edp_certificate(&m, h_frak, theta, (n0, n_hi), res0()).unwrap();
        cert_ok = cert.h_certified >= closed_form - 0.05 - 1e-6;
        agree = (cert.direct_estimate.rate - cert.h_certified).abs() <= 0.05;
        println!(
            "  audit stable from n0 = {n0}; certificate {:.4}, direct estimate {:.4}",
            cert.h_certified, cert.direct_estimate.rate
        );
    }
    report(7, "EDP audit + certificate", stable && cert_ok && agree);
}

#[test]
fn criterion_8_entropy_estimator() {
    let (sys, c) = reference();
    // full 2-shift: rate log 2 to 1e-12
    let lattice =
        WordLattice::build(&sys, &c, 70, WindowConstraint::Unconstrained).unwrap();
    let full = estimate_entropy(
        &Support::Lattice(&lattice),
        (10, 60),
        res0(),
        Method::Separated,
    )
    .unwrap();
    let full_ok = (full.rate - LOG2).abs() <= 1e-12;
    // golden-mean SFT: rate log((1+sqrt5)/2) to 1e-3 on [20, 60]
    let gm = SymbolicSystem::from_forbidden(2, &[Word::parse("11").unwrap()]).unwrap();
    let cgm = CenterCocycle::per_symbol(&gm, &[0.0, 1.0]).unwrap();
    let gml = WordLattice::build(&gm, &cgm, 70, WindowConstraint::Unconstrained).unwrap();
    let golden = estimate_entropy(
        &Support::Lattice(&gml),
        (20, 60),
        res0(),
        Method::Separated,
    )
    .unwrap();
    let golden_ok = (golden.rate - ((1.0 + 5f64.sqrt()) / 2.0).ln()).abs() <= 1e-3;
    // 1000 seeded random cases: count monotonicity under edge removal and
    // countable stability under disjoint doubling
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut props_ok = true;
    for _ in 0..1000 {
        let k = 3usize;
        let mut t = vec![vec![false; k]; k];
        for row in t.iter_mut() {
            for cell in row.iter_mut() {
                *cell = rng.gen_bool(0.6);
            }
            let forced = rng.gen_range(0..k);
            row[forced] = true;
        }
        let mut sub = t.clone();
        let (r, cidx) = (rng.gen_range(0..k), rng.gen_range(0..k));
        sub[r][cidx] = false;
        if sub[r].iter().all(|&b| !b) {
            sub[r][cidx] = true;
        }
        let sup_counts = matrix_ln_counts(&t, 60).unwrap();
        let sub_counts = matrix_ln_counts(&sub, 60).unwrap();
        if sub_counts
            .iter()
            .zip(&sup_counts)
            .any(|(s, p)| s.1 > p.1 + 1e-12)
        {
            props_ok = false;
        }
        let es = estimate_entropy(
            &Support::LnCounts(&sup_counts),
            (20, 60),
            res0(),
            Method::Separated,
        )
        .unwrap();
        let eb = estimate_entropy(
            &Support::LnCounts(&sub_counts),
            (20, 60),
            res0(),
            Method::Separated,
        )
        .unwrap();
        if eb.rate > es.rate + es.residual + eb.residual + 1e-9 {
            props_ok = false;
        }
        // countable stability: doubling every count leaves the rate as is
        let doubled: Vec<(usize, f64)> = sup_counts
            .iter()
            .map(|&(n, v)| (n, v + LOG2))
            .collect();
        let ed = estimate_entropy(
            &Support::LnCounts(&doubled),
            (20, 60),
            res0(),
            Method::Separated,
        )
        .unwrap();
        if (ed.rate - es.rate).abs() > 1e-9 {
            props_ok = false;
        }
    }
    report(
        8,
        "estimator closed forms + 1000 property cases",
        full_ok && golden_ok && props_ok,
    );
}

#[test]
fn criterion_9_determinism() {
    // two identical-seed runs of the pipeline (pressure -> spectrum ->
    // schedule -> tower -> audit) must emit identical bytes
    let bin = env!("CARGO_BIN_EXE_spectra");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("be.toml");
    std::fs::write(
        &cfg,
        r#"
[system]
alphabet = 2

[cocycle]
depth = 1
per_symbol = [-1.3862943611198906, 0.6931471805599453]

[run]
seed = 17
"#,
    )
    .unwrap();
    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                "verify",
                "--config",
                cfg.to_str().unwrap(),
                "--eps",
                "0.8,0.4",
                "--theta",
                "0.05",
                // a 2-level tower with eps (0.8, 0.4) certifies decay well
                // below the full reference entropy, so pin a target this
                // shallow pipeline can actually audit
                "--h-target",
                "0.4",
            ])
            .arg("--out")
            .arg(out)
            .env("SPECTRA_THREADS", "2")
            .status()
            .unwrap();
        assert!(status.success(), "verify run failed");
    };
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    run(&out1);
    run(&out2);
    let b1 = std::fs::read(&out1).unwrap();
    let b2 = std::fs::read(&out2).unwrap();
    report(9, "byte-identical reports", !b1.is_empty() && b1 == b2);
}
