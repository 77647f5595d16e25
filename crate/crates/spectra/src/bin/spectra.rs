//! Command-line front end: pressure and spectrum curves, skeleton and
//! schedule construction, tower builds with envelope checks, distribution
//! audits, entropy estimation, and closed-form oracles.
//!
//! Exit codes: 0 on success, 1 when an asserted invariant fails, 2 on
//! usage or configuration errors. All outputs are deterministic for a
//! fixed seed and any worker count (fixed-order reductions); the worker
//! count comes from SPECTRA_THREADS when set.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spectra::concatenation::{
    build_schedule, build_tower, exponent_envelope_check, extend_backward,
    level_skeletons, Schedule,
};
use spectra::config::ModelConfig;
use spectra::distribution::{edp_certificate, local_entropy_audit, CylinderMeasure};
use spectra::dp::ln_biguint;
use spectra::entropy::{capacitive_entropies, estimate_entropy, Method, Support};
use spectra::error::SpectraError;
use spectra::legendre::{bernoulli_spectrum_oracle, spectrum};
use spectra::pressure::{linspace, pressure_full};
use spectra::skeleton::extract_preskeleton;
use spectra::symbolic::{CenterCocycle, Resolution, SymbolicSystem, Word};

#[derive(Parser)]
#[command(name = "spectra", version, about = "entropy spectra of symbolic systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Model configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in reports (overrides the config's).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pressure curve P(q) on a q-grid.
    Pressure {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        q_min: Option<f64>,
        #[arg(long)]
        q_max: Option<f64>,
        #[arg(long)]
        q_steps: Option<usize>,
    },
    /// Entropy spectrum H(alpha) on an alpha-grid.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, default_value_t = 101)]
        alpha_steps: usize,
        /// Compare against the Bernoulli closed form (full shifts only)
        /// and fail if the worst difference exceeds the tolerance.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Certified pre-skeleton extraction at one exponent.
    Skeleton {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 400)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        res: usize,
        /// Required certified rate; absent means report-only.
        #[arg(long)]
        h_target: Option<f64>,
    },
    /// Build and check a concatenation schedule.
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Decreasing epsilon sequence, comma separated.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        res: usize,
    },
    /// Build the family tower and run the envelope check.
    BuildSet {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1e6)]
        budget: f64,
        /// Sub-sample size when the tower exceeds the budget.
        #[arg(long, default_value_t = 128)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        res: usize,
        /// Also build the mirrored backward extension.
        #[arg(long)]
        backward: bool,
    },
    /// Distribution audit and entropy lower-bound certificate on the tower.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        theta: f64,
        #[arg(long, default_value_t = 1e6)]
        budget: f64,
        #[arg(long, default_value_t = 128)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        res: usize,
        /// Entropy target; default is the spectrum's limit at 0 from below.
        #[arg(long)]
        h_target: Option<f64>,
    },
    /// Entropy rate estimation from a word list.
    Entropy {
        /// One word per line.
        #[arg(long)]
        input: PathBuf,
        /// Depth range lo:hi.
        #[arg(long)]
        n: String,
        #[arg(long, default_value_t = 0)]
        res: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form Bernoulli/Besicovitch-Eggleston reference values.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Exponents to evaluate H(alpha) at, comma separated.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// q values to evaluate the pressure at, comma separated.
        #[arg(long, value_delimiter = ',')]
        q: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Worker count: SPECTRA_THREADS, else the machine's parallelism.
fn workers() -> usize {
    std::env::var("SPECTRA_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
}

/// Applies `f` across items on the worker pool, preserving input order.
fn par_map<T: Sync, U: Send + Default + Clone>(
    items: &[T],
    f: impl Fn(&T) -> U + Sync,
) -> Vec<U> {
    let n_workers = workers().min(items.len().max(1));
    let mut out = vec![U::default(); items.len()];
    let chunk = items.len().div_ceil(n_workers);
    std::thread::scope(|s| {
        for (inp, outp) in items.chunks(chunk).zip(out.chunks_mut(chunk)) {
            s.spawn(|| {
                for (i, o) in inp.iter().zip(outp.iter_mut()) {
                    *o = f(i);
                }
            });
        }
    });
    out
}

struct Loaded {
    sys: SymbolicSystem,
    c: CenterCocycle,
    cfg: ModelConfig,
    config_sha256: String,
    seed: u64,
}

fn load(common: &Common) -> Result<Loaded, SpectraError> {
    let (cfg, config_sha256) = ModelConfig::load(&common.config)?;
    let (sys, c) = cfg.build()?;
    let seed = common.seed.or(cfg.run.seed).unwrap_or(0);
    Ok(Loaded {
        sys,
        c,
        cfg,
        config_sha256,
        seed,
    })
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<(), SpectraError> {
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

/// Fixed-width float formatting so identical runs emit identical bytes.
fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn csv_header(config_sha256: &str, seed: u64) -> String {
    format!("# config_sha256={config_sha256} seed={seed}\n")
}

#[derive(Serialize)]
struct CurveReport<'a> {
    config_sha256: &'a str,
    seed: u64,
    columns: Vec<&'a str>,
    rows: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_diff: Option<f64>,
    pass: bool,
}

fn json_body<T: Serialize>(v: &T) -> Result<String, SpectraError> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| SpectraError::Config(format!("serialize: {e}")))
}

fn parse_range(s: &str) -> Result<(usize, usize), SpectraError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| SpectraError::Config(format!("range '{s}' is not lo:hi")))?;
    let lo = lo
        .parse()
        .map_err(|_| SpectraError::Config(format!("bad range bound '{lo}'")))?;
    let hi = hi
        .parse()
        .map_err(|_| SpectraError::Config(format!("bad range bound '{hi}'")))?;
    Ok((lo, hi))
}

fn run(cmd: Cmd) -> Result<ExitCode, SpectraError> {
    match cmd {
        Cmd::Pressure {
            common,
            format,
            q_min,
            q_max,
            q_steps,
        } => {
            let l = load(&common)?;
            let q_min = q_min.or(l.cfg.run.q_min).unwrap_or(-20.0);
            let q_max = q_max.or(l.cfg.run.q_max).unwrap_or(20.0);
            let steps = q_steps.or(l.cfg.run.q_steps).unwrap_or(401);
            if q_min >= q_max {
                return Err(SpectraError::Config("q grid must be ordered".into()));
            }
            let grid = linspace(q_min, q_max, steps);
            let values = par_map(&grid, |&q| pressure_full(&l.sys, &l.c, q).unwrap_or(f64::NAN));
            if values.iter().any(|v| v.is_nan()) {
                return Err(SpectraError::Config("pressure evaluation failed".into()));
            }
            let body = match format {
                Format::Csv => {
                    let mut s = csv_header(&l.config_sha256, l.seed);
                    s.push_str("q,pressure\n");
                    for (q, p) in grid.iter().zip(&values) {
                        s.push_str(&format!("{},{}\n", fmt(*q), fmt(*p)));
                    }
                    s
                }
                Format::Json => json_body(&CurveReport {
                    config_sha256: &l.config_sha256,
                    seed: l.seed,
                    columns: vec!["q", "pressure"],
                    rows: grid.iter().zip(&values).map(|(&q, &p)| vec![q, p]).collect(),
                    max_abs_diff: None,
                    pass: true,
                })?,
            };
            emit(&common.out, &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Spectrum {
            common,
            format,
            alpha_steps,
            oracle,
            tolerance,
        } => {
            let l = load(&common)?;
            let (lo, hi) = l.c.value_range();
            let margin = 1e-6 * (hi - lo).max(1.0);
            let grid = linspace(lo + margin, hi - margin, alpha_steps);
            let curve = spectrum(&l.sys, &l.c, &grid)?;
            let oracle_vals: Option<Vec<f64>> = if oracle {
                let phi = l.c.symbol_values().ok_or_else(|| {
                    SpectraError::Unsupported("oracle needs a depth-1 cocycle".into())
                })?;
                if !l.sys.is_full_shift() {
                    return Err(SpectraError::Unsupported(
                        "oracle closed form covers full shifts only".into(),
                    ));
                }
                let phi = phi.to_vec();
                Some(par_map(&curve.alpha_grid, |&a| {
                    bernoulli_spectrum_oracle(&phi, a).unwrap_or(f64::NAN)
                }))
            } else {
                None
            };
            let max_abs_diff = oracle_vals.as_ref().map(|ov| {
                curve
                    .values
                    .iter()
                    .zip(ov)
                    .map(|(h, o)| (h - o).abs())
                    .fold(0.0f64, f64::max)
            });
            let pass = max_abs_diff.is_none_or(|d| d <= tolerance);
            let body = match format {
                Format::Csv => {
                    let mut s = csv_header(&l.config_sha256, l.seed);
                    match (&oracle_vals, max_abs_diff) {
                        (Some(ov), _) => {
                            s.push_str("alpha,entropy,oracle,diff\n");
                            for ((a, h), o) in
                                curve.alpha_grid.iter().zip(&curve.values).zip(ov)
                            {
                                s.push_str(&format!(
                                    "{},{},{},{}\n",
                                    fmt(*a),
                                    fmt(*h),
                                    fmt(*o),
                                    fmt((h - o).abs())
                                ));
                            }
                        }
                        (None, _) => {
                            s.push_str("alpha,entropy\n");
                            for (a, h) in curve.alpha_grid.iter().zip(&curve.values) {
                                s.push_str(&format!("{},{}\n", fmt(*a), fmt(*h)));
                            }
                        }
                    }
                    s
                }
                Format::Json => {
                    let rows = curve
                        .alpha_grid
                        .iter()
                        .zip(&curve.values)
                        .enumerate()
                        .map(|(i, (&a, &h))| match &oracle_vals {
                            Some(ov) => vec![a, h, ov[i], (h - ov[i]).abs()],
                            None => vec![a, h],
                        })
                        .collect();
                    json_body(&CurveReport {
                        config_sha256: &l.config_sha256,
                        seed: l.seed,
                        columns: if oracle_vals.is_some() {
                            vec!["alpha", "entropy", "oracle", "diff"]
                        } else {
                            vec!["alpha", "entropy"]
                        },
                        rows,
                        max_abs_diff,
                        pass,
                    })?
                }
            };
            emit(&common.out, &body)?;
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Skeleton {
            common,
            alpha,
            eps,
            m,
            res,
            h_target,
        } => {
            let l = load(&common)?;
            let skel = extract_preskeleton(
                &l.sys,
                &l.c,
                alpha,
                eps,
                eps,
                h_target.unwrap_or(0.0),
                m,
                Resolution::new(res),
                None,
            )?;
            let verified = skel.verify(&l.sys, &l.c).is_ok();
            #[derive(Serialize)]
            struct SkeletonReport<'a> {
                config_sha256: &'a str,
                seed: u64,
                alpha: f64,
                eps: f64,
                m: usize,
                resolution: usize,
                ln_cardinality: f64,
                certified_rate: f64,
                rate_target_met: bool,
                verified: bool,
            }
            let rate_target_met = h_target.is_none_or(|h| skel.certified_rate >= h);
            let body = json_body(&SkeletonReport {
                config_sha256: &l.config_sha256,
                seed: l.seed,
                alpha,
                eps,
                m,
                resolution: res,
                ln_cardinality: ln_biguint(&skel.cardinality),
                certified_rate: skel.certified_rate,
                rate_target_met,
                verified,
            })?;
            emit(&common.out, &body)?;
            Ok(if verified && rate_target_met {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Schedule { common, eps, res } => {
            let l = load(&common)?;
            let sched = build_and_check_schedule(&l, &eps, res)?;
            let checks = sched.check_inequalities();
            let all_ok = checks.iter().all(|c| c.ok);
            #[derive(Serialize)]
            struct ScheduleReport<'a> {
                config_sha256: &'a str,
                seed: u64,
                schedule: &'a Schedule,
                checks: &'a [spectra::concatenation::InequalityCheck],
                pass: bool,
            }
            let body = json_body(&ScheduleReport {
                config_sha256: &l.config_sha256,
                seed: l.seed,
                schedule: &sched,
                checks: &checks,
                pass: all_ok,
            })?;
            emit(&common.out, &body)?;
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::BuildSet {
            common,
            eps,
            budget,
            sample,
            res,
            backward,
        } => {
            let l = load(&common)?;
            let resolution = Resolution::new(res);
            let sched = build_and_check_schedule(&l, &eps, res)?;
            let skels = level_skeletons(&l.sys, &l.c, &sched, resolution)?;
            let tower = build_tower(
                &l.sys,
                &l.c,
                sched,
                skels,
                budget,
                Some((sample, l.seed)),
            )?;
            let members = tower.check_members(sample);
            let envelope = exponent_envelope_check(&tower, &l.sys, &l.c, &members)?;
            let backward_ok = if backward {
                let grid = {
                    let (lo, hi) = l.c.value_range();
                    let margin = 1e-6 * (hi - lo).max(1.0);
                    linspace(lo + margin, hi - margin, 201)
                };
                let sc = spectrum(&l.sys, &l.c, &grid)?;
                let sched_back = spectra::concatenation::build_schedule_signed(
                    &l.sys,
                    &l.c,
                    &sc,
                    &eps,
                    resolution,
                    spectra::pressure::ExponentSign::Positive,
                )?;
                let fwd = tower.member_word(
                    &l.sys,
                    &members[0],
                    tower.word_len().min(256),
                )?;
                Some(
                    extend_backward(&l.sys, &l.c, &fwd, &sched_back, resolution)
                        .is_ok(),
                )
            } else {
                None
            };
            #[derive(Serialize)]
            struct TowerReport<'a> {
                config_sha256: &'a str,
                seed: u64,
                schedule: &'a Schedule,
                ln_cardinalities: Vec<f64>,
                word_len: usize,
                subsampled: bool,
                envelope: &'a spectra::concatenation::EnvelopeReport,
                #[serde(skip_serializing_if = "Option::is_none")]
                backward_ok: Option<bool>,
                pass: bool,
            }
            let pass = envelope.pass && backward_ok.unwrap_or(true);
            let body = json_body(&TowerReport {
                config_sha256: &l.config_sha256,
                seed: l.seed,
                schedule: &tower.sched,
                ln_cardinalities: tower.card_e.iter().map(ln_biguint).collect(),
                word_len: tower.word_len(),
                subsampled: tower.sample_seed.is_some(),
                envelope: &envelope,
                backward_ok,
                pass,
            })?;
            emit(&common.out, &body)?;
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Verify {
            common,
            eps,
            theta,
            budget,
            sample,
            res,
            h_target,
        } => {
            let l = load(&common)?;
            let resolution = Resolution::new(res);
            let (grid_lo, grid_hi) = l.c.value_range();
            let margin = 1e-6 * (grid_hi - grid_lo).max(1.0);
            let grid = linspace(grid_lo + margin, grid_hi - margin, 401);
            let sc = spectrum(&l.sys, &l.c, &grid)?;
            let h_target = match h_target {
                Some(h) => h,
                None => sc
                    .one_sided_limits_at_zero()
                    .0
                    .ok_or_else(|| SpectraError::Config("no limit at 0 from below".into()))?,
            };
            let sched = build_schedule(&l.sys, &l.c, &sc, &eps, resolution)?;
            sched.validate()?;
            let skels = level_skeletons(&l.sys, &l.c, &sched, resolution)?;
            let tower = build_tower(
                &l.sys,
                &l.c,
                sched,
                skels,
                budget,
                Some((sample, l.seed)),
            )?;
            let m = CylinderMeasure::Tower {
                tower: &tower,
                sys: &l.sys,
            };
            let n_hi = tower.word_len() - res;
            let audit = local_entropy_audit(&m, h_target, theta, (1, n_hi), resolution)?;
            let cert = match audit.n_stable {
                Some(n0) if n0 < n_hi => {
                    Some(edp_certificate(&m, h_target, theta, (n0, n_hi), resolution)?)
                }
                _ => None,
            };
            #[derive(Serialize)]
            struct VerifyReport<'a> {
                config_sha256: &'a str,
                seed: u64,
                h_target: f64,
                theta: f64,
                audit: &'a spectra::distribution::AuditReport,
                certificate: &'a Option<spectra::distribution::EdpCertificate>,
                pass: bool,
            }
            let pass = cert.is_some();
            let body = json_body(&VerifyReport {
                config_sha256: &l.config_sha256,
                seed: l.seed,
                h_target,
                theta,
                audit: &audit,
                certificate: &cert,
                pass,
            })?;
            emit(&common.out, &body)?;
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Entropy { input, n, res, out } => {
            let raw = std::fs::read_to_string(&input)?;
            let words = raw
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(Word::parse)
                .collect::<Result<Vec<_>, _>>()?;
            let n_range = parse_range(&n)?;
            let resolution = Resolution::new(res);
            let sup = Support::Words(&words);
            let est = estimate_entropy(&sup, n_range, resolution, Method::Separated)?;
            let (cap_lo, cap_hi) = capacitive_entropies(&sup, n_range, resolution)?;
            #[derive(Serialize)]
            struct EntropyReport {
                words: usize,
                estimate: spectra::entropy::EntropyEstimate,
                capacity_lower: f64,
                capacity_upper: f64,
            }
            let body = json_body(&EntropyReport {
                words: words.len(),
                estimate: est,
                capacity_lower: cap_lo,
                capacity_upper: cap_hi,
            })?;
            emit(&out, &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { common, alpha, q } => {
            let l = load(&common)?;
            if !l.sys.is_full_shift() || l.c.depth() != 1 {
                return Err(SpectraError::Unsupported(
                    "closed forms cover depth-1 cocycles on full shifts only".into(),
                ));
            }
            let phi = l.c.symbol_values().expect("depth-1").to_vec();
            let entropy: Vec<(f64, Option<f64>)> = alpha
                .iter()
                .map(|&a| (a, bernoulli_spectrum_oracle(&phi, a)))
                .collect();
            let pressure: Vec<(f64, f64)> = q
                .iter()
                .map(|&qv| {
                    (
                        qv,
                        phi.iter().map(|p| (qv * p).exp()).sum::<f64>().ln(),
                    )
                })
                .collect();
            #[derive(Serialize)]
            struct OracleReport<'a> {
                config_sha256: &'a str,
                seed: u64,
                entropy: Vec<(f64, Option<f64>)>,
                pressure: Vec<(f64, f64)>,
            }
            let body = json_body(&OracleReport {
                config_sha256: &l.config_sha256,
                seed: l.seed,
                entropy,
                pressure,
            })?;
            emit(&common.out, &body)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Spectrum + schedule construction shared by schedule/build-set.
fn build_and_check_schedule(
    l: &Loaded,
    eps: &[f64],
    res: usize,
) -> Result<Schedule, SpectraError> {
    if eps.is_empty() {
        return Err(SpectraError::Config("at least one epsilon level".into()));
    }
    let (lo, hi) = l.c.value_range();
    let margin = 1e-6 * (hi - lo).max(1.0);
    let grid = linspace(lo + margin, hi - margin, 401);
    let sc = spectrum(&l.sys, &l.c, &grid)?;
    build_schedule(&l.sys, &l.c, &sc, eps, Resolution::new(res))
}
