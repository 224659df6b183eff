//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-10 run by default. The long reproductions 11-14 run when
//! `NBMIMO_LONG=1` is set. Numeric arguments select criteria, e.g.
//! `cargo test --test acceptance -- 4 6`.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are measured and reported like
//! the rest but do not fail the run; everything else must pass.

use std::time::Instant;

use rand::Rng;

use nbmimo::channel::{self, CorrelationSpec};
use nbmimo::code::SparseParityMatrix;
use nbmimo::complexity::{flops_mmse, flops_proposed};
use nbmimo::de::ensemble_entropy;
use nbmimo::decoder::{self, DecoderOptions, PriorBlock};
use nbmimo::detect::DetectorKind;
use nbmimo::experiment::config::{Command, ExperimentConfig, StopConfig, SweepConfig};
use nbmimo::experiment::presets::{preset, PRESET_NAMES};
use nbmimo::experiment::runner::{self, BerRecord};
use nbmimo::galois::{FieldTable, GfSymbol};
use nbmimo::linalg::CMatrix;
use nbmimo::rng;
use nbmimo::stats;

const KNOWN_UNATTAINABLE: &[u32] = &[8, 9];
const LONG: &[u32] = &[11, 12, 13, 14];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let long = std::env::var("NBMIMO_LONG").map(|v| v == "1").unwrap_or(false);
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "flop formulas", c1_flops),
        (2, "GF(8) listing and GF(256) multiplication oracle", c2_galois),
        (3, "encoder output satisfies every parity check", c3_encoder),
        (4, "BP on a tree equals exhaustive marginals", c4_decoder),
        (5, "ensemble entropy closed forms", c5_entropy),
        (6, "capacity closed forms", c6_capacity),
        (7, "KS utility", c7_ks),
        (8, "uncoded MF, simplified MF and MMSE agree at low SNR (200x200)", c8_uncoded),
        (9, "matched-filter Delta_k passes KS at 0.1% (200x200, -2 dB)", c9_ks_delta),
        (10, "600x600 correlated capacity at -11 dB", c10_correlated_capacity),
        (11, "R=1/2 200x200 MMSE within 3.5 dB of capacity at BER 1e-4", c11_fig4),
        (12, "R=1/3 DE threshold 1.6 dB from capacity", c12_threshold),
        (13, "estimation error: 0.1 negligible, 0.2 costs 0.4 dB", c13_estimation_error),
        (14, "R=1/9 600x600 rho=0.3 loses 0.4 dB", c14_correlated_ber),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        if LONG.contains(&id) && !long && !selected.contains(&id) {
            println!("SKIP criterion {id:>2}: {name} (long-running; set NBMIMO_LONG=1)");
            continue;
        }
        let t = Instant::now();
        let out = f();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let note = if !out.pass && KNOWN_UNATTAINABLE.contains(&id) { " [known unattainable]" } else { "" };
        println!("{tag} criterion {id:>2}: {name}: {}{note} ({:.1}s)", out.detail, t.elapsed().as_secs_f64());
        if !out.pass && !KNOWN_UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

/// First SNR where the curve crosses `target`, by linear interpolation of
/// log10(BER) between neighbouring points.
fn crossing(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let lt = target.log10();
    for w in points.windows(2) {
        let ((g0, b0), (g1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 < target {
            if b1 <= 0.0 {
                return Some(g1);
            }
            let (l0, l1) = (b0.log10(), b1.log10());
            return Some(g0 + (lt - l0) / (l1 - l0) * (g1 - g0));
        }
    }
    None
}

fn curve<F: Fn(&BerRecord) -> bool>(records: &[BerRecord], select: F) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = records.iter().filter(|r| select(r)).map(|r| (r.gamma_db, r.ber)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2} dB")).unwrap_or_else(|| "not reached".into())
}

fn carryless_mul(a: u32, b: u32, poly: u32, m: u32) -> u32 {
    let mut acc = 0u32;
    for i in 0..m {
        if (b >> i) & 1 == 1 {
            acc ^= a << i;
        }
    }
    for i in (m..2 * m).rev() {
        if (acc >> i) & 1 == 1 {
            acc ^= poly << (i - m);
        }
    }
    acc
}

// ---------------------------------------------------------------- criteria

fn c1_flops() -> Outcome {
    let p = flops_proposed(200, 2).total();
    let m = flops_mmse(200, 2).total();
    let ratio = 100.0 * p as f64 / m as f64;
    let pass = p == 221_800 && m == 80_563_500 && format!("{ratio:.2}") == "0.28";
    outcome(pass, format!("proposed {p}, mmse {m}, ratio {ratio:.4}%"))
}

fn c2_galois() -> Outcome {
    let f = FieldTable::new(3, Some(0b1011)).unwrap();
    // α^i as (c0, c1, c2), lowest coefficient first.
    let listing: [[u8; 3]; 7] = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [0, 1, 1], [1, 1, 1], [1, 0, 1]];
    let from_listing = |bits: &[u8; 3]| GfSymbol(bits[0] | bits[1] << 1 | bits[2] << 2);
    let mut bad = 0;
    for (i, bits) in listing.iter().enumerate() {
        if f.to_bits(f.alpha_pow(i as i64)) != bits.to_vec() {
            bad += 1;
        }
    }
    if f.to_bits(f.alpha_pow(7)) != vec![1, 0, 0] {
        bad += 1;
    }
    // Full tables: product by exponent sum, sum by bitwise XOR of the listed vectors.
    let elem = |i: Option<usize>| i.map(|i| from_listing(&listing[i % 7])).unwrap_or(GfSymbol::ZERO);
    for a in 0..8usize {
        for b in 0..8usize {
            let ea = if a == 0 { None } else { Some(a - 1) };
            let eb = if b == 0 { None } else { Some(b - 1) };
            let (x, y) = (elem(ea), elem(eb));
            let prod = match (ea, eb) {
                (Some(i), Some(j)) => elem(Some(i + j)),
                _ => GfSymbol::ZERO,
            };
            let sum_bits: Vec<u8> = f.to_bits(x).iter().zip(f.to_bits(y)).map(|(p, q)| p ^ q).collect();
            if f.mul(x, y) != prod || f.to_bits(f.add(x, y)) != sum_bits {
                bad += 1;
            }
        }
    }
    let g = FieldTable::new(8, None).unwrap();
    let poly = g.polynomial();
    let mut mismatches = 0u32;
    for a in 0..256u32 {
        for b in 0..256u32 {
            if g.mul(GfSymbol(a as u8), GfSymbol(b as u8)).0 as u32 != carryless_mul(a, b, poly, 8) {
                mismatches += 1;
            }
        }
    }
    outcome(bad == 0 && mismatches == 0, format!("GF(8) table mismatches {bad}, GF(256) oracle mismatches {mismatches}/65536"))
}

fn c3_encoder() -> Outcome {
    let mut checked = 0;
    let mut failures = 0;
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        if p.config.code.is_none() || !matches!(p.command, Command::Ber | Command::Threshold) {
            continue;
        }
        let base = runner::build_code(&p.config).unwrap();
        for r in p.config.code.as_ref().unwrap().rates().unwrap() {
            let code = base.lower_rate(r).unwrap();
            let mut rr = rng::stream(3, &[checked as u64]);
            let q = code.field().size() as u32;
            for _ in 0..1000 {
                let info: Vec<GfSymbol> = (0..code.k()).map(|_| GfSymbol(rr.random_range(0..q) as u8)).collect();
                let x = code.encode(&info).unwrap();
                let sent = code.transmit_symbols(&x);
                let syndrome_ok = code.syndrome(&x).unwrap().iter().all(|s| s.is_zero());
                if !syndrome_ok || code.extract_info(&x) != info || sent.len() != code.transmitted_symbols() {
                    failures += 1;
                }
            }
            checked += 1;
        }
    }
    outcome(failures == 0 && checked > 0, format!("{checked} preset codes x 1000 frames, {failures} failures"))
}

fn c4_decoder() -> Outcome {
    let f = FieldTable::new(2, None).unwrap();
    let s = |v| GfSymbol(v);
    // Tree: check 0 on v0..v2, check 1 on v2, v3.
    let m = SparseParityMatrix::from_edges(2, 2, 4, [(0, 0, s(1)), (0, 1, s(2)), (0, 2, s(3)), (1, 2, s(1)), (1, 3, s(2))]).unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for trial in 0..20u64 {
        let mut r = rng::stream(trial, &[0x7ee]);
        let raw: Vec<f64> = (0..16).map(|_| r.random::<f64>() + 0.01).collect();
        let priors = PriorBlock::from_raw(raw, 4).unwrap();
        let opts = DecoderOptions { l_max: 8, early_stop: false, keep_posteriors: true };
        let post = decoder::decode(&priors, &m, &f, opts).unwrap().posteriors.unwrap();
        let mut marg = vec![0.0; 16];
        count = 0;
        for w in 0..256usize {
            let x: Vec<GfSymbol> = (0..4).map(|i| s(((w >> (2 * i)) & 3) as u8)).collect();
            if !m.is_codeword(&x, &f) {
                continue;
            }
            count += 1;
            let p: f64 = (0..4).map(|v| priors.row(v)[x[v].value()]).product();
            for v in 0..4 {
                marg[v * 4 + x[v].value()] += p;
            }
        }
        for v in 0..4 {
            let z: f64 = marg[v * 4..v * 4 + 4].iter().sum();
            for a in 0..4 {
                worst = worst.max((marg[v * 4 + a] / z - post.row(v)[a]).abs());
            }
        }
    }
    outcome(worst < 1e-10 && count <= 16, format!("{count} codewords, max deviation {worst:.2e} over 20 prior draws"))
}

fn c5_entropy() -> Outcome {
    let q = 256;
    let uniform = ensemble_entropy(&vec![1.0 / q as f64; 4 * q], q);
    let mut delta = vec![0.0; 2 * q];
    delta[0] = 1.0;
    delta[q + 200] = 1.0;
    let d = ensemble_entropy(&delta, q);
    let mut half = vec![0.0; q];
    half[0] = 0.5;
    half[1] = 0.5;
    let h = ensemble_entropy(&half, q);
    let pass = (uniform - 1.0).abs() < 1e-12 && d == 0.0 && h == 0.125;
    outcome(pass, format!("uniform {uniform:.12}, delta {:.1}, half-half {h}", d.abs()))
}

fn c6_capacity() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1usize, 4, 16, 64] {
        for db in [-10.0, 0.0, 10.0] {
            let g = channel::db_to_linear(db);
            let c = channel::capacity_of(&CMatrix::identity(n, n), g);
            let exact = n as f64 * (1.0 + g / n as f64).log2();
            worst = worst.max((c - exact).abs());
        }
    }
    // E[log2(1 + γ|h|²)], |h|² ~ Exp(1), via x = -ln(1-u) on a fine midpoint grid.
    let db = 5.0;
    let g = channel::db_to_linear(db);
    let steps = 2_000_000;
    let grid: f64 = (0..steps)
        .map(|i| {
            let u = (i as f64 + 0.5) / steps as f64;
            (1.0 + g * -(1.0 - u).ln()).log2()
        })
        .sum::<f64>()
        / steps as f64;
    let mc = channel::ergodic_capacity(1, 1, db, 200_000, 11, None).unwrap();
    let z = (mc.mean - grid).abs() / mc.std_err;
    outcome(worst < 1e-12 && z < 3.0, format!("identity max error {worst:.1e}; 1x1 at 5 dB: MC {:.5} vs grid {grid:.5} ({z:.2} SE)", mc.mean))
}

fn c7_ks() -> Outcome {
    let mut r = rng::stream(21, &[]);
    let g: Vec<f64> = (0..100_000).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let u: Vec<f64> = (0..100_000).map(|_| r.random::<f64>()).collect();
    let a = stats::ks_gaussian_test(&g, 1e-3).unwrap();
    let b = stats::ks_gaussian_test(&u, 1e-3).unwrap();
    outcome(a.passed && !b.passed, format!("gaussian p={:.3}, uniform p={:.1e}", a.p_value, b.p_value))
}

fn uncoded_config(gammas: SweepConfig, uses: usize) -> ExperimentConfig {
    let mut c = preset("fig2").unwrap().config;
    c.system.n_t = 200;
    c.system.n_r = 200;
    c.sweep = gammas;
    c.stop = StopConfig { min_bit_errors: usize::MAX, max_uses: uses, ..StopConfig::default() };
    c.seed = 8;
    c
}

fn c8_uncoded() -> Outcome {
    let cfg = uncoded_config(SweepConfig::range(-10.0, -2.0, 1.0), 500);
    let out = runner::run_uncoded(&cfg, &runner::quiet).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut worst_at = 0.0;
    for g in cfg.sweep.points().unwrap() {
        let at: Vec<&BerRecord> = out.records.iter().filter(|r| r.gamma_db == g).collect();
        for a in &at {
            for b in &at {
                let se = (a.ber_se.powi(2) + b.ber_se.powi(2)).sqrt();
                let z = (a.ber - b.ber).abs() / se;
                if z > worst_z {
                    worst_z = z;
                    worst_at = g;
                }
            }
        }
    }
    // Horizontal distance to the unfaded AWGN curve at 1e-2, searched up to 10 dB.
    let awgn = stats::bpsk_awgn_snr_for_ber(1e-2);
    let wide = uncoded_config(SweepConfig::range(-10.0, 10.0, 1.0), 200);
    let wide_out = runner::run_uncoded(&wide, &runner::quiet).unwrap();
    let mut gaps = Vec::new();
    let mut near = true;
    for k in [DetectorKind::Mmse, DetectorKind::MfExact, DetectorKind::MfSimplified] {
        let x = crossing(&curve(&wide_out.records, |r| r.detector == k), 1e-2);
        near &= x.map(|x| (x - awgn).abs() <= 0.2).unwrap_or(false);
        gaps.push(format!("{k} {}", fmt_opt(x)));
    }
    let agree = worst_z <= 3.0;
    outcome(
        agree && near,
        format!(
            "largest pairwise gap {worst_z:.1} SE at {worst_at} dB; BER 1e-2 at [{}] vs AWGN {awgn:.2} dB",
            gaps.join(", ")
        ),
    )
}

fn c9_ks_delta() -> Outcome {
    let cfg = preset("fig8").unwrap().config;
    let out = runner::run_ksdelta(&cfg, &runner::quiet).unwrap();
    let r = out.record;
    outcome(r.passed, format!("n={}, D={:.4}, p={:.2e}, skewness {:.3}", r.realizations, r.ks_statistic, r.p_value, r.skewness))
}

fn c10_correlated_capacity() -> Outcome {
    let n = 600;
    let mut corrs = vec![None];
    for rho in [0.3, 0.4, 0.5] {
        corrs.push(Some(CorrelationSpec::exponential(n, n, rho, rho).unwrap()));
    }
    let sweep = channel::capacity_sweep(n, n, -11.0, 1000, 13, &corrs).unwrap();
    let c0 = sweep.estimates[0].mean;
    let targets = [0.85, 1.5, 2.7];
    let losses: Vec<f64> = (1..4).map(|j| sweep.losses[j].mean).collect();
    let pass = (c0 - 64.0).abs() <= 3.0 && losses.iter().zip(targets).all(|(l, t)| (l - t).abs() <= 0.3);
    outcome(pass, format!("C={c0:.2} bps/Hz, losses {:.2}/{:.2}/{:.2} bits", losses[0], losses[1], losses[2]))
}

fn c11_fig4() -> Outcome {
    let cfg = preset("fig4").unwrap().config;
    let out = runner::run_ber(&cfg, &|l| eprintln!("{l}")).unwrap();
    let x = crossing(&curve(&out.records, |_| true), 1e-4);
    let cap = channel::snr_for_capacity(200, 200, 100.0, 1000, 1).unwrap();
    let gap = x.map(|x| x - cap);
    outcome(
        gap.map(|g| (g - 3.5).abs() <= 0.5).unwrap_or(false),
        format!("BER 1e-4 at {}, capacity {cap:.2} dB, gap {}", fmt_opt(x), fmt_opt(gap)),
    )
}

fn c12_threshold() -> Outcome {
    let mut cfg = preset("fig9").unwrap().config;
    cfg.code.as_mut().unwrap().rate = vec!["1/3".into()];
    cfg.de.gamma0_db = vec![cfg.de.gamma0_db[0]];
    let out = runner::run_threshold(&cfg, &|l| eprintln!("{l}")).unwrap();
    let r = &out.records[0];
    outcome(
        (r.gap_db - 1.6).abs() <= 0.3,
        format!("threshold {:.2} dB, capacity {:.2} dB, gap {:.2} dB", r.threshold_db, r.capacity_snr_db, r.gap_db),
    )
}

fn c13_estimation_error() -> Outcome {
    let cfg = preset("fig12").unwrap().config;
    let out = runner::run_ber(&cfg, &|l| eprintln!("{l}")).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [DetectorKind::Mmse, DetectorKind::MfSimplified] {
        let at = |e: f64| crossing(&curve(&out.records, |r| r.detector == k && r.sigma2_e == e), 1e-4);
        let (x0, x1, x2) = (at(0.0), at(0.1), at(0.2));
        match (x0, x1, x2) {
            (Some(a), Some(b), Some(c)) => {
                pass &= (b - a).abs() < 0.1 && ((c - a) - 0.4).abs() <= 0.2;
                parts.push(format!("{k}: +{:.2}/+{:.2} dB", b - a, c - a));
            }
            _ => {
                pass = false;
                parts.push(format!("{k}: crossings {} {} {}", fmt_opt(x0), fmt_opt(x1), fmt_opt(x2)));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c14_correlated_ber() -> Outcome {
    let mut cfg = preset("fig15").unwrap().config;
    cfg.channel.rho = vec![0.0, 0.3];
    let out = runner::run_ber(&cfg, &|l| eprintln!("{l}")).unwrap();
    let at = |rho: f64| crossing(&curve(&out.records, |r| r.rho_t == rho), 1e-4);
    let (a, b) = (at(0.0), at(0.3));
    let loss = a.zip(b).map(|(a, b)| b - a);
    outcome(
        loss.map(|l| (l - 0.4).abs() <= 0.2).unwrap_or(false),
        format!("rho=0 at {}, rho=0.3 at {}, loss {}", fmt_opt(a), fmt_opt(b), fmt_opt(loss)),
    )
}
