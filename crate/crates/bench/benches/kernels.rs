use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;

use nbmimo::channel::{self, gray_constellation};
use nbmimo::complexity::NoTally;
use nbmimo::decoder::{self, DecoderOptions, PriorBlock};
use nbmimo::detect::{self, DetectorKind, MfMode, MmseFilter};
use nbmimo::{rng, CodeSpec, FieldTable, GfSymbol};

fn galois(c: &mut Criterion) {
    let f = FieldTable::new(8, None).unwrap();
    let xs: Vec<GfSymbol> = (0..=255u8).map(GfSymbol).collect();
    c.bench_function("gf256_mul_65536", |b| {
        b.iter(|| {
            let mut acc = GfSymbol::ZERO;
            for &a in &xs {
                for &x in &xs {
                    acc = f.add(acc, f.mul(a, x));
                }
            }
            black_box(acc)
        })
    });
}

fn bp(c: &mut Criterion) {
    let field = Arc::new(FieldTable::new(8, None).unwrap());
    let code = CodeSpec::regular(field, 300, 4, 1).unwrap();
    let mut r = rng::stream(3, &[]);
    let info: Vec<GfSymbol> = (0..code.k()).map(|_| GfSymbol(r.random())).collect();
    let x = code.encode(&info).unwrap();
    // Mildly noisy priors: the right symbol carries a bit more mass.
    let mut data = vec![1.0; code.n() * 256];
    for (v, s) in x.iter().enumerate() {
        for p in &mut data[v * 256..(v + 1) * 256] {
            *p = 0.5 + r.random::<f64>();
        }
        data[v * 256 + s.value()] += 3.0;
    }
    let priors = PriorBlock::from_raw(data, 256).unwrap();
    let mut group = c.benchmark_group("bp");
    group.sample_size(10);
    group.bench_function("decode_n300_dc4_10_iter", |b| {
        let opts = DecoderOptions { l_max: 10, early_stop: false, keep_posteriors: false };
        b.iter(|| black_box(decoder::decode(&priors, code.matrix(), code.field(), opts).unwrap()))
    });
    group.finish();
}

fn detection(c: &mut Criterion) {
    let mut r = rng::stream(5, &[]);
    let n = 200;
    let h = channel::sample_iid(n, n, &mut r);
    let cons = gray_constellation(2, 1.0 / n as f64).unwrap();
    let s: Vec<_> = (0..n).map(|_| cons.point(r.random_range(0..2))).collect();
    let s2 = channel::snr_to_noise(-2.0, 1.0);
    let y = channel::transmit(&h, &s, s2, &mut r);
    let mut group = c.benchmark_group("detect_200x200");
    group.sample_size(20);
    group.bench_function("mmse_factor_and_estimate", |b| {
        b.iter(|| black_box(MmseFilter::new(&h, 1.0, 2.0 * s2).unwrap().estimate(&y).unwrap()))
    });
    group.bench_function("mf_simplified", |b| {
        b.iter(|| black_box(detect::mf_detect(&h, &y, MfMode::Simplified, &mut NoTally).unwrap()))
    });
    group.bench_function("mf_exact_with_sinr", |b| {
        b.iter(|| black_box(detect::detect(DetectorKind::MfExact, &h, &y, 1.0, s2).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, galois, bp, detection);
criterion_main!(benches);
