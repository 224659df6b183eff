use std::sync::Arc;

use proptest::prelude::*;

use nbmimo::channel::{self, CorrelationSpec, SymbolMapper};
use nbmimo::code::CodeSpec;
use nbmimo::complexity::{flops_mmse, flops_proposed, NoTally};
use nbmimo::decoder::{self, DecoderOptions, PriorBlock};
use nbmimo::detect::{self, LikelihoodBlock};
use nbmimo::galois::{FieldTable, GfSymbol};
use nbmimo::linalg::CMatrix;
use nbmimo::rng;

fn field(m: u32) -> FieldTable {
    FieldTable::new(m, None).unwrap()
}

proptest! {
    #[test]
    fn field_axioms(m in prop::sample::select(vec![2u32, 3, 4, 8]), a: u8, b: u8, c: u8) {
        let f = field(m);
        let mask = ((1u16 << m) - 1) as u8;
        let (a, b, c) = (GfSymbol(a & mask), GfSymbol(b & mask), GfSymbol(c & mask));
        prop_assert_eq!(f.mul(a, b), f.mul(b, a));
        prop_assert_eq!(f.add(a, b), f.add(b, a));
        prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        prop_assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.mul(a, GfSymbol(1)), a);
        prop_assert_eq!(f.from_bits(&f.to_bits(a)).unwrap(), a);
        if !a.is_zero() {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), GfSymbol(1));
        }
    }

    #[test]
    fn encoding_is_linear(seed: u64, a in 1u8..=255) {
        let f = Arc::new(field(8));
        let code = CodeSpec::regular(f.clone(), 36, 3, 2).unwrap();
        let mut r = rng::stream(seed, &[]);
        let draw = |r: &mut rng::SimRng| (0..code.k()).map(|_| GfSymbol(rand::Rng::random(r))).collect::<Vec<_>>();
        let (u, v) = (draw(&mut r), draw(&mut r));
        let a = GfSymbol(a);
        let mix: Vec<GfSymbol> = u.iter().zip(&v).map(|(&x, &y)| f.add(f.mul(a, x), y)).collect();
        let (cu, cv, cm) = (code.encode(&u).unwrap(), code.encode(&v).unwrap(), code.encode(&mix).unwrap());
        let want: Vec<GfSymbol> = cu.iter().zip(&cv).map(|(&x, &y)| f.add(f.mul(a, x), y)).collect();
        prop_assert_eq!(cm, want);
        prop_assert!(code.syndrome(&cu).unwrap().iter().all(|s| s.is_zero()));
    }

    /// Scaling edge coefficients by a constant `c` while relabelling priors
    /// by `x ↦ x/c` permutes the posteriors the same way.
    #[test]
    fn decoder_permutation_equivariance(seed: u64, c in 2u8..=15) {
        let f = Arc::new(field(4));
        let code = CodeSpec::regular(f.clone(), 12, 3, 5).unwrap();
        let m = code.matrix();
        let scaled = nbmimo::code::SparseParityMatrix::from_edges(
            4,
            m.n_checks(),
            m.n_vars(),
            m.rows().iter().enumerate().flat_map(|(r, row)| row.iter().map(move |&(v, a)| (r, v, a))).map(|(r, v, a)| (r, v, f.mul(a, GfSymbol(c)))),
        ).unwrap();
        let mut r = rng::stream(seed, &[]);
        let raw: Vec<f64> = (0..12 * 16).map(|_| rand::Rng::random::<f64>(&mut r) + 1e-3).collect();
        let p = PriorBlock::from_raw(raw.clone(), 16).unwrap();
        let cinv = f.inv(GfSymbol(c)).unwrap();
        let mut permuted = vec![0.0; raw.len()];
        for v in 0..12 {
            for x in 0..16u8 {
                permuted[v * 16 + f.mul(GfSymbol(x), cinv).value()] = raw[v * 16 + x as usize];
            }
        }
        let p2 = PriorBlock::from_raw(permuted, 16).unwrap();
        let opts = DecoderOptions { l_max: 6, early_stop: false, keep_posteriors: true };
        let a = decoder::decode(&p, m, &f, opts).unwrap().posteriors.unwrap();
        let b = decoder::decode(&p2, &scaled, &f, opts).unwrap().posteriors.unwrap();
        for v in 0..12 {
            let ra = a.row(v);
            prop_assert!((ra.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for x in 0..16u8 {
                let y = f.mul(GfSymbol(x), cinv).value();
                prop_assert!((ra[x as usize] - b.row(v)[y]).abs() < 1e-9);
            }
        }
    }

    /// Priors are normalised, and rescaling one stream's likelihoods changes nothing.
    #[test]
    fn priors_normalised_and_scale_invariant(seed: u64, scale in 1e-3f64..1e3, stream in 0usize..8) {
        let f = field(8);
        let mapper = SymbolMapper::new(8, 1, 8).unwrap();
        let mut r = rng::stream(seed, &[]);
        let rows: Vec<f64> = (0..16).map(|_| rand::Rng::random::<f64>(&mut r) + 1e-6).collect();
        let base = detect::symbol_priors(&LikelihoodBlock::from_rows(2, rows.clone()), &mapper, 1, f.size(), &mut NoTally).unwrap();
        let mut scaled = rows;
        scaled[2 * stream] *= scale;
        scaled[2 * stream + 1] *= scale;
        let other = detect::symbol_priors(&LikelihoodBlock::from_rows(2, scaled), &mapper, 1, f.size(), &mut NoTally).unwrap();
        prop_assert!((base.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in base.row(0).iter().zip(other.row(0)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(base.hard_decisions(), other.hard_decisions());
    }

    #[test]
    fn capacity_monotone_in_snr(seed: u64, lo in -20.0f64..10.0, step in 0.0f64..10.0) {
        let mut r = rng::stream(seed, &[]);
        let h: CMatrix = channel::sample_iid(6, 6, &mut r);
        let a = channel::capacity_of(&h, channel::db_to_linear(lo));
        let b = channel::capacity_of(&h, channel::db_to_linear(lo + step));
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn proposed_cheaper_than_mmse(n_r in 1u64..3000, m in prop::sample::select(vec![2u64, 4, 16])) {
        prop_assert!(flops_proposed(n_r, m).total() < flops_mmse(n_r, m).total());
    }

    #[test]
    fn mapper_round_trip(m in prop::sample::select(vec![2u32, 4, 8]), p in prop::sample::select(vec![1usize, 2, 4]), seed: u64) {
        prop_assume!(m as usize % p == 0);
        let f = field(m);
        let q = m as usize / p;
        let mapper = SymbolMapper::new(m, p, 4 * q).unwrap();
        let mut r = rng::stream(seed, &[]);
        let n = 11;
        let symbols: Vec<GfSymbol> = (0..n).map(|_| GfSymbol(rand::Rng::random_range(&mut r, 0..f.size() as u16) as u8)).collect();
        let labels = mapper.map_labels(&symbols);
        prop_assert_eq!(mapper.demap_labels(&labels, n), symbols);
    }
}

/// Correlation never raises capacity on matched draws (within 3 SE).
#[test]
fn correlation_does_not_raise_capacity() {
    let corrs = vec![None, Some(CorrelationSpec::exponential(16, 16, 0.5, 0.5).unwrap())];
    for db in [-10.0, 0.0, 10.0] {
        let s = channel::capacity_sweep(16, 16, db, 300, 4, &corrs).unwrap();
        assert!(s.losses[1].mean > -3.0 * s.losses[1].std_err, "{db} dB: {:?}", s.losses[1]);
    }
}
