//! Arithmetic over GF(2^m), 2 ≤ m ≤ 8, backed by log/antilog tables.
//!
//! Elements are stored as their polynomial-basis bit pattern: bit `i` of the
//! value is the coefficient of `α^i`. The primitive element is always
//! `α = x` (value `2`), so `exp[i]` is the bit pattern of `α^i`.

use std::fmt;

use thiserror::Error;

/// Errors raised while building a field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("extension degree m={0} is outside the supported range 2..=8")]
    UnsupportedDegree(u32),
    #[error("polynomial {poly:#x} does not have degree {m}")]
    WrongDegree { poly: u32, m: u32 },
    #[error("polynomial {poly:#x} is not primitive over GF(2) (order of x is {order}, expected {expected})")]
    NotPrimitive { poly: u32, order: u32, expected: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("bit representation has length {got}, expected {expected}")]
    BitLength { got: usize, expected: usize },
    #[error("value {value} is not an element of GF(2^{m})")]
    OutOfRange { value: u32, m: u32 },
}

/// A field element, as its `m`-bit polynomial-basis representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GfSymbol(pub u8);

impl GfSymbol {
    pub const ZERO: GfSymbol = GfSymbol(0);
    pub const ONE: GfSymbol = GfSymbol(1);

    #[inline]
    pub fn value(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for GfSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Built-in primitive polynomial for each supported degree, as a bit mask
/// including the leading `x^m` term.
pub fn default_polynomial(m: u32) -> Option<u32> {
    Some(match m {
        2 => 0b111,        // x^2 + x + 1
        3 => 0b1011,       // x^3 + x + 1
        4 => 0b1_0011,     // x^4 + x + 1
        5 => 0b10_0101,    // x^5 + x^2 + 1
        6 => 0b100_0011,   // x^6 + x + 1
        7 => 0b1000_1001,  // x^7 + x^3 + 1
        8 => 0b1_0001_1101, // x^8 + x^4 + x^3 + x^2 + 1
        _ => return None,
    })
}

/// Precomputed arithmetic tables for one GF(2^m).
///
/// Immutable after construction; share it behind an `Arc` or plain reference.
#[derive(Clone)]
pub struct FieldTable {
    m: u32,
    poly: u32,
    size: usize,
    /// `exp[i] = α^i`, stored twice over so `exp[log a + log b]` needs no reduction.
    exp: Vec<u8>,
    /// `log[a]` for nonzero `a`; `log[0]` is unused.
    log: Vec<u16>,
    /// Full `size × size` product table, row-major in the first operand.
    mul: Vec<u8>,
    inv: Vec<u8>,
}

impl fmt::Debug for FieldTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldTable")
            .field("m", &self.m)
            .field("poly", &format_args!("{:#x}", self.poly))
            .finish()
    }
}

impl FieldTable {
    /// Builds GF(2^m) from `poly`, or from the built-in default when `None`.
    pub fn new(m: u32, poly: Option<u32>) -> Result<Self, FieldError> {
        if !(2..=8).contains(&m) {
            return Err(FieldError::UnsupportedDegree(m));
        }
        let poly = match poly {
            Some(p) => p,
            None => default_polynomial(m).expect("default exists for 2..=8"),
        };
        if poly >> m != 1 {
            return Err(FieldError::WrongDegree { poly, m });
        }
        let size = 1usize << m;
        let order = (size - 1) as u32;

        let mut exp = vec![0u8; 2 * (size - 1)];
        let mut log = vec![0u16; size];
        let mut x: u32 = 1;
        for i in 0..order {
            if i > 0 && x == 1 {
                return Err(FieldError::NotPrimitive { poly, order: i, expected: order });
            }
            exp[i as usize] = x as u8;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
        }
        if x != 1 {
            // x^(2^m - 1) must close the cycle; otherwise the polynomial is
            // reducible and the powers wandered off the multiplicative group.
            return Err(FieldError::NotPrimitive { poly, order: 0, expected: order });
        }
        for i in 0..(size - 1) {
            exp[i + size - 1] = exp[i];
        }

        let mut mul = vec![0u8; size * size];
        for a in 1..size {
            for b in 1..size {
                mul[a * size + b] = exp[log[a] as usize + log[b] as usize];
            }
        }
        let mut inv = vec![0u8; size];
        for a in 1..size {
            inv[a] = exp[(order as usize - log[a] as usize) % order as usize];
        }

        Ok(FieldTable { m, poly, size, exp, log, mul, inv })
    }

    #[inline]
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Primitive polynomial as a bit mask including the `x^m` term.
    #[inline]
    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    /// Number of field elements, `2^m`.
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Checked conversion from an integer.
    pub fn symbol(&self, value: u32) -> Result<GfSymbol, FieldError> {
        if (value as usize) < self.size {
            Ok(GfSymbol(value as u8))
        } else {
            Err(FieldError::OutOfRange { value, m: self.m })
        }
    }

    /// `α^i` for any integer exponent (reduced modulo `2^m - 1`).
    #[inline]
    pub fn alpha_pow(&self, i: i64) -> GfSymbol {
        let order = (self.size - 1) as i64;
        GfSymbol(self.exp[i.rem_euclid(order) as usize])
    }

    /// Discrete logarithm of a nonzero element.
    #[inline]
    pub fn log(&self, a: GfSymbol) -> Option<u32> {
        if a.is_zero() {
            None
        } else {
            Some(self.log[a.value()] as u32)
        }
    }

    #[inline]
    pub fn add(&self, a: GfSymbol, b: GfSymbol) -> GfSymbol {
        GfSymbol(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: GfSymbol, b: GfSymbol) -> GfSymbol {
        GfSymbol(self.mul[a.value() * self.size + b.value()])
    }

    pub fn inv(&self, a: GfSymbol) -> Result<GfSymbol, FieldError> {
        if a.is_zero() {
            Err(FieldError::ZeroInverse)
        } else {
            Ok(GfSymbol(self.inv[a.value()]))
        }
    }

    pub fn div(&self, a: GfSymbol, b: GfSymbol) -> Result<GfSymbol, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Row of the product table: `row[x] = a·x` for every element `x`.
    #[inline]
    pub fn mul_row(&self, a: GfSymbol) -> &[u8] {
        let start = a.value() * self.size;
        &self.mul[start..start + self.size]
    }

    /// Bit representation, least-significant coefficient first.
    pub fn to_bits(&self, x: GfSymbol) -> Vec<u8> {
        (0..self.m).map(|i| (x.0 >> i) & 1).collect()
    }

    pub fn from_bits(&self, bits: &[u8]) -> Result<GfSymbol, FieldError> {
        if bits.len() != self.m as usize {
            return Err(FieldError::BitLength { got: bits.len(), expected: self.m as usize });
        }
        let v = bits
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i));
        Ok(GfSymbol(v))
    }

    /// All elements in increasing value order.
    pub fn elements(&self) -> impl Iterator<Item = GfSymbol> {
        (0..self.size).map(|v| GfSymbol(v as u8))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf8() -> FieldTable {
        FieldTable::new(3, Some(0b1011)).unwrap()
    }

    #[test]
    fn gf8_listing() {
        let f = gf8();
        let expected: [[u8; 3]; 7] = [
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
            [0, 1, 1],
            [1, 1, 1],
            [1, 0, 1],
        ];
        for (i, bits) in expected.iter().enumerate() {
            assert_eq!(f.to_bits(f.alpha_pow(i as i64)), bits.to_vec(), "alpha^{i}");
        }
        assert_eq!(f.alpha_pow(7), GfSymbol::ONE);
        assert_eq!(f.to_bits(GfSymbol::ZERO), vec![0, 0, 0]);
    }

    #[test]
    fn gf8_add_and_mul_examples() {
        let f = gf8();
        let a = f.alpha_pow(1);
        let a2 = f.alpha_pow(2);
        assert_eq!(f.add(a, a2), f.alpha_pow(4));
        assert_eq!(f.mul(a, a2), f.alpha_pow(3));
        assert_eq!(f.to_bits(f.mul(a, a2)), vec![1, 1, 0]);
        for x in f.elements() {
            assert_eq!(f.add(x, x), GfSymbol::ZERO);
            assert_eq!(f.add(x, GfSymbol::ZERO), x);
            assert_eq!(f.mul(x, GfSymbol::ONE), x);
            assert_eq!(f.mul(x, GfSymbol::ZERO), GfSymbol::ZERO);
        }
    }

    #[test]
    fn default_gf256_has_full_cycle() {
        let f = FieldTable::new(8, None).unwrap();
        assert_eq!(f.polynomial(), 0x11d);
        let mut seen = [false; 256];
        for i in 0..255 {
            let x = f.alpha_pow(i);
            assert!(!x.is_zero());
            assert!(!seen[x.value()]);
            seen[x.value()] = true;
        }
        for x in f.elements().skip(1) {
            assert_eq!(f.alpha_pow(f.log(x).unwrap() as i64), x);
        }
    }

    #[test]
    fn rejects_bad_polynomials() {
        // x^4 + x^3 + x^2 + x + 1 is irreducible but has order 5.
        assert!(matches!(
            FieldTable::new(4, Some(0b1_1111)),
            Err(FieldError::NotPrimitive { poly: 0b1_1111, .. })
        ));
        // x^8 + x^4 + x^3 + x + 1 (AES) is irreducible but not primitive.
        assert!(matches!(FieldTable::new(8, Some(0x11b)), Err(FieldError::NotPrimitive { .. })));
        // Reducible: (x^2+x+1)^2 = x^4 + x^2 + 1.
        assert!(FieldTable::new(4, Some(0b1_0101)).is_err());
        assert_eq!(FieldTable::new(3, Some(0b111)).unwrap_err(), FieldError::WrongDegree { poly: 0b111, m: 3 });
        assert_eq!(FieldTable::new(9, None).unwrap_err(), FieldError::UnsupportedDegree(9));
        assert_eq!(FieldTable::new(1, None).unwrap_err(), FieldError::UnsupportedDegree(1));
    }

    #[test]
    fn every_default_is_primitive() {
        for m in 2..=8 {
            FieldTable::new(m, None).unwrap();
        }
    }

    #[test]
    fn inverse_and_division() {
        let f = FieldTable::new(8, None).unwrap();
        assert_eq!(f.inv(GfSymbol::ZERO), Err(FieldError::ZeroInverse));
        assert!(f.div(GfSymbol::ONE, GfSymbol::ZERO).is_err());
        for a in f.elements().skip(1) {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), GfSymbol::ONE);
            for b in [GfSymbol(3), GfSymbol(200)] {
                assert_eq!(f.mul(f.div(b, a).unwrap(), a), b);
            }
        }
    }

    #[test]
    fn bits_round_trip_and_length_check() {
        let f = FieldTable::new(8, None).unwrap();
        for x in f.elements() {
            assert_eq!(f.from_bits(&f.to_bits(x)).unwrap(), x);
        }
        assert_eq!(
            f.from_bits(&[1, 0, 1]),
            Err(FieldError::BitLength { got: 3, expected: 8 })
        );
        assert!(f.symbol(256).is_err());
    }
}
