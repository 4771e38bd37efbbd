//! Arithmetic in the prime ring Z_p that carries shares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^61 - 1, a Mersenne prime.
pub const DEFAULT_MODULUS: u64 = (1 << 61) - 1;

/// A prime modulus. Elements are canonical representatives in `0..p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Modulus(u64);

impl Modulus {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Config(format!("modulus {p} is not prime")));
        }
        Ok(Modulus(p))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn reduce(self, x: u128) -> u64 {
        (x % self.0 as u128) as u64
    }

    pub fn add(self, a: u64, b: u64) -> u64 {
        self.reduce(a as u128 + b as u128)
    }

    pub fn sub(self, a: u64, b: u64) -> u64 {
        let (a, b) = (a % self.0, b % self.0);
        if a >= b {
            a - b
        } else {
            self.0 - (b - a)
        }
    }

    pub fn sum<I: IntoIterator<Item = u64>>(self, xs: I) -> u64 {
        xs.into_iter().fold(0, |acc, x| self.add(acc, x))
    }

    /// Maps an element to the signed representative in `(-p/2, p/2]`.
    pub fn centered(self, x: u64) -> i128 {
        let x = x % self.0;
        if x > self.0 / 2 {
            x as i128 - self.0 as i128
        } else {
            x as i128
        }
    }
}

impl Default for Modulus {
    fn default() -> Self {
        Modulus(DEFAULT_MODULUS)
    }
}

impl TryFrom<u64> for Modulus {
    type Error = Error;

    fn try_from(p: u64) -> Result<Self> {
        Modulus::new(p)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.0
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact for all u64.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
