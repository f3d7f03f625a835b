//! Arithmetic in the prime field 𝔽_d.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("local dimension {0} is not prime")]
    NotPrime(u32),
    #[error("local dimension {0} is too large (must be below 2^31)")]
    TooLarge(u32),
}

/// Trial-division primality test.
pub fn is_prime(d: u32) -> bool {
    if d < 2 {
        return false;
    }
    if d < 4 {
        return true;
    }
    if d % 2 == 0 {
        return false;
    }
    let mut k = 3u64;
    while k * k <= d as u64 {
        if d as u64 % k == 0 {
            return false;
        }
        k += 2;
    }
    true
}

/// A validated prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Prime(u32);

impl Prime {
    pub fn new(d: u32) -> Result<Self, FieldError> {
        if d >= 1 << 31 {
            return Err(FieldError::TooLarge(d));
        }
        if !is_prime(d) {
            return Err(FieldError::NotPrime(d));
        }
        Ok(Prime(d))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.0 as u64 - b as u64 % self.0 as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        self.sub(0, a)
    }

    /// Multiplicative inverse via the extended Euclidean algorithm; `None` for zero.
    pub fn inv(self, a: u32) -> Option<u32> {
        let m = self.0 as i64;
        let a = a as i64 % m;
        if a == 0 {
            return None;
        }
        let (mut r0, mut r1) = (m, a);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Some(t0.rem_euclid(m) as u32)
    }
}

impl TryFrom<u32> for Prime {
    type Error = FieldError;
    fn try_from(d: u32) -> Result<Self, Self::Error> {
        Prime::new(d)
    }
}

impl From<Prime> for u32 {
    fn from(p: Prime) -> u32 {
        p.0
    }
}
