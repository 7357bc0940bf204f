//! Unscrambled Sobol' sequence with Joe-Kuo direction numbers.
//!
//! Points are produced in Gray-code order, so the first point of every
//! dimension is zero and the second is one half.

use crate::error::{Error, Result};

const BITS: usize = 32;

/// `(degree s, coefficient a, initial m_1..m_s)` for dimensions 2..=21.
/// Dimension 1 is the van der Corput sequence in base 2.
const DIRECTIONS: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Largest dimension with tabulated direction numbers.
pub const MAX_DIM: usize = DIRECTIONS.len() + 1;

fn direction_vector(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    let s = s as usize;
    for i in 0..s.min(BITS) {
        v[i] = m[i] << (BITS - 1 - i);
    }
    for i in s..BITS {
        let mut value = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                value ^= v[i - k];
            }
        }
        v[i] = value;
    }
    v
}

/// Streaming generator over `[0,1)^dim`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("Sobol' dimension must be at least 1"));
        }
        if dim > MAX_DIM {
            return Err(Error::UnsupportedDimension { dim, max: MAX_DIM });
        }
        Ok(Self {
            directions: (0..dim).map(direction_vector).collect(),
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Writes the next point into `out` and advances the sequence.
    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;
        for (o, &s) in out.iter_mut().zip(&self.state) {
            *o = s as f64 * SCALE;
        }
        let bit = self.index.trailing_ones() as usize;
        self.index += 1;
        if bit < BITS {
            for (s, v) in self.state.iter_mut().zip(&self.directions) {
                *s ^= v[bit];
            }
        }
    }

    pub fn skip(&mut self, count: usize) {
        let mut scratch = vec![0.0; self.dim()];
        for _ in 0..count {
            self.next_into(&mut scratch);
        }
    }
}
