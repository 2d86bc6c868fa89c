//! Deterministic uniform point sources and the uniform to normal transform.
//!
//! Two kinds of [`PointStream`] exist: MT19937 pseudo-random vectors and a
//! Sobol sequence shifted modulo one by a random vector. Both emit points in
//! `[0, 1)^d` and are pure functions of their seed and cursor.

use rand_mt::Mt;

use crate::error::{Error, Result};
use crate::sobol_table::JOE_KUO;

/// Smallest value handed to the inverse normal transform in place of zero.
pub const TINY: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

const SOBOL_BITS: usize = 32;

/// Highest Sobol dimension covered by the static direction-number table.
pub const MAX_SOBOL_DIM: usize = 1 + 127;

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, lane: u64) -> u64 {
    let mut z = seed
        .wrapping_add(lane.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// MT19937 generator producing 53-bit uniforms.
#[derive(Clone)]
pub struct Pseudo {
    mt: Mt,
}

impl Pseudo {
    /// Seeds up to `u32::MAX` use the reference `init_genrand`; larger seeds
    /// go through `init_by_array` with the low and high words.
    pub fn new(seed: u64) -> Self {
        let mt = match u32::try_from(seed) {
            Ok(s) => Mt::new(s),
            Err(_) => Mt::new_with_key([seed as u32, (seed >> 32) as u32]),
        };
        Pseudo { mt }
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.mt.next_u32()
    }

    /// Uniform in `[0, 1)` from two 32-bit words.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let a = (self.next_u32() >> 5) as f64;
        let b = (self.next_u32() >> 6) as f64;
        (a * 67_108_864.0 + b) * TINY
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inv_normal_open(self.next_f64())
    }
}

impl std::fmt::Debug for Pseudo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Pseudo { .. }")
    }
}

/// Unshifted Sobol sequence in Gray-code order, starting at index 0.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; SOBOL_BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("Sobol dimension must be positive".into()));
        }
        if dim > MAX_SOBOL_DIM {
            return Err(Error::DimensionUnsupported {
                requested: dim,
                supported: MAX_SOBOL_DIM,
            });
        }
        let directions = (0..dim).map(direction_numbers).collect();
        Ok(Sobol {
            directions,
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Writes point `index` and advances.
    pub fn next_into(&mut self, out: &mut [f64]) {
        const SCALE: f64 = 1.0 / 4_294_967_296.0;
        if self.index > 0 {
            let c = (self.index - 1).trailing_ones() as usize;
            assert!(c < SOBOL_BITS, "Sobol sequence exhausted");
            for (s, dir) in self.state.iter_mut().zip(&self.directions) {
                *s ^= dir[c];
            }
        }
        for (o, &s) in out.iter_mut().zip(&self.state) {
            *o = s as f64 * SCALE;
        }
        self.index += 1;
    }
}

fn direction_numbers(dim: usize) -> [u32; SOBOL_BITS] {
    let mut v = [0u32; SOBOL_BITS];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (31 - i);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for i in 0..s.min(SOBOL_BITS) {
        v[i] = m[i] << (31 - i);
    }
    for i in s..SOBOL_BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// Kind of a [`PointStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Pseudo,
    ShiftedSobol,
}

#[derive(Debug, Clone)]
enum Source {
    Pseudo(Box<Pseudo>),
    Sobol { seq: Sobol, shift: Vec<f64> },
}

/// Uniform vectors in `[0, 1)^d`.
#[derive(Debug, Clone)]
pub struct PointStream {
    dim: usize,
    seed: u64,
    cursor: u64,
    source: Source,
}

impl PointStream {
    pub fn pseudo(dim: usize, seed: u64) -> Self {
        PointStream {
            dim,
            seed,
            cursor: 0,
            source: Source::Pseudo(Box::new(Pseudo::new(seed))),
        }
    }

    /// Sobol points shifted by a vector drawn once from `Pseudo::new(seed)`.
    pub fn shifted_sobol(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = Pseudo::new(seed);
        let shift = (0..dim).map(|_| rng.next_f64()).collect();
        Self::sobol_with_shift(shift, seed)
    }

    /// Sobol points with an explicit shift (a zero shift gives the raw sequence).
    pub fn sobol_with_shift(shift: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(v) = shift.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::Domain(format!("shift component {v} not in [0,1)")));
        }
        let seq = Sobol::new(shift.len())?;
        Ok(PointStream {
            dim: shift.len(),
            seed,
            cursor: 0,
            source: Source::Sobol { seq, shift },
        })
    }

    pub fn new(kind: PointKind, dim: usize, seed: u64) -> Result<Self> {
        match kind {
            PointKind::Pseudo => Ok(Self::pseudo(dim, seed)),
            PointKind::ShiftedSobol => Self::shifted_sobol(dim, seed),
        }
    }

    pub fn kind(&self) -> PointKind {
        match self.source {
            Source::Pseudo(_) => PointKind::Pseudo,
            Source::Sobol { .. } => PointKind::ShiftedSobol,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn shift(&self) -> Option<&[f64]> {
        match &self.source {
            Source::Sobol { shift, .. } => Some(shift),
            Source::Pseudo(_) => None,
        }
    }

    /// Fills `out` (length `dim`) with the next point.
    #[inline]
    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &mut self.source {
            Source::Pseudo(rng) => {
                for o in out.iter_mut() {
                    *o = rng.next_f64();
                }
            }
            Source::Sobol { seq, shift } => {
                seq.next_into(out);
                for (o, v) in out.iter_mut().zip(shift.iter()) {
                    *o = shift_mod1(*o, *v);
                }
            }
        }
        self.cursor += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.next_into(&mut out);
        out
    }
}

/// `(y + v) mod 1`, kept inside `[0, 1)`.
#[inline]
pub fn shift_mod1(y: f64, v: f64) -> f64 {
    let s = y + v;
    let s = if s >= 1.0 { s - 1.0 } else { s };
    if s >= 1.0 {
        0.0
    } else {
        s
    }
}

// Beasley-Springer (central) and Moro (tail) coefficients.
const BSM_A: [f64; 4] = [
    2.506_628_238_84,
    -18.615_000_625_29,
    41.391_197_735_34,
    -25.441_060_496_37,
];
const BSM_B: [f64; 4] = [
    -8.473_510_930_90,
    23.083_367_437_43,
    -21.062_241_018_26,
    3.130_829_098_33,
];
const BSM_C: [f64; 9] = [
    0.337_475_482_272_614_7,
    0.976_169_019_091_718_6,
    0.160_797_971_491_820_9,
    0.027_643_881_033_386_3,
    0.003_840_572_937_360_9,
    0.000_395_189_651_191_9,
    0.000_032_176_788_176_8,
    0.000_000_288_816_736_4,
    0.000_000_396_031_518_7,
];

/// Inverse standard normal CDF (Beasley-Springer-Moro).
pub fn inv_normal(u: f64) -> Result<f64> {
    if u > 0.0 && u < 1.0 {
        Ok(bsm(u))
    } else {
        Err(Error::Domain(format!("inv_normal requires 0 < u < 1, got {u}")))
    }
}

/// Like [`inv_normal`] but maps an exact zero to [`TINY`] first.
#[inline]
pub fn inv_normal_open(u: f64) -> f64 {
    bsm(if u <= 0.0 { TINY } else { u })
}

#[inline]
fn bsm(u: f64) -> f64 {
    let y = u - 0.5;
    if y.abs() < 0.42 {
        let r = y * y;
        y * (((BSM_A[3] * r + BSM_A[2]) * r + BSM_A[1]) * r + BSM_A[0])
            / ((((BSM_B[3] * r + BSM_B[2]) * r + BSM_B[1]) * r + BSM_B[0]) * r + 1.0)
    } else {
        let r = if y > 0.0 { 1.0 - u } else { u };
        let s = (-r.ln()).ln();
        let mut t = BSM_C[8];
        for c in BSM_C[..8].iter().rev() {
            t = t * s + c;
        }
        if y < 0.0 {
            -t
        } else {
            t
        }
    }
}

/// Applies the inverse normal transform elementwise.
#[inline]
pub fn to_normals(uniforms: &[f64], out: &mut [f64]) {
    for (o, &u) in out.iter_mut().zip(uniforms) {
        *o = inv_normal_open(u);
    }
}
