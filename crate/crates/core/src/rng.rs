//! Deterministic pseudo-random numbers.
//!
//! The raw stream is the 64-bit Mersenne Twister (MT19937-64). A
//! [`RandomStream`] serves raw draws either straight from the generator or
//! from a pre-generated [`RandomPool`]; both modes yield the same sequence
//! for the same seed, so pooling is purely a throughput decision.
//!
//! Raw-draw consumption of every variate, per call:
//!
//! | variate                    | raw draws                                   |
//! |----------------------------|---------------------------------------------|
//! | uniform / discrete uniform | 1                                           |
//! | normal (polar method)      | 2 per attempt, acceptance rate π/4; the     |
//! |                            | second variate of each pair is discarded    |
//! | normal with `sigma == 0`   | 0                                           |
//! | truncated normal           | one normal per rejection round              |

use crate::error::RngError;

const NN: usize = 312;
const MM: usize = 156;
const MATRIX_A: u64 = 0xB502_6F5A_A966_19E9;
const UPPER_MASK: u64 = 0xFFFF_FFFF_8000_0000;
const LOWER_MASK: u64 = 0x7FFF_FFFF;

/// Maximum rejection rounds of [`RandomSource::next_truncated_normal`].
pub const MAX_TRUNCATION_REJECTIONS: usize = 1_000_000;

/// MT19937-64 as published by Matsumoto and Nishimura (`init_genrand64`).
#[derive(Clone)]
pub struct Mt19937_64 {
    state: [u64; NN],
    index: usize,
}

impl std::fmt::Debug for Mt19937_64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mt19937_64").field("index", &self.index).finish_non_exhaustive()
    }
}

impl Mt19937_64 {
    pub fn new(seed: u64) -> Self {
        let mut state = [0u64; NN];
        state[0] = seed;
        for i in 1..NN {
            state[i] =
                6_364_136_223_846_793_005u64.wrapping_mul(state[i - 1] ^ (state[i - 1] >> 62)).wrapping_add(i as u64);
        }
        Self { state, index: NN }
    }

    #[inline]
    fn twist(&mut self) {
        twist_state(&mut self.state);
        self.index = 0;
    }

    #[inline(always)]
    fn temper(mut x: u64) -> u64 {
        x ^= (x >> 29) & 0x5555_5555_5555_5555;
        x ^= (x << 17) & 0x71D6_7FFF_EDA6_0000;
        x ^= (x << 37) & 0xFFF7_EEE0_0000_0000;
        x ^ (x >> 43)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.index >= NN {
            self.twist();
        }
        let x = self.state[self.index];
        self.index += 1;
        Self::temper(x)
    }

    /// Writes the next `out.len()` outputs, identical to calling
    /// [`next_u64`](Self::next_u64) that many times.
    pub fn fill(&mut self, out: &mut [u64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just detected.
            unsafe { self.fill_avx2(out) };
            return;
        }
        self.fill_portable(out);
    }

    /// The portable loop compiled with AVX2 enabled, so that twisting and
    /// tempering whole blocks vectorise.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn fill_avx2(&mut self, out: &mut [u64]) {
        self.fill_portable(out);
    }

    #[inline(always)]
    fn fill_portable(&mut self, out: &mut [u64]) {
        let mut written = 0;
        while written < out.len() {
            if self.index >= NN {
                twist_state(&mut self.state);
                self.index = 0;
            }
            let take = (NN - self.index).min(out.len() - written);
            let src = &self.state[self.index..self.index + take];
            for (dst, &x) in out[written..written + take].iter_mut().zip(src) {
                *dst = Self::temper(x);
            }
            self.index += take;
            written += take;
        }
    }
}

/// Underlying generator algorithm. Only the 64-bit Mersenne Twister is offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Mt19937_64,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mt19937_64 => "mt19937_64",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    OnTheFly,
    Pooled { pool_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub mode: GenerationMode,
}

impl GeneratorSpec {
    pub fn on_the_fly(seed: u64) -> Self {
        Self { algorithm: Algorithm::Mt19937_64, seed, mode: GenerationMode::OnTheFly }
    }

    pub fn pooled(seed: u64, pool_size: usize) -> Self {
        Self { algorithm: Algorithm::Mt19937_64, seed, mode: GenerationMode::Pooled { pool_size } }
    }

    pub fn validate(&self) -> Result<(), RngError> {
        match self.mode {
            GenerationMode::Pooled { pool_size: 0 } => Err(RngError::EmptyPool),
            _ => Ok(()),
        }
    }
}

/// One MT19937-64 state transition.
#[inline(always)]
fn twist_state(mt: &mut [u64; NN]) {
    for i in 0..NN - MM {
        let x = (mt[i] & UPPER_MASK) | (mt[i + 1] & LOWER_MASK);
        mt[i] = mt[i + MM] ^ (x >> 1) ^ ((x & 1).wrapping_neg() & MATRIX_A);
    }
    for i in NN - MM..NN - 1 {
        let x = (mt[i] & UPPER_MASK) | (mt[i + 1] & LOWER_MASK);
        mt[i] = mt[i + MM - NN] ^ (x >> 1) ^ ((x & 1).wrapping_neg() & MATRIX_A);
    }
    let x = (mt[NN - 1] & UPPER_MASK) | (mt[0] & LOWER_MASK);
    mt[NN - 1] = mt[MM - 1] ^ (x >> 1) ^ ((x & 1).wrapping_neg() & MATRIX_A);
}

/// Buffer of pre-generated raw draws.
#[derive(Debug, Clone)]
pub struct RandomPool {
    buffer: Vec<u64>,
    cursor: usize,
    pool_size: usize,
}

impl RandomPool {
    pub fn new(pool_size: usize) -> Result<Self, RngError> {
        if pool_size == 0 {
            return Err(RngError::EmptyPool);
        }
        Ok(Self { buffer: Vec::new(), cursor: 0, pool_size })
    }

    /// Replaces the buffer with the next `n` raw draws of `generator`.
    pub fn fill_pool(&mut self, generator: &mut Mt19937_64, n: usize) -> Result<(), RngError> {
        if n == 0 {
            return Err(RngError::EmptyPool);
        }
        if self.buffer.len() != n {
            self.buffer.clear();
            self.buffer.try_reserve_exact(n).map_err(|_| RngError::Allocation { draws: n })?;
            self.buffer.resize(n, 0);
        }
        generator.fill(&mut self.buffer);
        self.cursor = 0;
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.buffer.len() - self.cursor
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    #[inline]
    fn take(&mut self, generator: &mut Mt19937_64) -> u64 {
        if self.cursor == self.buffer.len() {
            // pool_size >= 1 is checked at construction, and a failed allocation
            // is reported on the first fill; keep the stream alive by falling
            // back to direct draws if it ever fails later.
            if self.fill_pool(generator, self.pool_size).is_err() {
                return generator.next_u64();
            }
        }
        let x = self.buffer[self.cursor];
        self.cursor += 1;
        x
    }
}

/// Source of uniform and Gaussian variates.
///
/// Implementors supply the two primitive variates; everything else is derived.
/// Deterministic stubs for hand-checked tests live in [`stub`].
pub trait RandomSource {
    /// Uniform on `[0, 1)`.
    fn next_uniform01(&mut self) -> f64;

    /// Standard normal.
    fn next_standard_normal(&mut self) -> f64;

    /// Uniform on `[lo, hi)`.
    fn next_uniform(&mut self, lo: f64, hi: f64) -> Result<f64, RngError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(RngError::InvalidInterval { lo, hi });
        }
        let v = lo + (hi - lo) * self.next_uniform01();
        // rounding can land exactly on hi
        Ok(if v < hi { v } else { lo.max(hi.next_down()) })
    }

    /// Index uniform on `0..n`. Panics if `n == 0`.
    fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index on empty range");
        ((self.next_uniform01() * n as f64) as usize).min(n - 1)
    }

    fn next_discrete_uniform<T: Copy>(&mut self, values: &[T]) -> Result<T, RngError>
    where
        Self: Sized,
    {
        if values.is_empty() {
            return Err(RngError::EmptySet);
        }
        Ok(values[self.next_index(values.len())])
    }

    fn next_normal(&mut self, mu: f64, sigma: f64) -> Result<f64, RngError> {
        if !(sigma >= 0.0) {
            return Err(RngError::NegativeSigma(sigma));
        }
        if sigma == 0.0 {
            return Ok(mu);
        }
        Ok(mu + sigma * self.next_standard_normal())
    }

    /// Gaussian conditioned on `[lo, hi]`, by resampling until in bounds.
    fn next_truncated_normal(&mut self, mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<f64, RngError> {
        if !(lo < hi) {
            return Err(RngError::InvalidInterval { lo, hi });
        }
        if !(sigma >= 0.0) {
            return Err(RngError::NegativeSigma(sigma));
        }
        if sigma == 0.0 {
            return if (lo..=hi).contains(&mu) { Ok(mu) } else { Err(RngError::DegenerateTruncation { mu, lo, hi }) };
        }
        for _ in 0..MAX_TRUNCATION_REJECTIONS {
            let v = mu + sigma * self.next_standard_normal();
            if (lo..=hi).contains(&v) {
                return Ok(v);
            }
        }
        Err(RngError::RejectionLimit { limit: MAX_TRUNCATION_REJECTIONS })
    }
}

impl<R: RandomSource + ?Sized> RandomSource for &mut R {
    fn next_uniform01(&mut self) -> f64 {
        (**self).next_uniform01()
    }
    fn next_standard_normal(&mut self) -> f64 {
        (**self).next_standard_normal()
    }
}

#[derive(Debug, Clone)]
enum Backing {
    OnTheFly,
    Pooled(RandomPool),
}

/// Seeded production stream over MT19937-64, optionally pooled.
#[derive(Debug, Clone)]
pub struct RandomStream {
    spec: GeneratorSpec,
    generator: Mt19937_64,
    backing: Backing,
    raw_draws: u64,
}

impl RandomStream {
    pub fn new(spec: GeneratorSpec) -> Result<Self, RngError> {
        spec.validate()?;
        let mut generator = Mt19937_64::new(spec.seed);
        let backing = match spec.mode {
            GenerationMode::OnTheFly => Backing::OnTheFly,
            GenerationMode::Pooled { pool_size } => {
                let mut pool = RandomPool::new(pool_size)?;
                pool.fill_pool(&mut generator, pool_size)?;
                Backing::Pooled(pool)
            }
        };
        Ok(Self { spec, generator, backing, raw_draws: 0 })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Number of raw draws handed out so far.
    pub fn raw_draws(&self) -> u64 {
        self.raw_draws
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        self.raw_draws += 1;
        match &mut self.backing {
            Backing::OnTheFly => self.generator.next_u64(),
            Backing::Pooled(pool) => pool.take(&mut self.generator),
        }
    }
}

/// Top 53 bits as a double on `[0, 1)`.
#[inline]
pub fn raw_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl RandomSource for RandomStream {
    #[inline]
    fn next_uniform01(&mut self) -> f64 {
        raw_to_unit(self.next_raw())
    }

    fn next_standard_normal(&mut self) -> f64 {
        // Marsaglia polar method
        loop {
            let u = 2.0 * raw_to_unit(self.next_raw()) - 1.0;
            let v = 2.0 * raw_to_unit(self.next_raw()) - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

/// Deterministic sources for hand-checked tests.
pub mod stub {
    use super::RandomSource;

    /// Returns the same uniform and the same normal on every call.
    #[derive(Debug, Clone, Copy)]
    pub struct ConstantSource {
        pub uniform: f64,
        pub normal: f64,
    }

    impl ConstantSource {
        pub fn new(uniform: f64, normal: f64) -> Self {
            Self { uniform, normal }
        }

        /// Uniform 0 and normal 0.
        pub fn zero() -> Self {
            Self::new(0.0, 0.0)
        }
    }

    impl RandomSource for ConstantSource {
        fn next_uniform01(&mut self) -> f64 {
            self.uniform
        }
        fn next_standard_normal(&mut self) -> f64 {
            self.normal
        }
    }

    /// Cycles through fixed uniform and normal scripts independently.
    #[derive(Debug, Clone)]
    pub struct ScriptedSource {
        uniforms: Vec<f64>,
        normals: Vec<f64>,
        next_u: usize,
        next_n: usize,
    }

    impl ScriptedSource {
        pub fn new(uniforms: Vec<f64>, normals: Vec<f64>) -> Self {
            assert!(!uniforms.is_empty() && !normals.is_empty());
            Self { uniforms, normals, next_u: 0, next_n: 0 }
        }

        /// (uniforms consumed, normals consumed)
        pub fn consumed(&self) -> (usize, usize) {
            (self.next_u, self.next_n)
        }
    }

    impl RandomSource for ScriptedSource {
        fn next_uniform01(&mut self) -> f64 {
            let v = self.uniforms[self.next_u % self.uniforms.len()];
            self.next_u += 1;
            v
        }
        fn next_standard_normal(&mut self) -> f64 {
            let v = self.normals[self.next_n % self.normals.len()];
            self.next_n += 1;
            v
        }
    }
}
