//! Seeded Monte Carlo integration on the ball and the integral-identity
//! checks built on it.
//!
//! Estimates multiply the sample mean by the exact ball volume pi^n/n!,
//! never an estimated one. Acceptance bands are 3 standard errors; a
//! failed band is retried once at four times the sample count before it
//! is reported, so a 3-sigma fluke costs a rerun instead of a red run.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::kernel::{DomainSpec, KernelEvaluator, TwistedFunction};
use crate::linalg::c64;
use crate::poly::{MapKind, OrbitMap};
use crate::rng::{uniform_ball, CounterRng};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub enum QuadError {
    /// The weight density was singular on more than 1% of samples.
    SingularWeight { fraction: f64 },
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadError::SingularWeight { fraction } => write!(
                f,
                "weight density singular on {:.2}% of samples",
                fraction * 100.0
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleStrategy {
    /// Rejection from the bounding hypercube.
    UniformRejection,
    /// Equal-volume radial shells, Gaussian directions, round-robin
    /// assignment. The sample count rounds up to a multiple of the
    /// stratum count so every shell carries equal weight.
    RadialStratified { strata: usize },
}

#[derive(Clone, Debug)]
pub struct Sampler {
    pub domain: DomainSpec,
    pub seed: u64,
    pub count: usize,
    pub strategy: SampleStrategy,
}

impl Sampler {
    pub fn uniform(dim: usize, seed: u64, count: usize) -> Self {
        Sampler {
            domain: DomainSpec::ball(dim),
            seed,
            count,
            strategy: SampleStrategy::UniformRejection,
        }
    }

    pub fn stratified(dim: usize, seed: u64, count: usize, strata: usize) -> Self {
        assert!(strata >= 1);
        Sampler {
            domain: DomainSpec::ball(dim),
            seed,
            count,
            strategy: SampleStrategy::RadialStratified { strata },
        }
    }

    /// Number of points the iteration will actually produce.
    pub fn effective_count(&self) -> usize {
        match self.strategy {
            SampleStrategy::UniformRejection => self.count,
            SampleStrategy::RadialStratified { strata } => self.count.div_ceil(strata) * strata,
        }
    }

    /// Streams every sample point through `f`. The stream is a pure
    /// function of (seed, strategy, count).
    pub fn for_each<F: FnMut(&[Complex64])>(&self, mut f: F) {
        let n = self.domain.dim;
        let mut z = vec![Complex64::ZERO; n];
        match self.strategy {
            SampleStrategy::UniformRejection => {
                let mut rng = CounterRng::new(self.seed);
                for _ in 0..self.count {
                    uniform_ball(&mut rng, n, &mut z);
                    f(&z);
                }
            }
            SampleStrategy::RadialStratified { strata } => {
                let per = self.count.div_ceil(strata);
                let mut rngs: Vec<CounterRng> = (0..strata)
                    .map(|s| CounterRng::substream(self.seed, 1000 + s as u64))
                    .collect();
                for _ in 0..per {
                    for (s, rng) in rngs.iter_mut().enumerate() {
                        // Radius from the equal-volume quantile of shell s.
                        let u = (s as f64 + rng.next_f64()) / strata as f64;
                        let r = libm::pow(u, 1.0 / (2.0 * n as f64));
                        gaussian_direction(rng, &mut z);
                        for c in z.iter_mut() {
                            *c *= r;
                        }
                        f(&z);
                    }
                }
            }
        }
    }
}

/// Unit vector with rotation-invariant distribution, via normalized
/// complex Gaussians (Box-Muller).
fn gaussian_direction(rng: &mut CounterRng, out: &mut [Complex64]) {
    let norm2;
    loop {
        for c in out.iter_mut() {
            let u1 = rng.next_f64().max(1e-300);
            let u2 = rng.next_f64();
            let rad = libm::sqrt(-2.0 * libm::log(u1));
            let ang = core::f64::consts::TAU * u2;
            *c = c64(rad * libm::cos(ang), rad * libm::sin(ang));
        }
        let n2: f64 = out.iter().map(|c| c.norm_sqr()).sum();
        if n2 > 1e-12 {
            norm2 = n2;
            break;
        }
    }
    let inv = 1.0 / libm::sqrt(norm2);
    for c in out.iter_mut() {
        *c *= inv;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MCEstimate {
    pub value: Complex64,
    /// Standard error of the mean, real and imaginary parts combined in
    /// quadrature, scaled like `value`.
    pub stderr: f64,
    pub count: usize,
}

impl MCEstimate {
    /// Whether `self` and a reference value agree within k combined
    /// standard errors.
    pub fn within(&self, reference: Complex64, k: f64) -> bool {
        (self.value - reference).norm() <= k * self.stderr
    }

    pub fn agrees_with(&self, other: &MCEstimate, k: f64) -> bool {
        let se = libm::sqrt(self.stderr * self.stderr + other.stderr * other.stderr);
        (self.value - other.value).norm() <= k * se
    }
}

/// Density |J(pi)|^(2-p) against Lebesgue measure on the ball.
#[derive(Clone, Debug)]
pub struct WeightedMeasure {
    pub map: OrbitMap,
    pub exponent: f64,
}

impl WeightedMeasure {
    pub fn for_p(map: OrbitMap, p: f64) -> Self {
        assert!(p > 1.0);
        WeightedMeasure { map, exponent: 2.0 - p }
    }

    /// None marks a singular evaluation (zero Jacobian with negative
    /// exponent).
    pub fn density(&self, z: &[Complex64]) -> Option<f64> {
        if self.exponent == 0.0 {
            return Some(1.0);
        }
        let j = self.map.jacobian_det.eval(z).norm();
        if self.exponent < 0.0 && j < tol::WEIGHT_UNDERFLOW {
            return None;
        }
        Some(libm::pow(j, self.exponent))
    }
}

/// MC estimate of the integral of f (times the weight density when
/// given) over the sampler's ball, scaled by the exact ball volume.
pub fn integrate<F>(
    sampler: &Sampler,
    mut f: F,
    weight: Option<&WeightedMeasure>,
) -> Result<MCEstimate, QuadError>
where
    F: FnMut(&[Complex64]) -> Complex64,
{
    let mut sum = Complex64::ZERO;
    let mut sum_sq_re = 0.0;
    let mut sum_sq_im = 0.0;
    let mut kept = 0usize;
    let mut singular = 0usize;
    sampler.for_each(|z| {
        let x = match weight {
            None => f(z),
            Some(w) => match w.density(z) {
                Some(d) => f(z) * d,
                None => {
                    singular += 1;
                    return;
                }
            },
        };
        sum += x;
        sum_sq_re += x.re * x.re;
        sum_sq_im += x.im * x.im;
        kept += 1;
    });
    let total = kept + singular;
    if singular > 0 && singular as f64 > 0.01 * total as f64 {
        return Err(QuadError::SingularWeight { fraction: singular as f64 / total as f64 });
    }
    let n = kept as f64;
    let mean = sum / n;
    let var_re = (sum_sq_re / n - mean.re * mean.re).max(0.0);
    let var_im = (sum_sq_im / n - mean.im * mean.im).max(0.0);
    let vol = sampler.domain.volume();
    Ok(MCEstimate {
        value: mean * vol,
        stderr: vol * libm::sqrt((var_re + var_im) / n),
        count: kept,
    })
}

/// Half-width of the bounding box for each image coordinate of a builtin
/// map, used by the direct image-side sampler.
pub fn map_image_box(kind: MapKind) -> (f64, f64) {
    match kind {
        MapKind::Identity => (1.0, 1.0),
        MapKind::Square1 => (1.0, 1.0),
        MapKind::Gml2 { m, ell } => {
            let b_u = if m == 1 { 1.5 } else { 1.0 };
            (b_u, libm::pow(0.5, (m / ell) as f64))
        }
        MapKind::Pik { k } => {
            if k == 0 {
                (1.5, 0.5)
            } else {
                (1.0, 0.5)
            }
        }
    }
}

/// Whether `u` lies in the image of the open ball under the builtin map.
/// For the two-symmetric-function families this solves the fiber
/// explicitly: z1^m and z2^m are the roots of t^2 - u t + v^l.
pub fn map_image_contains(kind: MapKind, u: &[Complex64]) -> bool {
    match kind {
        MapKind::Identity => u[0].norm_sqr() + u[1].norm_sqr() < 1.0,
        MapKind::Square1 => u[0].norm() + u[1].norm_sqr() < 1.0,
        MapKind::Gml2 { m, ell } => fiber_in_ball(u[0], u[1], m, m / ell),
        MapKind::Pik { k } => fiber_in_ball(u[0], u[1], 1 << k, 1),
    }
}

/// Image test for (z1^m + z2^m, (z1 z2)^q): some fiber point lies in the
/// ball iff the root moduli satisfy |t+|^{2/m} + |t-|^{2/m} < 1.
fn fiber_in_ball(u: Complex64, v: Complex64, m: u32, q: u32) -> bool {
    let prod = v.powu(m / q);
    let disc = (u * u - 4.0 * prod).sqrt();
    let t_plus = 0.5 * (u + disc);
    let t_minus = 0.5 * (u - disc);
    let e = 1.0 / m as f64;
    libm::pow(t_plus.norm_sqr(), e) + libm::pow(t_minus.norm_sqr(), e) < 1.0
}

/// Closed-form image volume where one is known.
pub fn map_image_volume(kind: MapKind) -> Option<f64> {
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    match kind {
        MapKind::Identity => Some(pi2 / 2.0),
        MapKind::Square1 => Some(pi2 / 3.0),
        MapKind::Gml2 { m: 2, ell: 2 } | MapKind::Pik { k: 1 } => Some(pi2 / 6.0),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct CovReport {
    pub kind: MapKind,
    /// Covering degree, the order of the attached group.
    pub degree: usize,
    /// (1/d) * integral over the ball of g(pi(z)) |J(pi)(z)|^2 for g = 1.
    pub upstairs_volume: MCEstimate,
    /// Direct image-side estimate of the same quantity.
    pub downstairs_volume: MCEstimate,
    /// Same pair for g = indicator of Re u1 > 0.
    pub upstairs_half: MCEstimate,
    pub downstairs_half: MCEstimate,
    pub closed_form: Option<f64>,
    pub consistent: bool,
    pub reran: bool,
}

fn cov_round(map: &OrbitMap, samples: usize, seed: u64) -> (MCEstimate, MCEstimate, MCEstimate, MCEstimate) {
    let d = map.group.order() as f64;
    let sampler = Sampler::uniform(2, seed, samples);
    let mut img = vec![Complex64::ZERO; 2];

    let up = |g: &dyn Fn(&[Complex64]) -> f64, img: &mut Vec<Complex64>, z: &[Complex64], map: &OrbitMap| {
        map.eval(z, img);
        let jac = map.jacobian_det.eval(z).norm_sqr();
        c64(g(img) * jac / d, 0.0)
    };
    let one = |_: &[Complex64]| 1.0;
    let half = |u: &[Complex64]| if u[0].re > 0.0 { 1.0 } else { 0.0 };

    let up_vol = integrate(&sampler, |z| up(&one, &mut img, z, map), None).unwrap();
    let up_half = integrate(&sampler, |z| up(&half, &mut img, z, map), None).unwrap();

    // Image side: rejection from the box, scaled by box volume.
    let (b_u, b_v) = map_image_box(map.kind);
    let box_vol = 16.0 * b_u * b_u * b_v * b_v;
    let mut rng = CounterRng::substream(seed, 7);
    let down_mean = |pred: &dyn Fn(&[Complex64]) -> f64, rng: &mut CounterRng| {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..samples {
            let u = [
                c64(rng.next_sym() * b_u, rng.next_sym() * b_u),
                c64(rng.next_sym() * b_v, rng.next_sym() * b_v),
            ];
            let x = if map_image_contains(map.kind, &u) { pred(&u) } else { 0.0 };
            sum += x;
            sumsq += x * x;
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        MCEstimate {
            value: c64(mean * box_vol, 0.0),
            stderr: box_vol * libm::sqrt(var / n),
            count: samples,
        }
    };
    let down_vol = down_mean(&one, &mut rng);
    let down_half = down_mean(&half, &mut rng);

    (up_vol, down_vol, up_half, down_half)
}

/// Compares the pulled-back Jacobian-squared integral against the direct
/// image measure, for the counting-degree identity of the builtin maps.
pub fn change_of_variable_check(map: &OrbitMap, samples: usize, seed: u64) -> CovReport {
    let closed_form = map_image_volume(map.kind);
    let mut reran = false;
    let (mut uv, mut dv, mut uh, mut dh) = cov_round(map, samples, seed);
    let consistent_now = |uv: &MCEstimate, dv: &MCEstimate, uh: &MCEstimate, dh: &MCEstimate| {
        let mut ok = uv.agrees_with(dv, 3.0) && uh.agrees_with(dh, 3.0);
        if let Some(cf) = closed_form {
            ok = ok && uv.within(c64(cf, 0.0), 3.0) && dv.within(c64(cf, 0.0), 3.0);
        }
        ok
    };
    let mut consistent = consistent_now(&uv, &dv, &uh, &dh);
    if !consistent {
        reran = true;
        let again = cov_round(map, samples * 4, CounterRng::substream(seed, 99).next_u64());
        uv = again.0;
        dv = again.1;
        uh = again.2;
        dh = again.3;
        consistent = consistent_now(&uv, &dv, &uh, &dh);
    }
    CovReport {
        kind: map.kind,
        degree: map.group.order(),
        upstairs_volume: uv,
        downstairs_volume: dv,
        upstairs_half: uh,
        downstairs_half: dh,
        closed_form,
        consistent,
        reran,
    }
}

#[derive(Clone, Debug)]
pub struct ReproPoint {
    pub z: Vec<Complex64>,
    pub estimate: MCEstimate,
    pub expected: Complex64,
    pub pass: bool,
    pub reran: bool,
}

#[derive(Clone, Debug)]
pub struct ReproReport {
    pub points: Vec<ReproPoint>,
    pub all_pass: bool,
}

/// MC estimate of the averaged-kernel integral against `f` at `z`.
pub fn kernel_integral<F>(
    eval: &KernelEvaluator,
    f: F,
    z: &[Complex64],
    samples: usize,
    seed: u64,
) -> MCEstimate
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let sampler = Sampler::uniform(eval.domain.dim, seed, samples);
    integrate(
        &sampler,
        |w| {
            // The kernel cannot blow up for interior samples; averaging
            // errors only on singular pairs, which have measure zero.
            eval.averaged(z, w).unwrap() * f(w)
        },
        None,
    )
    .unwrap()
}

/// Verifies that integrating a twisted-invariant function against the
/// averaged kernel at p = 2 reproduces its value at each test point.
pub fn reproducing_check(
    eval: &KernelEvaluator,
    v: &TwistedFunction,
    test_points: &[Vec<Complex64>],
    samples: usize,
    seed: u64,
) -> ReproReport {
    assert_eq!(eval.p, 2.0, "reproduction holds at the self-dual exponent only");
    let mut points = Vec::new();
    for (i, z) in test_points.iter().enumerate() {
        let expected = v.eval(z);
        let sub = CounterRng::substream(seed, i as u64).next_u64();
        let mut est = kernel_integral(eval, |w| v.eval(w), z, samples, sub);
        let mut pass = est.within(expected, 3.0);
        let mut reran = false;
        if !pass {
            reran = true;
            est = kernel_integral(eval, |w| v.eval(w), z, samples * 4, sub ^ 0xA5A5);
            pass = est.within(expected, 3.0);
        }
        points.push(ReproPoint { z: z.clone(), estimate: est, expected, pass, reran });
    }
    let all_pass = points.iter().all(|p| p.pass);
    ReproReport { points, all_pass }
}

#[derive(Clone, Debug)]
pub struct MeanValueReport {
    pub estimate: MCEstimate,
    pub expected: Complex64,
    pub pass: bool,
    pub reran: bool,
}

/// Mean of a holomorphic function over the ball equals its center value.
pub fn mean_value_check<F>(v: F, samples: usize, seed: u64) -> MeanValueReport
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let expected = v(&[Complex64::ZERO, Complex64::ZERO]);
    let run = |n: usize, s: u64| {
        let sampler = Sampler::uniform(2, s, n);
        let est = integrate(&sampler, &v, None).unwrap();
        // Mean, not integral: divide out the ball volume.
        let vol = sampler.domain.volume();
        MCEstimate { value: est.value / vol, stderr: est.stderr / vol, count: est.count }
    };
    let mut estimate = run(samples, seed);
    let mut pass = estimate.within(expected, 3.0);
    let mut reran = false;
    if !pass {
        reran = true;
        estimate = run(samples * 4, CounterRng::substream(seed, 3).next_u64());
        pass = estimate.within(expected, 3.0);
    }
    MeanValueReport { estimate, expected, pass, reran }
}
