//! Ball reproducing kernels, group averaging, and the two-sided weights.
//!
//! The base kernel on the unit ball in C^n is (1 - <z,w>)^{-(n+1)} times
//! n!/pi^n under the probabilistic normalization. Averaging twists each
//! summand by a determinant factor so the result reproduces functions
//! that transform like Jacobians rather than invariant ones. Weighted
//! variants multiply by moduli of the mirror product; exponents can be
//! negative, so those moduli are handled in log space.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::group::{close_group, GroupElement, GroupError, ReflectionGroup};
use crate::linalg::{c64, inner, CMatrix};
use crate::poly::{jacobian_for, LinearFormProduct, OrbitMap, Polynomial};
use crate::rng::{uniform_ball, CounterRng};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelError {
    /// 1 - <z,w> fell below the singularity guard.
    SingularPair,
    /// A negative modulus exponent met a point on a mirror.
    OnHyperplane,
    /// The operation needs a group attached to the evaluator.
    GroupRequired,
    Group(GroupError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::SingularPair => write!(f, "kernel denominator is numerically singular"),
            KernelError::OnHyperplane => {
                write!(f, "point lies on a mirror where the weight exponent is negative")
            }
            KernelError::GroupRequired => write!(f, "operation requires an attached group"),
            KernelError::Group(e) => write!(f, "group construction failed: {e}"),
        }
    }
}

impl From<GroupError> for KernelError {
    fn from(e: GroupError) -> Self {
        KernelError::Group(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// n!/pi^n prefactor; the kernel then reproduces against the
    /// probability-normalized volume integral without extra constants.
    Probabilistic,
    /// Prefactor dropped.
    Unnormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Ball,
}

#[derive(Clone, Copy, Debug)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dim: usize,
    pub normalization: Normalization,
}

impl DomainSpec {
    pub fn ball(dim: usize) -> Self {
        DomainSpec { kind: DomainKind::Ball, dim, normalization: Normalization::Probabilistic }
    }

    /// Euclidean volume of the domain; pi^n/n! for the ball.
    pub fn volume(&self) -> f64 {
        let mut v = 1.0;
        for k in 1..=self.dim {
            v *= core::f64::consts::PI / k as f64;
        }
        v
    }

    pub fn prefactor(&self) -> f64 {
        match self.normalization {
            Normalization::Probabilistic => 1.0 / self.volume(),
            Normalization::Unnormalized => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AveragedForm {
    ZSide,
    DoubleSum,
}

/// Evaluator bundling domain, optional group data and the weight
/// exponent p.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    pub domain: DomainSpec,
    pub group: Option<ReflectionGroup>,
    pub jg: Option<LinearFormProduct>,
    pub p: f64,
}

impl KernelEvaluator {
    pub fn ball(dim: usize) -> Self {
        KernelEvaluator { domain: DomainSpec::ball(dim), group: None, jg: None, p: 2.0 }
    }

    pub fn with_group(mut self, group: ReflectionGroup) -> Result<Self, KernelError> {
        assert_eq!(group.dim, self.domain.dim);
        self.jg = Some(jacobian_for(&group)?);
        self.group = Some(group);
        Ok(self)
    }

    pub fn with_p(mut self, p: f64) -> Self {
        assert!(p > 1.0 && p.is_finite());
        self.p = p;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.domain.normalization = normalization;
        self
    }

    fn group_ref(&self) -> Result<&ReflectionGroup, KernelError> {
        self.group.as_ref().ok_or(KernelError::GroupRequired)
    }

    fn jg_ref(&self) -> Result<&LinearFormProduct, KernelError> {
        self.jg.as_ref().ok_or(KernelError::GroupRequired)
    }

    /// Closed-form ball kernel.
    pub fn bergman(&self, z: &[Complex64], w: &[Complex64]) -> Result<Complex64, KernelError> {
        let den = Complex64::ONE - inner(z, w);
        if den.norm() < tol::KERNEL_SINGULAR {
            return Err(KernelError::SingularPair);
        }
        let n = self.domain.dim as i32;
        Ok(den.powi(-(n + 1)) * self.domain.prefactor())
    }

    /// Determinant-twisted group average over the second argument.
    pub fn averaged(&self, z: &[Complex64], w: &[Complex64]) -> Result<Complex64, KernelError> {
        let group = self.group_ref()?;
        let mut gw = vec![Complex64::ZERO; w.len()];
        let mut acc = Complex64::ZERO;
        for e in &group.elements {
            e.matrix.apply(w, &mut gw);
            acc += self.bergman(z, &gw)? * e.det.conj();
        }
        Ok(acc / group.order() as f64)
    }

    /// The same average expressed over the first argument, or as the
    /// fully symmetric double sum. All forms agree analytically; keeping
    /// them separate gives the tests something sharp to compare.
    pub fn averaged_alt(
        &self,
        z: &[Complex64],
        w: &[Complex64],
        form: AveragedForm,
    ) -> Result<Complex64, KernelError> {
        let group = self.group_ref()?;
        let mut gz = vec![Complex64::ZERO; z.len()];
        match form {
            AveragedForm::ZSide => {
                let mut acc = Complex64::ZERO;
                for e in &group.elements {
                    e.matrix.apply(z, &mut gz);
                    acc += self.bergman(&gz, w)? * e.det;
                }
                Ok(acc / group.order() as f64)
            }
            AveragedForm::DoubleSum => {
                let mut gw = vec![Complex64::ZERO; w.len()];
                let mut acc = Complex64::ZERO;
                for eg in &group.elements {
                    eg.matrix.apply(z, &mut gz);
                    for eh in &group.elements {
                        eh.matrix.apply(w, &mut gw);
                        acc += self.bergman(&gz, &gw)? * eg.det * eh.det.conj();
                    }
                }
                let m = group.order() as f64;
                Ok(acc / (m * m))
            }
        }
    }

    /// Natural logs of the two weight factors, z side and w side. Either
    /// may be -inf on a mirror.
    pub fn weight_logs(&self, z: &[Complex64], w: &[Complex64]) -> Result<(f64, f64), KernelError> {
        let jg = self.jg_ref()?;
        let ez = 2.0 / self.p - 1.0;
        let ew = 1.0 - 2.0 / self.p;
        let lz = if ez == 0.0 { 0.0 } else { ez * jg.log_abs(z) } ;
        let lw = if ew == 0.0 { 0.0 } else { ew * jg.log_abs(w) };
        if lz == f64::INFINITY || lw == f64::INFINITY {
            // A negative exponent hit a mirror zero.
            return Err(KernelError::OnHyperplane);
        }
        Ok((lz, lw))
    }

    /// Averaged kernel conjugated by the |J_G| weights for exponent p.
    pub fn weighted(&self, z: &[Complex64], w: &[Complex64]) -> Result<Complex64, KernelError> {
        let (kg, logw) = self.weighted_parts(z, w)?;
        Ok(kg * libm::exp(logw))
    }

    /// (averaged value, log of total weight); callers fitting constants
    /// combine these without leaving log space.
    pub fn weighted_parts(
        &self,
        z: &[Complex64],
        w: &[Complex64],
    ) -> Result<(Complex64, f64), KernelError> {
        let (lz, lw) = self.weight_logs(z, w)?;
        Ok((self.averaged(z, w)?, lz + lw))
    }

    /// K_G divided by the mirror products on both slots; the quantity
    /// whose boundedness the whole estimate machinery rests on.
    pub fn division_quotient(
        &self,
        z: &[Complex64],
        w: &[Complex64],
    ) -> Result<Complex64, KernelError> {
        let jg = self.jg_ref()?;
        let jz = jg.eval(z);
        let jw = jg.eval(w);
        if jz.norm() < tol::WEIGHT_UNDERFLOW || jw.norm() < tol::WEIGHT_UNDERFLOW {
            return Err(KernelError::OnHyperplane);
        }
        Ok(self.averaged(z, w)? / (jz * jw.conj()))
    }
}

/// det(g) * u(g.z).
pub fn pullback<F>(g: &GroupElement, u: F, z: &[Complex64]) -> Complex64
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let mut gz = vec![Complex64::ZERO; z.len()];
    g.matrix.apply(z, &mut gz);
    g.det * u(&gz)
}

/// Group average of pullbacks; the projection onto functions with the
/// Jacobian transformation law.
pub fn project_invariant<F>(group: &ReflectionGroup, u: F, z: &[Complex64]) -> Complex64
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let mut acc = Complex64::ZERO;
    for e in &group.elements {
        acc += pullback(e, &u, z);
    }
    acc / group.order() as f64
}

/// Lift of a polynomial through an orbit map: v = J(pi) * (u o pi).
#[derive(Clone, Debug)]
pub struct TwistedFunction {
    pub map: OrbitMap,
    pub downstairs: Polynomial,
}

impl TwistedFunction {
    pub fn new(map: OrbitMap, downstairs: Polynomial) -> Self {
        assert_eq!(downstairs.dim, map.components.len());
        TwistedFunction { map, downstairs }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.map.jacobian_det.eval(z) * self.downstairs.eval(&self.map.eval_vec(z))
    }

    /// Worst relative violation of det(g) v(g.z) = v(z) over samples.
    pub fn invariance_max_rel(&self, samples: usize, seed: u64) -> f64 {
        let n = self.map.dim();
        let mut rng = CounterRng::new(seed);
        let mut z = vec![Complex64::ZERO; n];
        let mut gz = vec![Complex64::ZERO; n];
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut devs: Vec<f64> = Vec::new();
        for _ in 0..samples {
            uniform_ball(&mut rng, n, &mut z);
            let base = self.eval(&z);
            scale = scale.max(base.norm());
            for e in &self.map.group.elements {
                e.matrix.apply(&z, &mut gz);
                devs.push((e.det * self.eval(&gz) - base).norm());
            }
        }
        for d in devs {
            worst = worst.max(d);
        }
        worst / scale.max(1e-300)
    }
}

/// Sum of (2k+2)(2k+3)/4^k, run until the geometric tail bound drops
/// below the series cutoff. Equals 416/27.
pub fn series_constant() -> f64 {
    let mut sum = 0.0;
    let mut k = 0u32;
    loop {
        let kk = k as f64;
        let term = (2.0 * kk + 2.0) * (2.0 * kk + 3.0) / libm::pow(4.0, kk);
        sum += term;
        // Ratios (2k+4)(2k+5)/(4(2k+2)(2k+3)) decrease toward 1/4, so the
        // tail after this term is below term * r/(1-r) at the current r.
        let r = (2.0 * kk + 4.0) * (2.0 * kk + 5.0)
            / (4.0 * (2.0 * kk + 2.0) * (2.0 * kk + 3.0));
        if term * r / (1.0 - r) < tol::SERIES_TAIL {
            return sum;
        }
        k += 1;
    }
}

/// Pairs where the product of first coordinates dominates half the
/// second-coordinate kernel denominator. C^2 only.
pub fn first_coord_dominant(z: &[Complex64], w: &[Complex64]) -> bool {
    debug_assert!(z.len() == 2 && w.len() == 2);
    (z[0] * w[0].conj()).norm() >= 0.5 * (Complex64::ONE - z[1] * w[1].conj()).norm()
}

/// Fitted constants of the two-piece pointwise bound for the order-two
/// coordinate reflection group.
#[derive(Clone, Debug)]
pub struct FlipBoundReport {
    pub p: f64,
    /// sup over the dominant region of |K_{G,p}| / (|K(z,w)| + |K(z,rw)|).
    pub c_region: f64,
    /// sup off the region of |K_{G,p}| / (|z1|^{2/p} |w1|^{2-2/p} / |1-z2 conj(w2)|^4).
    pub c_off_power: f64,
    /// sup off the region of |K_{G,p}| / |K(z,w)|.
    pub c_off_kernel: f64,
    /// sup over the dominant region of |z1|/|w1|; bounded by 4.
    pub max_ratio_first_coords: f64,
    pub inside_count: usize,
    pub outside_count: usize,
    pub discarded: usize,
}

/// Samples swap-closed pairs in the ball and fits the smallest constants
/// making the pointwise kernel bounds hold on the sample. The group is
/// fixed: {id, diag(-1,1)}.
pub fn flip_bound_check(p: f64, samples: usize, seed: u64) -> Result<FlipBoundReport, KernelError> {
    assert!(p > 1.0);
    let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
    let group = close_group(2, &[flip.clone()], 4)?;
    let eval = KernelEvaluator::ball(2).with_group(group)?.with_p(p);

    let mut rng_z = CounterRng::substream(seed, 1);
    let mut rng_w = CounterRng::substream(seed, 2);
    let mut z = vec![Complex64::ZERO; 2];
    let mut w = vec![Complex64::ZERO; 2];
    let mut rw = vec![Complex64::ZERO; 2];

    let mut rep = FlipBoundReport {
        p,
        c_region: 0.0,
        c_off_power: 0.0,
        c_off_kernel: 0.0,
        max_ratio_first_coords: 0.0,
        inside_count: 0,
        outside_count: 0,
        discarded: 0,
    };

    for _ in 0..samples {
        uniform_ball(&mut rng_z, 2, &mut z);
        uniform_ball(&mut rng_w, 2, &mut w);
        for (a, b) in [(&z, &w), (&w, &z)] {
            let den2 = (Complex64::ONE - a[1] * b[1].conj()).norm();
            if a[0].norm() < tol::PAIR_DISCARD
                || b[0].norm() < tol::PAIR_DISCARD
                || den2 < tol::PAIR_DISCARD
            {
                rep.discarded += 1;
                continue;
            }
            let kgp = eval.weighted(a, b)?.norm();
            if first_coord_dominant(a, b) {
                rep.inside_count += 1;
                flip.apply(b, &mut rw);
                let rhs = eval.bergman(a, b)?.norm() + eval.bergman(a, &rw)?.norm();
                rep.c_region = rep.c_region.max(kgp / rhs);
                rep.max_ratio_first_coords =
                    rep.max_ratio_first_coords.max(a[0].norm() / b[0].norm());
            } else {
                rep.outside_count += 1;
                let rhs_pow = libm::pow(a[0].norm(), 2.0 / p)
                    * libm::pow(b[0].norm(), 2.0 - 2.0 / p)
                    / libm::pow(den2, 4.0);
                rep.c_off_power = rep.c_off_power.max(kgp / rhs_pow);
                rep.c_off_kernel = rep.c_off_kernel.max(kgp / eval.bergman(a, b)?.norm());
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::build_g_mln;
    use crate::poly::{builtin_orbit_map, MapKind};

    fn z2(a: f64, b: f64, c: f64, d: f64) -> Vec<Complex64> {
        vec![c64(a, b), c64(c, d)]
    }

    fn flip_group() -> ReflectionGroup {
        let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
        close_group(2, &[flip], 4).unwrap()
    }

    #[test]
    fn base_kernel_values() {
        let ev = KernelEvaluator::ball(2);
        let origin = z2(0.0, 0.0, 0.0, 0.0);
        let at0 = ev.bergman(&origin, &origin).unwrap();
        let want = 2.0 / (core::f64::consts::PI * core::f64::consts::PI);
        assert!((at0 - c64(want, 0.0)).norm() < 1e-15);

        let mut rng = CounterRng::new(5);
        let mut z = vec![Complex64::ZERO; 2];
        let mut w = vec![Complex64::ZERO; 2];
        for _ in 0..200 {
            uniform_ball(&mut rng, 2, &mut z);
            uniform_ball(&mut rng, 2, &mut w);
            let k = ev.bergman(&z, &w).unwrap();
            let k_rev = ev.bergman(&w, &z).unwrap();
            assert!((k - k_rev.conj()).norm() <= 1e-12 * k.norm());
            let diag = ev.bergman(&z, &z).unwrap();
            assert!(diag.im.abs() <= 1e-15 * diag.re);
            assert!(diag.re >= at0.re - 1e-15);
        }
    }

    #[test]
    fn unnormalized_drops_the_prefactor() {
        let ev = KernelEvaluator::ball(2).with_normalization(Normalization::Unnormalized);
        let z = z2(0.1, 0.2, -0.3, 0.0);
        let den = Complex64::ONE - inner(&z, &z);
        let want = den.powi(-3);
        assert!((ev.bergman(&z, &z).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn singular_pair_is_refused() {
        let ev = KernelEvaluator::ball(2);
        let z = z2(1.0, 0.0, 0.0, 0.0);
        assert_eq!(ev.bergman(&z, &z), Err(KernelError::SingularPair));
    }

    #[test]
    fn averaging_with_trivial_group_is_identity() {
        let trivial = close_group(2, &[], 1).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(trivial).unwrap();
        let z = z2(0.3, 0.1, 0.2, -0.4);
        let w = z2(-0.1, 0.2, 0.5, 0.1);
        let k = ev.bergman(&z, &w).unwrap();
        assert!((ev.averaged(&z, &w).unwrap() - k).norm() < 1e-15);
        for form in [AveragedForm::ZSide, AveragedForm::DoubleSum] {
            assert!((ev.averaged_alt(&z, &w, form).unwrap() - k).norm() < 1e-15);
        }
        assert!((ev.division_quotient(&z, &w).unwrap() - k).norm() < 1e-15);
    }

    #[test]
    fn order_two_average_is_a_half_difference() {
        let ev = KernelEvaluator::ball(2).with_group(flip_group()).unwrap();
        let z = z2(0.25, -0.1, 0.3, 0.2);
        let w = z2(0.4, 0.05, -0.2, 0.35);
        let direct = ev.averaged(&z, &w).unwrap();
        let wf = z2(-0.4, -0.05, -0.2, 0.35);
        let want =
            0.5 * (ev.bergman(&z, &w).unwrap() - ev.bergman(&z, &wf).unwrap());
        assert!((direct - want).norm() <= 1e-14 * want.norm().max(1e-10));

        // First coordinate zero: the two summands cancel exactly.
        let fixed = z2(0.0, 0.0, 0.3, -0.2);
        let at_fixed = ev.averaged(&fixed, &w).unwrap();
        assert!(at_fixed.norm() < 1e-16);
    }

    #[test]
    fn averaged_forms_agree() {
        for (m, ell) in [(2u32, 2u32), (3, 3)] {
            let g = build_g_mln(m, ell, 2).unwrap();
            let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
            let mut rng = CounterRng::new(17);
            let mut z = vec![Complex64::ZERO; 2];
            let mut w = vec![Complex64::ZERO; 2];
            for _ in 0..1000 {
                uniform_ball(&mut rng, 2, &mut z);
                uniform_ball(&mut rng, 2, &mut w);
                let a = ev.averaged(&z, &w).unwrap();
                let b = ev.averaged_alt(&z, &w, AveragedForm::ZSide).unwrap();
                let c = ev.averaged_alt(&z, &w, AveragedForm::DoubleSum).unwrap();
                let scale = a.norm().max(1e-30);
                assert!((a - b).norm() <= tol::KERNEL_AGREE_REL * scale);
                assert!((a - c).norm() <= tol::KERNEL_AGREE_REL * scale);
            }
        }
    }

    #[test]
    fn averaged_kernel_is_hermitian() {
        let g = build_g_mln(4, 4, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
        let mut rng = CounterRng::new(29);
        let mut z = vec![Complex64::ZERO; 2];
        let mut w = vec![Complex64::ZERO; 2];
        for _ in 0..300 {
            uniform_ball(&mut rng, 2, &mut z);
            uniform_ball(&mut rng, 2, &mut w);
            let a = ev.averaged(&z, &w).unwrap();
            let b = ev.averaged(&w, &z).unwrap();
            assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn averaged_vanishes_on_fixed_points() {
        // z fixed by some reflection forces J_G(z) = 0 and K_G(z, .) = 0.
        let g = build_g_mln(2, 2, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
        let on_mirror = z2(0.3, 0.1, 0.3, 0.1);
        let w = z2(0.2, -0.3, 0.1, 0.4);
        let v = ev.averaged(&on_mirror, &w).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn weight_exponents_cancel_at_p_two() {
        let ev = KernelEvaluator::ball(2).with_group(build_g_mln(2, 2, 2).unwrap()).unwrap();
        let z = z2(0.3, 0.0, 0.1, 0.2);
        let w = z2(-0.2, 0.1, 0.4, 0.0);
        let kg = ev.averaged(&z, &w).unwrap();
        let kp = ev.weighted(&z, &w).unwrap();
        assert_eq!(kg, kp);
    }

    #[test]
    fn weighted_matches_direct_product_off_mirrors() {
        let g = build_g_mln(2, 2, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap().with_p(4.0);
        let jg = ev.jg.clone().unwrap();
        let z = z2(0.3, 0.05, 0.1, 0.2);
        let w = z2(-0.2, 0.1, 0.4, 0.0);
        let direct = libm::pow(jg.eval(&z).norm(), 2.0 / 4.0 - 1.0)
            * libm::pow(jg.eval(&w).norm(), 1.0 - 2.0 / 4.0);
        let want = ev.averaged(&z, &w).unwrap() * direct;
        let got = ev.weighted(&z, &w).unwrap();
        assert!((got - want).norm() <= 1e-13 * want.norm());
    }

    #[test]
    fn weighted_duality_conjugates() {
        let g = build_g_mln(4, 4, 2).unwrap();
        let p = 3.0;
        let pp = p / (p - 1.0);
        let ev_p = KernelEvaluator::ball(2).with_group(g.clone()).unwrap().with_p(p);
        let ev_q = KernelEvaluator::ball(2).with_group(g).unwrap().with_p(pp);
        let mut rng = CounterRng::new(41);
        let mut z = vec![Complex64::ZERO; 2];
        let mut w = vec![Complex64::ZERO; 2];
        for _ in 0..200 {
            uniform_ball(&mut rng, 2, &mut z);
            uniform_ball(&mut rng, 2, &mut w);
            let a = ev_p.weighted(&z, &w).unwrap();
            let b = ev_q.weighted(&w, &z).unwrap();
            assert!((a - b.conj()).norm() <= 1e-11 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn weighted_refuses_mirror_points_for_negative_exponents() {
        let g = build_g_mln(2, 2, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap().with_p(4.0);
        let on_mirror = z2(0.3, 0.0, 0.3, 0.0);
        let w = z2(0.1, 0.0, -0.2, 0.1);
        // 2/p - 1 < 0 at p = 4: z on a mirror must error.
        assert_eq!(ev.weighted(&on_mirror, &w), Err(KernelError::OnHyperplane));
        // The w-side exponent is positive at p = 4: w on a mirror is fine
        // and the weight collapses to zero.
        let kp = ev.weighted(&w, &on_mirror).unwrap();
        assert_eq!(kp, Complex64::ZERO);
    }

    #[test]
    fn division_quotient_stays_cauchy_toward_a_mirror() {
        let ev = KernelEvaluator::ball(2).with_group(flip_group()).unwrap();
        let w = z2(0.3, -0.2, 0.25, 0.1);
        let mut prev: Option<Complex64> = None;
        for k in 2..=6 {
            let z = z2(libm::pow(10.0, -(k as f64)), 0.0, 0.2, 0.15);
            let q = ev.division_quotient(&z, &w).unwrap();
            if let Some(p) = prev {
                let gap = (q - p).norm() / q.norm();
                assert!(gap <= 1e-5 || k == 3, "k={k} gap={gap:.3e}");
            }
            prev = Some(q);
        }
    }

    #[test]
    fn division_quotient_rejects_exact_mirror_points() {
        let ev = KernelEvaluator::ball(2).with_group(flip_group()).unwrap();
        let z = z2(0.0, 0.0, 0.2, 0.15);
        let w = z2(0.3, -0.2, 0.25, 0.1);
        assert_eq!(ev.division_quotient(&z, &w), Err(KernelError::OnHyperplane));
    }

    #[test]
    fn group_required_errors() {
        let ev = KernelEvaluator::ball(2);
        let z = z2(0.1, 0.0, 0.0, 0.0);
        assert_eq!(ev.averaged(&z, &z), Err(KernelError::GroupRequired));
        assert_eq!(ev.weighted(&z, &z), Err(KernelError::GroupRequired));
    }

    #[test]
    fn pullback_and_projection() {
        let g = flip_group();
        let one = |_: &[Complex64]| Complex64::ONE;
        let z = z2(0.2, 0.1, -0.3, 0.4);

        let id = &g.elements[g.identity_index()];
        assert_eq!(pullback(id, one, &z), Complex64::ONE);
        let refl = g
            .elements
            .iter()
            .find(|e| !e.is_identity())
            .unwrap();
        assert_eq!(pullback(refl, one, &z), -Complex64::ONE);
        // Non-invariant constant averages to zero.
        assert!(project_invariant(&g, one, &z).norm() < 1e-16);
    }

    #[test]
    fn pullback_composes_contravariantly() {
        let g = build_g_mln(3, 3, 2).unwrap();
        let u = |z: &[Complex64]| z[0] * z[0] + c64(0.0, 1.0) * z[1];
        let mut rng = CounterRng::new(53);
        let mut z = vec![Complex64::ZERO; 2];
        for a in &g.elements {
            for b in &g.elements {
                uniform_ball(&mut rng, 2, &mut z);
                let ab = GroupElement {
                    matrix: a.matrix.mul(&b.matrix),
                    det: a.det * b.det,
                    order: 1,
                };
                let lhs = pullback(&ab, u, &z);
                let inner_pull =
                    |y: &[Complex64]| pullback(a, u, y);
                let rhs = pullback(b, inner_pull, &z);
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_fixes_twisted_functions() {
        let map = builtin_orbit_map(MapKind::Gml2 { m: 2, ell: 2 }).unwrap();
        let g = map.group.clone();
        let mut u_down = Polynomial::one(2);
        u_down.add_term(&[1, 0], c64(0.5, 0.25));
        u_down.add_term(&[0, 2], c64(-0.3, 0.1));
        let v = TwistedFunction::new(map, u_down);
        assert!(v.invariance_max_rel(100, 61) <= tol::INVARIANCE_REL);

        let mut rng = CounterRng::new(67);
        let mut z = vec![Complex64::ZERO; 2];
        for _ in 0..50 {
            uniform_ball(&mut rng, 2, &mut z);
            let vv = |y: &[Complex64]| v.eval(y);
            let once = project_invariant(&g, vv, &z);
            assert!((once - v.eval(&z)).norm() <= 1e-12 * v.eval(&z).norm().max(1e-30));

            // Idempotence on a non-invariant input.
            let u = |y: &[Complex64]| y[0] + c64(0.3, 0.0) * y[1] * y[1];
            let pu = |y: &[Complex64]| project_invariant(&g, u, y);
            let twice = project_invariant(&g, pu, &z);
            let once_u = pu(&z);
            assert!((twice - once_u).norm() <= 1e-12 * once_u.norm().max(1e-30));
        }
    }

    #[test]
    fn series_constant_matches_closed_form() {
        let c = series_constant();
        assert!((c - 416.0 / 27.0).abs() < 1e-12);
        assert!(c > 6.0);
    }

    #[test]
    fn region_membership_examples() {
        let z = z2(0.9, 0.0, 0.0, 0.0);
        assert!(first_coord_dominant(&z, &z));
        let z0 = z2(0.0, 0.0, 0.5, 0.0);
        let w = z2(0.4, 0.0, 0.3, 0.0);
        assert!(!first_coord_dominant(&z0, &w));
    }

    #[test]
    fn flip_constants_are_finite_and_ratio_bounded() {
        let rep = flip_bound_check(2.0, 4000, 99).unwrap();
        assert!(rep.inside_count > 0 && rep.outside_count > 0);
        assert!(rep.c_region.is_finite() && rep.c_region > 0.0);
        assert!(rep.c_off_power.is_finite());
        assert!(rep.c_off_kernel.is_finite());
        assert!(rep.max_ratio_first_coords <= 4.0 + 1e-9);
    }

    #[test]
    fn flip_constants_respect_duality() {
        let a = flip_bound_check(4.0, 2000, 7).unwrap();
        let b = flip_bound_check(4.0 / 3.0, 2000, 7).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        assert!(close(a.c_region, b.c_region));
        assert!(close(a.c_off_power, b.c_off_power));
        assert!(close(a.c_off_kernel, b.c_off_kernel));
        assert_eq!(a.inside_count, b.inside_count);
    }
}
