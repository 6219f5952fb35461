//! Region decompositions and empirical constants for the kernel
//! domination estimates.
//!
//! Nothing here is a proof. Deltas are sampled infima with a witness
//! pair, constants are sampled suprema with a doubling diagnostic, and
//! the identity-level checks (averaging, weight invariance) carry tight
//! tolerances because they are exact statements, unlike the constants.
//!
//! Pair sampling is shared by every operation: a deterministic stream
//! cycling four strata (uniform, boundary-pushed, near-orbit-diagonal,
//! pushed near-diagonal), so suprema taken at different deltas or
//! subgroup choices see literally the same points and are comparable.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::group::{
    find_hyperplanes, orbit_decomposition, GroupError, Hyperplane, ReflectionGroup,
};
use crate::kernel::{KernelError, KernelEvaluator};
use crate::linalg::{inner, vec_dist, vec_norm};
use crate::quad::{integrate, Sampler};
use crate::rng::{boundary_push, uniform_ball, uniform_ball_avoiding, CounterRng};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub enum EstimateError {
    /// Orbit sets do not form a nonempty two-part partition of all
    /// mirror orbits. Single-orbit groups land here.
    InvalidPartition(&'static str),
    /// The candidate subgroup is not conjugation-stable in the parent.
    NotNormal,
    /// The subgroup's mirror set differs from the selected orbits.
    MirrorMismatch,
    EmptyGrid,
    Group(GroupError),
    Kernel(KernelError),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::InvalidPartition(m) => write!(f, "invalid orbit partition: {m}"),
            EstimateError::NotNormal => write!(f, "subgroup is not normal in the parent"),
            EstimateError::MirrorMismatch => {
                write!(f, "subgroup mirrors do not match the selected orbits")
            }
            EstimateError::EmptyGrid => write!(f, "empty parameter grid"),
            EstimateError::Group(e) => write!(f, "group construction failed: {e}"),
            EstimateError::Kernel(e) => write!(f, "kernel evaluation failed: {e}"),
        }
    }
}

impl From<GroupError> for EstimateError {
    fn from(e: GroupError) -> Self {
        EstimateError::Group(e)
    }
}

impl From<KernelError> for EstimateError {
    fn from(e: KernelError) -> Self {
        EstimateError::Kernel(e)
    }
}

/// Pair region where both points keep inner-product distance at least
/// delta from every mirror outside the selected orbit set.
#[derive(Clone, Debug)]
pub struct RegionSpec {
    pub delta: f64,
    pub excluded_roots: Vec<Vec<Complex64>>,
}

impl RegionSpec {
    pub fn from_orbits(hyperplanes: &[Hyperplane], selected: &[usize], delta: f64) -> Self {
        let excluded_roots = hyperplanes
            .iter()
            .filter(|h| !selected.contains(&h.orbit_id))
            .map(|h| h.root.clone())
            .collect();
        RegionSpec { delta, excluded_roots }
    }

    /// Distance of the pair to the complement condition: the smallest
    /// mirror distance over excluded mirrors and both points. Infinite
    /// when nothing is excluded.
    pub fn margin(&self, z: &[Complex64], w: &[Complex64]) -> f64 {
        let mut m = f64::INFINITY;
        for e in &self.excluded_roots {
            m = m.min(inner(z, e).norm()).min(inner(w, e).norm());
        }
        m
    }

    pub fn contains(&self, z: &[Complex64], w: &[Complex64]) -> bool {
        self.margin(z, w) >= self.delta
    }
}

/// Boundary-plus-diagonal margin: (1-|z|) + (1-|w|) + min_g |g.z - w|.
pub fn reg_margin(group: &ReflectionGroup, z: &[Complex64], w: &[Complex64]) -> f64 {
    let mut gz = vec![Complex64::ZERO; z.len()];
    let mut min_diag = f64::INFINITY;
    for e in &group.elements {
        e.matrix.apply(z, &mut gz);
        min_diag = min_diag.min(vec_dist(&gz, w));
    }
    (1.0 - vec_norm(z)) + (1.0 - vec_norm(w)) + min_diag
}

/// Deterministic pair stream cycling four strata. Pushing toward the
/// boundary and the orbit diagonal puts weight where suprema live.
pub struct PairStream<'a> {
    group: &'a ReflectionGroup,
    rng: CounterRng,
    k: u64,
}

impl<'a> PairStream<'a> {
    pub fn new(group: &'a ReflectionGroup, seed: u64) -> Self {
        PairStream { group, rng: CounterRng::new(seed), k: 0 }
    }

    pub fn next_pair(&mut self, z: &mut [Complex64], w: &mut [Complex64]) {
        let n = self.group.dim;
        let stratum = self.k % 4;
        uniform_ball(&mut self.rng, n, z);
        match stratum {
            0 => {
                uniform_ball(&mut self.rng, n, w);
            }
            1 => {
                boundary_push(z);
                uniform_ball(&mut self.rng, n, w);
                boundary_push(w);
            }
            _ => {
                if stratum == 3 {
                    boundary_push(z);
                }
                let g = (self.k / 4) as usize % self.group.order();
                self.group.elements[g].matrix.apply(z, w);
                let mut noise = vec![Complex64::ZERO; n];
                uniform_ball(&mut self.rng, n, &mut noise);
                for (wi, ni) in w.iter_mut().zip(&noise) {
                    *wi += 0.05 * ni;
                }
                let r = vec_norm(w);
                if r >= 0.995 {
                    let s = 0.99 / r;
                    for wi in w.iter_mut() {
                        *wi *= s;
                    }
                }
            }
        }
        self.k += 1;
    }
}

#[derive(Clone, Debug)]
pub struct CoverReport {
    /// Sampled infimum of the best covering margin.
    pub delta_found: f64,
    pub samples: usize,
    pub worst_z: Vec<Complex64>,
    pub worst_w: Vec<Complex64>,
    /// Margins of the worst pair: selected-side, complement-side,
    /// regular.
    pub margins: [f64; 3],
}

fn validate_partition(
    orbit_count: usize,
    s1: &[usize],
    s2: &[usize],
) -> Result<(), EstimateError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(EstimateError::InvalidPartition("both orbit sets must be nonempty"));
    }
    if s1.iter().any(|a| s2.contains(a)) {
        return Err(EstimateError::InvalidPartition("orbit sets overlap"));
    }
    for id in s1.iter().chain(s2) {
        if *id >= orbit_count {
            return Err(EstimateError::InvalidPartition("orbit id out of range"));
        }
    }
    if s1.len() + s2.len() != orbit_count {
        return Err(EstimateError::InvalidPartition("orbit sets do not cover all orbits"));
    }
    Ok(())
}

/// Sampled covering margin for the three-region decomposition of the
/// pair space: every pair must be deep in the region over S1, the region
/// over S2, or the regular region. The infimum over a pair sample is the
/// empirical delta; a positive value is evidence, not proof.
pub fn find_covering_delta(
    group: &ReflectionGroup,
    s1: &[usize],
    s2: &[usize],
    samples: usize,
    seed: u64,
) -> Result<CoverReport, EstimateError> {
    let mut hps = find_hyperplanes(group)?;
    let orbits = orbit_decomposition(group, &mut hps);
    validate_partition(orbits.len(), s1, s2)?;
    // Delta plays no role in the margins; any value builds the specs.
    let r1 = RegionSpec::from_orbits(&hps, s1, 0.0);
    let r2 = RegionSpec::from_orbits(&hps, s2, 0.0);

    let n = group.dim;
    let mut stream = PairStream::new(group, seed);
    let mut z = vec![Complex64::ZERO; n];
    let mut w = vec![Complex64::ZERO; n];
    let mut best = f64::INFINITY;
    let mut worst_z = z.clone();
    let mut worst_w = w.clone();
    let mut margins = [0.0f64; 3];
    for _ in 0..samples {
        stream.next_pair(&mut z, &mut w);
        let m1 = r1.margin(&z, &w);
        let m2 = r2.margin(&z, &w);
        let mr = reg_margin(group, &z, &w);
        let m = m1.max(m2).max(mr);
        if m < best {
            best = m;
            worst_z.copy_from_slice(&z);
            worst_w.copy_from_slice(&w);
            margins = [m1, m2, mr];
        }
    }
    Ok(CoverReport { delta_found: best, samples, worst_z, worst_w, margins })
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub p: f64,
    /// Region tightness for subgroup bounds; None for the unrestricted
    /// main estimate.
    pub delta: Option<f64>,
    /// Sampled supremum of the domination ratio.
    pub fitted_constant: f64,
    /// Pairs that actually entered the supremum.
    pub sample_count: usize,
    /// Raw pairs drawn from the stream.
    pub raw_samples: usize,
    /// Full-sample constant divided by the half-sample constant; near 1
    /// when the supremum has stopped moving.
    pub stability_ratio: f64,
    /// Worst relative error of the subgroup averaging identity.
    pub identity_max_rel: f64,
    /// Worst relative wobble of |J_H| along group orbits.
    pub jinv_max_rel: f64,
    /// Pairs discarded for exact mirror hits.
    pub discarded: usize,
}

fn check_normal_with_mirrors(
    group: &ReflectionGroup,
    h: &ReflectionGroup,
    hps: &[Hyperplane],
    s: &[usize],
) -> Result<(), EstimateError> {
    for e in &group.elements {
        let adj = e.matrix.adjoint();
        for x in &h.elements {
            let conj = e.matrix.mul(&x.matrix).mul(&adj);
            if !h.contains(&conj) {
                return Err(EstimateError::NotNormal);
            }
        }
    }
    let selected_roots: Vec<&Vec<Complex64>> =
        hps.iter().filter(|hp| s.contains(&hp.orbit_id)).map(|hp| &hp.root).collect();
    let h_planes = match find_hyperplanes(h) {
        Ok(planes) => planes,
        Err(GroupError::NoReflections) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let matches = h_planes.len() == selected_roots.len()
        && h_planes
            .iter()
            .all(|hp| selected_roots.iter().any(|r| vec_dist(r, &hp.root) <= tol::ROOT_MATCH));
    if !matches {
        return Err(EstimateError::MirrorMismatch);
    }
    Ok(())
}

/// log of sum of exp over finite terms; -inf when all terms are -inf.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|t| libm::exp(t - m)).sum();
    m + libm::log(s)
}

/// log |K_{H,p}(z,w)|; -inf when the averaged kernel vanishes.
fn log_abs_weighted(
    eval: &KernelEvaluator,
    z: &[Complex64],
    w: &[Complex64],
) -> Result<f64, KernelError> {
    let (kh, logw) = eval.weighted_parts(z, w)?;
    if kh == Complex64::ZERO {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(libm::log(kh.norm()) + logw)
}

/// Fits the constant dominating |K_{G,p}| by the averaged subgroup
/// moduli on the region keeping clear of the complement mirrors, and
/// verifies the exact identities the domination argument rests on.
/// `samples` counts raw stream pairs; only region members enter the sup,
/// so runs at nested deltas with one seed are directly comparable.
pub fn normal_subgroup_bound(
    group: &ReflectionGroup,
    h: &ReflectionGroup,
    s: &[usize],
    p: f64,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundReport, EstimateError> {
    assert!(p > 1.0 && delta > 0.0);
    let mut hps = find_hyperplanes(group)?;
    let _ = orbit_decomposition(group, &mut hps);
    check_normal_with_mirrors(group, h, &hps, s)?;
    let region = RegionSpec::from_orbits(&hps, s, delta);

    let ev_g = KernelEvaluator::ball(group.dim).with_group(group.clone())?.with_p(p);
    let ev_h = KernelEvaluator::ball(group.dim).with_group(h.clone())?.with_p(p);
    let jh = ev_h.jg.clone().expect("group attached");

    let n = group.dim;
    let mut stream = PairStream::new(group, seed);
    let mut z = vec![Complex64::ZERO; n];
    let mut w = vec![Complex64::ZERO; n];
    let mut gz = vec![Complex64::ZERO; n];

    let mut sup = 0.0f64;
    let mut sup_half = 0.0f64;
    let mut accepted = 0usize;
    let mut discarded = 0usize;
    let mut identity_max_rel = 0.0f64;
    let mut jinv_max_rel = 0.0f64;
    let inv_order = 1.0 / group.order() as f64;

    for i in 0..samples {
        stream.next_pair(&mut z, &mut w);
        if !region.contains(&z, &w) {
            continue;
        }
        let num = match log_abs_weighted(&ev_g, &z, &w) {
            Ok(v) => v,
            Err(KernelError::OnHyperplane) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut terms = Vec::with_capacity(group.order());
        let mut ok = true;
        for e in &group.elements {
            e.matrix.apply(&z, &mut gz);
            match log_abs_weighted(&ev_h, &gz, &w) {
                Ok(v) => terms.push(v),
                Err(KernelError::OnHyperplane) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !ok {
            discarded += 1;
            continue;
        }
        let den = log_sum_exp(&terms) + libm::log(inv_order);
        let ratio = libm::exp(num - den);
        sup = sup.max(ratio);
        accepted += 1;

        if accepted <= 1000 {
            // Averaging identity: the parent average is the
            // det-twisted mean of subgroup averages over the orbit.
            let kg = ev_g.averaged(&z, &w)?;
            let mut avg = Complex64::ZERO;
            for e in &group.elements {
                e.matrix.apply(&z, &mut gz);
                avg += e.det * ev_h.averaged(&gz, &w)?;
            }
            avg *= inv_order;
            let scale = kg.norm().max(avg.norm()).max(1e-300);
            identity_max_rel = identity_max_rel.max((kg - avg).norm() / scale);

            // The subgroup mirror modulus is constant along parent
            // orbits; normality makes this exact.
            let base = jh.eval(&z).norm();
            for e in &group.elements {
                e.matrix.apply(&z, &mut gz);
                let moved = jh.eval(&gz).norm();
                jinv_max_rel =
                    jinv_max_rel.max((moved - base).abs() / base.max(1e-300));
            }
        }
        if i < samples / 2 {
            sup_half = sup;
        }
    }
    Ok(BoundReport {
        p,
        delta: Some(delta),
        fitted_constant: sup,
        sample_count: accepted,
        raw_samples: samples,
        stability_ratio: if sup_half > 0.0 { sup / sup_half } else { f64::INFINITY },
        identity_max_rel,
        jinv_max_rel,
        discarded,
    })
}

/// Fits the constant of the unrestricted two-subgroup domination, with
/// the additive floor keeping the denominator at or above one.
pub fn main_estimate_check(
    group: &ReflectionGroup,
    g1: &ReflectionGroup,
    g2: &ReflectionGroup,
    s1: &[usize],
    s2: &[usize],
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundReport, EstimateError> {
    assert!(p > 1.0);
    let mut hps = find_hyperplanes(group)?;
    let orbits = orbit_decomposition(group, &mut hps);
    validate_partition(orbits.len(), s1, s2)?;
    check_normal_with_mirrors(group, g1, &hps, s1)?;
    check_normal_with_mirrors(group, g2, &hps, s2)?;

    let ev_g = KernelEvaluator::ball(group.dim).with_group(group.clone())?.with_p(p);
    let ev_1 = KernelEvaluator::ball(group.dim).with_group(g1.clone())?.with_p(p);
    let ev_2 = KernelEvaluator::ball(group.dim).with_group(g2.clone())?.with_p(p);
    let j1 = ev_1.jg.clone().expect("group attached");
    let j2 = ev_2.jg.clone().expect("group attached");

    let n = group.dim;
    let mut stream = PairStream::new(group, seed);
    let mut z = vec![Complex64::ZERO; n];
    let mut w = vec![Complex64::ZERO; n];
    let mut gz = vec![Complex64::ZERO; n];

    let mut sup = 0.0f64;
    let mut sup_half = 0.0f64;
    let mut accepted = 0usize;
    let mut discarded = 0usize;
    let mut identity_max_rel = 0.0f64;
    let mut jinv_max_rel = 0.0f64;
    let inv_order = 1.0 / group.order() as f64;

    for i in 0..samples {
        stream.next_pair(&mut z, &mut w);
        let num = match log_abs_weighted(&ev_g, &z, &w) {
            Ok(v) => v,
            Err(KernelError::OnHyperplane) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut den = 1.0f64;
        let mut ok = true;
        for e in &group.elements {
            e.matrix.apply(&z, &mut gz);
            let t1 = log_abs_weighted(&ev_1, &gz, &w);
            let t2 = log_abs_weighted(&ev_2, &gz, &w);
            match (t1, t2) {
                (Ok(a), Ok(b)) => {
                    den += inv_order * (safe_exp(a) + safe_exp(b));
                }
                (Err(KernelError::OnHyperplane), _) | (_, Err(KernelError::OnHyperplane)) => {
                    ok = false;
                    break;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e.into()),
            }
        }
        if !ok {
            discarded += 1;
            continue;
        }
        // Denominator is at least (1/|G|) * |G| * 1 = 1 by the floor.
        let ratio = libm::exp(num) / den;
        sup = sup.max(ratio);
        accepted += 1;

        if accepted <= 500 {
            for (ev_h, jh) in [(&ev_1, &j1), (&ev_2, &j2)] {
                let kg = ev_g.averaged(&z, &w)?;
                let mut avg = Complex64::ZERO;
                for e in &group.elements {
                    e.matrix.apply(&z, &mut gz);
                    avg += e.det * ev_h.averaged(&gz, &w)?;
                }
                avg *= inv_order;
                let scale = kg.norm().max(avg.norm()).max(1e-300);
                identity_max_rel = identity_max_rel.max((kg - avg).norm() / scale);

                let base = jh.eval(&z).norm();
                for e in &group.elements {
                    e.matrix.apply(&z, &mut gz);
                    let moved = jh.eval(&gz).norm();
                    jinv_max_rel =
                        jinv_max_rel.max((moved - base).abs() / base.max(1e-300));
                }
            }
        }
        if i < samples / 2 {
            sup_half = sup;
        }
    }
    Ok(BoundReport {
        p,
        delta: None,
        fitted_constant: sup,
        sample_count: accepted,
        raw_samples: samples,
        stability_ratio: if sup_half > 0.0 { sup / sup_half } else { f64::INFINITY },
        identity_max_rel,
        jinv_max_rel,
        discarded,
    })
}

fn safe_exp(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else {
        libm::exp(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMethod {
    /// Two-sided test-function ratios with radial weights.
    Schur,
    /// Nonlinear power iteration on a sampled kernel matrix.
    GridPower,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepParams {
    /// MC samples per integral (schur) .
    pub samples: usize,
    /// Test points per supremum (schur).
    pub test_points: usize,
    /// Matrix nodes (grid_power).
    pub nodes: usize,
    /// Power iterations (grid_power).
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { samples: 20_000, test_points: 24, nodes: 400, iterations: 40, seed: crate::rng::DEFAULT_SEED }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SweepRow {
    pub p: f64,
    pub indicator: f64,
    /// Best radial exponent s for schur; iteration count for grid_power.
    pub detail: f64,
}

/// Operator-norm proxies for the weighted kernel across a p grid. All
/// rows of one sweep share random numbers, so the trend across p is not
/// sampling noise.
pub fn norm_sweep(
    eval: &KernelEvaluator,
    p_grid: &[f64],
    method: SweepMethod,
    params: &SweepParams,
) -> Result<Vec<SweepRow>, EstimateError> {
    if p_grid.is_empty() {
        return Err(EstimateError::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        assert!(p > 1.0);
        let ev = eval.clone().with_p(p);
        let row = match method {
            SweepMethod::Schur => schur_indicator(&ev, params)?,
            SweepMethod::GridPower => grid_power_indicator(&ev, params)?,
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Test points on a boundary ladder: fixed radii, random directions,
/// kept off mirrors so negative weight exponents stay finite.
fn ladder_points(
    dim: usize,
    count: usize,
    roots: &[Vec<Complex64>],
    seed: u64,
) -> Vec<Vec<Complex64>> {
    let mut rng = CounterRng::substream(seed, 17);
    let mut out = Vec::with_capacity(count);
    let mut z = vec![Complex64::ZERO; dim];
    for j in 0..count {
        let r = 1.0 - libm::pow(2.0, -(1.0 + (j % 6) as f64));
        loop {
            uniform_ball(&mut rng, dim, &mut z);
            let norm = vec_norm(&z);
            if norm < 1e-6 {
                continue;
            }
            let s = r / norm;
            let cand: Vec<Complex64> = z.iter().map(|c| c * s).collect();
            if roots.iter().all(|e| inner(&cand, e).norm() >= tol::HYPERPLANE_AVOID) {
                out.push(cand);
                break;
            }
        }
    }
    out
}

fn schur_indicator(ev: &KernelEvaluator, params: &SweepParams) -> Result<SweepRow, EstimateError> {
    let p = ev.p;
    let q = p / (p - 1.0);
    let dim = ev.domain.dim;
    let roots = ev.jg.as_ref().map(|j| j.roots()).unwrap_or_default();
    let pts = ladder_points(dim, params.test_points, &roots, params.seed);
    let h = |z: &[Complex64], s: f64| libm::pow(1.0 - vec_norm(z) * vec_norm(z), -s);

    let fractions = [
        1.0 / 32.0,
        1.0 / 16.0,
        1.0 / 8.0,
        1.0 / 4.0,
        3.0 / 8.0,
        1.0 / 2.0,
        5.0 / 8.0,
        3.0 / 4.0,
        7.0 / 8.0,
    ];
    let mut best = f64::INFINITY;
    let mut best_s = 0.0;
    for frac in fractions {
        let s = frac / p;
        // C1: z-side sup of the w-integral against h^q.
        let mut c1 = 0.0f64;
        let mut c2 = 0.0f64;
        for (i, zt) in pts.iter().enumerate() {
            let seed_i = CounterRng::substream(params.seed, 23 + i as u64).next_u64();
            let sampler = Sampler::uniform(dim, seed_i, params.samples);
            let int1 = integrate(
                &sampler,
                |w| {
                    let k = match ev.weighted(zt, w) {
                        Ok(v) => v.norm(),
                        Err(_) => 0.0,
                    };
                    crate::linalg::c64(k * libm::pow(h(w, s), q), 0.0)
                },
                None,
            )
            .unwrap();
            c1 = c1.max(int1.value.re / libm::pow(h(zt, s), q));

            let int2 = integrate(
                &sampler,
                |z| {
                    let k = match ev.weighted(z, zt) {
                        Ok(v) => v.norm(),
                        Err(_) => 0.0,
                    };
                    crate::linalg::c64(k * libm::pow(h(z, s), p), 0.0)
                },
                None,
            )
            .unwrap();
            c2 = c2.max(int2.value.re / libm::pow(h(zt, s), p));
        }
        let bound = libm::pow(c1, 1.0 / q) * libm::pow(c2, 1.0 / p);
        if bound < best {
            best = bound;
            best_s = s;
        }
    }
    Ok(SweepRow { p, indicator: best, detail: best_s })
}

fn grid_power_indicator(
    ev: &KernelEvaluator,
    params: &SweepParams,
) -> Result<SweepRow, EstimateError> {
    let p = ev.p;
    let q = p / (p - 1.0);
    let dim = ev.domain.dim;
    let n = params.nodes;
    let roots = ev.jg.as_ref().map(|j| j.roots()).unwrap_or_default();
    let mut rng = CounterRng::substream(params.seed, 31);
    let mut nodes = Vec::with_capacity(n);
    let mut z = vec![Complex64::ZERO; dim];
    for _ in 0..n {
        uniform_ball_avoiding(&mut rng, dim, &roots, tol::HYPERPLANE_AVOID, &mut z);
        nodes.push(z.clone());
    }
    let vol = ev.domain.volume();
    let cell = vol / n as f64;
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = match ev.weighted(&nodes[i], &nodes[j]) {
                Ok(v) => v.norm(),
                Err(_) => 0.0,
            };
            a[i * n + j] = k * cell;
        }
    }

    // Nonlinear power iteration for the l^p operator norm of a positive
    // matrix: v <- (A^T (A v)^{p-1})^{q-1}, normalized in l^p.
    let norm_p = |v: &[f64], e: f64| {
        let s: f64 = v.iter().map(|x| libm::pow(x.abs(), e)).sum();
        libm::pow(s, 1.0 / e)
    };
    let mut v = vec![1.0f64; n];
    let nv = norm_p(&v, p);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut indicator = 0.0;
    for _ in 0..params.iterations {
        let mut av = vec![0.0f64; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[i * n + j] * v[j];
            }
            av[i] = acc;
        }
        indicator = norm_p(&av, p);
        let mut back = vec![0.0f64; n];
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += a[i * n + j] * libm::pow(av[i], p - 1.0);
            }
            back[j] = libm::pow(acc, q - 1.0);
        }
        let nb = norm_p(&back, p);
        if nb == 0.0 {
            break;
        }
        for (x, b) in v.iter_mut().zip(&back) {
            *x = b / nb;
        }
    }
    Ok(SweepRow { p, indicator, detail: params.iterations as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{build_g_mln, close_group, normal_subgroup_from};
    use crate::linalg::{c64, CMatrix};

    fn z2(a: f64, b: f64, c: f64, d: f64) -> Vec<Complex64> {
        vec![c64(a, b), c64(c, d)]
    }

    fn g222_with_orbits() -> (ReflectionGroup, Vec<Hyperplane>) {
        let g = build_g_mln(2, 2, 2).unwrap();
        let mut hps = find_hyperplanes(&g).unwrap();
        orbit_decomposition(&g, &mut hps);
        (g, hps)
    }

    #[test]
    fn region_membership_examples() {
        let (_, hps) = g222_with_orbits();
        // Select the orbit of the mirror through z1 = z2; root (1,-1)/sqrt2.
        let s = 1.0 / libm::sqrt(2.0);
        let sel: Vec<usize> = hps
            .iter()
            .filter(|h| (h.root[0].re - s).abs() < 1e-9 && (h.root[1].re + s).abs() < 1e-9)
            .map(|h| h.orbit_id)
            .collect();
        assert_eq!(sel.len(), 1);
        let spec = RegionSpec::from_orbits(&hps, &sel, 0.3);
        let z = z2(0.5, 0.0, 0.0, 0.0);
        // Distance to the excluded mirror z1 = -z2 is 0.5/sqrt2 = 0.354.
        assert!((spec.margin(&z, &z) - 0.5 * s).abs() < 1e-12);
        assert!(spec.contains(&z, &z));

        // A point on an excluded mirror fails for every positive delta.
        let on = z2(0.3, 0.0, -0.3, 0.0);
        assert!(spec.margin(&on, &z) < 1e-12);
        let tiny = RegionSpec { delta: 1e-12, ..spec.clone() };
        assert!(!tiny.contains(&on, &z));

        // Selecting everything removes the condition.
        let all: Vec<usize> = (0..2).collect();
        let full = RegionSpec::from_orbits(&hps, &all, 0.9);
        assert!(full.margin(&z, &z).is_infinite());
        assert!(full.contains(&on, &on));
    }

    #[test]
    fn reg_margin_examples() {
        let (g, _) = g222_with_orbits();
        let zero = z2(0.0, 0.0, 0.0, 0.0);
        assert!((reg_margin(&g, &zero, &zero) - 2.0).abs() < 1e-15);

        let z = z2(0.3, 0.0, 0.4, 0.0);
        let w = z2(-0.3, 0.0, 0.4, 0.0);
        // Brute-force min over the four elements is 0.6 at -swap form;
        // boundary terms add 2 - 1.
        let want = (1.0 - 0.5) + (1.0 - 0.5) + 0.6;
        assert!((reg_margin(&g, &z, &w) - want).abs() < 1e-12);

        // w on the orbit of z with z interior: margin stays positive.
        let deep = z2(0.2, 0.1, -0.1, 0.3);
        let mut img = vec![Complex64::ZERO; 2];
        g.elements[2].matrix.apply(&deep, &mut img);
        let m = reg_margin(&g, &deep, &img);
        assert!(m >= 2.0 * (1.0 - vec_norm(&deep)) - 1e-12);
    }

    #[test]
    fn covering_delta_for_the_two_orbit_dihedral() {
        let (g, _) = g222_with_orbits();
        let rep = find_covering_delta(&g, &[0], &[1], 40_000, 3).unwrap();
        assert!(rep.delta_found > 0.0, "delta {:?}", rep.delta_found);
        assert_eq!(rep.samples, 40_000);
        // The reported margins belong to the worst pair; their max is the
        // delta.
        let m = rep.margins[0].max(rep.margins[1]).max(rep.margins[2]);
        assert!((m - rep.delta_found).abs() < 1e-15);

        // Fresh seed: every sampled pair clears the found delta by
        // construction of the minimum; re-verify on new samples at a
        // slightly shrunk threshold.
        let again = find_covering_delta(&g, &[0], &[1], 40_000, 1009).unwrap();
        assert!(again.delta_found > 0.5 * rep.delta_found);
    }

    #[test]
    fn covering_rejects_bad_partitions() {
        let g3 = build_g_mln(3, 3, 2).unwrap();
        assert!(matches!(
            find_covering_delta(&g3, &[0], &[1], 10, 1),
            Err(EstimateError::InvalidPartition(_))
        ));
        let (g, _) = g222_with_orbits();
        assert!(matches!(
            find_covering_delta(&g, &[0], &[0], 10, 1),
            Err(EstimateError::InvalidPartition(_))
        ));
        assert!(matches!(
            find_covering_delta(&g, &[], &[0, 1], 10, 1),
            Err(EstimateError::InvalidPartition(_))
        ));
    }

    #[test]
    fn subgroup_bound_for_the_eight_element_dihedral() {
        let g = build_g_mln(4, 4, 2).unwrap();
        let sub = normal_subgroup_from(&g, &[0]).unwrap();
        assert_eq!(sub.group.order(), 4);
        let rep =
            normal_subgroup_bound(&g, &sub.group, &[0], 2.0, 0.2, 20_000, 11).unwrap();
        assert!(rep.fitted_constant.is_finite() && rep.fitted_constant > 0.0);
        assert!(rep.sample_count > 1000);
        assert!(rep.identity_max_rel <= 1e-10, "{:.3e}", rep.identity_max_rel);
        assert!(rep.jinv_max_rel <= 1e-12, "{:.3e}", rep.jinv_max_rel);
        assert!(
            rep.stability_ratio >= 1.0 && rep.stability_ratio <= 1.25,
            "{}",
            rep.stability_ratio
        );
    }

    #[test]
    fn subgroup_bound_identity_subcase() {
        // H = G: the domination ratio reduces to comparing the weighted
        // kernel against its own averaged modulus; finite by inspection.
        let g = build_g_mln(2, 2, 2).unwrap();
        let rep =
            normal_subgroup_bound(&g, &g.clone(), &[0, 1], 1.5, 0.2, 4000, 13).unwrap();
        assert!(rep.fitted_constant.is_finite());
        assert!(rep.identity_max_rel <= 1e-10);
    }

    #[test]
    fn subgroup_bound_rejects_wrong_subgroups() {
        let g = build_g_mln(4, 4, 2).unwrap();
        // Single reflection: order two, not normal in the dihedral of 8.
        let refl = g.elements[g.reflections[0]].matrix.clone();
        let h_bad = close_group(2, &[refl], 10).unwrap();
        let err = normal_subgroup_bound(&g, &h_bad, &[0], 2.0, 0.2, 100, 1);
        assert!(matches!(err, Err(EstimateError::NotNormal | EstimateError::MirrorMismatch)));

        // Normal but with the wrong orbit label.
        let sub = normal_subgroup_from(&g, &[0]).unwrap();
        assert!(matches!(
            normal_subgroup_bound(&g, &sub.group, &[1], 2.0, 0.2, 100, 1),
            Err(EstimateError::MirrorMismatch)
        ));
    }

    #[test]
    fn constants_shrink_as_delta_grows() {
        let g = build_g_mln(4, 4, 2).unwrap();
        let sub = normal_subgroup_from(&g, &[0]).unwrap();
        let mut prev = f64::INFINITY;
        for delta in [0.1, 0.2, 0.3] {
            let rep =
                normal_subgroup_bound(&g, &sub.group, &[0], 2.0, delta, 20_000, 17).unwrap();
            assert!(
                rep.fitted_constant <= prev + 1e-12,
                "delta {delta}: {} > {prev}",
                rep.fitted_constant
            );
            prev = rep.fitted_constant;
        }
    }

    #[test]
    fn main_estimate_dihedral_pairs() {
        let g = build_g_mln(2, 2, 2).unwrap();
        let s1 = normal_subgroup_from(&g, &[0]).unwrap();
        let s2 = normal_subgroup_from(&g, &[1]).unwrap();
        let rep = main_estimate_check(&g, &s1.group, &s2.group, &[0], &[1], 1.5, 10_000, 19)
            .unwrap();
        assert!(rep.fitted_constant.is_finite() && rep.fitted_constant > 0.0);
        assert!(rep.identity_max_rel <= 1e-10);
        assert!(rep.jinv_max_rel <= 1e-12);
        assert!(rep.delta.is_none());

        let g3 = build_g_mln(3, 3, 2).unwrap();
        let whole = normal_subgroup_from(&g3, &[0]).unwrap();
        assert!(matches!(
            main_estimate_check(&g3, &whole.group, &whole.group, &[0], &[0], 2.0, 10, 1),
            Err(EstimateError::InvalidPartition(_))
        ));
    }

    #[test]
    fn main_estimate_duality_of_constants() {
        let g = build_g_mln(4, 4, 2).unwrap();
        let s1 = normal_subgroup_from(&g, &[0]).unwrap();
        let s2 = normal_subgroup_from(&g, &[1]).unwrap();
        let mut cs = Vec::new();
        for p in [4.0 / 3.0, 2.0, 4.0] {
            let rep = main_estimate_check(&g, &s1.group, &s2.group, &[0], &[1], p, 8000, 23)
                .unwrap();
            assert!(rep.fitted_constant.is_finite());
            cs.push(rep.fitted_constant);
        }
        // Conjugate exponents see mirror-image pair distributions; the
        // constants agree up to sampling noise.
        let (c_low, c_high) = (cs[0], cs[2]);
        let rel = (c_low - c_high).abs() / c_low.max(c_high);
        assert!(rel < 0.5, "C(4/3) = {c_low}, C(4) = {c_high}");
    }

    #[test]
    fn division_quotient_bounded_on_regular_pairs() {
        // Bulk pair measure here: boundary-pushed strata chase the
        // quotient into a corner where the true sup is astronomical and
        // the doubling diagnostic cannot settle. Same seed makes the
        // longer run a superset, so the ratio isolates tail growth.
        let g = build_g_mln(2, 2, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g.clone()).unwrap();
        let sup_at = |samples: usize| {
            let mut rng = CounterRng::new(29);
            let mut z = vec![Complex64::ZERO; 2];
            let mut w = vec![Complex64::ZERO; 2];
            let mut sup = 0.0f64;
            let mut used = 0;
            for _ in 0..samples {
                uniform_ball(&mut rng, 2, &mut z);
                uniform_ball(&mut rng, 2, &mut w);
                if reg_margin(&g, &z, &w) < 0.3 {
                    continue;
                }
                if let Ok(q) = ev.division_quotient(&z, &w) {
                    assert!(q.norm().is_finite());
                    sup = sup.max(q.norm());
                    used += 1;
                }
            }
            assert!(used > samples / 4);
            sup
        };
        let a = sup_at(10_000);
        let b = sup_at(20_000);
        assert!(a.is_finite() && b.is_finite());
        assert!(b >= a);
        assert!(b <= 2.0 * a, "doubling moved the sup too much: {a} -> {b}");
    }

    #[test]
    fn schur_sweep_indicators_finite_and_duality_consistent() {
        let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
        let g = close_group(2, &[flip], 4).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
        let params = SweepParams { samples: 4000, test_points: 12, ..SweepParams::default() };
        let grid = [1.25, 1.5, 2.0, 3.0, 4.0];
        let rows = norm_sweep(&ev, &grid, SweepMethod::Schur, &params).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert!(r.indicator.is_finite() && r.indicator > 0.0, "p={}", r.p);
            assert!(r.detail > 0.0 && r.detail < 1.0 / r.p);
        }
        // 4/3 and 4 are conjugate; indicators agree within a factor two
        // (they are noisy sups, not identities).
        let rows_dual =
            norm_sweep(&ev, &[4.0 / 3.0], SweepMethod::Schur, &params).unwrap();
        let (a, b) = (rows_dual[0].indicator, rows[4].indicator);
        assert!(a / b < 2.0 && b / a < 2.0, "{a} vs {b}");
    }

    #[test]
    fn grid_power_sweep_runs_and_stays_finite() {
        let g = build_g_mln(2, 2, 2).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
        let params = SweepParams { nodes: 200, iterations: 30, ..SweepParams::default() };
        let rows =
            norm_sweep(&ev, &[1.5, 2.0, 3.0], SweepMethod::GridPower, &params).unwrap();
        for r in &rows {
            assert!(r.indicator.is_finite() && r.indicator > 0.0);
        }
        assert!(matches!(
            norm_sweep(&ev, &[], SweepMethod::GridPower, &params),
            Err(EstimateError::EmptyGrid)
        ));
    }

    #[test]
    fn indicator_grows_toward_the_l1_end() {
        let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
        let g = close_group(2, &[flip], 4).unwrap();
        let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
        let params = SweepParams { samples: 4000, test_points: 12, ..SweepParams::default() };
        let grid = [1.05, 1.1, 1.2, 1.4, 2.0];
        let rows = norm_sweep(&ev, &grid, SweepMethod::Schur, &params).unwrap();
        for pair in rows.windows(2) {
            assert!(
                pair[0].indicator >= pair[1].indicator * 0.999,
                "p={} gave {} < p={} giving {}",
                pair[0].p,
                pair[0].indicator,
                pair[1].p,
                pair[1].indicator
            );
        }
    }
}
