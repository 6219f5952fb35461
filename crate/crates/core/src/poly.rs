//! Sparse polynomials, orbit maps and Jacobian data.
//!
//! Two representations coexist. [`Polynomial`] is a sparse coefficient map
//! used for map components, symbolic Jacobians and long division.
//! [`LinearFormProduct`] keeps a product of inner-product powers in
//! factored form so its modulus can be taken in log space near mirrors,
//! where the expanded polynomial would underflow structure into rounding
//! noise.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::group::{
    close_group, find_hyperplanes, build_g_mln, GroupError, Hyperplane, ReflectionGroup,
};
use crate::linalg::{c64, inner, CMatrix};
use crate::rng::{uniform_ball, uniform_ball_avoiding, CounterRng, DEFAULT_SEED};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub enum PolyError {
    Group(GroupError),
    InvalidParams(&'static str),
    /// The skew transformation law failed at some sample point.
    NotSkew { max_rel: f64 },
    /// Jacobian-to-product ratio varies beyond tolerance.
    NonConstantRatio { max_rel: f64 },
}

impl fmt::Display for PolyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolyError::Group(e) => write!(f, "group construction failed: {e}"),
            PolyError::InvalidParams(m) => write!(f, "invalid parameters: {m}"),
            PolyError::NotSkew { max_rel } => {
                write!(f, "polynomial is not skew (worst relative violation {max_rel:.3e})")
            }
            PolyError::NonConstantRatio { max_rel } => write!(
                f,
                "Jacobian ratio is not constant (worst relative deviation {max_rel:.3e})"
            ),
        }
    }
}

impl From<GroupError> for PolyError {
    fn from(e: GroupError) -> Self {
        PolyError::Group(e)
    }
}

/// Sparse polynomial over C in `dim` variables. Terms map an exponent
/// multi-index to a nonzero coefficient; the map order makes iteration
/// and serialization deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: BTreeMap<Vec<u32>, Complex64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Polynomial::zero(dim);
        p.add_term(&vec![0; dim], c);
        p
    }

    pub fn one(dim: usize) -> Self {
        Polynomial::constant(dim, Complex64::ONE)
    }

    /// The coordinate function z_i.
    pub fn var(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut e = vec![0u32; dim];
        e[i] = 1;
        let mut p = Polynomial::zero(dim);
        p.add_term(&e, Complex64::ONE);
        p
    }

    pub fn monomial(dim: usize, exps: &[u32], c: Complex64) -> Self {
        assert_eq!(exps.len(), dim);
        let mut p = Polynomial::zero(dim);
        p.add_term(exps, c);
        p
    }

    pub fn add_term(&mut self, exps: &[u32], c: Complex64) {
        if c == Complex64::ZERO {
            return;
        }
        let entry = self.terms.entry(exps.to_vec()).or_insert(Complex64::ZERO);
        *entry += c;
        if *entry == Complex64::ZERO {
            self.terms.remove(exps);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e, *c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-Complex64::ONE))
    }

    pub fn scale(&self, c: Complex64) -> Polynomial {
        if c == Complex64::ZERO {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, a)| (e.clone(), a * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim);
        let mut out = Polynomial::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(&e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::one(self.dim);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Complex partial derivative in variable `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        assert!(var < self.dim);
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[var] -= 1;
            out.add_term(&d, c * e[var] as f64);
        }
        out
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        assert_eq!(z.len(), self.dim);
        let mut acc = Complex64::ZERO;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (zi, &k) in z.iter().zip(e) {
                if k > 0 {
                    t *= zi.powu(k);
                }
            }
            acc += t;
        }
        acc
    }

    /// Composition with a linear map: z -> p(M z).
    pub fn compose_matrix(&self, m: &CMatrix) -> Polynomial {
        assert_eq!(m.dim(), self.dim);
        let vars: Vec<Polynomial> = (0..self.dim)
            .map(|i| {
                let mut row = Polynomial::zero(self.dim);
                for j in 0..self.dim {
                    let mut e = vec![0u32; self.dim];
                    e[j] = 1;
                    row.add_term(&e, m.get(i, j));
                }
                row
            })
            .collect();
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            let mut t = Polynomial::constant(self.dim, *c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t = t.mul(&vars[i].pow(k));
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// Drops terms whose coefficient is below `rel` times the largest.
    pub fn prune(&mut self, rel: f64) {
        let cut = self.max_coeff_norm() * rel;
        self.terms.retain(|_, c| c.norm() > cut);
    }
}

/// Graded-lex leading exponent.
fn leading_exp(p: &Polynomial) -> Option<Vec<u32>> {
    p.terms
        .keys()
        .max_by(|a, b| {
            let (da, db): (u32, u32) = (a.iter().sum(), b.iter().sum());
            da.cmp(&db).then_with(|| a.cmp(b))
        })
        .cloned()
}

/// Long division by a single divisor under graded lex. Returns (quotient,
/// remainder) with `self = q*d + r` and no term of `r` divisible by the
/// leading term of `d`. Cancelled leading terms are removed exactly, so
/// rounding noise cannot stall termination.
pub fn div_rem(p: &Polynomial, d: &Polynomial) -> (Polynomial, Polynomial) {
    assert_eq!(p.dim, d.dim);
    let lead_d = leading_exp(d).expect("division by the zero polynomial");
    let cd = d.terms[&lead_d];
    let scale = p.max_coeff_norm().max(1.0);
    let mut work = p.clone();
    let mut q = Polynomial::zero(p.dim);
    let mut r = Polynomial::zero(p.dim);
    while let Some(e) = leading_exp(&work) {
        let c = work.terms[&e];
        if c.norm() <= 1e-13 * scale {
            work.terms.remove(&e);
            continue;
        }
        if e.iter().zip(&lead_d).all(|(a, b)| a >= b) {
            let diff: Vec<u32> = e.iter().zip(&lead_d).map(|(a, b)| a - b).collect();
            let coef = c / cd;
            q.add_term(&diff, coef);
            let mut sub = Polynomial::monomial(p.dim, &diff, coef).mul(d);
            sub = sub.scale(-Complex64::ONE);
            work = work.add(&sub);
            work.terms.remove(&e);
        } else {
            r.add_term(&e, c);
            work.terms.remove(&e);
        }
    }
    (q, r)
}

/// Product of powers of linear forms `scale * prod <z, root>^k`.
#[derive(Clone, Debug)]
pub struct LinearFormProduct {
    pub dim: usize,
    pub scale: Complex64,
    pub factors: Vec<(Vec<Complex64>, u32)>,
}

impl LinearFormProduct {
    pub fn one(dim: usize) -> Self {
        LinearFormProduct { dim, scale: Complex64::ONE, factors: Vec::new() }
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|(_, k)| k).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = self.scale;
        for (root, k) in &self.factors {
            acc *= inner(z, root).powu(*k);
        }
        acc
    }

    /// ln |value|; -inf on a mirror. Stays finite-structured where the
    /// plain product would underflow.
    pub fn log_abs(&self, z: &[Complex64]) -> f64 {
        let mut acc = libm::log(self.scale.norm());
        for (root, k) in &self.factors {
            acc += *k as f64 * libm::log(inner(z, root).norm());
        }
        acc
    }

    pub fn roots(&self) -> Vec<Vec<Complex64>> {
        self.factors.iter().map(|(r, _)| r.clone()).collect()
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let mut out = Polynomial::constant(self.dim, self.scale);
        for (root, k) in &self.factors {
            let mut form = Polynomial::zero(self.dim);
            for (j, r) in root.iter().enumerate() {
                let mut e = vec![0u32; self.dim];
                e[j] = 1;
                form.add_term(&e, r.conj());
            }
            out = out.mul(&form.pow(*k));
        }
        out
    }
}

/// The canonical mirror-vanishing product: one factor per hyperplane with
/// exponent multiplicity-1, unit scale. Degree equals the reflection
/// count.
pub fn jacobian_polynomial(dim: usize, hyperplanes: &[Hyperplane]) -> LinearFormProduct {
    LinearFormProduct {
        dim,
        scale: Complex64::ONE,
        factors: hyperplanes
            .iter()
            .map(|h| (h.root.clone(), h.multiplicity - 1))
            .collect(),
    }
}

/// As [`jacobian_polynomial`] but straight from a group; a reflection-free
/// group yields the empty product.
pub fn jacobian_for(group: &ReflectionGroup) -> Result<LinearFormProduct, GroupError> {
    match find_hyperplanes(group) {
        Ok(hps) => Ok(jacobian_polynomial(group.dim, &hps)),
        Err(GroupError::NoReflections) => Ok(LinearFormProduct::one(group.dim)),
        Err(e) => Err(e),
    }
}

/// Determinant of a square matrix of polynomials by cofactor expansion.
/// Sizes in scope are 2 and 3.
fn poly_det(m: &[Vec<Polynomial>]) -> Polynomial {
    let n = m.len();
    let dim = m[0][0].dim;
    match n {
        1 => m[0][0].clone(),
        _ => {
            let mut acc = Polynomial::zero(dim);
            for j in 0..n {
                let minor: Vec<Vec<Polynomial>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let mut t = m[0][j].mul(&poly_det(&minor));
                if j % 2 == 1 {
                    t = t.scale(-Complex64::ONE);
                }
                acc = acc.add(&t);
            }
            acc
        }
    }
}

/// Exact symbolic determinant of the matrix of complex partials of the
/// component list.
pub fn symbolic_jacobian(components: &[Polynomial]) -> Polynomial {
    let n = components.len();
    assert!(n >= 1 && components.iter().all(|p| p.dim == n));
    let mat: Vec<Vec<Polynomial>> =
        components.iter().map(|p| (0..n).map(|j| p.derivative(j)).collect()).collect();
    poly_det(&mat)
}

/// Builtin orbit-map families, plus two small anchors used by the
/// change-of-variable checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// (z1, z2), trivial group.
    Identity,
    /// (z1^2, z2), group {id, diag(-1,1)}.
    Square1,
    /// (z1^m + z2^m, (z1 z2)^{m/l}) for G(m,l,2).
    Gml2 { m: u32, ell: u32 },
    /// (z1^{2^k} + z2^{2^k}, z1 z2) for G(2^k, 2^k, 2).
    Pik { k: u32 },
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Identity => write!(f, "identity"),
            MapKind::Square1 => write!(f, "square1"),
            MapKind::Gml2 { m, ell } => write!(f, "gml2(m={m},l={ell})"),
            MapKind::Pik { k } => write!(f, "pik(k={k})"),
        }
    }
}

/// A polynomial map whose components are invariants of the attached
/// group, carrying its symbolic Jacobian determinant and the fitted
/// proportionality constant against the mirror product.
#[derive(Clone, Debug)]
pub struct OrbitMap {
    pub kind: MapKind,
    pub components: Vec<Polynomial>,
    pub group: ReflectionGroup,
    pub hyperplanes: Vec<Hyperplane>,
    pub jg: LinearFormProduct,
    pub jacobian_det: Polynomial,
    pub jacobian_constant: Complex64,
}

impl OrbitMap {
    pub fn dim(&self) -> usize {
        self.group.dim
    }

    pub fn eval(&self, z: &[Complex64], out: &mut [Complex64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(z);
        }
    }

    pub fn eval_vec(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }
}

pub fn builtin_orbit_map(kind: MapKind) -> Result<OrbitMap, PolyError> {
    let (components, group) = match kind {
        MapKind::Identity => {
            let comps = vec![Polynomial::var(2, 0), Polynomial::var(2, 1)];
            (comps, close_group(2, &[], 1)?)
        }
        MapKind::Square1 => {
            let comps = vec![
                Polynomial::monomial(2, &[2, 0], Complex64::ONE),
                Polynomial::var(2, 1),
            ];
            let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
            (comps, close_group(2, &[flip], 4)?)
        }
        MapKind::Gml2 { m, ell } => {
            if m < 1 || ell < 1 || m % ell != 0 {
                return Err(PolyError::InvalidParams("gml2 needs l dividing m"));
            }
            let mut first = Polynomial::monomial(2, &[m, 0], Complex64::ONE);
            first.add_term(&[0, m], Complex64::ONE);
            let second = Polynomial::monomial(2, &[m / ell, m / ell], Complex64::ONE);
            (vec![first, second], build_g_mln(m, ell, 2)?)
        }
        MapKind::Pik { k } => {
            if k > 12 {
                return Err(PolyError::InvalidParams("pik exponent 2^k is out of scope"));
            }
            let m = 1u32 << k;
            let mut first = Polynomial::monomial(2, &[m, 0], Complex64::ONE);
            first.add_term(&[0, m], Complex64::ONE);
            let second = Polynomial::monomial(2, &[1, 1], Complex64::ONE);
            (vec![first, second], build_g_mln(m, m, 2)?)
        }
    };

    let hyperplanes = match find_hyperplanes(&group) {
        Ok(h) => h,
        Err(GroupError::NoReflections) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let jg = jacobian_polynomial(2, &hyperplanes);
    let jacobian_det = symbolic_jacobian(&components);
    let jacobian_constant = fit_jacobian_constant(&jacobian_det, &jg, 100, DEFAULT_SEED)?;
    let map = OrbitMap { kind, components, group, hyperplanes, jg, jacobian_det, jacobian_constant };
    debug_assert!(invariance_max_rel(&map, 100, DEFAULT_SEED) <= tol::INVARIANCE_REL);
    Ok(map)
}

/// Worst relative deviation of `components(g.z)` from `components(z)`
/// over random ball points and all group elements.
pub fn invariance_max_rel(map: &OrbitMap, samples: usize, seed: u64) -> f64 {
    let n = map.dim();
    let mut rng = CounterRng::new(seed);
    let mut z = vec![Complex64::ZERO; n];
    let mut gz = vec![Complex64::ZERO; n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut devs: Vec<f64> = Vec::new();
    for _ in 0..samples {
        uniform_ball(&mut rng, n, &mut z);
        let base = map.eval_vec(&z);
        scale = base.iter().map(|v| v.norm()).fold(scale, f64::max);
        for e in &map.group.elements {
            e.matrix.apply(&z, &mut gz);
            let moved = map.eval_vec(&gz);
            for (a, b) in base.iter().zip(&moved) {
                devs.push((a - b).norm());
            }
        }
    }
    for d in devs {
        worst = worst.max(d);
    }
    worst / scale.max(1e-300)
}

/// Ratio jac/jg at a mirror-avoiding sample point, asserted constant at
/// `samples` further points within 1e-9 relative.
pub fn fit_jacobian_constant(
    jac: &Polynomial,
    jg: &LinearFormProduct,
    samples: usize,
    seed: u64,
) -> Result<Complex64, PolyError> {
    let dim = jac.dim;
    let roots = jg.roots();
    let mut rng = CounterRng::new(seed);
    let mut z = vec![Complex64::ZERO; dim];
    uniform_ball_avoiding(&mut rng, dim, &roots, tol::HYPERPLANE_AVOID, &mut z);
    let c = jac.eval(&z) / jg.eval(&z);
    let mut max_rel = 0.0f64;
    for _ in 0..samples {
        uniform_ball_avoiding(&mut rng, dim, &roots, tol::HYPERPLANE_AVOID, &mut z);
        let r = jac.eval(&z) / jg.eval(&z);
        max_rel = max_rel.max((r - c).norm() / c.norm().max(1e-300));
    }
    if max_rel > 1e-9 {
        return Err(PolyError::NonConstantRatio { max_rel });
    }
    Ok(c)
}

/// Worst relative violation of `det(g) * p(g.z) = p(z)` over random ball
/// points, scaled by the largest sampled |p|.
pub fn skew_max_rel(p: &Polynomial, group: &ReflectionGroup, samples: usize, seed: u64) -> f64 {
    let n = group.dim;
    let mut rng = CounterRng::new(seed);
    let mut z = vec![Complex64::ZERO; n];
    let mut gz = vec![Complex64::ZERO; n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut devs: Vec<f64> = Vec::new();
    for _ in 0..samples {
        uniform_ball(&mut rng, n, &mut z);
        let base = p.eval(&z);
        scale = scale.max(base.norm());
        for e in &group.elements {
            e.matrix.apply(&z, &mut gz);
            devs.push((e.det * p.eval(&gz) - base).norm());
        }
    }
    for d in devs {
        worst = worst.max(d);
    }
    worst / scale.max(1e-300)
}

#[derive(Clone, Debug)]
pub struct SkewDivisionReport {
    /// Whether p/J_G extends continuously across every mirror.
    pub divides: bool,
    /// Worst relative Cauchy gap seen among the tail pairs of the
    /// approach sequences.
    pub max_rel_gap: f64,
    /// Exact polynomial quotient when long division leaves no remainder.
    pub quotient: Option<Polynomial>,
}

/// Checks that a skew polynomial is divisible by the mirror product: the
/// quotient must stay Cauchy along shrinking approaches to each mirror.
/// Long division provides an algebraic cross-check and the quotient.
pub fn skew_division_check(
    p: &Polynomial,
    group: &ReflectionGroup,
    seed: u64,
) -> Result<SkewDivisionReport, PolyError> {
    let skew_rel = skew_max_rel(p, group, 100, seed);
    if skew_rel > tol::INVARIANCE_REL.max(1e-9) {
        return Err(PolyError::NotSkew { max_rel: skew_rel });
    }
    let hyperplanes = match find_hyperplanes(group) {
        Ok(h) => h,
        Err(GroupError::NoReflections) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let jg = jacobian_polynomial(group.dim, &hyperplanes);
    let n = group.dim;
    let mut rng = CounterRng::new(seed ^ 0x51E9);
    let mut divides = true;
    let mut max_rel_gap = 0.0f64;
    for h in &hyperplanes {
        for _ in 0..3 {
            // Anchor on the mirror at moderate radius, then walk in along
            // the normal with shrinking steps.
            let mut base = vec![Complex64::ZERO; n];
            loop {
                uniform_ball(&mut rng, n, &mut base);
                let along = inner(&base, &h.root);
                for (b, r) in base.iter_mut().zip(&h.root) {
                    *b -= along * r;
                }
                let norm = libm::sqrt(base.iter().map(|v| v.norm_sqr()).sum());
                if norm > 0.1 {
                    for b in base.iter_mut() {
                        *b *= 0.5 / norm;
                    }
                    break;
                }
            }
            let mut qs = [Complex64::ZERO; 8];
            for (j, q) in qs.iter_mut().enumerate() {
                let t = 1e-3 * libm::pow(4.0, -(j as f64));
                let z: Vec<Complex64> =
                    base.iter().zip(&h.root).map(|(b, r)| b + r * t).collect();
                *q = p.eval(&z) / jg.eval(&z);
            }
            for w in qs.windows(2).skip(qs.len() - 3) {
                let gap = (w[1] - w[0]).norm()
                    / w[1].norm().max(w[0].norm()).max(1e-300);
                max_rel_gap = max_rel_gap.max(gap);
                if gap > tol::DIVISION_CAUCHY_REL || !w[1].is_finite() {
                    divides = false;
                }
            }
        }
    }
    let quotient = if divides {
        let jg_poly = jg.to_polynomial();
        let (mut q, mut r) = div_rem(p, &jg_poly);
        r.prune(0.0);
        let exact = r.max_coeff_norm() <= 1e-9 * p.max_coeff_norm().max(1.0);
        if exact {
            q.prune(1e-10);
            Some(q)
        } else {
            None
        }
    } else {
        None
    };
    Ok(SkewDivisionReport { divides, max_rel_gap, quotient })
}
