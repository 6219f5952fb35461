//! Finite unitary reflection groups as explicit matrix sets.
//!
//! Groups are built either from the imprimitive family parameters (m, l, n)
//! or by closing an arbitrary set of unitary generators. Elements are kept
//! in a deterministic lexicographic order; equality is Frobenius distance
//! within [`tol::ELEMENT_MATCH`]. No exact cyclotomic arithmetic: at the
//! group sizes in scope (cap 10^4) accumulated float error stays orders of
//! magnitude below every matching threshold.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::linalg::{c64, canonical_root, lex_cmp_slices, vec_dist, CMatrix};
use crate::tol;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupError {
    /// Parameter validation failed (the message says which rule).
    InvalidParams(&'static str),
    /// Closure grew past the configured cap.
    CapExceeded { cap: usize },
    /// A supplied generator is not unitary within tolerance.
    NotUnitary { index: usize },
    /// Supplied matrices disagree in dimension.
    DimensionMismatch,
    /// The group has no reflections, so no hyperplane data exists.
    NoReflections,
    /// An orbit id is out of range for the group's orbit decomposition.
    UnknownOrbit { id: usize },
    /// The subgroup generated by the selected mirrors failed the
    /// conjugation-stability test. Signals an internal bug, not bad input.
    NotNormal,
}

impl fmt::Display for GroupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupError::InvalidParams(m) => write!(f, "invalid parameters: {m}"),
            GroupError::CapExceeded { cap } => {
                write!(f, "group closure exceeded the cap of {cap} elements")
            }
            GroupError::NotUnitary { index } => {
                write!(f, "generator {index} is not unitary within tolerance")
            }
            GroupError::DimensionMismatch => write!(f, "matrix dimensions disagree"),
            GroupError::NoReflections => write!(f, "group contains no reflections"),
            GroupError::UnknownOrbit { id } => write!(f, "orbit id {id} does not exist"),
            GroupError::NotNormal => write!(f, "subgroup failed the normality assertion"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupElement {
    pub matrix: CMatrix,
    pub det: Complex64,
    pub order: u32,
}

impl GroupElement {
    pub fn is_identity(&self) -> bool {
        self.order == 1
    }
}

/// A finite subgroup of U(n) with its reflections classified.
#[derive(Clone, Debug)]
pub struct ReflectionGroup {
    pub dim: usize,
    /// Sorted lexicographically on quantized matrix entries.
    pub elements: Vec<GroupElement>,
    /// Indices of a generating set. For groups built from (m, l, n) this is
    /// the full reflection list; for closures it is the supplied set.
    pub generators: Vec<usize>,
    /// Indices of elements whose eigenvalue-1 eigenspace has dimension n-1.
    pub reflections: Vec<usize>,
    pub name: Option<String>,
}

impl ReflectionGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn identity_index(&self) -> usize {
        self.elements
            .iter()
            .position(|e| e.is_identity())
            .expect("a group contains the identity")
    }

    /// Tolerance lookup of a matrix among the elements.
    pub fn element_index(&self, m: &CMatrix) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.matrix.frobenius_dist(m) <= tol::ELEMENT_MATCH)
    }

    pub fn contains(&self, m: &CMatrix) -> bool {
        self.element_index(m).is_some()
    }

    /// True when the closure of the reflection subset recovers the whole
    /// group. Downstream kernel constructions assume this.
    pub fn is_reflection_generated(&self) -> bool {
        if self.reflections.is_empty() {
            return self.order() == 1;
        }
        let gens: Vec<CMatrix> =
            self.reflections.iter().map(|&i| self.elements[i].matrix.clone()).collect();
        match closure_matrices(self.dim, &gens, self.order()) {
            Ok(els) => els.len() == self.order(),
            Err(_) => false,
        }
    }
}

fn is_reflection(m: &CMatrix) -> bool {
    m.sub(&CMatrix::identity(m.dim())).rank(tol::EIGENVALUE_ONE) == 1
}

/// True when `m` fixes the hyperplane orthogonal to `root` pointwise, i.e.
/// M - I is a multiple of the rank-one projector onto the root line.
pub fn fixes_pointwise(m: &CMatrix, root: &[Complex64]) -> bool {
    let n = m.dim();
    let b = m.sub(&CMatrix::identity(n));
    let be = b.apply_vec(root);
    let mut dist2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expect = be[i] * root[j].conj();
            dist2 += (b.get(i, j) - expect).norm_sqr();
        }
    }
    libm::sqrt(dist2) <= tol::ELEMENT_MATCH
}

/// Unit normal of the mirror of a reflection, phase-canonicalized.
pub fn reflection_root(m: &CMatrix) -> Vec<Complex64> {
    let b = m.sub(&CMatrix::identity(m.dim()));
    canonical_root(&b.dominant_column()).expect("a reflection moves some vector")
}

fn closure_matrices(
    dim: usize,
    gens: &[CMatrix],
    cap: usize,
) -> Result<Vec<CMatrix>, GroupError> {
    let mut els: Vec<CMatrix> = vec![CMatrix::identity(dim)];
    let mut frontier: Vec<usize> = vec![0];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            for g in gens {
                let p = els[i].mul(g);
                let known =
                    els.iter().any(|e| e.frobenius_dist(&p) <= tol::ELEMENT_MATCH);
                if !known {
                    els.push(p);
                    if els.len() > cap {
                        return Err(GroupError::CapExceeded { cap });
                    }
                    next.push(els.len() - 1);
                }
            }
        }
        frontier = next;
    }
    Ok(els)
}

/// Sorts, classifies and indexes a closed matrix set. `generator_mats`
/// locates the recorded generating set; `None` records the reflections.
fn group_from_matrices(
    dim: usize,
    mut mats: Vec<CMatrix>,
    generator_mats: Option<&[CMatrix]>,
    name: Option<String>,
) -> Result<ReflectionGroup, GroupError> {
    mats.sort_by(|a, b| a.lex_cmp(b));
    let cap = mats.len();
    let mut elements = Vec::with_capacity(cap);
    let mut reflections = Vec::new();
    for (i, m) in mats.into_iter().enumerate() {
        let order = m
            .order(cap)
            .expect("element of a closed finite group has finite order");
        let det = m.det();
        if is_reflection(&m) {
            reflections.push(i);
        }
        elements.push(GroupElement { matrix: m, det, order });
    }
    let mut group = ReflectionGroup { dim, elements, generators: Vec::new(), reflections, name };
    group.generators = match generator_mats {
        Some(gens) => {
            let mut idx = Vec::new();
            for g in gens {
                let i = group
                    .element_index(g)
                    .expect("generator is a member of its own closure");
                if !idx.contains(&i) {
                    idx.push(i);
                }
            }
            idx
        }
        None => group.reflections.clone(),
    };
    Ok(group)
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// The imprimitive group G(m, l, n): generalized permutation matrices with
/// m-th root of unity phases whose exponents sum to a multiple of l.
/// Elements are enumerated directly; |G| = m^n n!/l.
pub fn build_g_mln(m: u32, ell: u32, n: usize) -> Result<ReflectionGroup, GroupError> {
    build_g_mln_capped(m, ell, n, tol::CLOSURE_CAP)
}

pub fn build_g_mln_capped(
    m: u32,
    ell: u32,
    n: usize,
    cap: usize,
) -> Result<ReflectionGroup, GroupError> {
    if m < 1 || n < 1 {
        return Err(GroupError::InvalidParams("m and n must be at least 1"));
    }
    if ell < 1 || m % ell != 0 {
        return Err(GroupError::InvalidParams("ell must divide m"));
    }
    let order = (m as u128).pow(n as u32) * factorial(n) / ell as u128;
    if order > cap as u128 {
        return Err(GroupError::CapExceeded { cap });
    }

    let perms = permutations(n);
    let mut mats = Vec::with_capacity(order as usize);
    let mut phases = vec![0u32; n];
    loop {
        let sum: u32 = phases.iter().sum();
        if sum % ell == 0 {
            for perm in &perms {
                let mut mat = CMatrix::zeros(n);
                for i in 0..n {
                    let ang = core::f64::consts::TAU * phases[i] as f64 / m as f64;
                    mat.set(i, perm[i], c64(libm::cos(ang), libm::sin(ang)));
                }
                mats.push(mat);
            }
        }
        // Odometer over phase exponents.
        let mut k = 0;
        loop {
            if k == n {
                break;
            }
            phases[k] += 1;
            if phases[k] < m {
                break;
            }
            phases[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    debug_assert_eq!(mats.len() as u128, order);
    group_from_matrices(n, mats, None, Some(format!("G({m},{ell},{n})")))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    permute_into(&mut items, 0, &mut out);
    out.sort();
    out
}

fn permute_into(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_into(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Smallest multiplicatively closed set containing the generators, as a
/// classified group. Errors if the closure passes `cap`.
pub fn close_group(
    dim: usize,
    generators: &[CMatrix],
    cap: usize,
) -> Result<ReflectionGroup, GroupError> {
    for (i, g) in generators.iter().enumerate() {
        if g.dim() != dim {
            return Err(GroupError::DimensionMismatch);
        }
        if !g.is_unitary(tol::UNITARITY) {
            return Err(GroupError::NotUnitary { index: i });
        }
    }
    let els = closure_matrices(dim, generators, cap)?;
    group_from_matrices(dim, els, Some(generators), None)
}

/// Sentinel for hyperplanes not yet assigned to an orbit.
pub const ORBIT_UNSET: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Hyperplane {
    /// Canonical unit normal: first significant coordinate real positive.
    pub root: Vec<Complex64>,
    /// Order of the pointwise stabilizer of the mirror.
    pub multiplicity: u32,
    /// Element indices of the reflections fixing this mirror.
    pub fixing_reflections: Vec<usize>,
    /// Position of this mirror's orbit in `orbit_decomposition` output;
    /// [`ORBIT_UNSET`] until that runs.
    pub orbit_id: usize,
}

/// One record per distinct mirror, sorted by canonical root. Multiplicity
/// is 1 plus the number of reflections sharing the mirror, which equals the
/// pointwise stabilizer order.
pub fn find_hyperplanes(group: &ReflectionGroup) -> Result<Vec<Hyperplane>, GroupError> {
    if group.reflections.is_empty() {
        return Err(GroupError::NoReflections);
    }
    let mut planes: Vec<(Vec<Complex64>, Vec<usize>)> = Vec::new();
    for &ri in &group.reflections {
        let root = reflection_root(&group.elements[ri].matrix);
        match planes.iter_mut().find(|(r, _)| vec_dist(r, &root) <= tol::ROOT_MATCH) {
            Some((_, fixing)) => fixing.push(ri),
            None => planes.push((root, vec![ri])),
        }
    }
    planes.sort_by(|a, b| lex_cmp_slices(&a.0, &b.0));
    let out: Vec<Hyperplane> = planes
        .into_iter()
        .map(|(root, fixing)| Hyperplane {
            multiplicity: 1 + fixing.len() as u32,
            root,
            fixing_reflections: fixing,
            orbit_id: ORBIT_UNSET,
        })
        .collect();
    // The fixing count and the pointwise stabilizer must agree.
    debug_assert!(out.iter().all(|h| {
        let fixers = group
            .elements
            .iter()
            .filter(|e| !e.is_identity() && fixes_pointwise(&e.matrix, &h.root))
            .count();
        h.multiplicity as usize == 1 + fixers
    }));
    Ok(out)
}

fn match_root(hyperplanes: &[Hyperplane], root: &[Complex64]) -> Option<usize> {
    hyperplanes.iter().position(|h| vec_dist(&h.root, root) <= tol::ROOT_MATCH)
}

/// Partitions mirrors into G-orbits by pushing each root through every
/// element and recanonicalizing. Orbits are sorted by smallest member and
/// written back into `orbit_id`.
pub fn orbit_decomposition(
    group: &ReflectionGroup,
    hyperplanes: &mut [Hyperplane],
) -> Vec<Vec<usize>> {
    let m = hyperplanes.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..m {
        for e in &group.elements {
            let moved = e.matrix.apply_vec(&hyperplanes[i].root);
            let moved = canonical_root(&moved).expect("unitary image of a unit vector");
            let j = match_root(hyperplanes, &moved)
                .expect("group action permutes its own mirrors");
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut orbits: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; m];
    for i in 0..m {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(oid) => orbits[oid].push(i),
            None => {
                root_of[r] = Some(orbits.len());
                orbits.push(vec![i]);
            }
        }
    }
    for (oid, members) in orbits.iter().enumerate() {
        for &i in members {
            hyperplanes[i].orbit_id = oid;
        }
    }
    orbits
}

/// The subgroup generated by the reflections of selected mirror orbits,
/// together with bookkeeping against the parent.
#[derive(Clone, Debug)]
pub struct NormalSubgroup {
    pub group: ReflectionGroup,
    /// Parent element index of each subgroup element.
    pub parent_indices: Vec<usize>,
    /// Whether the subgroup's own mirror set equals the selected orbits.
    /// The containment "selected subset of mirrors" always holds; equality
    /// can fail in principle and is reported, not assumed.
    pub mirrors_match_selection: bool,
}

/// Closes the reflections whose mirrors lie in the selected orbits and
/// verifies normality in the parent. Orbit ids refer to
/// [`orbit_decomposition`] order, which is recomputed here so the call is
/// self-contained.
pub fn normal_subgroup_from(
    group: &ReflectionGroup,
    selected_orbits: &[usize],
) -> Result<NormalSubgroup, GroupError> {
    let mut hyperplanes = find_hyperplanes(group)?;
    let orbits = orbit_decomposition(group, &mut hyperplanes);
    normal_subgroup_from_parts(group, &hyperplanes, orbits.len(), selected_orbits)
}

pub(crate) fn normal_subgroup_from_parts(
    group: &ReflectionGroup,
    hyperplanes: &[Hyperplane],
    orbit_count: usize,
    selected_orbits: &[usize],
) -> Result<NormalSubgroup, GroupError> {
    let selected: BTreeSet<usize> = selected_orbits.iter().copied().collect();
    if let Some(&bad) = selected.iter().find(|&&id| id >= orbit_count) {
        return Err(GroupError::UnknownOrbit { id: bad });
    }
    let gens: Vec<CMatrix> = hyperplanes
        .iter()
        .filter(|h| selected.contains(&h.orbit_id))
        .flat_map(|h| h.fixing_reflections.iter())
        .map(|&ri| group.elements[ri].matrix.clone())
        .collect();
    let sub = close_group(group.dim, &gens, group.order())?;
    let parent_indices: Vec<usize> = sub
        .elements
        .iter()
        .map(|e| {
            group
                .element_index(&e.matrix)
                .expect("subgroup closure stays inside the parent")
        })
        .collect();

    for e in &group.elements {
        let adj = e.matrix.adjoint();
        for h in &sub.elements {
            let conj = e.matrix.mul(&h.matrix).mul(&adj);
            if !sub.contains(&conj) {
                return Err(GroupError::NotNormal);
            }
        }
    }

    let selected_roots: Vec<&Vec<Complex64>> = hyperplanes
        .iter()
        .filter(|h| selected.contains(&h.orbit_id))
        .map(|h| &h.root)
        .collect();
    let mirrors_match_selection = if sub.reflections.is_empty() {
        selected_roots.is_empty()
    } else {
        let sub_planes = find_hyperplanes(&sub)?;
        sub_planes.len() == selected_roots.len()
            && sub_planes.iter().all(|h| {
                selected_roots.iter().any(|r| vec_dist(r, &h.root) <= tol::ROOT_MATCH)
            })
    };

    Ok(NormalSubgroup { group: sub, parent_indices, mirrors_match_selection })
}

/// Recursive orbit-split decomposition. A node with at most one mirror
/// orbit is a leaf; otherwise each orbit spawns the normal subgroup it
/// generates.
#[derive(Clone, Debug)]
pub struct ReductionTree {
    pub group: ReflectionGroup,
    pub hyperplanes: Vec<Hyperplane>,
    pub orbit_split: Vec<Vec<usize>>,
    pub children: Vec<ReductionTree>,
}

impl ReductionTree {
    /// Edge depth: 0 for a leaf.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(|c| c.leaf_count()).sum()
        }
    }

    pub fn leaves(&self) -> Vec<&ReductionTree> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ReductionTree>) {
        if self.children.is_empty() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }
}

pub fn reduction_tree(group: &ReflectionGroup) -> Result<ReductionTree, GroupError> {
    if group.reflections.is_empty() {
        return Ok(ReductionTree {
            group: group.clone(),
            hyperplanes: Vec::new(),
            orbit_split: Vec::new(),
            children: Vec::new(),
        });
    }
    let mut hyperplanes = find_hyperplanes(group)?;
    let orbits = orbit_decomposition(group, &mut hyperplanes);
    let mut children = Vec::new();
    if orbits.len() > 1 {
        for oid in 0..orbits.len() {
            let sub =
                normal_subgroup_from_parts(group, &hyperplanes, orbits.len(), &[oid])?;
            children.push(reduction_tree(&sub.group)?);
        }
    }
    Ok(ReductionTree { group: group.clone(), hyperplanes, orbit_split: orbits, children })
}

/// Searches for a unitary h with h A h^-1 = B. Candidates map a mirror
/// root of A onto one of B and sweep a discrete phase on the orthogonal
/// line; this reaches every conjugacy that aligns mirrors, which is what
/// the reduction-tree leaves need. C^2 only; `None` when nothing is found.
pub fn find_conjugator(a: &ReflectionGroup, b: &ReflectionGroup) -> Option<CMatrix> {
    if a.dim != 2 || b.dim != 2 || a.order() != b.order() {
        return None;
    }
    if a.order() == 1 {
        return Some(CMatrix::identity(2));
    }
    if a.reflections.is_empty() || b.reflections.is_empty() {
        return None;
    }
    let roots_a = find_hyperplanes(a).ok()?;
    let roots_b = find_hyperplanes(b).ok()?;
    let e_a = &roots_a[0].root;
    let u_a = basis_from_root(e_a);
    const PHASES: usize = 48;
    for hb in &roots_b {
        let u_b = basis_from_root(&hb.root);
        for k in 0..PHASES {
            let ang = core::f64::consts::TAU * k as f64 / PHASES as f64;
            let phi = c64(libm::cos(ang), libm::sin(ang));
            let twist = CMatrix::diagonal(&[Complex64::ONE, phi]);
            let h = u_b.mul(&twist).mul(&u_a.adjoint());
            let h_adj = h.adjoint();
            let ok = a.generators.iter().all(|&gi| {
                let img = h.mul(&a.elements[gi].matrix).mul(&h_adj);
                b.contains(&img)
            });
            if ok {
                debug_assert!(h.is_unitary(tol::UNITARITY));
                return Some(h);
            }
        }
    }
    None
}

/// Unitary [e f] with f the canonical unit normal of the root line.
fn basis_from_root(e: &[Complex64]) -> CMatrix {
    let f = [-(e[1].conj()), e[0].conj()];
    CMatrix::from_fn(2, |i, j| if j == 0 { e[i] } else { f[i] })
}
