//! End-to-end gate: one test per shipping criterion, each printing a
//! single PASS line with the measured quantity. Tolerances are stated
//! inline; timed criteria assert wall-clock ceilings.

use std::time::Instant;

use mirrorball_core::estimate::{
    find_covering_delta, main_estimate_check, norm_sweep, SweepMethod, SweepParams,
};
use mirrorball_core::group::{
    build_g_mln, close_group, find_conjugator, find_hyperplanes, normal_subgroup_from,
    orbit_decomposition, reduction_tree,
};
use mirrorball_core::kernel::{
    flip_bound_check, series_constant, AveragedForm, KernelEvaluator, TwistedFunction,
};
use mirrorball_core::linalg::{c64, CMatrix};
use mirrorball_core::poly::{builtin_orbit_map, MapKind, Polynomial};
use mirrorball_core::quad::{change_of_variable_check, reproducing_check};
use mirrorball_core::rng::{uniform_ball, CounterRng};
use mirrorball_core::Complex64;

const SEED: u64 = 0x5EED_BA11;

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn criterion_01_group_orders_mirrors_orbits() {
    let t0 = Instant::now();
    for (m, ell) in [(1, 1), (2, 2), (2, 1), (3, 3), (4, 4), (4, 2), (6, 6), (8, 8)] {
        let g = build_g_mln(m, ell, 2).unwrap();
        let want = (2 * m * m / ell) as usize;
        assert_eq!(g.order(), want, "G({m},{ell},2)");
        if m == ell {
            let mut hps = find_hyperplanes(&g).unwrap();
            assert_eq!(hps.len(), m as usize, "mirror count of G({m},{m},2)");
            assert!(hps.iter().all(|h| h.multiplicity == 2));
            let orbits = orbit_decomposition(&g, &mut hps);
            let want_orbits = if m % 2 == 1 { 1 } else { 2 };
            assert_eq!(orbits.len(), want_orbits, "orbit count of G({m},{m},2)");
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}");
    println!("criterion 01 PASS: 8 family orders exact, mirror counts and orbit parity match, {dt:?}");
}

#[test]
fn criterion_02_reduction_tree_of_the_sixteen_element_dihedral() {
    let t0 = Instant::now();
    let g = build_g_mln(8, 8, 2).unwrap();
    let tree = reduction_tree(&g).unwrap();
    assert_eq!(tree.depth(), 3);
    let leaves = tree.leaves();
    assert_eq!(leaves.len(), 8);
    for leaf in &leaves {
        assert_eq!(leaf.group.order(), 2);
    }
    let mut witnesses = 0;
    for i in 0..leaves.len() {
        for j in (i + 1)..leaves.len() {
            let h = find_conjugator(&leaves[i].group, &leaves[j].group)
                .unwrap_or_else(|| panic!("no conjugator for leaf pair ({i},{j})"));
            assert!(h.is_unitary(1e-9));
            witnesses += 1;
        }
    }
    assert_eq!(witnesses, 28);
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}");
    println!("criterion 02 PASS: depth 3, 8 leaves of order 2, 28 unitary conjugator witnesses, {dt:?}");
}

#[test]
fn criterion_03_jacobian_proportionality() {
    let mut worst = 0.0f64;
    for k in [1u32, 2, 3] {
        let map = builtin_orbit_map(MapKind::Pik { k }).unwrap();
        let c = map.jacobian_constant.norm();
        let mut rng = CounterRng::substream(SEED, k as u64);
        let mut z = vec![Complex64::ZERO; 2];
        for _ in 0..1000 {
            uniform_ball(&mut rng, 2, &mut z);
            let lhs = map.jacobian_det.eval(&z).norm();
            let rhs = c * map.jg.eval(&z).norm();
            worst = worst.max(rel_gap(lhs, rhs));
        }
    }
    assert!(worst <= 1e-10, "worst relative gap {worst:.3e}");
    println!("criterion 03 PASS: |J(map)| = |c| |J_G| for k in {{1,2,3}}, worst rel {worst:.2e}");
}

#[test]
fn criterion_04_change_of_variable_volume() {
    let t0 = Instant::now();
    let map = builtin_orbit_map(MapKind::Square1).unwrap();
    let rep = change_of_variable_check(&map, 1_000_000, SEED);
    let anchor = core::f64::consts::PI * core::f64::consts::PI / 3.0;
    assert!(rep.consistent, "up {:?} vs down {:?}", rep.upstairs_volume, rep.downstairs_volume);
    assert!(rep.upstairs_volume.within(c64(anchor, 0.0), 3.0));
    assert!(rep.downstairs_volume.within(c64(anchor, 0.0), 3.0));
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 20.0, "took {dt:?}");
    println!(
        "criterion 04 PASS: both sides {:.5} / {:.5} vs pi^2/3 = {:.5} within 3 stderr ({:.1e}), {dt:?}",
        rep.upstairs_volume.value.re, rep.downstairs_volume.value.re, anchor,
        rep.upstairs_volume.stderr
    );
}

#[test]
fn criterion_05_kernel_formula_equivalence() {
    let g = build_g_mln(4, 4, 2).unwrap();
    let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
    let mut rng = CounterRng::substream(SEED, 5);
    let mut z = vec![Complex64::ZERO; 2];
    let mut w = vec![Complex64::ZERO; 2];
    let mut worst_forms = 0.0f64;
    let mut worst_herm = 0.0f64;
    for _ in 0..1000 {
        uniform_ball(&mut rng, 2, &mut z);
        uniform_ball(&mut rng, 2, &mut w);
        let a = ev.averaged(&z, &w).unwrap();
        let b = ev.averaged_alt(&z, &w, AveragedForm::ZSide).unwrap();
        let c = ev.averaged_alt(&z, &w, AveragedForm::DoubleSum).unwrap();
        let scale = a.norm().max(b.norm()).max(c.norm()).max(1e-300);
        worst_forms = worst_forms.max((a - b).norm() / scale).max((a - c).norm() / scale);
        let back = ev.averaged(&w, &z).unwrap().conj();
        worst_herm = worst_herm.max((a - back).norm() / scale);
    }
    assert!(worst_forms <= 1e-12, "forms disagree at {worst_forms:.3e}");
    assert!(worst_herm <= 1e-12, "symmetry fails at {worst_herm:.3e}");
    println!("criterion 05 PASS: three averaged forms and Hermitian symmetry agree, worst rel {worst_forms:.2e} / {worst_herm:.2e}");
}

#[test]
fn criterion_06_reproducing_property() {
    let map = builtin_orbit_map(MapKind::Square1).unwrap();
    assert_eq!(map.group.order(), 2);
    let ev = KernelEvaluator::ball(2).with_group(map.group.clone()).unwrap();
    let v = TwistedFunction::new(map, Polynomial::one(2));
    let points = vec![
        vec![c64(0.30, 0.00), c64(0.10, 0.00)],
        vec![c64(0.10, -0.20), c64(-0.30, 0.10)],
        vec![c64(-0.25, 0.15), c64(0.20, 0.25)],
        vec![c64(0.05, 0.35), c64(0.15, -0.10)],
        vec![c64(-0.20, -0.10), c64(-0.05, 0.30)],
    ];
    let rep = reproducing_check(&ev, &v, &points, 1_000_000, SEED);
    for pt in &rep.points {
        assert!(
            pt.pass,
            "at {:?}: estimate {:?} vs expected {:?}",
            pt.z, pt.estimate.value, pt.expected
        );
    }
    println!(
        "criterion 06 PASS: kernel integral reproduces the twisted pullback at {} points within 3 stderr",
        rep.points.len()
    );
}

#[test]
fn criterion_07_explicit_flip_bounds() {
    let series = series_constant();
    let closed = 416.0 / 27.0;
    assert!(rel_gap(series, closed) <= 1e-12);

    let mut reports = Vec::new();
    for p in [4.0 / 3.0, 2.0, 4.0] {
        let rep = flip_bound_check(p, 10_000, SEED).unwrap();
        assert!(rep.c_region.is_finite() && rep.c_region > 0.0, "p={p}");
        assert!(rep.c_off_power.is_finite() && rep.c_off_power > 0.0, "p={p}");
        assert!(rep.c_off_kernel.is_finite() && rep.c_off_kernel > 0.0, "p={p}");
        assert!(rep.max_ratio_first_coords <= 4.0 + 1e-9, "p={p}");
        assert!(rep.inside_count > 0 && rep.outside_count > 0);
        reports.push(rep);
    }
    // 4/3 and 4 are conjugate exponents; swap-closed sampling makes the
    // fitted constants land within a tenth of each other.
    let (lo, hi) = (&reports[0], &reports[2]);
    assert!(rel_gap(lo.c_region, hi.c_region) <= 0.10);
    assert!(rel_gap(lo.c_off_power, hi.c_off_power) <= 0.10);
    assert!(rel_gap(lo.c_off_kernel, hi.c_off_kernel) <= 0.10);
    println!(
        "criterion 07 PASS: series 416/27 exact to 1e-12; constants finite at p in {{4/3,2,4}}, conjugate gap {:.1e}",
        rel_gap(lo.c_region, hi.c_region)
    );
}

#[test]
fn criterion_08_covering_delta_stability() {
    for (m, name) in [(2u32, "order-4"), (4, "order-8")] {
        let g = build_g_mln(m, m, 2).unwrap();
        let one = find_covering_delta(&g, &[0], &[1], 100_000, SEED).unwrap();
        assert!(one.delta_found > 0.0, "{name}: delta {:?}", one.delta_found);
        let two = find_covering_delta(&g, &[0], &[1], 200_000, SEED).unwrap();
        let change = (one.delta_found - two.delta_found).abs() / one.delta_found;
        assert!(change < 0.25, "{name}: {} -> {}", one.delta_found, two.delta_found);
        println!(
            "criterion 08 PASS: {name} dihedral delta {:.4} stable under doubling (change {:.1}%)",
            one.delta_found,
            100.0 * change
        );
    }
}

#[test]
fn criterion_09_main_estimate_stability() {
    let g = build_g_mln(4, 4, 2).unwrap();
    let s1 = normal_subgroup_from(&g, &[0]).unwrap();
    let s2 = normal_subgroup_from(&g, &[1]).unwrap();
    for p in [4.0 / 3.0, 2.0, 4.0] {
        let rep =
            main_estimate_check(&g, &s1.group, &s2.group, &[0], &[1], p, 30_000, SEED).unwrap();
        assert!(rep.fitted_constant.is_finite() && rep.fitted_constant > 0.0, "p={p}");
        assert!(
            rep.stability_ratio >= 0.8 && rep.stability_ratio <= 1.25,
            "p={p}: doubling ratio {}",
            rep.stability_ratio
        );
        assert!(rep.identity_max_rel <= 1e-10, "p={p}: {:.3e}", rep.identity_max_rel);
        assert!(rep.jinv_max_rel <= 1e-12, "p={p}: {:.3e}", rep.jinv_max_rel);
        println!(
            "criterion 09 PASS: p={p:.4} constant {:.3e} finite, doubling ratio {:.3} in [0.8,1.25]",
            rep.fitted_constant, rep.stability_ratio
        );
    }
}

#[test]
fn criterion_10_norm_sweep_trend() {
    let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
    let g = close_group(2, &[flip], 4).unwrap();
    let ev = KernelEvaluator::ball(2).with_group(g).unwrap();
    let params = SweepParams { samples: 8000, test_points: 18, seed: SEED, ..SweepParams::default() };

    let finite_grid = [1.25, 1.5, 2.0, 3.0, 4.0];
    let rows = norm_sweep(&ev, &finite_grid, SweepMethod::Schur, &params).unwrap();
    for r in &rows {
        assert!(r.indicator.is_finite() && r.indicator > 0.0, "p={}", r.p);
    }

    let low_grid = [1.25, 1.1, 1.05];
    let low = norm_sweep(&ev, &low_grid, SweepMethod::Schur, &params).unwrap();
    assert!(
        low[2].indicator > low[1].indicator && low[1].indicator > low[0].indicator,
        "no growth toward p = 1: {:?}",
        low.iter().map(|r| (r.p, r.indicator)).collect::<Vec<_>>()
    );
    println!(
        "criterion 10 PASS: indicators finite on {{1.25..4}}, growing toward p=1 ({:.3} < {:.3} < {:.3})",
        low[0].indicator, low[1].indicator, low[2].indicator
    );
}
