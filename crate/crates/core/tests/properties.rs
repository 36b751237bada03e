use std::f64::consts::PI;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vorstab::elliptic::{build_context, CirculationVector};
use vorstab::fourier::rotate;
use vorstab::io::{field_from_csv, field_to_csv};
use vorstab::perturb::fourier_bessel;
use vorstab::rearrangement::{burton_ascent, follower, transport_rearrange, AscentOptions, CellList};
use vorstab::{make_grid, GridRef, ScalarField};

fn grid_strategy() -> impl Strategy<Value = GridRef> {
    (prop_oneof![Just(0.0), 0.1f64..0.7], 4usize..10, prop_oneof![Just(8usize), Just(12), Just(16)])
        .prop_map(|(a, nr, nt)| make_grid(a, nr, nt).unwrap())
}

fn random_field(g: &GridRef, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_values(g, (0..g.len()).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect()).unwrap()
}

/// Permutes values within each ring; such maps preserve cell measures.
fn shuffle_rings(f: &ScalarField, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = f.grid();
    let mut vals = Vec::with_capacity(g.len());
    for j in 0..g.nr() {
        let mut ring = f.ring(j).to_vec();
        ring.shuffle(&mut rng);
        vals.extend(ring);
    }
    ScalarField::from_values(g, vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn p_is_symmetric_and_positive(g in grid_strategy(), s in any::<u64>()) {
        let c = build_context(&g).unwrap();
        let v = random_field(&g, s);
        let w = random_field(&g, s ^ 0x5555);
        let pv = c.apply_p(&v).unwrap();
        let pw = c.apply_p(&w).unwrap();
        let scale = v.l2_norm() * pw.l2_norm();
        prop_assert!((v.inner(&pw) - w.inner(&pv)).abs() <= 1e-10 * scale);
        prop_assert!(v.inner(&pv) > 0.0);
    }

    #[test]
    fn measure_is_exact(g in grid_strategy()) {
        let area = PI * (1.0 - g.a() * g.a());
        prop_assert!((g.total_measure() - area).abs() <= 1e-12 * area);
        prop_assert!((ScalarField::constant(&g, 2.5).integrate() - 2.5 * area).abs() <= 1e-12 * area);
    }

    #[test]
    fn transport_is_equimeasurable(g in grid_strategy(), s in any::<u64>()) {
        let f = random_field(&g, s);
        let order = random_field(&g, s.wrapping_add(1));
        let r = transport_rearrange(&f, &order).unwrap();
        prop_assert!(r.cell_list().quantile_l1(&CellList::from_field(&f)) <= 1e-12 * f.grid().total_measure());
    }

    #[test]
    fn rearrangement_inequality(g in grid_strategy(), s in any::<u64>(), t in any::<u64>()) {
        let f = random_field(&g, s);
        let order = random_field(&g, s.wrapping_add(7));
        let best = transport_rearrange(&f, &order).unwrap().pairing(&order);
        let other = shuffle_rings(&f, t).inner(&order);
        prop_assert!(best >= other - 1e-12 * best.abs().max(1.0));
        prop_assert!(best >= f.inner(&order) - 1e-12 * best.abs().max(1.0));
    }

    #[test]
    fn follower_is_nearest_among_permutations(g in grid_strategy(), s in any::<u64>(), t in any::<u64>(), p in 1.0f64..4.0) {
        let w = random_field(&g, s);
        let reference = random_field(&g, s.wrapping_add(3));
        let d = follower(&w, &reference, p).unwrap().lp_distance(&w, p).unwrap();
        let member = shuffle_rings(&reference, t);
        prop_assert!(d <= member.lp_distance(&w, p).unwrap() + 1e-12);
        prop_assert!(d <= reference.lp_distance(&w, p).unwrap() + 1e-12);
    }

    #[test]
    fn ascent_energy_never_decreases(g in grid_strategy(), s in any::<u64>()) {
        let c = build_context(&g).unwrap();
        let seed = random_field(&g, s);
        let gamma = CirculationVector(vec![0.3; c.inner_boundaries()]);
        let opts = AscentOptions { max_iters: 30, fp_tol: None };
        let rep = burton_ascent(&c, &seed, &gamma, &opts).unwrap();
        prop_assert!(rep.is_monotone(1e-12 * rep.energies[0].abs().max(1e-300)));
        prop_assert!(rep.max_class_defect() <= 1e-10);
    }

    #[test]
    fn rotation_preserves_inertia_and_mean(g in grid_strategy(), s in any::<u64>(), alpha in -7.0f64..7.0) {
        let f = random_field(&g, s);
        let r = rotate(&f, alpha);
        let scale = f.map(f64::abs).moment_of_inertia();
        prop_assert!((r.moment_of_inertia() - f.moment_of_inertia()).abs() <= 1e-12 * scale);
        prop_assert!((r.mean() - f.mean()).abs() <= 1e-12 * f.max_abs());
    }

    #[test]
    fn perturbations_are_normalised(g in grid_strategy(), s in any::<u64>(), amp in 1e-6f64..10.0) {
        let f = fourier_bessel(&g, s, amp).unwrap();
        prop_assert!((f.l2_norm() - amp).abs() <= 1e-12 * amp);
        prop_assert!(f.mean().abs() <= 1e-12 * amp);
    }

    #[test]
    fn field_csv_round_trip(g in grid_strategy(), s in any::<u64>()) {
        let f = random_field(&g, s).map(|x| x * 1e5 - 3.0);
        let back = field_from_csv(&field_to_csv(&f), Some(&g)).unwrap();
        prop_assert_eq!(f.values(), back.values());
    }
}
