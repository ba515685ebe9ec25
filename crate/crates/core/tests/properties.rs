use proptest::prelude::*;
use uav2x_core::alloc_u2i::{solve_u2i, verify_phi, AssignmentInstance};
use uav2x_core::alloc_u2u::{is_feasible, link_rate, lfss};
use uav2x_core::channel::{elevation_deg, los_probability, u2u_received_power_w};
use uav2x_core::scenario::{advance_position, categorize_forced, distance_uav_uav, generate_scenario, ScenarioConfig};
use uav2x_core::speed::{feasible_bounds, maximize_1d, trajectory_bounds, u2u_max_distance, SearchOptions};
use uav2x_core::{ChannelParams, PsiMatrix, U2uInstance, UavState, Vec3};

fn weights() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..6, 1usize..7, 1usize..4).prop_flat_map(|(r, k, chi)| {
        (prop::collection::vec(prop::collection::vec(0.0f64..15.0, k), r), Just(chi))
    })
}

fn uav(progress: f64, length: f64) -> UavState {
    UavState {
        id: 0,
        position: Vec3::zero(),
        direction: Vec3::new(0.6, 0.8, 0.0),
        trajectory_length: length,
        progress,
        cache_bits: 0.0,
    }
}

proptest! {
    #[test]
    fn u2i_solution_is_feasible_and_dominates_any_single_choice((w, chi) in weights()) {
        let inst = AssignmentInstance::new(w.clone(), chi);
        let sol = solve_u2i(&inst);
        let checked = verify_phi(&sol.phi, &inst).unwrap();
        prop_assert!((checked - sol.objective).abs() <= 1e-9 * checked.max(1.0));
        for (r, row) in w.iter().enumerate() {
            for (k, &x) in row.iter().enumerate() {
                prop_assert!(sol.objective + 1e-12 >= x, "row {} ch {}", r, k);
            }
        }
    }

    #[test]
    fn bounds_keep_the_horizon_reachable(progress in 0.0f64..300.0, t in 0usize..40, v_max in 1.0f64..40.0) {
        let u = uav(progress, 300.0);
        if let Ok(b) = feasible_bounds(&u, t, 40, v_max) {
            prop_assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper == v_max);
            let left = 300.0 - progress - b.lower;
            prop_assert!(left <= v_max * (40 - t - 1) as f64 + 1e-9);
            let tb = trajectory_bounds(&u, t, 40, v_max).unwrap();
            prop_assert!(tb.lower == b.lower && tb.upper <= b.upper && tb.upper <= 300.0 - progress + 1e-12);
        } else {
            prop_assert!(300.0 - progress > v_max * (40 - t) as f64);
        }
    }

    #[test]
    fn advancing_moves_exactly_the_speed(speed in 0.0f64..10.0) {
        let u = uav(5.0, 300.0);
        let n = advance_position(&u, speed, 10.0).unwrap();
        prop_assert!((distance_uav_uav(u.position, n.position) - speed).abs() < 1e-12);
        prop_assert!((n.progress - u.progress - speed).abs() < 1e-12);
    }

    #[test]
    fn los_probability_is_a_monotone_probability(a in 0.0f64..90.0, b in 0.0f64..90.0) {
        let (pa, pb) = (los_probability(a, 12.0, 0.135), los_probability(b, 12.0, 0.135));
        prop_assert!((0.0..=1.0).contains(&pa));
        prop_assert!((a <= b) == (pa <= pb) || a == b);
    }

    #[test]
    fn elevation_is_symmetric_in_heading(x in -1000.0f64..1000.0, y in -1000.0f64..1000.0, h in 30.0f64..200.0) {
        let g = Vec3::new(0.0, 0.0, 25.0);
        let e1 = elevation_deg(Vec3::new(x, y, h), g);
        let e2 = elevation_deg(Vec3::new(-y, x, h), g);
        prop_assert!((e1 - e2).abs() < 1e-9 && e1 > 0.0 && e1 <= 90.0);
    }

    #[test]
    fn max_distance_is_where_the_rate_meets_the_target(
        i in prop::collection::vec(1e-13f64..1e-10, 1..3),
        r_min in 1.0f64..12.0,
    ) {
        let p = ChannelParams::default();
        let coeff = u2u_received_power_w(1.0, &p).unwrap();
        let d = u2u_max_distance(0, &i, r_min, coeff, 2.0).unwrap();
        let rate = |d: f64| i.iter().map(|&x| (1.0 + coeff / (d * d) / x).log2()).sum::<f64>();
        prop_assert!(rate(d) >= r_min * (1.0 - 1e-9));
        prop_assert!(rate(d * 1.001) < r_min);
    }

    #[test]
    fn grid_search_finds_the_peak(c in 0.0f64..10.0) {
        let (x, y) = maximize_1d(|v: f64| -(v - c).powi(2), 0.0, 10.0, SearchOptions::for_v_max(10.0));
        prop_assert!((x - c).abs() < 1e-4 && y <= 0.0);
    }

    #[test]
    fn forced_categorization_partitions_and_pairs_nearest(seed in 0u64..1000, n_u2u in 0usize..5) {
        let cfg = ScenarioConfig { n_uavs: 8, rng_seed: seed, ..ScenarioConfig::default() };
        let s = generate_scenario::<f64>(&cfg).unwrap();
        let c = categorize_forced(&s, &ChannelParams::default(), n_u2u).unwrap();
        c.check_partition().unwrap();
        prop_assert_eq!(c.u2u_set.len(), n_u2u);
        for (&tx, &rx) in &c.pairing {
            let d = distance_uav_uav(c.uavs[tx].position, c.uavs[rx].position);
            for &o in &c.u2i_set {
                prop_assert!(d <= distance_uav_uav(c.uavs[tx].position, c.uavs[o].position));
            }
        }
    }

    #[test]
    fn lfss_output_is_feasible_when_reported(
        sig in prop::collection::vec(1e-10f64..1e-8, 6),
        r_min in 0.0f64..15.0,
    ) {
        let noise = 2.5e-13;
        let inst = U2uInstance {
            n_subchannels: 3,
            r_min,
            chi_max: 2,
            noise,
            signal: vec![sig[..3].to_vec(), sig[3..].to_vec()],
            cross: vec![vec![vec![0.0; 3], vec![1e-11; 3]], vec![vec![1e-11; 3], vec![0.0; 3]]],
            fixed_interference: vec![vec![noise * 4.0; 3]; 2],
            blocked: vec![],
            channel_signal: vec![Some(1e-10), Some(1e-10), None],
            leak: vec![vec![1e-12; 3]; 2],
        };
        match lfss(&inst) {
            Ok(psi) => prop_assert!(is_feasible(&psi, &inst)),
            Err(e) => {
                let p: &PsiMatrix = &e.partial;
                prop_assert!(link_rate(p, &inst, e.link) < r_min);
            }
        }
    }
}
