use proptest::prelude::*;
use wildmhd::convint::{admissible_segment, relaxed_gap, segment_length_bound, SubsolutionState};

/// Largest eigenvalue by one Jacobi rotation, independent of the closed form.
fn jacobi_max(a: [[f64; 2]; 2]) -> f64 {
    let theta = 0.5 * (2.0 * a[0][1]).atan2(a[0][0] - a[1][1]);
    let (s, c) = theta.sin_cos();
    let l1 = c * c * a[0][0] + 2.0 * s * c * a[0][1] + s * s * a[1][1];
    let l2 = s * s * a[0][0] - 2.0 * s * c * a[0][1] + c * c * a[1][1];
    l1.max(l2)
}

fn state() -> impl Strategy<Value = (SubsolutionState, f64)> {
    (prop::array::uniform2(-3.0..3.0f64), prop::array::uniform2(-3.0..3.0f64), 0.1..5.0f64)
        .prop_map(|(m, u, rho)| (SubsolutionState::new(m, u), rho))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn u_is_trace_free(m in prop::array::uniform2(-3.0..3.0f64), u in prop::array::uniform2(prop::array::uniform2(-3.0..3.0f64))) {
        let z = SubsolutionState::from_matrix(m, u);
        let mat = z.u_matrix();
        prop_assert_eq!(mat[0][0] + mat[1][1], 0.0);
    }

    #[test]
    fn gap_dominates_kinetic_energy((z, rho) in state()) {
        prop_assert!(relaxed_gap(&z, rho) >= z.kinetic_energy(rho) - 1e-12 * (1.0 + z.kinetic_energy(rho)));
    }

    #[test]
    fn closed_form_matches_eigen_oracle((z, rho) in state()) {
        let e = relaxed_gap(&z, rho);
        let oracle = jacobi_max(z.relaxed_matrix(rho));
        prop_assert!((e - oracle).abs() <= 1e-12 * (1.0 + e.abs()), "{} vs {}", e, oracle);
    }

    #[test]
    fn segments_stay_admissible_and_average_back((z, rho) in state(), c in 0.5..20.0f64) {
        prop_assume!(relaxed_gap(&z, rho) < c);
        let seg = admissible_segment(&z, rho, c).expect("open cell has a segment");
        let gap = c - relaxed_gap(&z, rho);
        prop_assert!(seg.half_length >= segment_length_bound(gap, rho, c) * (1.0 - 1e-9));
        for end in [seg.minus, seg.plus] {
            prop_assert!(relaxed_gap(&end, rho) <= c * (1.0 + 1e-9));
        }
        let mid = seg.minus.add_scaled(&seg.plus, 1.0);
        for (a, b) in mid.m.iter().chain(&mid.u).zip(z.m.iter().chain(&z.u)) {
            prop_assert!((0.5 * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
