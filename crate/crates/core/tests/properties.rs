use proptest::prelude::*;
use rsmg::coupling::{hermite_coeffs, sample, CrossLocation};
use rsmg::experiment::sig10;
use rsmg::multigrid::{solve_time_step, StepSystem};
use rsmg::{Field, FieldSet, GridHierarchy, MultigridConfig, NodalState, RegimeModel, SpaceTimeGrid};

fn cubic(c: &[f64], x: f64) -> [f64; 5] {
    let v = c[0] + x * (c[1] + x * (c[2] + x * c[3]));
    let d1 = c[1] + x * (2.0 * c[2] + 3.0 * x * c[3]);
    let d2 = 2.0 * c[2] + 6.0 * x * c[3];
    let d3 = 6.0 * c[3];
    [v, d1, d2, d3, 0.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermite_cell_is_exact_on_cubics(
        c in proptest::collection::vec(-3.0f64..3.0, 4),
        h in 0.01f64..0.5,
        t in 0.0f64..1.0,
    ) {
        let p = |x: f64| cubic(&c, x);
        let hc = hermite_coeffs(p(0.0)[0], p(h)[0], p(0.0)[1], p(h)[1], h);
        let x = t * h;
        prop_assert!((hc.value(x) - p(x)[0]).abs() <= 1e-12 * (1.0 + p(x)[0].abs()));
        prop_assert!((hc.slope(x) - p(x)[1]).abs() <= 1e-10 * (1.0 + p(x)[1].abs()));
        prop_assert_eq!(hc.value(0.0), p(0.0)[0]);
    }

    #[test]
    fn sampled_u_matches_cubic_and_w_is_its_slope(
        c in proptest::collection::vec(-1.0f64..1.0, 4),
        j in 0usize..19,
        offset in 0.0f64..1.0,
    ) {
        let h = 0.1;
        let fields = FieldSet::from_fn(|f| (0..21).map(|i| cubic(&c, i as f64 * h)[f.index()]).collect());
        let x = (j as f64 + offset) * h;
        let v = sample(&fields, h, CrossLocation::Interior { j, offset }).unwrap();
        let exact = cubic(&c, x);
        prop_assert!((v[0] - exact[0]).abs() < 1e-12);
        prop_assert!((v[1] - exact[1]).abs() < 1e-11);
        // y is interpolated from (y, z) and is exact on the quadratic y = u''
        prop_assert!((v[2] - exact[2]).abs() < 1e-11);
    }

    #[test]
    fn value_samples_continuous_at_nodes(vals in proptest::collection::vec(-5.0f64..5.0, 5 * 11), j in 1usize..9) {
        let h = 0.2;
        let fields = FieldSet::from_fn(|f| vals[f.index() * 11..(f.index() + 1) * 11].to_vec());
        let left = sample(&fields, h, CrossLocation::Interior { j: j - 1, offset: 1.0 }).unwrap();
        let right = sample(&fields, h, CrossLocation::Interior { j, offset: 0.0 }).unwrap();
        for k in [0, 2, 3] {
            prop_assert!((left[k] - right[k]).abs() <= 1e-12 * (1.0 + right[k].abs()));
        }
    }

    #[test]
    fn ten_digit_prices_parse_back_close(x in 1e-6f64..1e4) {
        let back: f64 = sig10(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-10 * x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Short marches on random two-regime models.
    #[test]
    fn converged_steps_keep_their_invariants(
        vols in (0.1f64..0.9, 0.1f64..0.9),
        rates in (0.01f64..0.12, 0.01f64..0.12),
        q in (0.5f64..8.0, 0.5f64..8.0),
    ) {
        let model = RegimeModel {
            strike: 9.0,
            maturity: 0.05,
            rates: vec![rates.0, rates.1],
            vols: vec![vols.0, vols.1],
            generator: vec![vec![-q.0, q.0], vec![q.1, -q.1]],
            tolerance: 1e-8,
        };
        let grid = SpaceTimeGrid::with_square_rule(3.0, 40, model.maturity).unwrap();
        let config = MultigridConfig::default();
        let hierarchy = GridHierarchy::from_finest(grid, 3).unwrap();
        let mut state: Vec<NodalState> = (0..2).map(|_| NodalState::initial(9.0, grid.nodes())).collect();
        for n in 0..grid.steps {
            let sys = StepSystem::new(&model, grid, state.clone()).unwrap();
            let (new, report) = solve_time_step(&state, &model, &hierarchy, &config, false).unwrap();
            prop_assert!(report.converged);
            let res = sys.residuals(&new).unwrap();
            for (m, st) in new.iter().enumerate() {
                prop_assert!(st.s_f > 0.0 && st.s_f <= 9.0);
                if n > 0 {
                    prop_assert!(st.s_f <= state[m].s_f + 1e-9 * 9.0, "boundary rose in regime {}", m);
                }
                prop_assert!((st.fields[Field::U][0] - (9.0 - st.s_f)).abs() < 1e-8);
                prop_assert!((st.fields[Field::W][0] + st.s_f).abs() < 1e-8);
                for f in [Field::U, Field::W, Field::Y, Field::Z, Field::Zhat] {
                    prop_assert_eq!(st.fields[f][grid.m], 0.0);
                }
            }
            for f in Field::ALL {
                prop_assert!(res.max_normalized(f) < 1e-8, "{:?} {}", f, res.max_normalized(f));
            }
            state = new;
        }
    }
}
