//! Property tests over randomized inputs: the algebraic identities of the
//! flux function, order and monotonicity of the transform maps, flux
//! balance of the Green operator, and counterexample invariants.

use proptest::prelude::*;

use plaplab::catalog::CatalogParams;
use plaplab::nonlinearity::Nonlinearity;
use plaplab::radial::{green_apply_nodes, phi_p, phi_p_inv, sphere_area, RadialGrid, Weight};
use plaplab::transform::{construct_counterexample_g, g_to_beta, GridSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phi_p_inverse_identity(
        s in -1e6f64..1e6,
        p in 1.2f64..4.0,
    ) {
        let y = phi_p(s, p);
        let back = phi_p_inv(y, p);
        prop_assert!((back - s).abs() <= 1e-9 * (1.0 + s.abs()));
        // Odd and strictly increasing.
        prop_assert!((phi_p(-s, p) + y).abs() <= 1e-12 * (1.0 + y.abs()));
    }

    #[test]
    fn phi_p_monotone(
        a in -1e3f64..1e3,
        d in 1e-6f64..1e3,
        p in 1.2f64..4.0,
    ) {
        prop_assert!(phi_p(a + d, p) > phi_p(a, p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // u <= v under the change of unknown: H(v) <= v across catalog
    // entries and parameters.
    #[test]
    fn h_below_identity_random_params(
        id in prop::sample::select(vec![1u32, 2, 5, 6, 9]),
        p in 1.6f64..3.2,
        qfrac in 0.2f64..0.8,
    ) {
        let params = match id {
            2 => CatalogParams { q: Some(qfrac * (p - 1.0)), ..Default::default() },
            5 => CatalogParams { q: Some((1.0 + qfrac) * (p - 1.0)), ..Default::default() },
            9 => CatalogParams { q: Some(qfrac * 2.0 * (p - 1.0)), ..Default::default() },
            _ => CatalogParams::default(),
        };
        let g = Nonlinearity::g_catalog(id, params, p).unwrap();
        let tables = g_to_beta(&g, p, GridSpec::with_nodes(800)).unwrap();
        for i in 0..tables.psi.len() {
            prop_assert!(tables.t_grid[i] <= tables.psi[i] + 1e-12);
        }
        // H nondecreasing along the table.
        for w in tables.t_grid.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    // Global flux balance: flux(1) = a/omega + int_0^1 t^(N-1) F dt.
    #[test]
    fn green_flux_identity(
        n in prop::sample::select(vec![2usize, 3, 4, 5]),
        p_frac in 0.0f64..1.0,
        c0 in 0.0f64..3.0,
        c1 in 0.0f64..3.0,
        atom in 0.0f64..5.0,
    ) {
        let p = 1.3 + p_frac * ((n as f64).min(3.5) - 1.3);
        let grid = RadialGrid::geometric(512, 1e-9);
        let q: Vec<f64> = grid.nodes().iter().map(|&r| c0 + c1 * r).collect();
        let sol = green_apply_nodes(&grid, p, n, &q, &Weight::Const(1.0), atom).unwrap();
        let nf = n as f64;
        // Exact integral of t^(N-1)(c0 + c1 t).
        let exact = c0 / nf + c1 / (nf + 1.0);
        let expect = atom / sphere_area(n) + exact;
        let got = *sol.flux.last().unwrap();
        prop_assert!(
            (got - expect).abs() <= 1e-9 * (1.0 + expect),
            "flux(1) = {got} vs {expect}"
        );
        // u nonincreasing and nonnegative for nonnegative data.
        for w in sol.u.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!(sol.u.iter().all(|&x| x >= -1e-12));
    }

    // Counterexample construction against random parabolas: unit segment
    // mass and convexity hold for any admissible F. (The first admissible
    // slope grows with the curvature, and the first breakpoint like its
    // exponential; the scale range keeps at least one segment below the
    // horizon.)
    #[test]
    fn counterexample_invariants(scale in 0.3f64..2.0, shift in 0.0f64..2.0) {
        let f = move |s: f64| scale * s * s + shift * s;
        let ce = construct_counterexample_g(f, 1e14).unwrap();
        prop_assert!(!ce.segments.is_empty());
        for i in 0..ce.segments.len() {
            prop_assert!(ce.segment_mass(i) >= 1.0);
        }
        let pl = ce.g.piecewise().unwrap();
        for w in pl.slopes.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        for seg in &ce.segments {
            prop_assert!(pl.eval(seg.s_end) / seg.s_end >= 0.5 * seg.slope);
        }
    }
}
