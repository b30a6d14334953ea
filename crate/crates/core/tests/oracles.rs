use proptest::prelude::*;
use roughrisk::cir::{cir_euler, solve_riccati, CirParams, RiccatiForm};
use roughrisk::gauss::{normals, rng_substream, Component};
use roughrisk::kernels::{kernel_cross_moment, HolderIndices};
use roughrisk::mc::{map_paths, MeanEstimate};
use roughrisk::premium::kernel_matrix;

/// ∫₀¹ f by the midpoint rule after u = x^{1/(1+e)}, which flattens an
/// x^e singularity at 0.
fn graded_midpoint(f: impl Fn(f64) -> f64, e: f64, n: usize) -> f64 {
    let p = 1.0 / (1.0 + e);
    (0..n)
        .map(|k| {
            let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
            let m = 0.5 * (a + b);
            // dx = p m^{p-1} dm
            f(m.powf(p)) * p * m.powf(p - 1.0) * (b - a)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn cross_moment_at_alpha_zero_is_the_interval_integral(h in 0.02f64..0.48, t in 0.01f64..5.0, frac in 0.0f64..1.0) {
        let hh = HolderIndices::new(h).unwrap();
        let u = t * frac;
        let a = kernel_cross_moment(hh, 0.0, t, u).unwrap();
        let b = hh.kernel().interval_integral(t, u, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn cross_moment_matches_a_graded_rule(h in 0.05f64..0.45, alpha in -0.45f64..0.0) {
        let hh = HolderIndices::new(h).unwrap();
        let got = kernel_cross_moment(hh, alpha, 1.0, 0.0).unwrap();
        // split at ½ so each half carries one singular end
        let lo = graded_half(|x| (1.0 - x).powf(hh.minus()) * x.powf(alpha), alpha);
        let hi = graded_half(|y| y.powf(hh.minus()) * (1.0 - y).powf(alpha), hh.minus());
        prop_assert!((got - lo - hi).abs() < 1e-4 * got, "{} vs {}", got, lo + hi);
    }
}

/// ∫₀^{½} f with an x^e singularity at 0.
fn graded_half(f: impl Fn(f64) -> f64, e: f64) -> f64 {
    0.5 * graded_midpoint(|x| f(0.5 * x), e, 20_000)
}

#[test]
fn kernel_matrix_rows_sum_to_the_full_integral() {
    let h = HolderIndices::new(0.15).unwrap();
    let tenors = [0.1, 0.3, 0.7, 1.5];
    let a = kernel_matrix(h, &tenors).unwrap();
    for (row, t) in a.iter().zip(tenors) {
        let total: f64 = row.iter().sum();
        assert!((total - t.powf(h.plus()) / h.plus()).abs() < 1e-12);
    }
}

#[test]
fn riccati_bond_price_against_monte_carlo() {
    let (h, nu) = (HolderIndices::new(0.2).unwrap(), 0.8);
    let p = CirParams::new(1.0, 0.1, 0.3, 0.1).unwrap();
    let sol = solve_riccati(&p, nu, h, 1.0, 200, RiccatiForm::FeynmanKac).unwrap();
    let (c, a) = sol.at_lag(1.0).unwrap();
    let target = (-p.y0 * c - a).exp();
    let steps = 400;
    let dt = 1.0 / steps as f64;
    let e = h.minus();
    // ∫₀¹ (1-u)^{H₋} Y_u du with Y held at the left point of each cell
    let w: Vec<f64> = (0..steps)
        .map(|j| {
            let hi = 1.0 - j as f64 * dt;
            let lo = hi - dt;
            (hi.powf(e + 1.0) - lo.max(0.0).powf(e + 1.0)) / (e + 1.0)
        })
        .collect();
    let samples = map_paths(20_000, |i| {
        let dx = normals(&mut rng_substream(77, i as u64, Component::Premium), steps, dt.sqrt(), false);
        let y = cir_euler(&p, dt, &dx);
        (nu * w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()).exp()
    });
    let est = MeanEstimate::from_samples(&samples);
    // left-point sampling adds an O(dt) bias well inside the band
    assert!(est.within(target, 4.0), "MC {} ± {} vs {target}", est.mean, est.se);
}
