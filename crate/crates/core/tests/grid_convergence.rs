//! The production grid against a wider and finer one, on the most demanding
//! preparation (polar dipole, λ_g = 0.2, lower polariton).

use polariton::config::{GridSpec, Scenario};
use polariton::field_stats::FockFrame;
use polariton::propagator::Target;
use polariton::runner::{initial_statistics, prepare};
use polariton::units::hartree_to_wavenumber;

fn lp_scenario(grid: GridSpec) -> Scenario {
    Scenario { grid, initial_state: Target::LowerPolariton, ..Scenario::default() }
}

#[test]
fn production_grid_matches_a_larger_grid() {
    let big = GridSpec { q_min: 2.2, q_max: 10.18, n_q: 400, x_min: -150.0, x_max: 149.25, n_x: 400 };
    let (a, b) = (lp_scenario(GridSpec::production()), lp_scenario(big));

    let ea: Vec<f64> = prepare(&a, Target::LowerPolariton).unwrap().states.iter().map(|r| r.energy).collect();
    let eb: Vec<f64> = prepare(&b, Target::LowerPolariton).unwrap().states.iter().map(|r| r.energy).collect();
    for (x, y) in ea.iter().zip(&eb) {
        let d = hartree_to_wavenumber((x - y).abs());
        assert!(d < 0.01, "level shift {d} cm-1");
    }

    let sa = initial_statistics(&a, &[FockFrame::Static]).unwrap();
    let sb = initial_statistics(&b, &[FockFrame::Static]).unwrap();
    let (ra, rb) = (&sa[0], &sb[0]);
    assert!((ra.mandel_q.unwrap() - rb.mandel_q.unwrap()).abs() < 1e-5);
    assert!((ra.zeta_0 - rb.zeta_0).abs() < 1e-5);
    assert!((ra.zeta_half_pi - rb.zeta_half_pi).abs() < 1e-5);
    assert!((ra.mean_n - rb.mean_n).abs() < 1e-5);
}
