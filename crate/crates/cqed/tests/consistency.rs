//! Cross-tier consistency: the exact-basis engine and the second-order
//! dispersive engine integrate the same physics up to higher-order terms in
//! the coupling, and both agree with the reduced model on the qubit.

use cqed::analysis::{rotate_frame, trace_distance_series};
use cqed::lindblad::{
    build_dispersive_engine, build_full_engine, integrate_engine, EvolutionResult, EvolveOptions,
};
use cqed::ode::OdeOptions;
use cqed::operators::{product_state, BlochVector, HilbertDims, QubitState, C64, ONE, ZERO};
use cqed::params::{reference_params, SystemParams};
use cqed::reduced::{integrate_reduced, PointerPair, ReducedOptions};

fn engine_run(
    full_tier: bool,
    dims: HilbertDims,
    sys: &SystemParams,
    qubit: &QubitState,
    t_grid: &[f64],
) -> EvolutionResult {
    let engine = if full_tier {
        build_full_engine(dims, sys).unwrap()
    } else {
        build_dispersive_engine(dims, sys).unwrap()
    };
    let rho0 = engine
        .prepare_initial(&product_state(dims, qubit, &[ONE]))
        .unwrap();
    integrate_engine(&engine, &rho0, t_grid, &EvolveOptions::default()).unwrap()
}

fn bloch_of(res: &EvolutionResult) -> Vec<BlochVector> {
    res.sx
        .iter()
        .zip(&res.sy)
        .zip(&res.sz)
        .map(|((&x, &y), &z)| BlochVector { x, y, z })
        .collect()
}

/// Full vs dispersive tier at the reference parameters and a weak drive:
/// both run in the same rotating frame, so their difference is the residual
/// of the second-order expansion and must stay far below every comparison
/// tolerance used elsewhere.
#[test]
fn engine_tiers_agree_at_weak_drive() {
    let sys = reference_params(2.0, 0.3);
    let dims = HilbertDims::new(18).unwrap();
    let excited = QubitState::new(ZERO, ZERO, ZERO, ONE);
    let t_grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.02).collect();
    let full = engine_run(true, dims, &sys, &excited, &t_grid);
    let disp = engine_run(false, dims, &sys, &excited, &t_grid);
    for i in 0..t_grid.len() {
        assert!(
            (full.sz[i] - disp.sz[i]).abs() < 2e-3,
            "sz mismatch {} at t = {}",
            (full.sz[i] - disp.sz[i]).abs(),
            t_grid[i]
        );
        assert!(
            (full.n_photon[i] - disp.n_photon[i]).abs()
                < 1e-2 * full.n_photon[i].max(0.1),
            "photon mismatch at t = {}: {} vs {}",
            t_grid[i],
            full.n_photon[i],
            disp.n_photon[i]
        );
    }
}

/// The reduced nonlinear model tracks the dispersive engine for a
/// superposition initial state once its coherence is rotated into the
/// engine frame.
#[test]
fn reduced_model_tracks_engine_with_transverse_state() {
    let sys = reference_params(2.0, 0.3);
    let dims = HilbertDims::new(18).unwrap();
    let h = C64::new(0.5, 0.0);
    let plus = QubitState::new(h, h, h, h);
    let t_grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.0025).collect();
    let disp = engine_run(false, dims, &sys, &plus, &t_grid);
    let opts = ReducedOptions::default();
    let red = integrate_reduced(
        &sys,
        &opts,
        &plus,
        &PointerPair::ZERO,
        &t_grid,
        &OdeOptions::default(),
    )
    .unwrap();
    let red_bloch: Vec<BlochVector> = red
        .sx
        .iter()
        .zip(&red.sy)
        .zip(&red.sz)
        .map(|((&x, &y), &z)| BlochVector { x, y, z })
        .collect();
    let chi = sys.dispersive().chi;
    let aligned = rotate_frame(&red.times, &red_bloch, sys.omega_a + chi);
    let d = trace_distance_series(&disp.times, &bloch_of(&disp), &red.times, &aligned).unwrap();
    assert!(d.max < 5e-3, "max trace distance {}", d.max);
}

/// An undriven dispersive engine relaxes onto the fixed point: empty cavity,
/// qubit in its ground state.
#[test]
fn undriven_fixed_point_is_reached() {
    let mut sys = reference_params(0.0, 0.1);
    sys.gamma_1 = cqed::params::TWO_PI * 1.0; // fast relaxation to keep the test short
    let dims = HilbertDims::new(8).unwrap();
    let excited = QubitState::new(ZERO, ZERO, ZERO, ONE);
    let t_grid = [0.0, 2.0, 4.0];
    let res = engine_run(false, dims, &sys, &excited, &t_grid);
    let last = t_grid.len() - 1;
    assert!(res.n_photon[last].abs() < 1e-6, "n = {}", res.n_photon[last]);
    assert!(
        (res.sz[last] + 1.0).abs() < 1e-6,
        "sz = {}",
        res.sz[last]
    );
}
