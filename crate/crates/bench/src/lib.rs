//! Seeded inputs shared by the solver benchmarks.

use fk_core::matching::BitMatrix;
use fk_core::measures::EmpiricalMeasure;
use fk_core::systems::{OrbitSample, PhasePoint, System, SystemSpec};
use fk_core::SplitMix64;

/// `n x n` matrix with independent entries set with probability `density`.
pub fn random_matrix(n: usize, density: f64, seed: u64) -> BitMatrix {
    let mut rng = SplitMix64::new(seed);
    BitMatrix::from_fn(n, n, |_, _| rng.bool(density))
}

pub fn rotation_suspension() -> System {
    System::new(&SystemSpec::suspend(SystemSpec::golden_rotation())).expect("valid system")
}

/// Orbits of a random point and of its image after a short time.
pub fn orbit_pair(system: &System, t: f64, step: f64, seed: u64) -> (OrbitSample, OrbitSample) {
    let mut rng = SplitMix64::new(seed);
    let x = system.random_point(&mut rng);
    let y = system.evolve(&x, 3.0 * rng.next_f64()).expect("flow point");
    (
        system.sample_orbit(&x, t, step).expect("valid horizon"),
        system.sample_orbit(&y, t, step).expect("valid horizon"),
    )
}

/// Uniform atoms on the circle.
pub fn circle_measure(n: usize, seed: u64) -> EmpiricalMeasure {
    let s = System::new(&SystemSpec::Identity).expect("valid system");
    let mut rng = SplitMix64::new(seed);
    EmpiricalMeasure::from_points(&s, (0..n).map(|_| PhasePoint::Circle(rng.next_f64())).collect(), 1.0)
        .expect("circle points")
}

/// Square integer weight matrix for assignment problems.
pub fn random_weights(n: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| (0..n).map(|_| rng.below(1000) as i64).collect()).collect()
}
