//! Shared fixtures for the kernel benchmarks: a unit-square pipeline at a
//! given resolution, built once per benchmark group.

use nullctrl_core::forward::{solve_trajectory, Operators, TrajectoryBar};
use nullctrl_core::weights::build_weights;
use nullctrl_core::{
    DomainSpec, EtaField, GridSpec, MaskField, ScalarField, TimeProfile, WeightBundle,
};
use std::f64::consts::PI;

pub struct Fixture {
    pub d: DomainSpec,
    pub g: GridSpec,
    pub ops: Operators,
    pub eta: EtaField,
    pub profile: TimeProfile,
    pub bundle: WeightBundle,
    pub bar: TrajectoryBar,
    pub mask: MaskField,
}

pub fn fixture(n: usize, nt: usize, t_final: f64) -> Fixture {
    let d = DomainSpec::unit_square(t_final);
    let g = GridSpec::new(&d, n, n, nt).expect("valid grid");
    let ops = Operators::new(&g);
    let eta = EtaField::build(&d, &g).expect("admissible geometry");
    let profile = TimeProfile::build(t_final, nt).expect("valid horizon");
    let bundle =
        build_weights(eta.clone(), profile.clone(), 2.0, 1.5).expect("weights build");
    let th_bar0 = ScalarField::from_fn(&g, |_, y| 0.5 * (PI * y).sin());
    let bar = solve_trajectory(&th_bar0, &g).expect("target trajectory");
    let mask = MaskField::from_region(&g, &d, &d.omega);
    Fixture {
        d,
        g,
        ops,
        eta,
        profile,
        bundle,
        bar,
        mask,
    }
}
