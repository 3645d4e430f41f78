//! End-to-end acceptance gates for the laboratory, one test per criterion,
//! each printing a single PASS line with the measured quantities. Every
//! tolerance and grid is pinned here, not read from anywhere else; a red
//! test means the gate is genuinely not met.

use nullctrl_core::adjoint::{duality_gap, solve_adjoint};
use nullctrl_core::forward::{
    solve_linear, solve_trajectory, stream_velocity, ControlPair, Operators, SourcePair,
    TrajectoryBar, VelocityControl,
};
use nullctrl_core::hum::{dual_functional, hum_solve, DualConfig, HumProblem, TerminalPair};
use nullctrl_core::ops::norm_scalar;
use nullctrl_core::picard::{picard_control, PicardConfig};
use nullctrl_core::verify::{carleman_ratio, neumann_obstruction, score_sample};
use nullctrl_core::weights::{build_weights, check_weight_inequalities};
use nullctrl_core::{
    DomainSpec, EtaField, GridSpec, MaskField, ScalarField, TimeProfile, VectorField, WeightBundle,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

struct Lab {
    g: GridSpec,
    ops: Operators,
    bundle: WeightBundle,
    bar: TrajectoryBar,
    mask: MaskField,
}

fn lab(n: usize, nt: usize, t_final: f64) -> Lab {
    let d = DomainSpec::unit_square(t_final);
    let g = GridSpec::new(&d, n, n, nt).unwrap();
    let ops = Operators::new(&g);
    let eta = EtaField::build(&d, &g).unwrap();
    let profile = TimeProfile::build(t_final, nt).unwrap();
    let bundle = build_weights(eta, profile, 2.0, 1.5).unwrap();
    let th_bar0 = ScalarField::from_fn(&g, |_, y| 0.5 * (PI * y).sin());
    let bar = solve_trajectory(&th_bar0, &g).unwrap();
    let mask = MaskField::from_region(&g, &d, &d.omega);
    Lab {
        g,
        ops,
        bundle,
        bar,
        mask,
    }
}

fn rand_scalar(g: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut s = ScalarField::zeros(g);
    s.data.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    s
}

fn rand_vector(g: &GridSpec, rng: &mut ChaCha8Rng) -> VectorField {
    let mut w = VectorField::zeros(g);
    for i in 1..g.nx {
        for j in 0..g.ny {
            w.u[[i, j]] = rng.random_range(-1.0..1.0);
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            w.v[[i, j]] = rng.random_range(-1.0..1.0);
        }
    }
    w
}

#[test]
fn a1_weight_inequalities_tight_slack() {
    let start = Instant::now();
    let lb = lab(32, 64, 1.0);
    let report = check_weight_inequalities(&lb.bundle);
    let mut worst = f64::INFINITY;
    for c in &report.checks {
        assert!(
            c.passed && c.worst_slack >= -1e-12,
            "{} violated: relative slack {:.3e} at {:?}",
            c.name,
            c.worst_slack,
            c.worst_node
        );
        worst = worst.min(c.worst_slack);
    }
    assert!(report.all_passed);
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1.0, "weight check took {dt:.2} s, budget 1 s");
    println!(
        "acceptance 1 weight-inequalities: PASS ({} checks on 32x32x64, worst relative slack {worst:.3e}, {dt:.2} s)",
        report.checks.len()
    );
}

#[test]
fn a2_adjoint_transpose_and_duality() {
    let start = Instant::now();
    // one-step identity: a single-step horizon with the same dt as the
    // full grid, random state and a random forcing against random dual
    // data, so both sides of the pairing are away from zero
    let d1 = DomainSpec::unit_square(1.0 / 32.0);
    let g1 = GridSpec::new(&d1, 16, 16, 1).unwrap();
    let ops1 = Operators::new(&g1);
    let bar1 = solve_trajectory(&ScalarField::from_fn(&g1, |_, y| (PI * y).sin()), &g1).unwrap();
    let mut worst_step = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y0 = rand_vector(&g1, &mut rng);
        let th0 = rand_scalar(&g1, &mut rng);
        let src = [SourcePair {
            f: rand_vector(&g1, &mut rng),
            f0: rand_scalar(&g1, &mut rng),
        }];
        let ctrl = ControlPair {
            v0: vec![rand_scalar(&g1, &mut rng)],
            vj: Some(VelocityControl {
                j_index: 0,
                values: vec![rand_vector(&g1, &mut rng)],
            }),
        };
        let phi_t = rand_vector(&g1, &mut rng);
        let psi_t = rand_scalar(&g1, &mut rng);
        let fwd = solve_linear(&g1, &ops1, &y0, &th0, Some(&src), Some(&ctrl), &bar1);
        let adj = solve_adjoint(&g1, &ops1, &phi_t, &psi_t, None, &bar1);
        let gap = duality_gap(&g1, &fwd, &adj, Some(&src), Some(&ctrl), None);
        assert!(gap <= 1e-10, "one-step transpose gap {gap:.3e} at seed {seed}");
        worst_step = worst_step.max(gap);
    }

    // full-horizon identity with sources, controls, and dual sources all on
    let lb = lab(16, 32, 1.0);
    let g = &lb.g;
    let mut worst_full = 0.0f64;
    for seed in 100..120u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y0 = rand_vector(g, &mut rng);
        let th0 = rand_scalar(g, &mut rng);
        let src: Vec<SourcePair> = (0..g.nt)
            .map(|_| SourcePair {
                f: rand_vector(g, &mut rng),
                f0: rand_scalar(g, &mut rng),
            })
            .collect();
        let ctrl = ControlPair {
            v0: (0..g.nt).map(|_| rand_scalar(g, &mut rng)).collect(),
            vj: Some(VelocityControl {
                j_index: 0,
                values: (0..g.nt).map(|_| rand_vector(g, &mut rng)).collect(),
            }),
        };
        let adj_src: Vec<SourcePair> = (0..g.nt)
            .map(|_| SourcePair {
                f: rand_vector(g, &mut rng),
                f0: rand_scalar(g, &mut rng),
            })
            .collect();
        let phi_t = rand_vector(g, &mut rng);
        let psi_t = rand_scalar(g, &mut rng);
        let fwd = solve_linear(g, &lb.ops, &y0, &th0, Some(&src), Some(&ctrl), &lb.bar);
        let adj = solve_adjoint(g, &lb.ops, &phi_t, &psi_t, Some(&adj_src), &lb.bar);
        let gap = duality_gap(g, &fwd, &adj, Some(&src), Some(&ctrl), Some(&adj_src));
        assert!(gap <= 1e-10, "duality gap {gap:.3e} at seed {seed}");
        worst_full = worst_full.max(gap);
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 30.0, "adjoint checks took {dt:.1} s, budget 30 s");
    println!(
        "acceptance 2 adjoint-exactness: PASS (20+20 instances at 16x16x32, worst one-step gap {worst_step:.3e}, worst full gap {worst_full:.3e}, {dt:.1} s)"
    );
}

#[test]
fn a3_dual_gradient_matches_central_differences() {
    let start = Instant::now();
    let lb = lab(16, 32, 1.0);
    let g = &lb.g;
    let y0 = VectorField::zeros(g);
    let th0 = ScalarField::from_fn(g, |x, y| 1e-2 * (PI * x).sin() * (PI * y).sin());
    let prob = HumProblem {
        g,
        ops: &lb.ops,
        bundle: &lb.bundle,
        bar: &lb.bar,
        mask: &lb.mask,
        y0: &y0,
        theta0: &th0,
        src: None,
    };
    let cfg = DualConfig::default();
    let h = 0.05;
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let w = TerminalPair {
            y: rand_vector(g, &mut rng),
            theta: rand_scalar(g, &mut rng),
        };
        let dir = TerminalPair {
            y: rand_vector(g, &mut rng),
            theta: rand_scalar(g, &mut rng),
        };
        let (_, grad) = dual_functional(&prob, &cfg, &w);
        let gd = grad.dot(g, &dir);
        let mut wp = w.clone();
        wp.axpy(h, &dir);
        let mut wm = w.clone();
        wm.axpy(-h, &dir);
        let (jp, _) = dual_functional(&prob, &cfg, &wp);
        let (jm, _) = dual_functional(&prob, &cfg, &wm);
        let fd = (jp - jm) / (2.0 * h);
        let rel = (fd - gd).abs() / fd.abs().max(gd.abs()).max(1e-300);
        println!("point {seed}: directional {gd:.6e} central {fd:.6e} rel {rel:.3e}");
        assert!(rel <= 1e-6, "gradient mismatch {rel:.3e} at point {seed}");
        worst = worst.max(rel);
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "gradient check took {dt:.1} s, budget 60 s");
    println!(
        "acceptance 3 gradient-check: PASS (3 random points at 16x16x32, worst relative error {worst:.3e}, {dt:.1} s)"
    );
}

#[test]
fn a4_trajectory_heat_column_oracle() {
    let start = Instant::now();
    // nx stays small: the profile is exactly columnar, only (ny, nt) matter
    let run = |ny: usize, nt: usize| -> (f64, f64) {
        let d = DomainSpec::unit_square(0.5);
        let g = GridSpec::new(&d, 4, ny, nt).unwrap();
        let th0 = ScalarField::from_fn(&g, |_, y| (PI * y).sin());
        let bar = solve_trajectory(&th0, &g).unwrap();
        let mut err = 0.0f64;
        for m in 0..=nt {
            let t = m as f64 * g.dt;
            for j in 0..ny {
                let yc = (j as f64 + 0.5) * g.hy;
                let exact = (-PI * PI * t).exp() * (PI * yc).sin();
                err = err.max((bar.theta_bar[m].data[[0, j]] - exact).abs());
            }
        }
        (err, 5.0 * (g.dt + g.hy * g.hy))
    };
    let (e1, b1) = run(12, 1024);
    let (e2, b2) = run(24, 2048);
    println!("oracle errors {e1:.3e} (bound {b1:.3e}) -> {e2:.3e} (bound {b2:.3e})");
    assert!(e1 <= b1, "coarse error {e1:.3e} above bound {b1:.3e}");
    assert!(e2 <= b2, "fine error {e2:.3e} above bound {b2:.3e}");
    let ratio = e1 / e2;
    assert!(ratio >= 2.5, "refinement gained only {ratio:.2}x, need 2.5x");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "oracle runs took {dt:.1} s, budget 10 s");
    println!(
        "acceptance 4 trajectory-oracle: PASS (L_inf {e1:.3e} -> {e2:.3e}, ratio {ratio:.2}, {dt:.1} s)"
    );
}

#[test]
fn a5_temperature_only_null_control_sweep() {
    let start = Instant::now();
    // horizon short enough that the observation window on [0, T/2] retains
    // authority over the terminal state; at long horizons the Hessian
    // spectrum sits below every eps in the sweep and no penalization can
    // buy a terminal reduction
    let lb = lab(32, 64, 0.2);
    let y0 = VectorField::zeros(&lb.g);
    let th0 = ScalarField::from_fn(&lb.g, |x, y| 1e-2 * (PI * x).sin() * (PI * y).sin());
    let prob = HumProblem {
        g: &lb.g,
        ops: &lb.ops,
        bundle: &lb.bundle,
        bar: &lb.bar,
        mask: &lb.mask,
        y0: &y0,
        theta0: &th0,
        src: None,
    };
    let data_norm = norm_scalar(&lb.g, &th0);

    let mut warm: Option<TerminalPair> = None;
    let mut terminals = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
        let cfg = DualConfig {
            epsilon: eps,
            ..DualConfig::default()
        };
        let res = hum_solve(&prob, &cfg, warm.as_ref());
        println!(
            "eps {eps:.0e}: cg_iters {} terminal {:.6e} kkt {:.3e}",
            res.cg_iters, res.terminal_norm, res.kkt_residual
        );
        assert!(res.converged, "cg hit the cap at eps {eps:.0e}");
        assert!(
            res.kkt_residual <= 1e-6 * data_norm,
            "kkt residual {:.3e} above 1e-6 * data scale {:.3e} at eps {eps:.0e}",
            res.kkt_residual,
            data_norm
        );
        assert_eq!(
            res.controls.max_outside_mask(&lb.mask),
            0.0,
            "control leaked outside omega at eps {eps:.0e}"
        );
        assert!(res.controls.vj.is_none(), "velocity control emitted");
        terminals.push(res.terminal_norm);
        warm = Some(TerminalPair {
            y: res.phi_t_opt.clone(),
            theta: res.psi_t_opt.clone(),
        });
    }
    for pair in terminals.windows(2) {
        assert!(
            pair[1] <= pair[0],
            "terminal norm rose when eps dropped: {:.3e} -> {:.3e}",
            pair[0],
            pair[1]
        );
    }
    let total = terminals[0] / terminals[3];
    assert!(total >= 10.0, "sweep reduced terminal only {total:.2}x, need 10x");
    assert!(
        terminals[3] <= 0.05 * data_norm,
        "final terminal {:.3e} vs 5% of data scale {:.3e}",
        terminals[3],
        data_norm
    );
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 600.0, "sweep took {dt:.1} s, budget 600 s");
    println!(
        "acceptance 5 linear-null-control: PASS (32x32x64, total reduction {total:.1}x, final terminal {:.3e} <= 0.05 * {data_norm:.3e}, {dt:.1} s)",
        terminals[3]
    );
}

#[test]
fn a6_control_support_and_reduced_path() {
    let lb = lab(12, 16, 0.2);
    let y0 = stream_velocity(&lb.g, |x, y| 1e-2 * (PI * x).sin() * (PI * y).sin());
    let th0 = ScalarField::from_fn(&lb.g, |x, y| 1e-2 * (PI * x).sin() * (2.0 * PI * y).sin());
    let prob = HumProblem {
        g: &lb.g,
        ops: &lb.ops,
        bundle: &lb.bundle,
        bar: &lb.bar,
        mask: &lb.mask,
        y0: &y0,
        theta0: &th0,
        src: None,
    };

    // reduced path: temperature control only, supported inside omega
    let res = hum_solve(&prob, &DualConfig::default(), None);
    assert!(res.controls.vj.is_none(), "reduced path emitted a velocity control");
    assert_eq!(
        res.controls.max_outside_mask(&lb.mask),
        0.0,
        "temperature control leaked outside omega"
    );
    let mut nonzero = 0usize;
    for v in &res.controls.v0 {
        nonzero += v.data.iter().filter(|x| **x != 0.0).count();
    }
    assert!(nonzero > 0, "control vanished identically; support check is vacuous");

    // velocity-observation probe: the optional component also stays in omega
    let cfg = DualConfig {
        observe_velocity: true,
        j_index: 0,
        ..DualConfig::default()
    };
    let probe = hum_solve(&prob, &cfg, None);
    let vc = probe.controls.vj.as_ref().expect("probe path lost its velocity component");
    assert_eq!(vc.j_index, 0);
    assert_eq!(
        probe.controls.max_outside_mask(&lb.mask),
        0.0,
        "probe controls leaked outside omega"
    );
    println!(
        "acceptance 6 control-constraints: PASS (12x12x16, {nonzero} nonzero control cells all inside omega, no velocity control on the reduced path)"
    );
}

#[test]
fn a7_nonlinear_fixed_point() {
    let start = Instant::now();
    let lb = lab(16, 32, 0.2);
    let y0 = VectorField::zeros(&lb.g);
    let mut th0 = lb.bar.theta_bar0.clone();
    let bump = ScalarField::from_fn(&lb.g, |x, y| 1e-3 * (PI * x).sin() * (PI * y).sin());
    th0.axpy(1.0, &bump);
    let cfg = PicardConfig::default();
    let res = picard_control(&lb.g, &lb.ops, &lb.bundle, &lb.bar, &lb.mask, &y0, &th0, &cfg)
        .expect("outer loop failed");
    for r in &res.history {
        println!(
            "outer {}: lin {:.4e} nonlin {:.4e} diff {:.3e} cg {}",
            r.outer_iter, r.terminal_norm_linear, r.terminal_norm_nonlinear, r.diff, r.cg_iters
        );
    }
    assert!(res.converged, "fixed point missed the tolerance in 8 iterations");
    assert!(!res.smallness_exceeded, "perturbation left the smallness regime");
    assert!(res.history.len() <= 8, "took {} outer iterations", res.history.len());
    for pair in res.history.windows(2).skip(1) {
        assert!(
            pair[1].diff <= 0.5 * pair[0].diff,
            "contraction below 2x: {:.3e} -> {:.3e}",
            pair[0].diff,
            pair[1].diff
        );
    }
    let last = res.history.last().unwrap();
    assert!(
        last.terminal_norm_nonlinear <= 3.0 * last.terminal_norm_linear,
        "nonlinear terminal {:.3e} drifted from linear {:.3e}",
        last.terminal_norm_nonlinear,
        last.terminal_norm_linear
    );
    assert_eq!(res.controls.max_outside_mask(&lb.mask), 0.0);
    assert!(res.controls.vj.is_none(), "reduced path emitted a velocity control");

    // zero perturbation: the fixed point is exact and everything is 0.0
    let zero =
        picard_control(&lb.g, &lb.ops, &lb.bundle, &lb.bar, &lb.mask, &y0, &lb.bar.theta_bar0, &cfg)
            .expect("zero run failed");
    assert!(zero.converged);
    for v in &zero.controls.v0 {
        assert!(v.data.iter().all(|x| *x == 0.0), "zero data produced a control");
    }
    for st in &zero.trajectory.states {
        assert!(st.y.u.iter().all(|x| *x == 0.0) && st.y.v.iter().all(|x| *x == 0.0));
        assert!(st.theta.data.iter().all(|x| *x == 0.0));
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1800.0, "fixed point took {dt:.1} s, budget 1800 s");
    println!(
        "acceptance 7 nonlinear-fixed-point: PASS ({} outer iterations, final gap {:.3e}, nonlinear/linear terminal {:.2}, zero case exact, {dt:.1} s)",
        res.history.len(),
        last.diff,
        last.terminal_norm_nonlinear / last.terminal_norm_linear.max(f64::MIN_POSITIVE)
    );
}

#[test]
fn a8_observability_ratio_grid_stability() {
    let start = Instant::now();
    // the sampler draws modal coefficients before grid evaluation, so both
    // grids see the same 50 continuum samples
    let run = |n: usize| {
        let lb = lab(n, 64, 1.0);
        carleman_ratio(&lb.g, &lb.ops, &lb.bundle, &lb.bar, &lb.mask, 50, 0, false)
    };
    let coarse = run(16);
    let fine = run(32);
    for rep in [&coarse, &fine] {
        for s in &rep.samples {
            assert!(s.ratio.is_finite(), "seed {} scored ratio {}", s.seed, s.ratio);
            assert!(s.lhs >= 0.0 && s.rhs > 0.0, "degenerate sides at seed {}", s.seed);
        }
    }
    let spread = (coarse.max_ratio / fine.max_ratio).max(fine.max_ratio / coarse.max_ratio);
    println!(
        "max ratio 16^2 {:.4e} vs 32^2 {:.4e} (spread {spread:.3}), medians {:.4e} / {:.4e}",
        coarse.max_ratio, fine.max_ratio, coarse.median_ratio, fine.median_ratio
    );
    assert!(
        spread <= 2.0,
        "max ratio moved {spread:.2}x between grids, budget 2x"
    );

    // the all-zero sample scores the 0/0 convention
    let lb = lab(16, 64, 1.0);
    let (lhs, rhs, ratio) = score_sample(
        &lb.g,
        &lb.ops,
        &lb.bundle,
        &lb.bar,
        &lb.mask,
        false,
        &VectorField::zeros(&lb.g),
        &ScalarField::zeros(&lb.g),
        &VectorField::zeros(&lb.g),
        &ScalarField::zeros(&lb.g),
    );
    assert_eq!((lhs, rhs, ratio), (0.0, 0.0, 0.0), "zero sample scored {ratio}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 900.0, "ratio experiment took {dt:.1} s, budget 900 s");
    println!(
        "acceptance 8 carleman-ratio: PASS (50 samples, max ratio {:.4e} vs {:.4e}, spread {spread:.3} <= 2, zero sample -> 0, {dt:.1} s)",
        coarse.max_ratio, fine.max_ratio
    );
}

#[test]
fn a9_insulated_wall_mass_conservation() {
    let start = Instant::now();
    let d = DomainSpec::unit_square(1.0);
    let g = GridSpec::new(&d, 16, 16, 256).unwrap();
    let ops = Operators::new(&g);
    // mean 0.7 plus a mean-zero perturbation, stirred by a weak vortex
    let th0 = ScalarField::from_fn(&g, |x, y| {
        0.7 + 0.3 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
    });
    let wind = stream_velocity(&g, |x, y| 0.05 * (PI * x).sin() * (PI * y).sin());
    let rep = neumann_obstruction(&g, &ops, &th0, &wind).expect("insulated march failed");
    println!(
        "mass {:.12e} -> {:.12e} (drift {:.3e}), terminal L1 {:.4e}",
        rep.mass_initial, rep.mass_final, rep.drift, rep.l1_terminal
    );
    assert!(rep.drift <= 1e-10, "mass drifted {:.3e} over the horizon", rep.drift);
    assert!(rep.obstruction_implied, "nonzero mean went undetected");
    assert!(
        rep.l1_terminal >= rep.implied_lower_bound - 1e-12,
        "terminal L1 {:.3e} fell below the conserved mass {:.3e}",
        rep.l1_terminal,
        rep.implied_lower_bound
    );
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "insulated march took {dt:.1} s, budget 10 s");
    println!(
        "acceptance 9 neumann-obstruction: PASS (drift {:.3e} <= 1e-10 over 256 steps, terminal L1 {:.4e} >= {:.4e}, {dt:.1} s)",
        rep.drift, rep.l1_terminal, rep.implied_lower_bound
    );
}
