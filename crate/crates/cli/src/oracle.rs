//! `oracle-check`: the linear plant with `Φ = [x, 1]`, where the stationary
//! point of the `P` flow must reproduce the Riccati solution.

use std::process::ExitCode;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};

use sol_core::care::{care_residual, lqr_gain, solve_care};
use sol_core::config::{linear_oracle_plant, preset, Benchmark};
use sol_core::valuegrad::{control, make_qbar, step_p, CostSpec, ValueParams};
use sol_core::{run_episode, BasisSet, ModelCoefficients};

const TOLERANCE: f64 = 1e-3;

pub fn check() -> Result<ExitCode> {
    let plant = linear_oracle_plant();
    let cfg = preset(Benchmark::LinearOracle);
    let basis = cfg.basis_set()?;
    let q = cfg.cost.q.clone();
    let r = DMatrix::from_diagonal(&cfg.cost.r);
    let cost = CostSpec { gamma: 0.0, x_ref: DVector::zeros(2), ..cfg.cost.clone() };

    let care = solve_care(&plant.a, &plant.b, &q, &r)?;
    let k = lqr_gain(&plant.b, &r, &care);

    let (x1, x2, c) = (index(&basis, "x1"), index(&basis, "x2"), index(&basis, "1"));
    let mut model = ModelCoefficients::zeros(2, 1, basis.len());
    for i in 0..2 {
        model.w[(i, x1)] = plant.a[(i, 0)];
        model.w[(i, x2)] = plant.a[(i, 1)];
        model.w_inputs[0][(i, c)] = plant.b[(i, 0)];
    }
    let qbar = make_qbar(&q, basis.len())?;
    let mut params = ValueParams::zeros(basis.len(), 0.0);
    let x = DVector::from_column_slice(&[1.0, 0.0]);
    let h = cfg.clock.control_period();
    for step in 0..(30.0 / h) as usize {
        params = step_p(&params, &x, &model, &basis, &qbar, &cost, h, cfg.p_substeps, step)?;
    }
    let p11 = DMatrix::from_fn(2, 2, |i, j| params.p[([x1, x2][i], [x1, x2][j])]);
    let p_err = (&p11 - &care).norm() / care.norm();

    let mut u_err: f64 = 0.0;
    for probe in [[1.0, 0.0], [0.0, 1.0], [-0.7, 2.0]] {
        let xp = DVector::from_column_slice(&probe);
        let u = control(&xp, &params, &model, &basis, &cost, None)?[0];
        let lqr = -(&k * &xp)[0];
        u_err = u_err.max((u - lqr).abs() / lqr.abs());
    }

    println!("plant A = {}, B = {}", fmt_matrix(&plant.a), fmt_matrix(&plant.b));
    println!("Riccati P  = {}  (residual {:.2e})", fmt_matrix(&care), care_residual(&plant.a, &plant.b, &q, &r, &care).norm());
    println!("flow P11   = {}", fmt_matrix(&p11));
    println!("relative error: P {p_err:.3e}, control {u_err:.3e}  (tolerance {TOLERANCE:.0e})");

    let trace = run_episode(&cfg)?;
    let learned = &trace.model;
    let a_hat = DMatrix::from_fn(2, 2, |i, j| learned.w[(i, [x1, x2][j])]);
    let b_hat = DMatrix::from_fn(2, 1, |i, _| learned.w_inputs[0][(i, c)]);
    println!(
        "online episode (seed {}): {} after {:.2}s, identified A = {}, B = {}",
        cfg.seed,
        trace.termination,
        trace.duration(),
        fmt_matrix(&a_hat),
        fmt_matrix(&b_hat)
    );

    let pass = p_err <= TOLERANCE && u_err <= TOLERANCE;
    println!("{}", if pass { "oracle check passed" } else { "oracle check FAILED" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn index(basis: &BasisSet, name: &str) -> usize {
    basis.terms().iter().position(|t| t.to_string() == name).expect("linear basis term")
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}
