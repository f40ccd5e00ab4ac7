//! The learning-control loop: sample, admit, refit, propagate `P`, act.
//!
//! The plant is sampled every `h`; the input is recomputed every
//! `control_divisor` samples and held in between. A sample stored at step `k`
//! pairs `Θ(x̃_{k−1}, u_{k−1})` with `(x_k − x_{k−1})/h`, where `x̃` is the
//! state shifted by the reference.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::plants::{PlantSpec, SimClock};
use crate::sysid::{self, ModelCoefficients, RegressionConfig, Sample, SampleDatabase};
use crate::trace::{EpisodeTrace, PSnapshot, StepRecord, Termination};
use crate::valuegrad::{self, make_qbar, CostSpec, QBar, ValueParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    /// Forward difference of consecutive samples.
    FiniteDifference,
    /// The plant's true derivative at the start of the interval.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseConfig {
    pub capacity: usize,
    /// Admission threshold on the prediction error (state units / s).
    pub e_min: f64,
    /// No fit runs while the database holds fewer samples than this;
    /// zero means one sample per feature column.
    pub min_fit_samples: usize,
    pub preload: Option<PathBuf>,
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        DatabaseConfig {
            capacity: 1000,
            e_min: 1e-3,
            min_fit_samples: 0,
            preload: None,
        }
    }
}

/// Success when `|x_i − x_ref,i| < tolerance_i` for every component,
/// continuously for `hold` seconds. Components flagged `periodic` are angles
/// and compare modulo 2π.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCriterion {
    pub tolerance: DVector<f64>,
    pub hold: f64,
    pub periodic: Vec<bool>,
}

impl SuccessCriterion {
    /// Per-component error in the sense of the criterion.
    pub fn error(&self, shifted: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(shifted.len(), |i, _| {
            let e = shifted[i];
            if self.periodic.get(i).copied().unwrap_or(false) {
                wrap_angle(e).abs()
            } else {
                e.abs()
            }
        })
    }

    pub fn is_met(&self, shifted: &DVector<f64>) -> bool {
        self.error(shifted).iter().zip(self.tolerance.iter()).all(|(e, tol)| e < tol)
    }
}

/// Maps an angle into `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Initial state `center + U(−spread, spread)` per component.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub center: DVector<f64>,
    pub spread: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolConfig {
    pub plant: PlantSpec,
    pub basis: String,
    pub cost: CostSpec,
    pub clock: SimClock,
    pub regression: RegressionConfig,
    pub database: DatabaseConfig,
    pub success: SuccessCriterion,
    pub init: InitialState,
    pub seed: u64,
    /// Half-width of the uniform dither added to every control update.
    pub dither: f64,
    /// Optional symmetric input clamp.
    pub u_limit: Option<f64>,
    /// RK4 substeps per control period for the `P` flow.
    pub p_substeps: usize,
    pub derivative: DerivativeSource,
    /// Seconds between `P` snapshots in the trace.
    pub snapshot_period: f64,
}

impl SolConfig {
    pub fn basis_set(&self) -> Result<BasisSet> {
        BasisSet::parse(&self.basis, self.plant.state_dim())
    }

    // `!(v >= 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.state_dim();
        let m = self.plant.input_dim();
        self.plant.validate()?;
        let basis = self.basis_set()?;
        self.cost.validate(n, m)?;
        make_qbar(&self.cost.q, basis.len())?;
        self.regression.validate()?;
        if !(self.clock.h.is_finite() && self.clock.h > 0.0) {
            return Err(Error::validation("clock.h", "must be positive"));
        }
        if self.clock.control_divisor == 0 {
            return Err(Error::validation("clock.control_divisor", "must be >= 1"));
        }
        if self.database.capacity == 0 {
            return Err(Error::validation("database.capacity", "must be >= 1"));
        }
        if !(self.database.e_min >= 0.0) {
            return Err(Error::validation("database.e_min", "must be >= 0"));
        }
        if self.success.tolerance.len() != n {
            return Err(Error::validation("success.tolerance", format!("expected {n} entries")));
        }
        if self.success.tolerance.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::validation("success.tolerance", "entries must be >= 0"));
        }
        if !self.success.periodic.is_empty() && self.success.periodic.len() != n {
            return Err(Error::validation("success.periodic", format!("expected {n} entries")));
        }
        if !(self.success.hold >= 0.0) {
            return Err(Error::validation("success.hold", "must be >= 0"));
        }
        if self.init.center.len() != n || self.init.spread.len() != n {
            return Err(Error::validation("init.center", format!("expected {n} entries")));
        }
        if self.init.spread.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::validation("init.spread", "entries must be >= 0"));
        }
        if !(self.dither >= 0.0 && self.dither.is_finite()) {
            return Err(Error::validation("dither", "must be >= 0"));
        }
        if let Some(l) = self.u_limit {
            if !(l > 0.0) {
                return Err(Error::validation("control.limit", "must be positive"));
            }
        }
        if self.p_substeps == 0 {
            return Err(Error::validation("solver.p_substeps", "must be >= 1"));
        }
        if !(self.snapshot_period > 0.0) {
            return Err(Error::validation("trace.snapshot_period", "must be positive"));
        }
        Ok(())
    }
}

/// `x − x_ref`.
pub fn shift_state(x: &DVector<f64>, x_ref: &DVector<f64>) -> DVector<f64> {
    x - x_ref
}

/// `x̃ + x_ref`.
pub fn unshift_state(x: &DVector<f64>, x_ref: &DVector<f64>) -> DVector<f64> {
    x + x_ref
}

struct Previous {
    shifted: DVector<f64>,
    raw: DVector<f64>,
    u: DVector<f64>,
    running_cost: f64,
}

/// Mutable state of one episode.
pub struct SolLoop {
    cfg: SolConfig,
    basis: BasisSet,
    qbar: QBar,
    rng: ChaCha8Rng,
    k: usize,
    k_max: usize,
    x: DVector<f64>,
    u: DVector<f64>,
    prev: Option<Previous>,
    model: ModelCoefficients,
    params: ValueParams,
    db: SampleDatabase,
    pending_fit: bool,
    min_fit_samples: usize,
    inside_since: Option<f64>,
    next_snapshot: f64,
    records: Vec<StepRecord>,
    snapshots: Vec<PSnapshot>,
    termination: Option<Termination>,
    diagnostic: Option<String>,
}

impl SolLoop {
    pub fn new(cfg: SolConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = cfg.basis_set()?;
        let (n, m, p) = (basis.state_dim(), cfg.plant.input_dim(), basis.len());
        let qbar = make_qbar(&cfg.cost.q, p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x0 = DVector::from_fn(n, |i, _| {
            let s = cfg.init.spread[i];
            cfg.init.center[i] + if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 }
        });
        let db = match &cfg.database.preload {
            Some(path) => {
                let db = SampleDatabase::read_csv(std::fs::File::open(path)?, cfg.database.capacity)?;
                if let Some(s) = db.iter().next() {
                    if s.theta.len() != p * (1 + m) || s.xdot.len() != n {
                        return Err(Error::validation("database.preload", "sample shape does not match basis"));
                    }
                }
                db
            }
            None => SampleDatabase::new(cfg.database.capacity),
        };
        let pending_fit = !db.is_empty();
        let k_max = (cfg.plant.t_max / cfg.clock.h).round() as usize;
        Ok(SolLoop {
            basis,
            qbar,
            rng,
            k: 0,
            k_max,
            x: x0,
            u: DVector::zeros(m),
            prev: None,
            model: ModelCoefficients::zeros(n, m, p),
            params: ValueParams::zeros(p, cfg.cost.gamma),
            db,
            pending_fit,
            min_fit_samples: match cfg.database.min_fit_samples {
                0 => p * (1 + m),
                k => k,
            },
            inside_since: None,
            next_snapshot: 0.0,
            records: Vec::new(),
            snapshots: Vec::new(),
            termination: None,
            diagnostic: None,
            cfg,
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> &ModelCoefficients {
        &self.model
    }

    pub fn value_params(&self) -> &ValueParams {
        &self.params
    }

    pub fn database(&self) -> &SampleDatabase {
        &self.db
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// Runs one control period: the control instant plus the held samples
    /// that follow it. Returns the termination reason once the episode ends.
    pub fn sol_step(&mut self) -> Result<Option<Termination>> {
        for _ in 0..self.cfg.clock.control_divisor {
            if let Some(reason) = self.tick()? {
                return Ok(Some(reason));
            }
        }
        Ok(None)
    }

    fn end(&mut self, reason: Termination, diagnostic: Option<String>) -> Option<Termination> {
        self.termination = Some(reason);
        self.diagnostic = diagnostic;
        Some(reason)
    }

    /// Processes the sample at the current step `k` and advances the plant
    /// by one `h` unless the episode ends here.
    fn tick(&mut self) -> Result<Option<Termination>> {
        if let Some(reason) = self.termination {
            return Ok(Some(reason));
        }
        let h = self.cfg.clock.h;
        let t = self.cfg.clock.time(self.k);
        let shifted = shift_state(&self.x, &self.cfg.cost.x_ref);

        let mut pred_err = f64::NAN;
        if let Some(prev) = &self.prev {
            let theta = sysid::features(&self.basis, &prev.shifted, &prev.u)?;
            let xdot = match self.cfg.derivative {
                DerivativeSource::FiniteDifference => sysid::finite_diff(&self.x, &prev.raw, h),
                DerivativeSource::Exact => self.cfg.plant.dynamics(&prev.raw, &prev.u)?,
            };
            let sample = Sample::new(theta, xdot, self.k);
            pred_err = self.model.prediction_error(&sample)?;
            if self.db.maybe_insert(sample, &self.model, self.cfg.database.e_min)? {
                self.pending_fit = true;
            }
        }

        if self.cfg.clock.is_control_step(self.k) {
            if self.pending_fit && self.db.len() >= self.min_fit_samples {
                let model = sysid::fit(&self.db, &self.basis, &self.cfg.regression)?;
                if !model.is_finite() {
                    self.record(t, &shifted, pred_err)?;
                    return Ok(self.end(Termination::Divergence, Some(format!("non-finite model at step {}", self.k))));
                }
                self.model = model;
                self.pending_fit = false;
            }
            match valuegrad::step_p(
                &self.params,
                &shifted,
                &self.model,
                &self.basis,
                &self.qbar,
                &self.cfg.cost,
                self.cfg.clock.control_period(),
                self.cfg.p_substeps,
                self.k,
            ) {
                Ok(next) => self.params = next,
                Err(Error::Divergence { step }) => {
                    self.record(t, &shifted, pred_err)?;
                    return Ok(self.end(Termination::Divergence, Some(format!("value parameters diverged at step {step}"))));
                }
                Err(e) => return Err(e),
            }
            let mut u = valuegrad::control(&shifted, &self.params, &self.model, &self.basis, &self.cfg.cost, None)?;
            if self.cfg.dither > 0.0 {
                let a = self.cfg.dither;
                u.apply(|v| *v += self.rng.random_range(-a..=a));
            }
            if let Some(l) = self.cfg.u_limit {
                u.apply(|v| *v = v.clamp(-l, l));
            }
            self.u = u;

            if t + 1e-9 >= self.next_snapshot {
                self.snapshots.push(PSnapshot {
                    t,
                    upper: self.params.upper_triangle(),
                });
                self.next_snapshot += self.cfg.snapshot_period;
            }
        }

        self.record(t, &shifted, pred_err)?;

        if !self.cfg.plant.in_domain(&self.x) {
            return Ok(self.end(Termination::DomainExit, None));
        }
        if self.cfg.success.is_met(&shifted) {
            let since = *self.inside_since.get_or_insert(t);
            if t - since >= self.cfg.success.hold - 1e-9 {
                return Ok(self.end(Termination::Success, None));
            }
        } else {
            self.inside_since = None;
        }
        if self.k >= self.k_max {
            return Ok(self.end(Termination::Timeout, None));
        }

        let next = match self.cfg.plant.step(&self.x, &self.u, h, self.k) {
            Ok(next) => next,
            Err(Error::Divergence { step }) => {
                return Ok(self.end(Termination::Divergence, Some(format!("plant integration diverged at step {step}"))));
            }
            Err(Error::SingularMassMatrix { condition }) => {
                return Ok(self.end(
                    Termination::Divergence,
                    Some(format!("singular mass matrix (condition {condition:e}) at step {}", self.k)),
                ));
            }
            Err(e) => return Err(e),
        };
        self.prev = Some(Previous {
            running_cost: valuegrad::running_cost(&shifted, &self.u, &self.cfg.cost, t),
            shifted,
            raw: std::mem::replace(&mut self.x, next),
            u: self.u.clone(),
        });
        self.k += 1;
        Ok(None)
    }

    /// Appends the record for time `t` with the current `u` and `P`.
    fn record(&mut self, t: f64, shifted: &DVector<f64>, pred_err: f64) -> Result<()> {
        let value = valuegrad::value(shifted, &self.params, &self.basis)?;
        let cost = match (self.records.last(), &self.prev) {
            (Some(last), Some(prev)) => {
                let end = valuegrad::running_cost(shifted, &prev.u, &self.cfg.cost, t);
                last.cost + 0.5 * self.cfg.clock.h * (prev.running_cost + end)
            }
            _ => 0.0,
        };
        self.records.push(StepRecord {
            t,
            x: self.x.iter().copied().collect(),
            u: self.u.iter().copied().collect(),
            value,
            pred_err,
            cost,
        });
        Ok(())
    }

    pub fn into_trace(self) -> EpisodeTrace {
        EpisodeTrace {
            records: self.records,
            p_snapshots: self.snapshots,
            model: self.model,
            final_p: self.params,
            database_len: self.db.len(),
            termination: self.termination.unwrap_or(Termination::Timeout),
            diagnostic: self.diagnostic,
            x_ref: self.cfg.cost.x_ref.iter().copied().collect(),
            basis: self.basis,
        }
    }
}

/// Runs a full episode. Configuration errors are returned before any step;
/// divergence and domain exit end the episode with the matching reason.
pub fn run_episode(cfg: &SolConfig) -> Result<EpisodeTrace> {
    let mut lp = SolLoop::new(cfg.clone())?;
    while lp.sol_step()?.is_none() {}
    Ok(lp.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, Benchmark};
    use crate::sysid::features;

    fn quiet_linear() -> SolConfig {
        let mut cfg = preset(Benchmark::LinearOracle);
        cfg.dither = 0.0;
        cfg
    }

    #[test]
    fn first_control_is_zero_and_database_fills_one_at_a_time() {
        let mut lp = SolLoop::new(quiet_linear()).unwrap();
        assert!(lp.tick().unwrap().is_none());
        assert_eq!(lp.records()[0].u, vec![0.0]);
        assert_eq!(lp.database().len(), 0);
        assert!(lp.tick().unwrap().is_none());
        assert!(lp.database().len() <= 1);

        let mut cfg = quiet_linear();
        cfg.database.e_min = 1e6;
        let mut lp = SolLoop::new(cfg).unwrap();
        lp.sol_step().unwrap();
        assert_eq!(lp.database().len(), 0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = preset(Benchmark::Pendulum);
        let a = run_episode(&cfg).unwrap();
        let b = run_episode(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (p, q) in a.records.iter().zip(&b.records) {
            let bits = |r: &StepRecord| {
                let mut v = vec![r.t, r.value, r.pred_err, r.cost];
                v.extend(&r.x);
                v.extend(&r.u);
                v.into_iter().map(f64::to_bits).collect::<Vec<_>>()
            };
            assert_eq!(bits(p), bits(q));
        }
        assert_eq!(a.p_snapshots, b.p_snapshots);
        assert_eq!(a.model, b.model);
        assert_eq!(a.termination, b.termination);
    }

    #[test]
    fn unattainable_tolerance_times_out_at_t_max() {
        let mut cfg = quiet_linear();
        cfg.success.tolerance = DVector::zeros(2);
        cfg.plant.t_max = 2.0;
        let trace = run_episode(&cfg).unwrap();
        assert_eq!(trace.termination, Termination::Timeout);
        assert!((trace.duration() - 2.0).abs() < 1e-12);
        assert_eq!(trace.records.len(), 401);
    }

    #[test]
    fn divergence_on_the_first_step_still_leaves_a_record() {
        let mut cfg = quiet_linear();
        cfg.cost.q = nalgebra::DMatrix::identity(2, 2) * 1e12;
        let trace = run_episode(&cfg).unwrap();
        assert_eq!(trace.termination, Termination::Divergence);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.duration(), 0.0);
        assert!(trace.diagnostic.unwrap().contains("step 0"));
    }

    #[test]
    fn input_is_held_between_control_instants() {
        let trace = run_episode(&preset(Benchmark::Pendulum)).unwrap();
        for k in (1..trace.records.len()).step_by(2) {
            assert_eq!(trace.records[k].u, trace.records[k - 1].u, "k = {k}");
        }
        let changes = (2..trace.records.len())
            .step_by(2)
            .filter(|&k| trace.records[k].u != trace.records[k - 1].u)
            .count();
        assert!(changes > trace.records.len() / 4);
    }

    #[test]
    fn trace_time_and_cost_are_monotone() {
        let trace = run_episode(&preset(Benchmark::Pendulum)).unwrap();
        for w in trace.records.windows(2) {
            assert!((w[1].t - w[0].t - 5e-3).abs() < 1e-12);
            assert!(w[1].cost >= w[0].cost);
        }
        assert!(trace.records[0].pred_err.is_nan());
    }

    #[test]
    fn samples_pair_the_previous_input_with_the_forward_difference() {
        // Linear plant with strong dither: the correct pairing recovers the
        // input gain to O(h); pairing with the next input visibly does not.
        let mut cfg = preset(Benchmark::LinearOracle);
        cfg.dither = 1.0;
        cfg.database.e_min = 0.0;
        cfg.database.capacity = 100_000;
        cfg.success.tolerance = DVector::zeros(2);
        cfg.plant.t_max = 4.0;
        let trace = run_episode(&cfg).unwrap();
        let basis = cfg.basis_set().unwrap();
        let c = basis.constant_index().unwrap();
        let gain = trace.model.w_inputs[0][(1, c)];
        assert!((gain - 1.0).abs() < 0.01, "aligned gain {gain}");

        let h = cfg.clock.h;
        let mut shifted = SampleDatabase::new(100_000);
        for k in 1..trace.records.len() {
            let (prev, cur) = (&trace.records[k - 1], &trace.records[k]);
            let x_prev = DVector::from_vec(prev.x.clone());
            let theta = features(&basis, &x_prev, &DVector::from_vec(cur.u.clone())).unwrap();
            let xdot = sysid::finite_diff(&DVector::from_vec(cur.x.clone()), &x_prev, h);
            shifted.push(Sample::new(theta, xdot, k));
        }
        let wrong = sysid::fit(&shifted, &basis, &cfg.regression).unwrap();
        assert!((wrong.w_inputs[0][(1, c)] - 1.0).abs() > 0.05);
    }

    #[test]
    fn shift_round_trips_and_centres_the_reference() {
        let s = 72f64.sqrt();
        let x_ref = DVector::from_vec(vec![-s, -s, 27.0]);
        assert_eq!(shift_state(&x_ref, &x_ref), DVector::zeros(3));
        let dyadic_ref = DVector::from_vec(vec![-8.5, -8.5, 27.0]);
        let x = DVector::from_vec(vec![0.375, -7.0, 1e3]);
        assert_eq!(unshift_state(&shift_state(&x, &dyadic_ref), &dyadic_ref), x);
        let back = unshift_state(&shift_state(&x, &x_ref), &x_ref);
        assert!((back - &x).abs().max() <= 1e3 * f64::EPSILON);
        assert_eq!(shift_state(&x, &DVector::zeros(3)), x);
    }

    #[test]
    fn periodic_components_compare_modulo_two_pi() {
        let crit = SuccessCriterion {
            tolerance: DVector::from_vec(vec![0.1, 0.1]),
            hold: 1.0,
            periodic: vec![true, false],
        };
        assert!(crit.is_met(&DVector::from_vec(vec![2.0 * PI + 0.05, 0.0])));
        assert!(crit.is_met(&DVector::from_vec(vec![-2.0 * PI, 0.05])));
        assert!(!crit.is_met(&DVector::from_vec(vec![PI, 0.0])));
        assert!(!crit.is_met(&DVector::from_vec(vec![0.0, 2.0 * PI])));
        assert!((wrap_angle(3.0 * PI) + PI).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected_before_stepping() {
        let mut cfg = quiet_linear();
        cfg.success.periodic = vec![true];
        match SolLoop::new(cfg) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "success.periodic"),
            _ => panic!("expected a validation error"),
        }
        let mut cfg = quiet_linear();
        cfg.p_substeps = 0;
        assert!(SolLoop::new(cfg).is_err());
    }
}
