//! Online sparse identification of `ẋ = WΦ(x) + Σ_j W_jΦ(x)u_j`.
//!
//! Samples are stored as feature rows `Θ(x,u) = [Φᵀ | Φᵀu₁ | … | Φᵀu_m]`
//! paired with a finite-difference derivative. The regressor is
//! sequentially-thresholded least squares, one state row at a time.

use std::collections::VecDeque;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::error::{check_dim, Error, Result};

/// Builds `Θ(x,u)`.
pub fn features(basis: &BasisSet, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let phi = basis.eval(x)?;
    Ok(features_from_phi(&phi, u))
}

pub(crate) fn features_from_phi(phi: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let p = phi.len();
    let mut theta = DVector::zeros(p * (1 + u.len()));
    theta.rows_mut(0, p).copy_from(phi);
    for (j, uj) in u.iter().enumerate() {
        theta.rows_mut(p * (j + 1), p).copy_from(&(phi * *uj));
    }
    theta
}

/// Forward difference `(x_k − x_prev)/h`.
pub fn finite_diff(x_k: &DVector<f64>, x_prev: &DVector<f64>, h: f64) -> DVector<f64> {
    (x_k - x_prev) / h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub theta: DVector<f64>,
    pub xdot: DVector<f64>,
    pub pred_error: f64,
    pub step: usize,
}

impl Sample {
    pub fn new(theta: DVector<f64>, xdot: DVector<f64>, step: usize) -> Self {
        Sample {
            theta,
            xdot,
            pred_error: 0.0,
            step,
        }
    }
}

/// Identified model coefficients: `W` plus one `W_j` per input, each `n × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    pub w: DMatrix<f64>,
    pub w_inputs: Vec<DMatrix<f64>>,
}

impl ModelCoefficients {
    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        ModelCoefficients {
            w: DMatrix::zeros(n, p),
            w_inputs: vec![DMatrix::zeros(n, p); m],
        }
    }

    /// Splits an `n × p(1+m)` stacked matrix `[W | W_1 | … | W_m]`.
    pub fn from_stacked(stacked: &DMatrix<f64>, p: usize) -> Result<Self> {
        if p == 0 || !stacked.ncols().is_multiple_of(p) || stacked.ncols() < p {
            return Err(Error::DimensionMismatch {
                context: "stacked model columns",
                expected: p,
                got: stacked.ncols(),
            });
        }
        let m = stacked.ncols() / p - 1;
        Ok(ModelCoefficients {
            w: stacked.columns(0, p).into_owned(),
            w_inputs: (0..m).map(|j| stacked.columns(p * (j + 1), p).into_owned()).collect(),
        })
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, p) = self.w.shape();
        let mut out = DMatrix::zeros(n, p * (1 + self.w_inputs.len()));
        out.columns_mut(0, p).copy_from(&self.w);
        for (j, wj) in self.w_inputs.iter().enumerate() {
            out.columns_mut(p * (j + 1), p).copy_from(wj);
        }
        out
    }

    pub fn state_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_inputs.len()
    }

    pub fn basis_len(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.w_inputs.iter().flat_map(|w| w.iter())).all(|v| v.is_finite())
    }

    /// Number of nonzero coefficients in state row `i` across all blocks.
    pub fn row_nonzeros(&self, i: usize) -> usize {
        self.w.row(i).iter().filter(|v| **v != 0.0).count()
            + self
                .w_inputs
                .iter()
                .map(|w| w.row(i).iter().filter(|v| **v != 0.0).count())
                .sum::<usize>()
    }

    fn check_shapes(&self, basis: &BasisSet) -> Result<()> {
        check_dim("model rows", basis.state_dim(), self.w.nrows())?;
        check_dim("model columns", basis.len(), self.w.ncols())?;
        for wj in &self.w_inputs {
            check_dim("input model rows", basis.state_dim(), wj.nrows())?;
            check_dim("input model columns", basis.len(), wj.ncols())?;
        }
        Ok(())
    }

    pub fn predict(&self, basis: &BasisSet, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_shapes(basis)?;
        check_dim("model input", self.w_inputs.len(), u.len())?;
        let phi = basis.eval(x)?;
        let mut out = &self.w * &phi;
        for (wj, uj) in self.w_inputs.iter().zip(u.iter()) {
            out += (wj * &phi) * *uj;
        }
        Ok(out)
    }

    /// `‖ẋ − [W | W_1 | …] Θ‖₂` for a stored sample.
    pub fn prediction_error(&self, sample: &Sample) -> Result<f64> {
        let p = self.basis_len();
        check_dim("sample features", p * (1 + self.input_dim()), sample.theta.len())?;
        check_dim("sample derivative", self.state_dim(), sample.xdot.len())?;
        let mut pred = &self.w * sample.theta.rows(0, p);
        for (j, wj) in self.w_inputs.iter().enumerate() {
            pred += wj * sample.theta.rows(p * (j + 1), p);
        }
        Ok((&sample.xdot - pred).norm())
    }
}

/// Bounded FIFO of samples. When full, admission evicts the oldest sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDatabase {
    capacity: usize,
    samples: VecDeque<Sample>,
}

impl SampleDatabase {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "database capacity must be positive");
        SampleDatabase {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Unconditional insert with FIFO eviction.
    pub fn push(&mut self, sample: Sample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    /// Admits `sample` iff the current model mispredicts it by more than
    /// `e_min`. The stored sample records that error.
    pub fn maybe_insert(&mut self, mut sample: Sample, model: &ModelCoefficients, e_min: f64) -> Result<bool> {
        let err = model.prediction_error(&sample)?;
        if err > e_min {
            sample.pred_error = err;
            self.push(sample);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Writes `step,theta0..,xdot0..` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        if let Some(first) = self.samples.front() {
            let mut header = vec!["step".to_string()];
            header.extend((0..first.theta.len()).map(|k| format!("theta{k}")));
            header.extend((0..first.xdot.len()).map(|k| format!("xdot{k}")));
            out.write_record(&header)?;
        }
        for s in &self.samples {
            let mut row = vec![s.step.to_string()];
            row.extend(s.theta.iter().map(|v| v.to_string()));
            row.extend(s.xdot.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`write_csv`](Self::write_csv). Rows beyond
    /// `capacity` evict the oldest, as on-line admission would.
    pub fn read_csv<R: Read>(reader: R, capacity: usize) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let header = input.headers()?.clone();
        let n_theta = header.iter().filter(|h| h.starts_with("theta")).count();
        let n_xdot = header.iter().filter(|h| h.starts_with("xdot")).count();
        if header.get(0) != Some("step") || 1 + n_theta + n_xdot != header.len() {
            return Err(Error::validation("database.preload", "expected columns step,theta*,xdot*"));
        }
        let mut db = SampleDatabase::new(capacity);
        for record in input.records() {
            let record = record?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::validation("database.preload", format!("bad number `{s}`")))
            };
            let step = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::validation("database.preload", "bad step index"))?;
            let vals: Vec<f64> = record.iter().skip(1).map(parse).collect::<Result<_>>()?;
            db.push(Sample::new(
                DVector::from_column_slice(&vals[..n_theta]),
                DVector::from_column_slice(&vals[n_theta..]),
                step,
            ));
        }
        Ok(db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    /// Coefficients with magnitude below this are zeroed.
    pub threshold: f64,
    pub max_sweeps: usize,
    /// Tikhonov weight on the coefficients in their original units.
    /// Normalization only conditions the solve, so barely excited columns
    /// still pay the full penalty and stay near zero.
    pub ridge: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            threshold: 0.05,
            max_sweeps: 10,
            ridge: 1e-8,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::validation("regression.threshold", "must be finite and >= 0"));
        }
        if self.max_sweeps < 1 {
            return Err(Error::validation("regression.max_sweeps", "must be >= 1"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::validation("regression.ridge", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Normalized normal equations shared by every state row.
struct Design {
    /// Column RMS; zero marks a column with no signal.
    scale: Vec<f64>,
    /// `XsᵀXs / N` with unit-RMS columns.
    gram: DMatrix<f64>,
    /// `Xsᵀ Y / N`, one column per state.
    rhs: DMatrix<f64>,
}

impl Design {
    fn build(db: &SampleDatabase) -> Design {
        let first = db.samples.front().expect("non-empty database");
        let (k, n) = (first.theta.len(), first.xdot.len());
        let rows = db.len() as f64;
        let mut gram = DMatrix::zeros(k, k);
        let mut rhs = DMatrix::zeros(k, n);
        for s in &db.samples {
            gram.ger(1.0, &s.theta, &s.theta, 1.0);
            rhs.ger(1.0, &s.theta, &s.xdot, 1.0);
        }
        gram /= rows;
        rhs /= rows;
        let scale: Vec<f64> = (0..k)
            .map(|c| {
                let ms = gram[(c, c)];
                if ms > f64::MIN_POSITIVE * 1e10 { ms.sqrt() } else { 0.0 }
            })
            .collect();
        for a in 0..k {
            for b in 0..k {
                let s = scale[a] * scale[b];
                gram[(a, b)] = if s > 0.0 { gram[(a, b)] / s } else { 0.0 };
            }
            for i in 0..n {
                rhs[(a, i)] = if scale[a] > 0.0 { rhs[(a, i)] / scale[a] } else { 0.0 };
            }
        }
        Design { scale, gram, rhs }
    }

    /// Ridge least squares restricted to `active`; returns unscaled
    /// coefficients over all columns (inactive ones zero).
    fn solve(&self, active: &[usize], state: usize, ridge: f64) -> DVector<f64> {
        let k = self.scale.len();
        let mut full = DVector::zeros(k);
        if active.is_empty() {
            return full;
        }
        let a = active.len();
        let mut g = DMatrix::from_fn(a, a, |r, c| self.gram[(active[r], active[c])]);
        for (d, &c) in active.iter().enumerate() {
            let s = self.scale[c];
            g[(d, d)] += if s > 0.0 { ridge / (s * s) } else { 0.0 };
        }
        let b = DVector::from_fn(a, |r, _| self.rhs[(active[r], state)]);
        let sol = match g.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => g
                .svd(true, true)
                .solve(&b, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(a)),
        };
        for (r, &c) in active.iter().enumerate() {
            full[c] = sol[r] / self.scale[c];
        }
        full
    }
}

/// Sequentially-thresholded least squares over the database, per state row.
pub fn fit(db: &SampleDatabase, basis: &BasisSet, cfg: &RegressionConfig) -> Result<ModelCoefficients> {
    let first = db.samples.front().ok_or(Error::EmptyDatabase)?;
    let p = basis.len();
    let k = first.theta.len();
    let n = first.xdot.len();
    check_dim("model rows", basis.state_dim(), n)?;
    if k % p != 0 || k < p {
        return Err(Error::DimensionMismatch {
            context: "feature row length",
            expected: p,
            got: k,
        });
    }

    let design = Design::build(db);
    let mut stacked = DMatrix::zeros(n, k);
    for state in 0..n {
        let row = stlsq_row(&design, state, cfg);
        stacked.row_mut(state).copy_from(&row.transpose());
    }
    ModelCoefficients::from_stacked(&stacked, p)
}

fn stlsq_row(design: &Design, state: usize, cfg: &RegressionConfig) -> DVector<f64> {
    let usable = |c: &usize| design.scale[*c] > 0.0;
    let mut active: Vec<usize> = (0..design.scale.len()).filter(usable).collect();
    let mut coef = design.solve(&active, state, cfg.ridge);
    for _ in 1..cfg.max_sweeps {
        let next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&c| coef[c].abs() >= cfg.threshold)
            .collect();
        if next == active {
            break;
        }
        active = next;
        coef = design.solve(&active, state, cfg.ridge);
    }
    coef.apply(|w| {
        if w.abs() < cfg.threshold {
            *w = 0.0;
        }
    });
    coef
}
