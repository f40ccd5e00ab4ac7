//! Simulated ground-truth plants and the fixed-step integrator.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 0.1,
            length: 0.5,
            friction: 0.1,
            gravity: 9.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

/// State `(θ, θ̇, q, q̇)` with `θ` measured from upright.
#[derive(Debug, Clone, PartialEq)]
pub struct CartpoleParams {
    pub pole_mass: f64,
    pub cart_mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            pole_mass: 0.1,
            cart_mass: 1.0,
            length: 0.8,
            gravity: 9.8,
        }
    }
}

/// Double inverted pendulum on a cart, state `(q, θ1, θ2, q̇, θ̇1, θ̇2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublePendulumParams {
    pub cart_mass: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub length1: f64,
    pub length2: f64,
    pub damping_cart: f64,
    pub damping1: f64,
    pub damping2: f64,
    pub gravity: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        DoublePendulumParams {
            cart_mass: 6.0,
            mass1: 3.0,
            mass2: 1.0,
            length1: 1.0,
            length2: 2.0,
            damping_cart: 10.0,
            damping1: 1.0,
            damping2: 0.5,
            gravity: 9.8,
        }
    }
}

/// `ẋ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Pendulum(PendulumParams),
    Lorenz(LorenzParams),
    Cartpole(CartpoleParams),
    DoublePendulum(DoublePendulumParams),
    Linear(LinearParams),
}

/// Axis-aligned box; membership is strict on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl DomainBox {
    pub fn symmetric(half_widths: &[f64]) -> Self {
        let upper = DVector::from_column_slice(half_widths);
        DomainBox {
            lower: -upper.clone(),
            upper,
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| lo < v && v < hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub model: PlantModel,
    pub domain: DomainBox,
    /// Episode timeout in seconds.
    pub t_max: f64,
}

const MAX_MASS_CONDITION: f64 = 1e12;

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Pendulum(_) => 2,
            PlantModel::Lorenz(_) => 3,
            PlantModel::Cartpole(_) => 4,
            PlantModel::DoublePendulum(_) => 6,
            PlantModel::Linear(p) => p.a.nrows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Linear(p) => p.b.ncols(),
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlantModel::Pendulum(_) => "pendulum",
            PlantModel::Lorenz(_) => "lorenz",
            PlantModel::Cartpole(_) => "cartpole",
            PlantModel::DoublePendulum(_) => "double_pendulum",
            PlantModel::Linear(_) => "linear",
        }
    }

    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("plant state", self.state_dim(), x.len())?;
        check_dim("plant input", self.input_dim(), u.len())?;
        let dx = match self {
            PlantModel::Pendulum(p) => {
                let gain = 1.0 / (p.mass * p.length * p.length);
                DVector::from_vec(vec![
                    -x[1],
                    -(p.gravity / p.length) * x[0].sin() - (p.friction / p.mass) * x[1] + gain * u[0],
                ])
            }
            PlantModel::Lorenz(p) => DVector::from_vec(vec![
                p.sigma * (x[1] - x[0]) + u[0],
                -x[1] + x[0] * (p.rho - x[2]),
                x[0] * x[1] - p.beta * x[2],
            ]),
            PlantModel::Cartpole(p) => {
                let (s, c) = x[0].sin_cos();
                let (m, big_m, l, g) = (p.pole_mass, p.cart_mass, p.length, p.gravity);
                let denom = big_m + m * s * s;
                DVector::from_vec(vec![
                    x[1],
                    (-u[0] * c - m * l * x[1] * x[1] * s * c + (big_m + m) * g * s) / (l * denom),
                    x[3],
                    (u[0] + m * s * (l * x[1] * x[1] - g * c)) / denom,
                ])
            }
            PlantModel::DoublePendulum(p) => {
                let acc = double_pendulum_accel(p, x, u[0])?;
                DVector::from_vec(vec![x[3], x[4], x[5], acc[0], acc[1], acc[2]])
            }
            PlantModel::Linear(p) => &p.a * x + &p.b * u,
        };
        Ok(dx)
    }
}

/// Mass matrix `M(θ1, θ2)` of the double pendulum on a cart.
pub fn double_pendulum_mass(p: &DoublePendulumParams, theta1: f64, theta2: f64) -> Matrix3<f64> {
    let m12 = p.mass1 + p.mass2;
    let c1 = theta1.cos();
    let c2 = theta2.cos();
    let c12 = (theta1 - theta2).cos();
    Matrix3::new(
        p.cart_mass + m12,
        p.length1 * m12 * c1,
        p.mass2 * p.length2 * c2,
        p.length1 * m12 * c1,
        p.length1 * p.length1 * m12,
        p.length1 * p.length2 * p.mass2 * c12,
        p.length2 * p.mass2 * c2,
        p.length1 * p.length2 * p.mass2 * c12,
        p.length2 * p.length2 * p.mass2,
    )
}

fn double_pendulum_accel(p: &DoublePendulumParams, x: &DVector<f64>, u: f64) -> Result<Vector3<f64>> {
    let (q_dot, th1, th2, w1, w2) = (x[3], x[1], x[2], x[4], x[5]);
    let m12 = p.mass1 + p.mass2;
    let s12 = (th1 - th2).sin();
    let forcing = Vector3::new(
        p.length1 * m12 * w1 * w1 * th1.sin() + p.mass2 * p.length2 * w2 * w2 * th2.sin()
            - p.damping_cart * q_dot
            + u,
        -p.length1 * p.length2 * p.mass2 * w2 * w2 * s12 + p.gravity * m12 * p.length1 * th1.sin()
            - p.damping1 * th1,
        p.length1 * p.length2 * p.mass2 * w1 * w1 * s12 + p.gravity * p.length2 * p.mass2 * th2.sin()
            - p.damping2 * th2,
    );
    let mass = double_pendulum_mass(p, th1, th2);
    let sv = mass.singular_values();
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > MAX_MASS_CONDITION {
        return Err(Error::SingularMassMatrix { condition });
    }
    mass.lu()
        .solve(&forcing)
        .ok_or(Error::SingularMassMatrix { condition })
}

impl PlantSpec {
    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.dynamics(x, u)
    }

    pub fn in_domain(&self, x: &DVector<f64>) -> bool {
        self.domain.contains(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        check_dim("domain lower bound", n, self.domain.lower.len())?;
        check_dim("domain upper bound", n, self.domain.upper.len())?;
        for (k, (lo, hi)) in self.domain.lower.iter().zip(self.domain.upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(
                    "plant.domain",
                    format!("component {} needs finite bounds with lower < upper", k + 1),
                ));
            }
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::validation("plant.t_max", "must be positive"));
        }
        let positive = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("plant.{field}"), "must be strictly positive"))
            }
        };
        match &self.model {
            PlantModel::Pendulum(p) => {
                positive("mass", p.mass)?;
                positive("length", p.length)?;
            }
            PlantModel::Lorenz(_) => {}
            PlantModel::Cartpole(p) => {
                positive("pole_mass", p.pole_mass)?;
                positive("cart_mass", p.cart_mass)?;
                positive("length", p.length)?;
            }
            PlantModel::DoublePendulum(p) => {
                positive("cart_mass", p.cart_mass)?;
                positive("mass1", p.mass1)?;
                positive("mass2", p.mass2)?;
                positive("length1", p.length1)?;
                positive("length2", p.length2)?;
            }
            PlantModel::Linear(p) => {
                if p.a.nrows() != p.a.ncols() || p.b.nrows() != p.a.nrows() || p.b.ncols() == 0 {
                    return Err(Error::validation("plant.a", "A must be n×n and B n×m"));
                }
            }
        }
        Ok(())
    }
}

/// Sample period and control hold. The control input changes only on
/// steps that are multiples of `control_divisor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub h: f64,
    pub control_divisor: usize,
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock {
            h: 5e-3,
            control_divisor: 2,
        }
    }
}

impl SimClock {
    pub fn is_control_step(&self, k: usize) -> bool {
        k.is_multiple_of(self.control_divisor)
    }

    /// Length of one control period in seconds.
    pub fn control_period(&self) -> f64 {
        self.h * self.control_divisor as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }
}

/// One classical Runge–Kutta step of `ẋ = f(x)`. `step` is only used to
/// label a divergence error.
pub fn rk4_step<F>(f: F, x: &DVector<f64>, h: f64, step: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * h)))?;
    let k3 = f(&(x + &k2 * (0.5 * h)))?;
    let k4 = f(&(x + &k3 * h))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Divergence { step })
    }
}

impl PlantSpec {
    /// Advances the plant by `h` with `u` held constant.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, h: f64, step: usize) -> Result<DVector<f64>> {
        rk4_step(|s| self.dynamics(s, u), x, h, step)
    }
}
