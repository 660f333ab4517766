//! Iterated constrained ascent with trajectory logging.
//!
//! Each step computes the unit-effort optimal direction at the current point.
//! When a budget `C(θ) ≤ κ` is active and that direction would increase the
//! cost, it is replaced by the maximizer of `⟨g, d⟩` over unit-effort
//! `d ∈ Im(H)` with `⟨∇C, d⟩ ≤ 0`. In the `⟨·,·⟩_H` geometry that maximizer is
//!
//! ```text
//! d ∝ H†g − (⟨∇C, H†g⟩ / ⟨∇C, H†∇C⟩) · H†∇C
//! ```
//!
//! which reduces to removing the normal component of `g` when `H = I`.

use serde::{Deserialize, Serialize};

use crate::direction::{from_unnormalized, optimal_direction, DirectionKind, DirectionResult};
use crate::error::{check_dim, Error, Result};
use crate::operator::{ConstraintOperator, OperatorField, EFFORT_FLOOR};
use crate::spectral::SymmetricMatrix;
use crate::vector::{add, dot, norm, scale, sub};

/// Relative width of the band below `κ` in which the budget counts as active.
pub const ACTIVATION_TOL: f64 = 1e-8;

/// Absolute slack allowed on `C ≤ κ` for logged iterates.
pub const BUDGET_SLACK: f64 = 1e-8;

pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// `J(θ) = −½ θᵀAθ + bᵀθ`, maximized at `A⁻¹b` when `A` is positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub a: SymmetricMatrix,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: SymmetricMatrix, b: Vec<f64>) -> Result<Self> {
        check_dim(a.dim(), b.len())?;
        Ok(Quadratic { a, b })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let at = self.a.mul_vec(theta).expect("dimension checked by caller");
        -0.5 * dot(theta, &at) + dot(&self.b, theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let at = self.a.mul_vec(theta).expect("dimension checked by caller");
        sub(&self.b, &at)
    }
}

/// Negated Rosenbrock function `−((a − x)² + b (y − x²)²)` on the plane.
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock {
    pub a: f64,
    pub b: f64,
}

impl Default for Rosenbrock {
    fn default() -> Self {
        Rosenbrock { a: 1.0, b: 100.0 }
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let (x, y) = (theta[0], theta[1]);
        -((self.a - x).powi(2) + self.b * (y - x * x).powi(2))
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (x, y) = (theta[0], theta[1]);
        let r = y - x * x;
        vec![2.0 * (self.a - x) + 4.0 * self.b * x * r, -2.0 * self.b * r]
    }
}

/// A nonnegative, differentiable cost `C`.
pub trait CostFunction {
    fn cost(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// `C(θ) = Σ w_i (θ_i − center_i)²`; unit weights give the squared distance.
#[derive(Debug, Clone)]
pub struct EllipsoidCost {
    pub weights: Vec<f64>,
    pub center: Vec<f64>,
}

impl EllipsoidCost {
    pub fn sphere(dim: usize) -> Self {
        EllipsoidCost {
            weights: vec![1.0; dim],
            center: vec![0.0; dim],
        }
    }
}

impl CostFunction for EllipsoidCost {
    fn cost(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((t, c), w)| w * (t - c) * (t - c))
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((t, c), w)| 2.0 * w * (t - c))
            .collect()
    }
}

/// `C(θ) ≤ κ`
pub struct BudgetConstraint {
    cost: Box<dyn CostFunction + Send + Sync>,
    kappa: f64,
}

impl std::fmt::Debug for BudgetConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BudgetConstraint").field("kappa", &self.kappa).finish_non_exhaustive()
    }
}

impl BudgetConstraint {
    pub fn new<C>(cost: C, kappa: f64) -> Result<Self>
    where
        C: CostFunction + Send + Sync + 'static,
    {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!("budget must be positive, got {kappa}")));
        }
        Ok(BudgetConstraint {
            cost: Box::new(cost),
            kappa,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn cost(&self, theta: &[f64]) -> f64 {
        self.cost.cost(theta)
    }

    pub fn cost_gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.cost.gradient(theta)
    }

    fn activation_band(&self) -> f64 {
        ACTIVATION_TOL * self.kappa.max(1.0)
    }

    /// True when `C(θ)` lies within the activation band below `κ`.
    pub fn is_active(&self, theta: &[f64]) -> bool {
        self.kappa - self.cost(theta) < self.activation_band()
    }
}

/// Optimal direction at `theta`, restricted to the budget's first-order
/// feasible halfspace when the budget is active.
pub fn feasible_direction(
    h: &ConstraintOperator,
    g: &[f64],
    budget: &BudgetConstraint,
    theta: &[f64],
) -> Result<DirectionResult> {
    check_dim(h.dim(), theta.len())?;
    let cost = budget.cost(theta);
    if cost > budget.kappa {
        return Err(Error::InfeasibleStart {
            cost,
            kappa: budget.kappa,
        });
    }
    let base = optimal_direction(h, g)?;
    if !base.is_optimal() || !budget.is_active(theta) {
        return Ok(base);
    }
    let normal = budget.cost_gradient(theta);
    let spectrum = h.spectrum();
    let w = spectrum.apply_pseudoinverse(g)?;
    let outward = dot(&normal, &w);
    if outward <= 0.0 {
        return Ok(base);
    }
    let v = spectrum.apply_pseudoinverse(&normal)?;
    let curvature = dot(&normal, &v);
    if !(curvature > 0.0) {
        return Ok(base);
    }
    let projected = sub(&w, &scale(outward / curvature, &v));
    let effort = h.effort(&projected)?.value();
    if effort < EFFORT_FLOOR {
        return Ok(DirectionResult::degenerate());
    }
    Ok(from_unnormalized(g, &projected, effort.sqrt()))
}

/// How the step length is derived from `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `θ + η · gain · d`, i.e. `θ + η H†g` on unconstrained steps.
    #[default]
    GainScaled,
    /// `θ + η · d` with `d` of unit effort.
    UnitEffort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub steps: usize,
    pub eta: f64,
    pub step_rule: StepRule,
    pub max_backtracks: usize,
}

impl AscentOptions {
    pub fn new(steps: usize, eta: f64) -> Self {
        AscentOptions {
            steps,
            eta,
            step_rule: StepRule::default(),
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// All requested steps were taken.
    Completed,
    /// Stopped because no admissible direction improves the objective.
    Degenerate,
    /// Every backtracked step left the budget set.
    BudgetStall,
}

/// State at one iterate and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
    /// `C(θ)`, absent without a budget.
    pub cost: Option<f64>,
    pub kind: DirectionKind,
    pub gain: f64,
    /// Step parameter actually used after backtracking; 0 if no step was taken.
    pub eta_eff: f64,
    pub budget_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn final_point(&self) -> &[f64] {
        &self.records.last().expect("a trajectory has at least one record").theta
    }
}

/// Runs `steps` ascent iterations from `theta0`.
///
/// A step that leaves the budget set is first pulled back onto the budget
/// boundary along `H†∇C` (which stays inside `Im(H)`); if that fails or loses
/// objective value, `η` is halved, up to `max_backtracks` times.
pub fn run_ascent(
    objective: &dyn Objective,
    field: &dyn OperatorField,
    budget: Option<&BudgetConstraint>,
    theta0: &[f64],
    options: &AscentOptions,
) -> Result<Trajectory> {
    check_dim(objective.dim(), theta0.len())?;
    if !(options.eta > 0.0) || !options.eta.is_finite() {
        return Err(Error::InvalidInput(format!("eta must be positive, got {}", options.eta)));
    }
    if let Some(b) = budget {
        let cost = b.cost(theta0);
        if cost > b.kappa {
            return Err(Error::InfeasibleStart { cost, kappa: b.kappa });
        }
    }

    let mut theta = theta0.to_vec();
    let mut records = Vec::with_capacity(options.steps + 1);
    let mut status = RunStatus::Completed;
    for step in 0..=options.steps {
        let h = field.operator_at(&theta)?;
        let g = objective.gradient(&theta);
        let value = objective.value(&theta);
        let dir = match budget {
            Some(b) => feasible_direction(&h, &g, b, &theta)?,
            None => optimal_direction(&h, &g)?,
        };
        let mut record = StepRecord {
            step,
            theta: theta.clone(),
            objective: value,
            cost: budget.map(|b| b.cost(&theta)),
            kind: dir.kind,
            gain: dir.first_order_gain,
            eta_eff: 0.0,
            budget_active: budget.is_some_and(|b| b.is_active(&theta)),
        };
        let Some(d) = dir.direction.as_deref() else {
            status = RunStatus::Degenerate;
            records.push(record);
            break;
        };
        if step == options.steps {
            records.push(record);
            break;
        }

        let mut eta = options.eta;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let length = match options.step_rule {
                StepRule::GainScaled => eta * dir.first_order_gain,
                StepRule::UnitEffort => eta,
            };
            let candidate = add(&theta, &scale(length, d));
            match budget {
                Some(b) if b.cost(&candidate) > b.kappa => {
                    if let Some(r) = restore(b, &h, &candidate) {
                        let slack = 1e-12 * (1.0 + value.abs());
                        if objective.value(&r) >= value - slack {
                            accepted = Some(r);
                            break;
                        }
                    }
                    eta *= 0.5;
                }
                _ => {
                    accepted = Some(candidate);
                    break;
                }
            }
        }
        match accepted {
            Some(next) => {
                record.eta_eff = eta;
                records.push(record);
                theta = next;
            }
            None => {
                status = RunStatus::BudgetStall;
                records.push(record);
                break;
            }
        }
    }
    Ok(Trajectory { records, status })
}

/// Newton iterations along `-H†∇C` bringing `C` into the activation band.
fn restore(budget: &BudgetConstraint, h: &ConstraintOperator, point: &[f64]) -> Option<Vec<f64>> {
    let band = budget.activation_band();
    let target = budget.kappa - 0.5 * band;
    let dir = h.spectrum().apply_pseudoinverse(&budget.cost_gradient(point)).ok()?;
    if norm(&dir) == 0.0 {
        return None;
    }
    let mut s = 0.0;
    for _ in 0..50 {
        let p = sub(point, &scale(s, &dir));
        let c = budget.cost(&p);
        if c <= budget.kappa && budget.kappa - c < band {
            return Some(p);
        }
        let slope = -dot(&budget.cost_gradient(&p), &dir);
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        s -= (c - target) / slope;
    }
    None
}

/// Largest relative discrepancy `‖∇_fd f − ∇f‖ / max(1, ‖∇f‖)` over the
/// probes, using central differences.
pub fn gradient_check<F, G>(f: F, grad: G, probes: &[Vec<f64>]) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    probes
        .iter()
        .map(|p| {
            let analytic = grad(p);
            let fd: Vec<f64> = (0..p.len())
                .map(|i| {
                    let h = 1e-6 * p[i].abs().max(1.0);
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[i] += h;
                    lo[i] -= h;
                    (f(&hi) - f(&lo)) / (2.0 * h)
                })
                .collect();
            norm(&sub(&fd, &analytic)) / norm(&analytic).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Finite-difference check of an objective's gradient.
pub fn validate_objective(objective: &dyn Objective, probes: &[Vec<f64>]) -> f64 {
    gradient_check(|t| objective.value(t), |t| objective.gradient(t), probes)
}

/// Finite-difference check of a budget's cost gradient.
pub fn validate_budget(budget: &BudgetConstraint, probes: &[Vec<f64>]) -> f64 {
    gradient_check(|t| budget.cost(t), |t| budget.cost_gradient(t), probes)
}

/// Objective section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64> },
    Rosenbrock {
        #[serde(default = "rosen_a")]
        a: f64,
        #[serde(default = "rosen_b")]
        b: f64,
    },
}

fn rosen_a() -> f64 {
    1.0
}

fn rosen_b() -> f64 {
    100.0
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Box<dyn Objective>> {
        Ok(match self {
            ObjectiveSpec::Quadratic { a, b } => {
                Box::new(Quadratic::new(SymmetricMatrix::from_rows(a)?, b.clone())?)
            }
            ObjectiveSpec::Rosenbrock { a, b } => Box::new(Rosenbrock { a: *a, b: *b }),
        })
    }
}

/// Budget section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetSpec {
    /// `‖θ − center‖² ≤ κ`
    Sphere {
        kappa: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `Σ w_i (θ_i − center_i)² ≤ κ`
    Ellipsoid {
        kappa: f64,
        weights: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

impl BudgetSpec {
    pub fn build(&self, dim: usize) -> Result<BudgetConstraint> {
        let (kappa, weights, center) = match self {
            BudgetSpec::Sphere { kappa, center } => (*kappa, vec![1.0; dim], center),
            BudgetSpec::Ellipsoid { kappa, weights, center } => (*kappa, weights.clone(), center),
        };
        check_dim(dim, weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("ellipsoid weights must be nonnegative".into()));
        }
        let center = center.clone().unwrap_or_else(|| vec![0.0; dim]);
        check_dim(dim, center.len())?;
        BudgetConstraint::new(EllipsoidCost { weights, center }, kappa)
    }
}

/// An `optimize` experiment: objective, operator field, optional budget and
/// run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub operator_field: crate::operator::OperatorFieldSpec,
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
    pub theta0: Vec<f64>,
    pub steps: usize,
    pub eta: f64,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub out: Option<String>,
    /// Free-form labels of the participating agents; carried through untouched.
    #[serde(default)]
    pub agents: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn run(&self) -> Result<Trajectory> {
        let objective = self.objective.build()?;
        let field = self.operator_field.build()?;
        let budget = self.budget.as_ref().map(|b| b.build(objective.dim())).transpose()?;
        let options = AscentOptions {
            step_rule: self.step_rule,
            ..AscentOptions::new(self.steps, self.eta)
        };
        run_ascent(objective.as_ref(), &field, budget.as_ref(), &self.theta0, &options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ConstantField;

    fn sphere(kappa: f64) -> BudgetConstraint {
        BudgetConstraint::new(EllipsoidCost::sphere(2), kappa).unwrap()
    }

    #[test]
    fn interior_point_matches_unconstrained() {
        let h = ConstraintOperator::diagonal(&[2.0, 1.0]).unwrap();
        let g = [0.3, -0.4];
        let inner = feasible_direction(&h, &g, &sphere(1.0), &[0.1, 0.1]).unwrap();
        assert_eq!(inner, optimal_direction(&h, &g).unwrap());
    }

    #[test]
    fn outward_gradient_on_boundary_is_degenerate() {
        let h = ConstraintOperator::identity(2).unwrap();
        let theta = [0.6, 0.8];
        let b = sphere(1.0);
        let g = b.cost_gradient(&theta);
        let r = feasible_direction(&h, &g, &b, &theta).unwrap();
        assert_eq!(r.kind, DirectionKind::Degenerate);
    }

    #[test]
    fn active_budget_removes_normal_component() {
        // C = θ_1² at θ = (0.5, 0) with κ = 0.25: ∇C = (1, 0).
        let b = BudgetConstraint::new(
            EllipsoidCost {
                weights: vec![1.0, 0.0],
                center: vec![0.0, 0.0],
            },
            0.25,
        )
        .unwrap();
        let h = ConstraintOperator::identity(2).unwrap();
        let r = feasible_direction(&h, &[1.0, 1.0], &b, &[0.5, 0.0]).unwrap();
        let d = r.direction.unwrap();
        assert!(d[0].abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        assert!((r.first_order_gain - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inward_gradient_is_left_alone() {
        let h = ConstraintOperator::identity(2).unwrap();
        let r = feasible_direction(&h, &[-1.0, 0.5], &sphere(1.0), &[1.0, 0.0]).unwrap();
        assert_eq!(r, optimal_direction(&h, &[-1.0, 0.5]).unwrap());
    }

    #[test]
    fn infeasible_start_rejected() {
        let h = ConstraintOperator::identity(2).unwrap();
        assert!(matches!(
            feasible_direction(&h, &[1.0, 0.0], &sphere(1.0), &[2.0, 0.0]),
            Err(Error::InfeasibleStart { .. })
        ));
        let q = Quadratic::new(SymmetricMatrix::identity(2).unwrap(), vec![1.0, 1.0]).unwrap();
        let field = ConstantField(h);
        let err = run_ascent(&q, &field, Some(&sphere(1.0)), &[2.0, 0.0], &AscentOptions::new(5, 0.1));
        assert!(matches!(err, Err(Error::InfeasibleStart { .. })));
    }

    #[test]
    fn builtin_gradients_pass_finite_differences() {
        let probes = vec![vec![0.3, -1.2], vec![-0.7, 0.4], vec![1.5, 2.0]];
        assert!(validate_objective(&Rosenbrock::default(), &probes) < 1e-5);
        let a = SymmetricMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let q = Quadratic::new(a, vec![1.0, -2.0]).unwrap();
        assert!(validate_objective(&q, &probes) < 1e-5);
        let b = BudgetSpec::Ellipsoid {
            kappa: 1.0,
            weights: vec![2.0, 0.5],
            center: Some(vec![0.1, -0.3]),
        }
        .build(2)
        .unwrap();
        assert!(validate_budget(&b, &probes) < 1e-5);
    }

    #[test]
    fn degenerate_start_halts_immediately() {
        let q = Quadratic::new(SymmetricMatrix::identity(2).unwrap(), vec![0.0, 1.0]).unwrap();
        let field = ConstantField(ConstraintOperator::diagonal(&[1.0, 0.0]).unwrap());
        let t = run_ascent(&q, &field, None, &[0.0, 0.0], &AscentOptions::new(10, 0.5)).unwrap();
        assert_eq!(t.status, RunStatus::Degenerate);
        assert_eq!(t.records.len(), 1);
    }

    #[test]
    fn unit_effort_steps_have_length_eta() {
        let q = Quadratic::new(SymmetricMatrix::identity(2).unwrap(), vec![10.0, 0.0]).unwrap();
        let field = ConstantField(ConstraintOperator::identity(2).unwrap());
        let opts = AscentOptions {
            step_rule: StepRule::UnitEffort,
            ..AscentOptions::new(3, 0.25)
        };
        let t = run_ascent(&q, &field, None, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(t.final_point(), &[0.75, 0.0]);
        assert_eq!(t.status, RunStatus::Completed);
        assert_eq!(t.records.len(), 4);
    }

    #[test]
    fn config_parses_and_runs() {
        let json = r#"{
            "objective": {"kind": "quadratic", "a": [[1,0],[0,1]], "b": [1, 1]},
            "operator_field": {"kind": "mask", "mask": [true, false]},
            "budget": null,
            "theta0": [0, 0],
            "steps": 50,
            "eta": 0.5
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        let t = cfg.run().unwrap();
        let end = t.final_point();
        assert!((end[0] - 1.0).abs() < 1e-9);
        assert_eq!(end[1], 0.0);
    }
}
