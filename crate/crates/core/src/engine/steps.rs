//! E-, C-, S- and M-steps.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mixture::{responsibilities, Dataset, MixtureParams, PenaltySpec, Responsibilities};
use crate::numerics::{select_entries, select_rows, symmetric_eigen};
use crate::shrinkage::{lt_d_practical, lt_d_printed, lt_k_eigen, ridge_k_hkp, ComponentUpdate, UpdateOptions, WeightedProblem};

/// Total responsibility below which a component is considered starved.
pub const STARVATION_TOL: f64 = 1e-10;

/// Hard assignment of observations to components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Partition {
    pub fn from_assignment(assignment: Vec<usize>, n_components: usize) -> Self {
        let mut counts = vec![0; n_components];
        for &a in &assignment {
            counts[a] += 1;
        }
        Self { assignment, counts }
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == j).then_some(i))
            .collect()
    }

    /// Some block is empty or holds a single observation.
    pub fn is_degenerate(&self) -> bool {
        self.counts.iter().any(|&c| c < 2)
    }

    /// Every block can carry a `p`-coefficient regression with a residual
    /// degree of freedom left for its variance (`n_j > p`, and `n_j ≥ 2`).
    pub fn supports(&self, p: usize) -> bool {
        !self.is_degenerate() && self.counts.iter().all(|&c| c > p)
    }
}

/// How the penalty parameters are chosen inside each M-step.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySchedule {
    /// Maximum likelihood.
    None,
    /// Ridge with `k` from the HKP rule on the current unpenalized WLS fit.
    RidgeHkp,
    /// Liu-type with eigenvalue `k` and `d̂` recomputed every iteration.
    LiuEigen,
    /// Liu-type with per-component `k` held fixed and `d̂` recomputed.
    LiuFixedK(Vec<f64>),
}

/// Settings the M-step needs besides the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub update: UpdateOptions,
    pub dj_literal: bool,
}

/// Output of an M-step: new parameters and the penalty used to produce them.
#[derive(Debug, Clone)]
pub struct MStep {
    pub params: MixtureParams,
    pub k: Vec<f64>,
    pub d: Vec<f64>,
    pub plugin: Vec<DVector<f64>>,
    pub floored: bool,
    kind: PenaltyKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PenaltyKind {
    None,
    Ridge,
    Liu,
}

impl MStep {
    pub fn penalty(&self) -> PenaltySpec {
        match self.kind {
            PenaltyKind::None => PenaltySpec::None,
            PenaltyKind::Ridge => PenaltySpec::Ridge { k: self.k.clone() },
            PenaltyKind::Liu => PenaltySpec::LiuType {
                k: self.k.clone(),
                d: self.d.clone(),
                plugin: self.plugin.clone(),
            },
        }
    }
}

pub fn e_step(data: &Dataset, params: &MixtureParams) -> Responsibilities {
    responsibilities(data, params)
}

/// Assigns each row to its largest responsibility; exact ties are broken
/// uniformly at random.
pub fn c_step<R: Rng + ?Sized>(tau: &Responsibilities, rng: &mut R) -> Partition {
    let m = tau.matrix();
    let mut assignment = Vec::with_capacity(m.nrows());
    let mut ties = Vec::with_capacity(m.ncols());
    for row in m.row_iter() {
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ties.clear();
        ties.extend(row.iter().enumerate().filter_map(|(j, &v)| (v == top).then_some(j)));
        let pick = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        };
        assignment.push(pick);
    }
    Partition::from_assignment(assignment, m.ncols())
}

/// Draws each row's component from `Multinomial(1, τ_i·)`.
pub fn s_step<R: Rng + ?Sized>(tau: &Responsibilities, rng: &mut R) -> Partition {
    let m = tau.matrix();
    let j = m.ncols();
    let assignment = m
        .row_iter()
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, &t) in row.iter().enumerate() {
                acc += t;
                if u < acc {
                    return c;
                }
            }
            // u landed in the rounding gap above the cumulative sum
            (0..j).rev().find(|&c| row[c] > 0.0).unwrap_or(j - 1)
        })
        .collect();
    Partition::from_assignment(assignment, j)
}

/// Per-component update for one weighted problem under `schedule`.
fn component_step(
    problem: &WeightedProblem<'_>,
    schedule: &PenaltySchedule,
    component: usize,
    prev_k: Option<f64>,
    opts: &StepOptions,
) -> Result<(ComponentUpdate, DVector<f64>)> {
    let uo = &opts.update;
    let p = problem.p();
    match schedule {
        PenaltySchedule::None => {
            let u = problem.ml(uo).map_err(|e| match e {
                Error::Singular { .. } => Error::RankDeficient { rank: p - 1, p },
                other => other,
            })?;
            Ok((u, DVector::zeros(p)))
        }
        PenaltySchedule::RidgeHkp => {
            let k = match problem.ml(uo) {
                Ok(ml) => ridge_k_hkp(&ml.beta, ml.sigma2, p)?,
                // singular unpenalized fit: keep the previous iteration's k
                Err(Error::Singular { .. }) => prev_k.ok_or(Error::RankDeficient { rank: p - 1, p })?,
                Err(e) => return Err(e),
            };
            Ok((problem.ridge(k, uo)?, DVector::zeros(p)))
        }
        PenaltySchedule::LiuEigen | PenaltySchedule::LiuFixedK(_) => {
            let eig = symmetric_eigen(&problem.xtwx)?;
            let k = match schedule {
                PenaltySchedule::LiuFixedK(ks) => ks[component],
                _ => lt_k_eigen(&eig.eigenvalues),
            };
            let ridge = problem.ridge(k, uo)?;
            let alpha = eig.eigenvectors.tr_mul(&ridge.beta);
            let d = if opts.dj_literal {
                lt_d_printed(&eig.eigenvalues, &alpha, ridge.sigma2, k)?
            } else {
                lt_d_practical(&eig.eigenvalues, &alpha, ridge.sigma2, k)?
            };
            let lt = problem.liu(k, d, &ridge.beta, uo)?;
            Ok((lt, ridge.beta))
        }
    }
}

fn kind_of(schedule: &PenaltySchedule) -> PenaltyKind {
    match schedule {
        PenaltySchedule::None => PenaltyKind::None,
        PenaltySchedule::RidgeHkp => PenaltyKind::Ridge,
        PenaltySchedule::LiuEigen | PenaltySchedule::LiuFixedK(_) => PenaltyKind::Liu,
    }
}

fn assemble(weights: Vec<f64>, updates: Vec<(ComponentUpdate, DVector<f64>)>, schedule: &PenaltySchedule) -> Result<MStep> {
    if updates
        .iter()
        .any(|(u, _)| !u.sigma2.is_finite() || u.beta.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("M-step parameters"));
    }
    let floored = updates.iter().any(|(u, _)| u.floored);
    let k = updates.iter().map(|(u, _)| u.k_used).collect();
    let d = updates.iter().map(|(u, _)| u.d_used).collect();
    let variances = updates.iter().map(|(u, _)| u.sigma2).collect();
    let mut coeffs = Vec::with_capacity(updates.len());
    let mut plugin = Vec::with_capacity(updates.len());
    for (u, pl) in updates {
        coeffs.push(u.beta);
        plugin.push(pl);
    }
    let params = MixtureParams::new(weights, coeffs, variances)?;
    Ok(MStep {
        params,
        k,
        d,
        plugin,
        floored,
        kind: kind_of(schedule),
    })
}

/// M-step over the full data with responsibility weights `W_j = diag(τ_·j)`.
pub fn m_step_pooled(
    data: &Dataset,
    tau: &Responsibilities,
    schedule: &PenaltySchedule,
    prev_k: Option<&[f64]>,
    opts: &StepOptions,
) -> Result<MStep> {
    let n = data.n() as f64;
    let j = tau.n_components();
    let mut weights = Vec::with_capacity(j);
    let mut updates = Vec::with_capacity(j);
    for c in 0..j {
        let w = tau.column(c);
        let total = w.sum();
        if !(total >= STARVATION_TOL) {
            return Err(Error::ZeroResponsibility);
        }
        weights.push(total / n);
        let problem = WeightedProblem::new(data.x(), data.y(), &w)?;
        updates.push(component_step(&problem, schedule, c, prev_k.map(|k| k[c]), opts)?);
    }
    assemble(weights, updates, schedule)
}

/// M-step on the blocks of `partition`, each weighted by its members'
/// responsibilities.
pub fn m_step_partitioned(
    data: &Dataset,
    partition: &Partition,
    tau: &Responsibilities,
    schedule: &PenaltySchedule,
    prev_k: Option<&[f64]>,
    opts: &StepOptions,
) -> Result<MStep> {
    if !partition.supports(data.p()) {
        return Err(Error::ZeroResponsibility);
    }
    let n = data.n() as f64;
    let j = tau.n_components();
    let mut weights = Vec::with_capacity(j);
    let mut updates = Vec::with_capacity(j);
    let tau_m = tau.matrix();
    for c in 0..j {
        let idx = partition.members(c);
        weights.push(idx.len() as f64 / n);
        let xj = select_rows(data.x(), &idx);
        let yj = select_entries(data.y(), &idx);
        let wj = DVector::from_iterator(idx.len(), idx.iter().map(|&i| tau_m[(i, c)]));
        if !(wj.sum() >= STARVATION_TOL) {
            return Err(Error::ZeroResponsibility);
        }
        let problem = WeightedProblem::new(&xj, &yj, &wj)?;
        updates.push(component_step(&problem, schedule, c, prev_k.map(|k| k[c]), opts)?);
    }
    assemble(weights, updates, schedule)
}

/// Iterate with the largest objective; ties go to the earliest.
pub fn sem_select(trace: &[(MixtureParams, f64)]) -> Option<&MixtureParams> {
    sem_select_index(trace).map(|i| &trace[i].0)
}

pub fn sem_select_index(trace: &[(MixtureParams, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, item) in trace.iter().enumerate() {
        if best.is_none_or(|b| item.1 > trace[b].1) {
            best = Some(i);
        }
    }
    best
}
