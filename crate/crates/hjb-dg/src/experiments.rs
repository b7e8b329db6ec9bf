//! Experiment drivers: the uniform-refinement convergence study and the
//! geometric tau-q refinement study over graded meshes.

use crate::analysis::{
    compute_errors, exp_rate_fit, reference_for, ErrorRow, ErrorSummary, ErrorTable, RateFit,
};
use crate::forms::{Discretization, PenaltyTable};
use crate::mesh::{build_graded_quad_mesh, build_uniform_quad_mesh};
use crate::problem::registry;
use crate::solver::{march, SolverConfig};
use crate::spaces::{build_time_partition, DGSpace, DegreeRule, TimeGrading};
use crate::{Error, Result};

/// Parameters of the uniform-refinement convergence study: mesh width
/// `h = 2^-k` over the sweep `k in levels`, with matching time steps.
#[derive(Debug, Clone)]
pub struct ConvergenceParams {
    pub problem_key: String,
    pub n_controls: usize,
    pub p: usize,
    pub q: usize,
    pub levels: Vec<u32>,
    /// `tau = h` when set; `tau = 2h` otherwise.
    pub tau_equals_h: bool,
    pub c_s: f64,
    pub sigma_penalty: f64,
    pub solver: SolverConfig,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            problem_key: "exp1-anisotropic-sup".into(),
            n_controls: 32,
            p: 2,
            q: 1,
            levels: vec![1, 2, 3, 4],
            tau_equals_h: true,
            c_s: 2.5,
            sigma_penalty: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutput {
    /// Relative errors (normalised by the reference norms) per level.
    pub table: ErrorTable,
    pub summaries: Vec<ErrorSummary>,
}

pub fn run_convergence(params: &ConvergenceParams) -> Result<ConvergenceOutput> {
    let reference = reference_for(&params.problem_key).ok_or_else(|| {
        Error::Config(format!(
            "problem '{}' has no reference solution",
            params.problem_key
        ))
    })?;
    let mut table = ErrorTable::default();
    let mut summaries = Vec::new();
    for &k in &params.levels {
        let problem = registry(&params.problem_key, params.n_controls)?;
        let mesh = build_uniform_quad_mesh(k);
        let space = DGSpace::uniform(mesh, params.p)?;
        let pen = PenaltyTable::new(&space, params.c_s, params.sigma_penalty, problem.lambda)?;
        let disc = Discretization::new(space, pen);
        let h = 0.5f64.powi(k as i32);
        let n_slabs = if params.tau_equals_h {
            1usize << k
        } else {
            1usize << (k - 1)
        };
        let partition = build_time_partition(
            TimeGrading::Uniform { n: n_slabs },
            problem.horizon,
            DegreeRule::Constant { q: params.q },
        )?;
        let history = march(&disc, &problem, &partition, &params.solver)?;
        let sum = compute_errors(&disc, &problem, &partition, &history.coeffs, &reference);
        table.push(ErrorRow {
            level: k as usize,
            h,
            tau: partition.tau(0),
            p: params.p,
            q: params.q,
            dof_x: disc.n_dofs(),
            dof_t: partition.dof_tau(),
            err_x: sum.rel_x(),
            err_e: sum.rel_e(),
            err_h1_t: sum.rel_h1_t(),
        });
        summaries.push(sum);
    }
    Ok(ConvergenceOutput { table, summaries })
}

/// Parameters of the geometric tau-q study: partitions `t_n = sigma^(N-n) T`
/// with `q_n = n + 1`, on boundary-graded meshes with degrees increasing away
/// from the boundary.
#[derive(Debug, Clone)]
pub struct TauqParams {
    pub sigma: f64,
    pub horizon: f64,
    pub n_values: Vec<usize>,
    pub p_base: usize,
    /// Mesh grading levels per computation: `min(N - 1, mesh_cap)`.
    pub mesh_cap: u32,
    pub c_s: f64,
    pub sigma_penalty: f64,
    pub solver: SolverConfig,
}

impl Default for TauqParams {
    fn default() -> Self {
        Self {
            sigma: 0.2,
            horizon: 0.05,
            n_values: vec![2, 3, 4, 5, 6],
            p_base: 3,
            mesh_cap: 4,
            c_s: 2.5,
            sigma_penalty: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TauqOutput {
    pub table: ErrorTable,
    pub dof_x: Vec<f64>,
    pub dof_tau: Vec<f64>,
    pub rel_x: Vec<f64>,
    pub rel_l2h1: Vec<f64>,
    /// Least-squares fit of `log err_X` against `sqrt(DoF_tau)`.
    pub fit_x: RateFit,
    pub fit_l2h1: RateFit,
}

pub fn run_tauq(params: &TauqParams) -> Result<TauqOutput> {
    let reference = reference_for("exp2-heat")
        .expect("experiment-2 reference is built in");
    let mut table = ErrorTable::default();
    let (mut dof_x, mut dof_tau) = (Vec::new(), Vec::new());
    let (mut rel_x, mut rel_l2h1) = (Vec::new(), Vec::new());
    for &n in &params.n_values {
        let problem = registry("exp2-heat", 1)?;
        let levels = ((n as u32).saturating_sub(1)).clamp(1, params.mesh_cap);
        let mesh = build_graded_quad_mesh(levels);
        let degrees = DGSpace::graded_degrees(&mesh, params.p_base);
        let space = DGSpace::new(mesh, degrees)?;
        let pen = PenaltyTable::new(&space, params.c_s, params.sigma_penalty, problem.lambda)?;
        let disc = Discretization::new(space, pen);
        let partition = build_time_partition(
            TimeGrading::Geometric {
                sigma: params.sigma,
                n,
            },
            params.horizon,
            DegreeRule::Linear,
        )?;
        let history = march(&disc, &problem, &partition, &params.solver)?;
        let sum = compute_errors(&disc, &problem, &partition, &history.coeffs, &reference);
        table.push(ErrorRow {
            level: n,
            h: disc.space.mesh.mesh_size(),
            tau: (0..partition.n_slabs()).map(|i| partition.tau(i)).fold(0.0, f64::max),
            p: *disc.space.degrees.iter().max().unwrap(),
            q: *partition.degrees.iter().max().unwrap(),
            dof_x: disc.n_dofs(),
            dof_t: partition.dof_tau(),
            err_x: sum.rel_x(),
            err_e: sum.rel_e(),
            err_h1_t: sum.rel_h1_t(),
        });
        dof_x.push(disc.n_dofs() as f64);
        dof_tau.push(partition.dof_tau() as f64);
        rel_x.push(sum.rel_x());
        rel_l2h1.push(sum.rel_l2h1());
    }
    let fit_x = exp_rate_fit(&rel_x, &dof_tau, 0.5)?;
    let fit_l2h1 = exp_rate_fit(&rel_l2h1, &dof_tau, 0.5)?;
    Ok(TauqOutput {
        table,
        dof_x,
        dof_tau,
        rel_x,
        rel_l2h1,
        fit_x,
        fit_l2h1,
    })
}
