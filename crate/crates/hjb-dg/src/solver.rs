//! Time marching: each slab's nonlinear system is solved by policy iteration
//! (semismooth Newton), freezing the argmax control field, factorising the
//! frozen sparse matrix and iterating until the policy stalls and the true
//! nonlinear residual is below tolerance.

use crate::forms::{a_h_callback_vector, project, Discretization};
use crate::problem::{verify_cordes, CordesGrid, HJBProblem};
use crate::slab::{build_temporal_tabs, end_trace, SlabSystem, SpaceTimeCoeffs};
use crate::spaces::{DGSpace, TimePartition};
use crate::{Error, Result};
use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use std::io::{BufRead, Write};

/// Solver tolerances. `newton_tol` bounds the relative Euclidean residual of
/// the tested slab equations; the policy stall rule additionally requires the
/// control field to be unchanged up to pointwise optimality ties.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 30,
        }
    }
}

/// Per-slab iteration statistics.
#[derive(Debug, Clone)]
pub struct SlabStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub policy_changes: usize,
    pub restarts: usize,
}

/// The discrete solution: per-slab coefficient blocks, end-of-slab spatial
/// traces and iteration statistics.
#[derive(Debug, Clone)]
pub struct SolutionHistory {
    pub coeffs: SpaceTimeCoeffs,
    pub end_traces: Vec<Vec<f64>>,
    pub stats: Vec<SlabStats>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve one slab system by policy iteration. `warm_spatial` seeds the
/// initial control field (the previous end trace, or the initial-datum lift).
pub fn solve_slab(
    sys: &SlabSystem,
    warm_spatial: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SlabStats)> {
    let n = sys.n_unknowns();
    let mut policy = sys.policy_from_spatial(warm_spatial);
    let mut symbolic: Option<SymbolicLu<u32>> = None;
    let mut coeffs = vec![0.0; n];
    let mut history: Vec<f64> = Vec::new();
    let mut policy_changes = 0;
    let mut restarts = 0;
    let mut increases = 0;
    let mut prev_rel = f64::INFINITY;

    for iter in 1..=config.max_newton_iters {
        let (mat, rhs) = sys.assemble(&policy);
        let fmat = mat.to_faer();
        // the sparsity pattern is policy-independent: factorise symbolically
        // once and reuse across iterations
        if symbolic.is_none() {
            symbolic = Some(SymbolicLu::try_new(fmat.symbolic()).map_err(|e| {
                Error::SingularSystem {
                    slab: sys.slab,
                    detail: format!("symbolic factorisation failed: {e:?}"),
                }
            })?);
        }
        let lu = Lu::try_new_with_symbolic(symbolic.clone().unwrap(), fmat.as_ref()).map_err(
            |e| Error::SingularSystem {
                slab: sys.slab,
                detail: format!("numeric factorisation failed: {e:?}"),
            },
        )?;
        let mut x = faer::Mat::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        coeffs = (0..n).map(|i| x[(i, 0)]).collect();
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem {
                slab: sys.slab,
                detail: "non-finite solution from the direct solve".into(),
            });
        }
        // two steps of iterative refinement push the linear residual well
        // below the stiff penalty-induced conditioning floor
        for _ in 0..2 {
            let mut lin = mat.matvec(&coeffs);
            for (r, b) in lin.iter_mut().zip(&rhs) {
                *r -= b;
            }
            let mut corr = faer::Mat::from_fn(n, 1, |i, _| lin[i]);
            lu.solve_in_place(corr.as_mut());
            for (i, c) in coeffs.iter_mut().enumerate() {
                *c -= corr[(i, 0)];
            }
        }

        let res = sys.residual(&coeffs);
        let denom = l2(&rhs).max(1e-14);
        let rel = l2(&res) / denom;
        history.push(rel);

        let (new_policy, gap) = sys.update_policy(&coeffs, Some(&policy));
        let policy_stable = gap <= 1e-12;
        if !policy_stable {
            policy_changes += 1;
        }
        if rel <= config.newton_tol && policy_stable {
            return Ok((
                coeffs,
                SlabStats {
                    iterations: iter,
                    final_residual: rel,
                    policy_changes,
                    restarts,
                },
            ));
        }

        // divergence guard: monotone residual growth over three iterations
        // indicates a stall; restart once from zero before giving up
        if rel > prev_rel {
            increases += 1;
        } else {
            increases = 0;
        }
        if increases >= 3 {
            if restarts == 0 {
                restarts = 1;
                increases = 0;
                prev_rel = f64::INFINITY;
                coeffs = vec![0.0; n];
                policy = sys.update_policy(&coeffs, None).0;
                continue;
            }
            break;
        }
        prev_rel = rel;
        policy = new_policy;
    }
    Err(Error::NonConvergence {
        slab: sys.slab,
        iters: history.len(),
        history,
    })
}

/// March over all slabs with the convention `u_h(t_0) := u_0`. Verifies the
/// Cordes condition first and refuses to run on violation.
pub fn march(
    disc: &Discretization,
    problem: &HJBProblem,
    partition: &TimePartition,
    config: &SolverConfig,
) -> Result<SolutionHistory> {
    verify_cordes(problem, CordesGrid::default())?;
    let tabs = build_temporal_tabs(partition, 2);
    let s = disc.n_dofs();
    let mut prev_vec = a_h_callback_vector(disc, &|x, y| problem.u0(x, y));
    let mut warm = project(disc, |x, y| problem.u0(x, y).0);
    let mut history = SolutionHistory {
        coeffs: SpaceTimeCoeffs { blocks: Vec::new() },
        end_traces: Vec::new(),
        stats: Vec::new(),
    };
    for n in 0..partition.n_slabs() {
        let sys = SlabSystem::new(disc, problem, n, tabs[n].clone(), prev_vec);
        let (coeffs, stats) = solve_slab(&sys, &warm, config)?;
        let trace = end_trace(&tabs[n], &coeffs, s);
        prev_vec = disc.ops.a_h.matvec(&trace);
        warm = trace.clone();
        history.coeffs.blocks.push(coeffs);
        history.end_traces.push(trace);
        history.stats.push(stats);
    }
    Ok(history)
}

/// Write the solution history as a plain-text checkpoint:
/// a header with mesh/space fingerprints, then per slab a block
/// `slab <n> <q_n> <dim>` followed by the coefficients (one per line,
/// round-trip exact).
pub fn write_checkpoint(
    out: &mut impl Write,
    space: &DGSpace,
    partition: &TimePartition,
    history: &SolutionHistory,
) -> Result<()> {
    writeln!(out, "hjb-dg-checkpoint 1")?;
    writeln!(out, "mesh {:016x}", space.mesh.fingerprint())?;
    writeln!(out, "space {:016x}", space.fingerprint())?;
    writeln!(out, "slabs {}", partition.n_slabs())?;
    for (n, block) in history.coeffs.blocks.iter().enumerate() {
        let q = partition.degrees[n];
        writeln!(out, "slab {} {} {}", n + 1, q, block.len())?;
        for v in block {
            writeln!(out, "{v:.17e}")?;
        }
    }
    Ok(())
}

/// Checkpoint contents: fingerprints and per-slab coefficient blocks.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub mesh_hash: u64,
    pub space_hash: u64,
    pub degrees: Vec<usize>,
    pub coeffs: SpaceTimeCoeffs,
}

pub fn read_checkpoint(input: &mut impl BufRead) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::Checkpoint(msg.into());
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| bad(&format!("missing {what}")))
    };
    let magic = next("magic")?;
    if magic.trim() != "hjb-dg-checkpoint 1" {
        return Err(bad("not a hjb-dg checkpoint"));
    }
    let parse_hash = |line: String, tag: &str| -> Result<u64> {
        let rest = line
            .strip_prefix(tag)
            .ok_or_else(|| bad(&format!("expected '{tag}' line")))?;
        u64::from_str_radix(rest.trim(), 16).map_err(|e| bad(&format!("bad hash: {e}")))
    };
    let mesh_hash = parse_hash(next("mesh hash")?, "mesh ")?;
    let space_hash = parse_hash(next("space hash")?, "space ")?;
    let n_slabs: usize = next("slab count")?
        .strip_prefix("slabs ")
        .ok_or_else(|| bad("expected 'slabs' line"))?
        .trim()
        .parse()
        .map_err(|e| bad(&format!("bad slab count: {e}")))?;
    let mut degrees = Vec::with_capacity(n_slabs);
    let mut blocks = Vec::with_capacity(n_slabs);
    for n in 0..n_slabs {
        let header = next("slab header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "slab" {
            return Err(bad(&format!("malformed slab header '{header}'")));
        }
        let idx: usize = parts[1].parse().map_err(|e| bad(&format!("{e}")))?;
        if idx != n + 1 {
            return Err(bad("slab blocks out of order"));
        }
        let q: usize = parts[2].parse().map_err(|e| bad(&format!("{e}")))?;
        let dim: usize = parts[3].parse().map_err(|e| bad(&format!("{e}")))?;
        let mut block = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v: f64 = next("coefficient")?
                .trim()
                .parse()
                .map_err(|e| bad(&format!("bad coefficient: {e}")))?;
            block.push(v);
        }
        degrees.push(q);
        blocks.push(block);
    }
    Ok(Checkpoint {
        mesh_hash,
        space_hash,
        degrees,
        coeffs: SpaceTimeCoeffs { blocks },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::PenaltyTable;
    use crate::mesh::build_uniform_quad_mesh;
    use crate::problem::registry;
    use crate::spaces::{build_time_partition, DegreeRule, TimeGrading};

    fn setup(k: u32, p: usize) -> Discretization {
        let space = DGSpace::uniform(build_uniform_quad_mesh(k), p).unwrap();
        let pen = PenaltyTable::new(&space, 2.5, 1.0, 0.0).unwrap();
        Discretization::new(space, pen)
    }

    fn uniform_partition(n: usize, t: f64, q: usize) -> TimePartition {
        build_time_partition(TimeGrading::Uniform { n }, t, DegreeRule::Constant { q }).unwrap()
    }

    #[test]
    fn zero_data_solves_in_one_iteration() {
        let disc = setup(1, 2);
        let problem = crate::problem::HJBProblem::new(
            1,
            0.0,
            1.0,
            1.0,
            false,
            Box::new(|_, _, _, out| {
                out[0] = crate::problem::CoeffSample {
                    a: [1.0, 0.0, 1.0],
                    ..Default::default()
                };
            }),
            Box::new(|_, _| (0.0, [0.0, 0.0])),
        )
        .unwrap();
        let partition = uniform_partition(2, 1.0, 1);
        let history = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        for stats in &history.stats {
            assert_eq!(stats.iterations, 1);
        }
        for block in &history.coeffs.blocks {
            assert!(block.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn singleton_control_needs_one_policy_iteration() {
        let disc = setup(1, 2);
        let problem = registry("heat-singleton", 1).unwrap();
        let partition = uniform_partition(2, 0.5, 1);
        let history = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        for stats in &history.stats {
            assert_eq!(stats.iterations, 1, "linear problems take one iteration");
            assert_eq!(stats.policy_changes, 0);
        }
    }

    #[test]
    fn manufactured_polynomial_reproduced_exactly() {
        // uniqueness + consistency force u_h = u for u = t x(1-x) y(1-y)
        let disc = setup(2, 2);
        let problem = registry("poly-exact", 1).unwrap();
        let partition = uniform_partition(3, 1.0, 1);
        let history = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        let tabs = build_temporal_tabs(&partition, 2);
        let s = disc.n_dofs();
        let w = project(&disc, |x, y| x * (1.0 - x) * y * (1.0 - y));
        for n in 0..partition.n_slabs() {
            let tmp = &tabs[n];
            let tau = partition.tau(n);
            let nm = tmp.q + 1;
            let mut c = vec![0.0; nm];
            for (m, cm) in c.iter_mut().enumerate() {
                for (g, &t) in tmp.nodes.iter().enumerate() {
                    *cm += 2.0 / tau * tmp.weights[g] * t * tmp.val[m][g];
                }
            }
            for m in 0..nm {
                for i in 0..s {
                    let expect = c[m] * w[i];
                    let got = history.coeffs.blocks[n][m * s + i];
                    assert!(
                        (got - expect).abs() < 1e-9,
                        "slab {n}, mode {m}, dof {i}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn end_traces_consistent_with_blocks() {
        let disc = setup(1, 2);
        let problem = registry("heat-singleton", 1).unwrap();
        let partition = uniform_partition(3, 0.3, 2);
        let history = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        let tabs = build_temporal_tabs(&partition, 2);
        for n in 0..partition.n_slabs() {
            let tr = end_trace(&tabs[n], &history.coeffs.blocks[n], disc.n_dofs());
            assert_eq!(tr, history.end_traces[n]);
        }
    }

    #[test]
    fn residual_recheck_on_fresh_systems() {
        let disc = setup(1, 3);
        let problem = registry("exp1-anisotropic-sup", 8).unwrap();
        let partition = uniform_partition(2, 1.0, 2);
        let config = SolverConfig::default();
        let history = march(&disc, &problem, &partition, &config).unwrap();
        let tabs = build_temporal_tabs(&partition, 2);
        let mut prev_vec = a_h_callback_vector(&disc, &|x, y| problem.u0(x, y));
        for n in 0..partition.n_slabs() {
            let sys = SlabSystem::new(&disc, &problem, n, tabs[n].clone(), prev_vec.clone());
            let res = sys.residual(&history.coeffs.blocks[n]);
            let denom = l2(sys.prev_vec()).max(1.0);
            assert!(l2(&res) / denom <= 10.0 * config.newton_tol);
            prev_vec = disc.ops.a_h.matvec(&history.end_traces[n]);
        }
    }

    #[test]
    fn marching_is_deterministic() {
        let disc = setup(1, 2);
        let problem = registry("exp1-anisotropic-sup", 8).unwrap();
        let partition = uniform_partition(2, 1.0, 1);
        let a = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        let b = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert_eq!(a.end_traces, b.end_traces);
    }

    #[test]
    fn linear_solution_independent_of_warm_start() {
        let disc = setup(1, 2);
        let problem = registry("heat-singleton", 1).unwrap();
        let partition = uniform_partition(1, 0.5, 1);
        let tabs = build_temporal_tabs(&partition, 2);
        let prev_vec = a_h_callback_vector(&disc, &|x, y| problem.u0(x, y));
        let sys = SlabSystem::new(&disc, &problem, 0, tabs[0].clone(), prev_vec);
        let config = SolverConfig::default();
        let warm_a = vec![0.0; disc.n_dofs()];
        let warm_b: Vec<f64> = (0..disc.n_dofs()).map(|i| (i as f64).sin()).collect();
        let (ca, _) = solve_slab(&sys, &warm_a, &config).unwrap();
        let (cb, _) = solve_slab(&sys, &warm_b, &config).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let disc = setup(1, 2);
        let problem = registry("heat-singleton", 1).unwrap();
        let partition = uniform_partition(2, 0.4, 1);
        let history = march(&disc, &problem, &partition, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &disc.space, &partition, &history).unwrap();
        let ck = read_checkpoint(&mut &buf[..]).unwrap();
        assert_eq!(ck.mesh_hash, disc.space.mesh.fingerprint());
        assert_eq!(ck.space_hash, disc.space.fingerprint());
        assert_eq!(ck.degrees, partition.degrees);
        assert_eq!(ck.coeffs, history.coeffs);
        // corrupted magic is rejected
        let mut bad = buf.clone();
        bad[0] = b'x';
        assert!(read_checkpoint(&mut &bad[..]).is_err());
    }
}
