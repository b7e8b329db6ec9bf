//! Command-line driver: problem verification, single solves, and the two
//! convergence studies, configured through a TOML manifest.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{DegreeConfig, MeshConfig, QRuleConfig, RunConfig, TauRule, TimeKind};
use hjb_dg::analysis::{compute_errors, reference_for};
use hjb_dg::experiments::{run_convergence, run_tauq, ConvergenceParams, TauqParams};
use hjb_dg::forms::{Discretization, PenaltyTable};
use hjb_dg::mesh::{build_graded_quad_mesh, build_uniform_quad_mesh, dump_mesh};
use hjb_dg::problem::{registry, verify_cordes, CordesGrid, HJBProblem};
use hjb_dg::solver::{march, write_checkpoint, SolverConfig};
use hjb_dg::spaces::{build_time_partition, DGSpace, DegreeRule, TimeGrading, TimePartition};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hjb-dg",
    version,
    about = "Space-time DG solver for parabolic HJB equations with Cordes coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify uniform ellipticity and the Cordes condition of the problem
    VerifyCordes(CommonArgs),
    /// Solve the configured problem and write a solution checkpoint
    Solve(CommonArgs),
    /// Uniform-refinement convergence study (errors, EOC table, plot data)
    Convergence(CommonArgs),
    /// Geometric tau-q refinement study with exponential-rate fit
    Tauq(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory for tables, plot data and checkpoints
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = auto). This build executes sequentially so that
    /// outputs are bitwise reproducible; the value is echoed in the manifest.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&RunConfig, &CommonArgs) -> Result<()>) = match &cli.command
    {
        Command::VerifyCordes(a) => (a, cmd_verify_cordes),
        Command::Solve(a) => (a, cmd_solve),
        Command::Convergence(a) => (a, cmd_convergence),
        Command::Tauq(a) => (a, cmd_tauq),
    };
    let config = match RunConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&config, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn build_problem(config: &RunConfig) -> Result<HJBProblem> {
    let mut problem = registry(&config.problem, config.controls).map_err(|e| anyhow!("{e}"))?;
    if let Some(t) = config.time.horizon {
        problem.horizon = t;
    }
    Ok(problem)
}

fn build_discretization(config: &RunConfig, lambda: f64) -> Result<Discretization> {
    let mesh = match config.mesh {
        MeshConfig::Uniform { k } => build_uniform_quad_mesh(k),
        MeshConfig::Graded { levels } => build_graded_quad_mesh(levels),
    };
    let degrees = match config.degrees {
        DegreeConfig::Constant { p } => vec![p; mesh.n_elements()],
        DegreeConfig::Graded { base } => DGSpace::graded_degrees(&mesh, base),
    };
    let space = DGSpace::new(mesh, degrees).map_err(|e| anyhow!("{e}"))?;
    let penalties = PenaltyTable::new(&space, config.penalty.c_s, config.penalty.sigma, lambda)
        .map_err(|e| anyhow!("{e}"))?;
    Ok(Discretization::new(space, penalties))
}

fn build_partition(config: &RunConfig, horizon: f64) -> Result<TimePartition> {
    let grading = match config.time.kind {
        TimeKind::Uniform => TimeGrading::Uniform { n: config.time.n },
        TimeKind::Geometric => TimeGrading::Geometric {
            sigma: config.time.sigma.expect("validated"),
            n: config.time.n,
        },
    };
    let q_rule = match config.time.q {
        QRuleConfig::Constant(q) => DegreeRule::Constant { q },
        QRuleConfig::Rule(_) => DegreeRule::Linear,
    };
    build_time_partition(grading, horizon, q_rule).map_err(|e| anyhow!("{e}"))
}

fn solver_config(config: &RunConfig) -> SolverConfig {
    SolverConfig {
        newton_tol: config.solver.newton_tol,
        max_newton_iters: config.solver.max_iters,
    }
}

fn write_out(dir: &Option<PathBuf>, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path: PathBuf = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn echo_manifest(config: &RunConfig, args: &CommonArgs) -> Result<()> {
    let mut manifest = config.to_normalized_toml();
    manifest.push_str(&format!("\n# threads = {} (sequential build)\n", args.threads));
    println!("-- run manifest --\n{manifest}-- end manifest --");
    write_out(&args.out, "manifest.toml", &manifest)
}

fn cmd_verify_cordes(config: &RunConfig, args: &CommonArgs) -> Result<()> {
    echo_manifest(config, args)?;
    let problem = build_problem(config)?;
    let report = verify_cordes(&problem, CordesGrid::default()).map_err(|e| anyhow!("{e}"))?;
    println!(
        "problem {} ({} controls): epsilon_min = {:.6e}",
        config.problem,
        problem.n_controls(),
        report.eps_min
    );
    let (x, y, t, ctrl) = report.witness;
    println!("witness: x = {x:.4}, y = {y:.4}, t = {t:.4}, control index = {ctrl}");
    println!("samples = {}", report.samples_used);
    Ok(())
}

fn cmd_solve(config: &RunConfig, args: &CommonArgs) -> Result<()> {
    echo_manifest(config, args)?;
    let problem = build_problem(config)?;
    let disc = build_discretization(config, problem.lambda)?;
    let partition = build_partition(config, problem.horizon)?;
    let history =
        march(&disc, &problem, &partition, &solver_config(config)).map_err(|e| anyhow!("{e}"))?;
    println!(
        "solved {} slabs, {} spatial dofs, {} temporal dofs",
        partition.n_slabs(),
        disc.n_dofs(),
        partition.dof_tau()
    );
    for (n, stats) in history.stats.iter().enumerate() {
        println!(
            "slab {:3}: {} iterations, residual {:.3e}, {} policy changes",
            n + 1,
            stats.iterations,
            stats.final_residual,
            stats.policy_changes
        );
    }
    if let Some(reference) = reference_for(&config.problem) {
        let sum = compute_errors(&disc, &problem, &partition, &history.coeffs, &reference);
        println!(
            "errors: rel_X = {:.6e}, rel_E = {:.6e}, rel_H1(T) = {:.6e}",
            sum.rel_x(),
            sum.rel_e(),
            sum.rel_h1_t()
        );
    }
    if args.out.is_some() {
        let mut ckpt = Vec::new();
        write_checkpoint(&mut ckpt, &disc.space, &partition, &history)
            .map_err(|e| anyhow!("{e}"))?;
        write_out(&args.out, "solution.ckpt", &String::from_utf8(ckpt)?)?;
        write_out(
            &args.out,
            "mesh.txt",
            &dump_mesh(&disc.space.mesh, &disc.space.faces),
        )?;
    }
    Ok(())
}

fn cmd_convergence(config: &RunConfig, args: &CommonArgs) -> Result<()> {
    echo_manifest(config, args)?;
    let p = match config.degrees {
        DegreeConfig::Constant { p } => p,
        DegreeConfig::Graded { .. } => bail!("the convergence sweep uses constant degrees"),
    };
    let q = match config.time.q {
        QRuleConfig::Constant(q) => q,
        QRuleConfig::Rule(_) => bail!("the convergence sweep uses a constant temporal degree"),
    };
    let params = ConvergenceParams {
        problem_key: config.problem.clone(),
        n_controls: config.controls,
        p,
        q,
        levels: config.sweep.ks.clone(),
        tau_equals_h: config.sweep.tau_rule == TauRule::EqualsH,
        c_s: config.penalty.c_s,
        sigma_penalty: config.penalty.sigma,
        solver: solver_config(config),
    };
    let out = run_convergence(&params).map_err(|e| anyhow!("{e}"))?;
    print!("{}", out.table.to_csv());
    for row in &out.table.rows {
        if row.err_e <= 1e-8 {
            println!("level {}: exact", row.level);
        }
    }
    let eoc_x = out.table.eoc_x();
    let eoc_h1 = out.table.eoc_h1();
    if eoc_x.len() > 1 {
        println!(
            "eoc(err_X) = {:.4}, eoc(err_H1_T) = {:.4} (last increment)",
            eoc_x.last().unwrap(),
            eoc_h1.last().unwrap()
        );
    }
    write_out(&args.out, "convergence.csv", &out.table.to_csv())?;
    let mut plot_x = String::new();
    let mut plot_h1 = String::new();
    for row in &out.table.rows {
        plot_x.push_str(&format!(
            "{:.12e} {:.12e}\n",
            row.h.log10(),
            row.err_x.log10()
        ));
        plot_h1.push_str(&format!(
            "{:.12e} {:.12e}\n",
            row.h.log10(),
            row.err_h1_t.log10()
        ));
    }
    write_out(&args.out, "plot_x.dat", &plot_x)?;
    write_out(&args.out, "plot_h1t.dat", &plot_h1)?;
    Ok(())
}

fn cmd_tauq(config: &RunConfig, args: &CommonArgs) -> Result<()> {
    echo_manifest(config, args)?;
    if config.problem != "exp2-heat" {
        bail!("the tau-q study runs on the 'exp2-heat' problem");
    }
    let p_base = match config.degrees {
        DegreeConfig::Graded { base } => base,
        DegreeConfig::Constant { p } => p,
    };
    let params = TauqParams {
        sigma: config.time.sigma.unwrap_or(0.2),
        horizon: config.time.horizon.unwrap_or(0.05),
        n_values: config.sweep.ns.clone(),
        p_base,
        mesh_cap: config.sweep.mesh_cap,
        c_s: config.penalty.c_s,
        sigma_penalty: config.penalty.sigma,
        solver: solver_config(config),
    };
    let out = run_tauq(&params).map_err(|e| anyhow!("{e}"))?;
    print!("{}", out.table.to_csv());
    let describe = |label: &str, fit: &hjb_dg::analysis::RateFit| {
        if fit.degenerate {
            println!("fit {label}: degenerate (needs >= 3 points with variance)");
        } else {
            println!(
                "fit {label}: slope = {:.4}, r^2 = {:.5}",
                fit.slope, fit.r_squared
            );
        }
    };
    describe("log(err_X) ~ sqrt(DoF_tau)", &out.fit_x);
    describe("log(err_L2H1) ~ sqrt(DoF_tau)", &out.fit_l2h1);
    let increases = out.rel_x.windows(2).filter(|w| w[1] > w[0]).count();
    if increases > 0 {
        println!("note: {increases} non-monotone step(s) in err_X");
    }
    write_out(&args.out, "tauq.csv", &out.table.to_csv())?;
    let mut plot = String::new();
    for (d, e) in out.dof_tau.iter().zip(&out.rel_x) {
        plot.push_str(&format!("{:.12e} {:.12e}\n", d.sqrt(), e.log10()));
    }
    write_out(&args.out, "tauq_x.dat", &plot)?;
    let mut plot = String::new();
    for (d, e) in out.dof_x.iter().zip(&out.rel_x) {
        plot.push_str(&format!("{:.12e} {:.12e}\n", d.cbrt(), e.log10()));
    }
    write_out(&args.out, "tauq_x_spatial.dat", &plot)?;
    Ok(())
}
