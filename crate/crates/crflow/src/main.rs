use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crflow::config::ExperimentConfig;
use crflow::diagnostics::{
    energy_ledger, error_vs_strong, mass_history, uniform_bound_monitors,
};
use crflow::io::{write_csv, write_vtk};
use crflow::manufactured::ManufacturedSolution;
use crflow::mesh::{structured_triangulation, Rect};
use crflow::probes::{
    fit_slope, probe_jump_bound, probe_norm_equivalence, probe_poincare,
    probe_projection_orders, probe_sobolev_vh, ProbeReport,
};
use crflow::scheme::{project_initial_data, run_simulation, SourceTerms, Trajectory};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_GATE: u8 = 4;

#[derive(Parser)]
#[command(name = "crflow", about = "implicit upwind FV/CR solver for barotropic flow")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the config file)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// refinement levels (overrides the config file)
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// RNG seed for probe sampling (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// time-march one configuration; write snapshots and ledgers
    Run,
    /// manufactured-solution refinement study with dt proportional to h^2
    Convergence,
    /// probe the discrete functional inequalities on a refinement sequence
    VerifyInequalities,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            msg: format!("config error: {e}"),
        }
    }
    fn solver(e: impl std::fmt::Display) -> Failure {
        Failure {
            code: EXIT_SOLVER,
            msg: format!("solver failure: {e}"),
        }
    }
    fn gate(e: impl std::fmt::Display) -> Failure {
        Failure {
            code: EXIT_GATE,
            msg: format!("invariant gate failed: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::config)?,
        None => default_config(),
    };
    if let Some(l) = cli.levels {
        cfg.levels = l;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let outdir = cli
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("crflow_out"));
    std::fs::create_dir_all(&outdir).map_err(Failure::config)?;

    match cli.cmd {
        Cmd::Run => cmd_run(&cfg, &outdir),
        Cmd::Convergence => cmd_convergence(&cfg, &outdir),
        Cmd::VerifyInequalities => cmd_verify_inequalities(&cfg, &outdir),
    }
}

fn default_config() -> ExperimentConfig {
    toml::from_str(
        "levels = 3\n[time]\ndt = 0.01\nt_final = 0.1\n[initial]\nkind = \"gaussian\"\n",
    )
    .expect("built-in default config")
}

fn march(cfg: &ExperimentConfig) -> Result<(Trajectory, SourceTerms), Failure> {
    let mesh = Arc::new(cfg.build_mesh().map_err(Failure::config)?);
    let physics = cfg.physics().map_err(Failure::config)?;
    let state0 = cfg.initial_state(mesh).map_err(Failure::config)?;
    let sources = match cfg.initial {
        crflow::config::InitialSpec::Manufactured => {
            ManufacturedSolution::default().sources(&physics.law, physics.visc)
        }
        _ => SourceTerms::none(),
    };
    let traj = run_simulation(&state0, &physics, &cfg.scheme_config(), &sources)
        .map_err(Failure::solver)?;
    if let Some(reason) = &traj.failure {
        return Err(Failure::solver(reason));
    }
    Ok((traj, sources))
}

fn cmd_run(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), Failure> {
    let (traj, sources) = march(cfg)?;
    let physics = cfg.physics().map_err(Failure::config)?;
    let mesh = traj.states[0].rho.mesh.clone();

    for (n, st) in traj.states.iter().enumerate() {
        let path = outdir.join(format!("snapshot_{n:04}.vtk"));
        write_vtk(&path, &mesh, &[("density", &st.rho)], Some(&st.u)).map_err(Failure::config)?;
    }

    let ledger = energy_ledger(&traj, &physics.law, physics.visc, &sources)
        .map_err(Failure::solver)?;
    let rows: Vec<Vec<f64>> = ledger
        .rows
        .iter()
        .map(|r| {
            vec![
                r.time_index as f64,
                r.kinetic,
                r.internal,
                r.viscous,
                r.d_time_u,
                r.d_time_rho,
                r.d_space_u,
                r.d_space_rho,
                r.source_work,
                r.identity_residual,
            ]
        })
        .collect();
    write_csv(
        &outdir.join("energy_ledger.csv"),
        &[
            "time_index",
            "kinetic",
            "internal",
            "viscous",
            "d_time_u",
            "d_time_rho",
            "d_space_u",
            "d_space_rho",
            "source_work",
            "identity_residual",
        ],
        &rows,
    )
    .map_err(Failure::config)?;

    let (masses, drift) = mass_history(&traj);
    let mass_rows: Vec<Vec<f64>> = masses
        .iter()
        .enumerate()
        .map(|(n, m)| vec![n as f64, *m])
        .collect();
    write_csv(&outdir.join("mass_history.csv"), &["time_index", "total_mass"], &mass_rows)
        .map_err(Failure::config)?;

    let min_rho = traj
        .states
        .iter()
        .map(|s| s.rho.min())
        .fold(f64::INFINITY, f64::min);
    let residual_gate = 10.0 * cfg.scheme_config().picard_tol * (ledger.e0 + 1.0);
    let max_res = ledger.max_abs_residual();
    let min_d = ledger.min_dissipation();
    let has_sources = matches!(cfg.initial, crflow::config::InitialSpec::Manufactured);

    println!(
        "run: {} steps, {} cells, min density {:.3e}",
        traj.states.len() - 1,
        mesh.n_cells(),
        min_rho
    );
    println!(
        "energy identity residual {:.3e} (gate {:.3e}); min dissipation {:.3e}; mass drift {:.3e}",
        max_res, residual_gate, min_d, drift
    );

    if min_rho <= 0.0 {
        return Err(Failure::gate(format!("nonpositive density {min_rho:.3e}")));
    }
    if max_res > residual_gate {
        return Err(Failure::gate(format!(
            "energy identity residual {max_res:.3e} exceeds {residual_gate:.3e}"
        )));
    }
    if min_d < -1e-14 {
        return Err(Failure::gate(format!("negative dissipation term {min_d:.3e}")));
    }
    if !has_sources && drift > 1e-12 {
        return Err(Failure::gate(format!("relative mass drift {drift:.3e} > 1e-12")));
    }
    Ok(())
}

fn cmd_convergence(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), Failure> {
    cfg.require_levels(3).map_err(Failure::config)?;
    let physics = cfg.physics().map_err(Failure::config)?;
    let ms = ManufacturedSolution::default();
    let sources = ms.sources(&physics.law, physics.visc);

    let mut rows = Vec::new();
    let mut ln_h = Vec::new();
    let mut ln_e = Vec::new();
    println!(
        "{:>5} {:>10} {:>10} {:>14} {:>14} {:>10}",
        "level", "h", "dt", "max_rel_energy", "broken_h1", "c_fit"
    );
    for level in 0..cfg.levels {
        let nx = 8usize << level;
        let mesh = Arc::new(
            structured_triangulation(nx, nx, Rect::UNIT).map_err(Failure::config)?,
        );
        let h = mesh.quality().h;
        let dt = cfg.time.dt / ((1usize << (2 * level)) as f64);
        let state0 = project_initial_data(
            mesh.clone(),
            |p| ms.r(0.0, p),
            |p| ms.u(0.0, p),
        )
        .map_err(Failure::config)?;
        let mut sc = cfg.scheme_config();
        sc.dt = dt;
        let traj = run_simulation(&state0, &physics, &sc, &sources).map_err(Failure::solver)?;
        if let Some(reason) = &traj.failure {
            return Err(Failure::solver(reason));
        }
        let err = error_vs_strong(&traj, &physics.law, |t, p| ms.r(t, p), |t, p| ms.u(t, p))
            .map_err(Failure::solver)?;
        let bounds = uniform_bound_monitors(&traj, &physics.law);
        let grad = err.grad_error_sq.sqrt();
        // stability constant of the a-priori bound: error against the
        // predicted budget E_init + h + sqrt(dt)
        let c_fit = err.max_rel_energy / (err.rel_energy[0] + h + dt.sqrt());
        println!(
            "{:>5} {:>10.4e} {:>10.4e} {:>14.6e} {:>14.6e} {:>10.4}",
            level, h, dt, err.max_rel_energy, grad, c_fit
        );
        ln_h.push(h.ln());
        ln_e.push(err.max_rel_energy.ln());
        rows.push(vec![
            level as f64,
            h,
            dt,
            err.max_rel_energy,
            grad,
            c_fit,
            bounds.u_l2_vh,
            bounds.rho_linf_lgamma,
        ]);
    }
    let order = fit_slope(&ln_h, &ln_e);
    println!("fitted order of max_m relative energy in h: {order:.3}");
    write_csv(
        &outdir.join("convergence.csv"),
        &[
            "level",
            "h",
            "dt",
            "max_rel_energy",
            "broken_h1",
            "c_fit",
            "u_l2_vh",
            "rho_linf_lgamma",
        ],
        &rows,
    )
    .map_err(Failure::config)?;
    Ok(())
}

fn probe_csv(outdir: &Path, report: &ProbeReport) -> Result<(), Failure> {
    let rows: Vec<Vec<f64>> = report
        .levels
        .iter()
        .map(|l| vec![l.level as f64, l.h, l.theta, l.max_ratio])
        .collect();
    write_csv(
        &outdir.join(format!("{}.csv", report.id)),
        &["level", "h", "theta", "max_ratio"],
        &rows,
    )
    .map_err(Failure::config)
}

fn cmd_verify_inequalities(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), Failure> {
    cfg.require_levels(3).map_err(Failure::config)?;
    let (levels, samples, seed) = (cfg.levels, 50, cfg.seed);

    let reports = vec![
        probe_sobolev_vh(levels, samples, 4.0, seed),
        probe_jump_bound(levels, samples, seed),
        probe_norm_equivalence(levels, samples, seed),
        probe_poincare(levels, samples, seed),
    ];
    let proj = probe_projection_orders(levels);

    let mut band_ok = true;
    for r in reports.iter().chain(std::iter::once(&proj.stability)) {
        probe_csv(outdir, r)?;
        let ok = r.slope.abs() <= 0.15;
        band_ok &= ok;
        println!(
            "{:<22} slope {:>7.3}  ratios [{:.4e}, {:.4e}]  {}",
            r.id,
            r.slope,
            r.levels
                .iter()
                .map(|l| l.max_ratio)
                .fold(f64::INFINITY, f64::min),
            r.levels.iter().map(|l| l.max_ratio).fold(0.0, f64::max),
            if ok { "ok" } else { "OUT OF BAND" }
        );
    }
    let l2_ok = (proj.l2_order - 2.0).abs() <= 0.2;
    let grad_ok = (proj.grad_order - 1.0).abs() <= 0.2;
    println!(
        "projection orders: value {:.3} (target 2), gradient {:.3} (target 1) {}",
        proj.l2_order,
        proj.grad_order,
        if l2_ok && grad_ok { "ok" } else { "OUT OF BAND" }
    );
    if !(band_ok && l2_ok && grad_ok) {
        return Err(Failure::gate("probe trend outside tolerance band"));
    }
    Ok(())
}
