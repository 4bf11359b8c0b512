use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vaclab::harness::{self, LabConfig, ERROR_ENERGY_NOTE};
use vaclab::spectral::FormKind;

#[derive(Parser)]
#[command(name = "vaclab", version, about = "Vector Allen-Cahn numerical laboratory")]
struct Cli {
    /// Flat key = value config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config; default ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the heteroclinic profile ρ₀, ρ₀′, η₁ and F.
    Profile {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        zmax: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
        /// Table CSV (default <out-dir>/profile.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the diffuse-interface solver.
    Simulate,
    /// Run the sharp-interface solver.
    Sharp,
    /// PDE residual of the approximate solution over the ε list.
    ExpansionResidual,
    /// Jump identity, telescoping and solvability checks at the interface.
    CompatCheck,
    /// Lowest-eigenvalue sweep of a linearized form.
    Spectrum {
        #[arg(long)]
        form: Option<String>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// Comma-separated, strictly decreasing.
        #[arg(long)]
        eps_list: Option<String>,
        /// Uniform mesh size instead of the graded default.
        #[arg(long)]
        nodes: Option<usize>,
        /// Report CSV (default <out-dir>/spectrum_<form>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diffuse vs sharp convergence study over the ε list.
    Converge,
    /// Summarize the CSV files in the output directory.
    Report,
}

fn set(cfg: &mut LabConfig, key: &str, value: Option<String>) -> Result<()> {
    if let Some(v) = value {
        cfg.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => LabConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => LabConfig::default(),
    };
    if cli.out_dir.is_some() {
        cfg.out_dir = cli.out_dir.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(k) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Profile { a, b, zmax, nodes, out: path } => {
            set(&mut cfg, "a", a.map(|x| x.to_string()))?;
            set(&mut cfg, "b", b.map(|x| x.to_string()))?;
            set(&mut cfg, "z_max", zmax.map(|x| x.to_string()))?;
            set(&mut cfg, "table_nodes", nodes.map(|x| x.to_string()))?;
            let path = path.unwrap_or_else(|| out.join("profile.csv"));
            let table = harness::cmd_profile(&cfg, &path)?;
            let (rp, rm) = table.decay_rate_fit();
            println!("wrote {} ({} nodes)", path.display(), table.len());
            println!("rho0(0) = {:.12}  e = {:.12} (closed form {:.12})", table.rho0[table.center_index()], table.e_const.quadrature, table.e_const.closed_form);
            println!("decay rates: {rp:.6} (+), {rm:.6} (-)");
        }
        Command::Simulate => {
            let traj = harness::cmd_simulate(&cfg, &out)?;
            println!(
                "{} steps to t = {}, stability c = {:.6e}, energy {:.10e} -> {:.10e}, energy increases: {}",
                traj.steps,
                traj.final_time,
                traj.stability,
                traj.energies.first().copied().unwrap_or(f64::NAN),
                traj.energies.last().copied().unwrap_or(f64::NAN),
                traj.energy_violations(1e-9)
            );
            println!("wrote {}", out.join("metrics.csv").display());
        }
        Command::Sharp => {
            let traj = harness::cmd_sharp(&cfg, &out)?;
            let last = traj.rows.last().expect("at least the initial row");
            println!("t = {}  R = {:.10}  phi_gamma = {:.10}", last.t, last.radius, last.phi_gamma);
            println!("max jump residual {:.3e}, max |omega| defect {:.3e}", traj.max_jump_residual, traj.max_norm_defect);
            if let Some(t) = traj.extinct_at {
                println!("interface extinct at t = {t}");
            }
            println!("wrote {}", out.join("sharp_metrics.csv").display());
        }
        Command::ExpansionResidual => {
            let (rows, slope) = harness::cmd_expansion_residual(&cfg, &out)?;
            for r in &rows {
                println!("eps = {:<8} sup residual = {:.6e} at r = {:.6}", r.eps, r.sup, r.argmax);
            }
            if let Some(s) = slope {
                println!("log-log slope {s:.4}");
            }
        }
        Command::CompatCheck => {
            let s = harness::cmd_compat_check(&cfg, &out)?;
            println!("jump identity deviation  {:.3e}", s.jump_deviation);
            println!("telescoping deviation    {:.3e}", s.telescoping_deviation);
            println!("e = {:.12}, solvability residual {:.3e}", s.e, s.compat_residual);
        }
        Command::Spectrum { form, a, b, eps_list, nodes, out: path } => {
            set(&mut cfg, "form", form)?;
            set(&mut cfg, "a", a.map(|x| x.to_string()))?;
            set(&mut cfg, "b", b.map(|x| x.to_string()))?;
            set(&mut cfg, "eps_list", eps_list)?;
            set(&mut cfg, "spectral_nodes", nodes.map(|x| x.to_string()))?;
            let path = path.unwrap_or_else(|| out.join(format!("spectrum_{}.csv", cfg.form.name())));
            let rep = harness::cmd_spectrum(&cfg, &path)?;
            for r in &rep.reports {
                println!("eps = {:<8} nodes = {:<6} lambda_min = {:+.6e}  residual = {:.1e}", r.eps, r.nodes, r.lambda_min, r.residual);
            }
            println!("C_cfg = {}  verdict: {}", rep.c_cfg, if rep.verdict { "uniform" } else { "NOT uniform" });
            println!("wrote {}", path.display());
            if cfg.form == FormKind::Vector {
                let worst = rep.reports.iter().map(|r| r.localization).fold(1.0, f64::min);
                println!("eigenvector mass within 10 eps of the interface: >= {worst:.4}");
            }
        }
        Command::Converge => {
            let rep = harness::converge(&cfg)?;
            rep.write(&out)?;
            println!("sharp interface at t = {}: {:.10}", cfg.probe_time, rep.sharp_interface);
            println!("{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9}", "eps", "interface", "modulus+", "modulus-", "director", "jump", "E-incr");
            for (r, run) in rep.rows.iter().zip(&rep.runs) {
                println!(
                    "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
                    r.eps, r.interface_error, r.bulk_modulus_error_plus, r.bulk_modulus_error_minus, r.director_error, r.jump_mismatch, run.energy_violations
                );
            }
            if !rep.modulus_ratios.is_empty() {
                println!("modulus error ratios per step: {:?}", rep.modulus_ratios);
            }
            println!("note: {ERROR_ENERGY_NOTE}");
            println!("wrote {}", out.join("convergence.csv").display());
        }
        Command::Report => {
            let s = harness::report(&out, &cfg.hash())?;
            println!("summarized {} files into {}", s.files.len(), Path::new(&out).join("summary.json").display());
        }
    }
    Ok(())
}
