//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::collision::OperatorForm;
use crate::config::{parse_config, SimConfig};
use crate::diagnostics::{energy_budget_residual, kz_exponent_scan};
use crate::error::{Error, Result};
use crate::evolution::{run_with, Stepper};
use crate::geometry::{
    gain_weight, loss_weight, oracle_comparison, solve_s, OracleSettings, ReducedWeightTable,
    SurfaceKind,
};
use crate::io::{fmt_f64, sha256_hex, write_moments, write_snapshot, CsvWriter, Manifest};

#[derive(Debug, Parser)]
#[command(name = "capwave", version, about = "Radial three-wave kinetic equation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the kinetic equation and write snapshots and moments.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Dump the gain surface profile and reduced weight tables.
    Geometry {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 101)]
        alphas: usize,
        #[arg(long, default_value_t = 32)]
        panels: usize,
        #[arg(long, default_value_t = 8)]
        order: usize,
        /// Loss table truncated at `u <= loss_cutoff * p`.
        #[arg(long, default_value_t = 4.0)]
        loss_cutoff: f64,
    },
    /// Stationarity residual of `k^-x` over a range of exponents.
    KzScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Lower edge of the scoring band (default: a decade above k_min).
        #[arg(long)]
        band_lo: Option<f64>,
        /// Upper edge of the scoring band (default: a decade below k_max).
        #[arg(long)]
        band_hi: Option<f64>,
    },
    /// Compare reduced surface quadrature with the Monte Carlo oracle.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20_000_000)]
        samples: u64,
        /// Smearing width relative to E(p).
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        p: Vec<f64>,
        #[arg(long, default_value_t = 4.0)]
        loss_cutoff: f64,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Geometry { common, .. }
            | Command::KzScan { common, .. }
            | Command::Oracle { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Geometry { .. } => "geometry",
            Command::KzScan { .. } => "kz-scan",
            Command::Oracle { .. } => "oracle",
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Context {
    cfg: SimConfig,
    hash: String,
    dir: PathBuf,
    base: PathBuf,
}

fn execute(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let text = fs::read_to_string(&common.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let dir = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    fs::create_dir_all(&dir)?;
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let ctx = Context {
        hash: sha256_hex(text.as_bytes()),
        cfg,
        dir,
        base,
    };
    let mut manifest = Manifest::new(cmd.name(), &ctx.hash, ctx.cfg.seed);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument {
        what: "threads",
        reason: e.to_string(),
    })?;

    let result = pool.install(|| match cmd {
        Command::Simulate { .. } => simulate(&ctx, &mut manifest),
        Command::Geometry {
            p,
            alphas,
            panels,
            order,
            loss_cutoff,
            ..
        } => geometry(&ctx, &mut manifest, *p, *alphas, *panels, *order, *loss_cutoff),
        Command::KzScan {
            from,
            to,
            steps,
            band_lo,
            band_hi,
            ..
        } => kz_scan(&ctx, &mut manifest, *from, *to, *steps, *band_lo, *band_hi),
        Command::Oracle {
            samples,
            epsilon,
            p,
            loss_cutoff,
            ..
        } => oracle(&ctx, &mut manifest, *samples, *epsilon, p, *loss_cutoff),
    });
    manifest.complete = result.is_ok();
    manifest.error = result.as_ref().err().map(|e| e.to_string());
    manifest.write(&ctx.dir)?;
    result
}

fn simulate(ctx: &Context, manifest: &mut Manifest) -> Result<()> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let op = cfg.operator(grid.clone())?;
    info!(
        "triad table: {} gain + {} loss entries",
        op.table.gain().len(),
        op.table.loss().len()
    );
    let params = cfg.physics()?;
    let stepper = Stepper::new(op, params, cfg.scheme())?;
    let initial = cfg.initial_spectrum(grid, &ctx.base)?;
    let mut index = 0usize;
    let traj = run_with(&stepper, initial, &cfg.output_plan(), &cfg.monitor(), |s| {
        let path = ctx.dir.join(format!("snapshot_{index:04}.csv"));
        write_snapshot(&path, s, &ctx.hash)?;
        manifest.add(&path);
        index += 1;
        Ok(())
    })?;
    let path = write_moments(&ctx.dir.join("moments.csv"), &traj.moments, &ctx.hash)?;
    manifest.add(&path);

    match energy_budget_residual(&traj.moments, params.nu, params.rho) {
        Ok(res) => {
            let header = [
                ("kind", "energy_budget".to_string()),
                ("config_hash", ctx.hash.clone()),
            ];
            let mut w = CsvWriter::create(&ctx.dir.join("budget.csv"), &header, &["time", "residual"])?;
            for (t, r) in res {
                w.row(&[t, r])?;
            }
            manifest.add(&w.finish()?);
        }
        Err(e) => warn!("energy budget not written: {e}"),
    }
    if !traj.breaches.is_empty() {
        let header = [("kind", "monitor_breaches".to_string())];
        let mut w = CsvWriter::create(
            &ctx.dir.join("breaches.csv"),
            &header,
            &["time", "exponent", "value", "threshold", "monitor"],
        )?;
        for b in &traj.breaches {
            w.row_mixed(&[b.time, b.exponent, b.value, b.threshold], &[b.monitor])?;
        }
        manifest.add(&w.finish()?);
    }
    info!(
        "done: {} substeps, {} rejected, clipped mass {:e}, min f {:e}",
        traj.substeps, traj.rejected_steps, traj.clipped_mass, traj.min_f
    );
    Ok(())
}

fn geometry(
    ctx: &Context,
    manifest: &mut Manifest,
    p: f64,
    alphas: usize,
    panels: usize,
    order: usize,
    loss_cutoff: f64,
) -> Result<()> {
    let law = ctx.cfg.law()?;
    let alphas = alphas.max(2);
    let header = [
        ("kind", "gain_surface".to_string()),
        ("config_hash", ctx.hash.clone()),
        ("p", fmt_f64(p)),
    ];
    let mut w = CsvWriter::create(&ctx.dir.join("surface.csv"), &header, &["alpha", "axial", "s"])?;
    for i in 0..alphas {
        let alpha = i as f64 / (alphas - 1) as f64;
        let s = solve_s(&law, alpha, p)?;
        w.row(&[alpha, alpha * p, s])?;
    }
    manifest.add(&w.finish()?);

    let gain = ReducedWeightTable::gain(&law, p, panels, order)?;
    let loss = ReducedWeightTable::loss(&law, p, loss_cutoff * p, panels, order)?;
    for (name, table) in [("gain_weights.csv", &gain), ("loss_weights.csv", &loss)] {
        let header = [
            ("kind", format!("{}_weights", table.kind.name())),
            ("config_hash", ctx.hash.clone()),
            ("p", fmt_f64(p)),
            ("angular_factor", fmt_f64(table.angular_factor)),
            ("area", fmt_f64(table.area())),
        ];
        let mut w = CsvWriter::create(&ctx.dir.join(name), &header, &["u", "density", "quad_weight"])?;
        for &(u, qw) in &table.nodes {
            let density = match table.kind {
                SurfaceKind::Gain => gain_weight(&law, u, p)?,
                SurfaceKind::Loss => loss_weight(&law, u, p)?,
            };
            w.row(&[u, density.value().unwrap_or(f64::INFINITY), qw])?;
        }
        manifest.add(&w.finish()?);
    }
    Ok(())
}

fn kz_scan(
    ctx: &Context,
    manifest: &mut Manifest,
    from: f64,
    to: f64,
    steps: usize,
    band_lo: Option<f64>,
    band_hi: Option<f64>,
) -> Result<()> {
    if steps < 3 || !(to > from) {
        return Err(Error::InvalidArgument {
            what: "scan range",
            reason: format!("need from < to and at least 3 steps, got [{from}, {to}] in {steps}"),
        });
    }
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let mut op = cfg.operator(grid.clone())?;
    op.form = OperatorForm::Direct;
    op.closed = false;
    let band = (
        band_lo.unwrap_or(10.0 * grid.k_min()),
        band_hi.unwrap_or(grid.k_max() / 10.0),
    );
    let xs: Vec<f64> = (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect();
    let scan = kz_exponent_scan(&op, &xs, band)?;
    let header = [
        ("kind", "kz_scan".to_string()),
        ("config_hash", ctx.hash.clone()),
        ("band_lo", fmt_f64(band.0)),
        ("band_hi", fmt_f64(band.1)),
        ("argmin_refined", fmt_f64(scan.argmin)),
    ];
    let mut w = CsvWriter::create(
        &ctx.dir.join("kz_scan.csv"),
        &header,
        &["exponent", "residual", "is_argmin"],
    )?;
    for (i, &(x, r)) in scan.curve.iter().enumerate() {
        w.row_mixed(&[x, r], &[if i == scan.argmin_index { "1" } else { "0" }])?;
    }
    manifest.add(&w.finish()?);
    info!("residual minimized at exponent {:.6}", scan.argmin);
    Ok(())
}

fn oracle(
    ctx: &Context,
    manifest: &mut Manifest,
    samples: u64,
    epsilon: f64,
    ps: &[f64],
    loss_cutoff: f64,
) -> Result<()> {
    let law = ctx.cfg.law()?;
    let header = [
        ("kind", "oracle".to_string()),
        ("config_hash", ctx.hash.clone()),
        ("dim", law.dim().as_u8().to_string()),
        ("samples", samples.to_string()),
        ("epsilon_rel", fmt_f64(epsilon)),
        ("seed", ctx.cfg.seed.to_string()),
    ];
    let mut w = CsvWriter::create(
        &ctx.dir.join("oracle.csv"),
        &header,
        &["p", "reduced", "mc", "std_error", "rel_error", "z", "surface", "test_fn", "pass"],
    )?;
    let mut failures = 0;
    for &p in ps {
        for kind in [SurfaceKind::Gain, SurfaceKind::Loss] {
            let settings = OracleSettings {
                epsilon: epsilon * law.energy(p)?,
                n_samples: samples,
                seed: ctx.cfg.seed,
                support: None,
            };
            for c in oracle_comparison(&law, p, kind, &settings, loss_cutoff)? {
                let pass = c.rel_error() <= 0.02 && c.z_score() <= 3.0;
                failures += usize::from(!pass);
                w.row_mixed(
                    &[p, c.reduced, c.mc.value, c.mc.std_error, c.rel_error(), c.z_score()],
                    &[kind.name(), c.test_fn, if pass { "1" } else { "0" }],
                )?;
            }
        }
    }
    manifest.add(&w.finish()?);
    if failures > 0 {
        warn!("{failures} oracle comparisons outside 2% / 3 standard errors");
    }
    Ok(())
}
