//! Command-line runner: declarative experiment configs in, CSV/JSON/SVG
//! artifacts out.
//!
//! Exit codes: 0 success, 2 config parse/validation error, 3 Fock truncation
//! overflow, 4 integration failure, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use cqed::analysis::{
    fit_exponential_decay_from, rotate_frame, sweep, trace_distance_series, write_csv,
    write_svg_lines, SvgSeries,
};
use cqed::config::{
    DerivedQuantities, ExperimentConfig, InitialCavity, InitialQubit, ModelKind, SCHEMA_VERSION,
};
use cqed::error::CqedError;
use cqed::lindblad::{
    auto_fock_levels, build_dispersive_engine, build_full_engine, integrate_engine, Engine,
    EvolveOptions,
};
use cqed::ode::OdeOptions;
use cqed::operators::{
    coherent_amplitudes, product_state, BlochVector, HilbertDims, QubitState, C64, ONE, ZERO,
};
use cqed::params::SystemParams;
use cqed::reduced::{
    effective_temperature, gamma_eff, integrate_reduced, pointer_steady_state, pointer_warnings,
    reduced_rates, sz_steady, sz_steady_bare, ModelTier, PointerPair, ReducedOptions,
};
use cqed::trajectories::{
    detect_jumps, measurement_rates, optimal_phase, run_full_trajectories,
    run_reduced_trajectories, snr, HomodyneConfig, TrajectoryRecord,
};

#[derive(Parser)]
#[command(
    name = "cqed",
    about = "Driven dispersive cavity-qubit simulations: master equations, \
             reduced models, and homodyne trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to $CQED_OUTPUT_ROOT/<name> or ./out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Also emit SVG plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model and write its time series.
    Run(CommonArgs),
    /// Parse the config, print derived quantities and warnings; run nothing.
    Validate(CommonArgs),
    /// Sweep the drive amplitude and tabulate per-point outputs.
    Sweep(CommonArgs),
    /// Generate an ensemble of homodyne trajectories.
    Trajectories(CommonArgs),
    /// Run two model tiers and tabulate their qubit trace distance.
    Compare(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match &cli.command {
        Command::Run(a) => ("run", a),
        Command::Validate(a) => ("validate", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Trajectories(a) => ("trajectories", a),
        Command::Compare(a) => ("compare", a),
    };
    match dispatch(verb, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CqedError::Config(_) | CqedError::InvalidInput(_) => 2,
                CqedError::TruncationOverflow(_) => 3,
                CqedError::SolverFailure(_) | CqedError::NonConvergence { .. } => 4,
                _ => 1,
            })
        }
    }
}

fn dispatch(verb: &str, args: &CommonArgs) -> Result<(), CqedError> {
    if let Some(n) = args.workers {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if verb == "validate" {
        return validate(&cfg);
    }
    let out_dir = resolve_out_dir(args, &cfg)?;
    let ctx = Context::prepare(&cfg)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut extra = serde_json::Map::new();
    match verb {
        "run" => cmd_run(&cfg, &ctx, &out_dir, args.svg, &mut outputs, &mut extra)?,
        "sweep" => cmd_sweep(&cfg, &ctx, &out_dir, args.svg, &mut outputs, &mut extra)?,
        "trajectories" => cmd_trajectories(&cfg, &ctx, &out_dir, args.svg, &mut outputs, &mut extra)?,
        "compare" => cmd_compare(&cfg, &ctx, &out_dir, args.svg, &mut outputs, &mut extra)?,
        _ => unreachable!(),
    }
    write_manifest(verb, &cfg, &ctx, &out_dir, &outputs, extra)?;
    println!("wrote {} artifact(s) to {}", outputs.len() + 1, out_dir.display());
    Ok(())
}

fn resolve_out_dir(args: &CommonArgs, cfg: &ExperimentConfig) -> Result<PathBuf, CqedError> {
    let dir = match &args.out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var("CQED_OUTPUT_ROOT").unwrap_or_else(|_| "out".into());
            Path::new(&root).join(&cfg.name)
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Everything derivable from the config before any integration runs.
struct Context {
    sys: SystemParams,
    derived: DerivedQuantities,
    /// Nonlinear-tier steady pointer pair at the peak drive (α = 0 undriven).
    steady: PointerPair,
    fock_levels: usize,
    warnings: Vec<String>,
}

impl Context {
    fn prepare(cfg: &ExperimentConfig) -> Result<Self, CqedError> {
        let sys = cfg.system_params()?;
        let derived = DerivedQuantities::from_system(&sys);
        let opts = ReducedOptions::default();
        let steady = pointer_steady_state(&sys, &opts)?;
        let fock_levels = match cfg.run.fock_levels {
            Some(n) => n,
            None => auto_fock_levels(steady.n_e().max(steady.n_g()), 10.0),
        };
        let mut warnings = sys.regime_warnings();
        warnings.extend(pointer_warnings(&steady, &sys));
        Ok(Context {
            sys,
            derived,
            steady,
            fock_levels,
            warnings,
        })
    }

    fn dims(&self) -> Result<HilbertDims, CqedError> {
        HilbertDims::new(self.fock_levels)
    }

    fn initial_qubit(&self, which: InitialQubit) -> QubitState {
        let h = C64::new(0.5, 0.0);
        match which {
            InitialQubit::Ground => QubitState::new(ONE, ZERO, ZERO, ZERO),
            InitialQubit::Excited => QubitState::new(ZERO, ZERO, ZERO, ONE),
            InitialQubit::PlusX => QubitState::new(h, h, h, h),
        }
    }

    fn initial_pointer(&self, cavity: InitialCavity) -> PointerPair {
        match cavity {
            InitialCavity::Vacuum => PointerPair::ZERO,
            InitialCavity::Steady => self.steady,
        }
    }

    /// Full/dispersive initial state: qubit ⊗ coherent state at the pointer
    /// amplitude of the initial qubit branch (vacuum if undriven).
    fn initial_dense(
        &self,
        dims: HilbertDims,
        qubit: InitialQubit,
        cavity: InitialCavity,
    ) -> cqed::operators::DenseOperator {
        let alpha = match cavity {
            InitialCavity::Vacuum => ZERO,
            InitialCavity::Steady => match qubit {
                InitialQubit::Excited => self.steady.alpha_e,
                _ => self.steady.alpha_g,
            },
        };
        let amps = coherent_amplitudes(dims, alpha);
        product_state(dims, &self.initial_qubit(qubit), &amps)
    }

    fn reduced_options(&self, model: ModelKind) -> ReducedOptions {
        ReducedOptions {
            tier: if model == ModelKind::ReducedLinear {
                ModelTier::Linear
            } else {
                ModelTier::Nonlinear
            },
            appendix_frequency_variant: false,
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CqedError> {
    let ctx = Context::prepare(cfg)?;
    let d = &ctx.derived;
    println!("config OK: {} (schema v{SCHEMA_VERSION})", cfg.name);
    println!("  lambda        = {:.6}", d.lambda);
    println!("  chi/2pi       = {:.4} MHz", d.chi_over_2pi_mhz);
    println!("  zeta/2pi      = {:.3e} MHz", d.zeta_over_2pi_mhz);
    println!("  n_crit        = {:.1}", d.n_crit);
    println!("  n_kappa       = {:.1}", d.n_kappa);
    println!("  fock levels   = {}", ctx.fock_levels);
    println!(
        "  steady pointer populations: n_e = {:.2}, n_g = {:.2}",
        ctx.steady.n_e(),
        ctx.steady.n_g()
    );
    if ctx.warnings.is_empty() {
        println!("  no regime warnings");
    } else {
        for w in &ctx.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}

/// A model run reduced to what comparisons and plots need.
struct RunOutput {
    times: Vec<f64>,
    bloch: Vec<BlochVector>,
    /// ⟨a†a⟩ when the model tracks the cavity.
    n_photon: Option<Vec<f64>>,
}

fn build_engine(
    model: ModelKind,
    dims: HilbertDims,
    sys: &SystemParams,
) -> Result<Engine, CqedError> {
    match model {
        ModelKind::Full => build_full_engine(dims, sys),
        ModelKind::Dispersive => build_dispersive_engine(dims, sys),
        _ => Err(CqedError::InvalidInput(format!(
            "model '{}' is not an engine tier",
            model.tag()
        ))),
    }
}

/// Run a deterministic model tier. All outputs use the engines' rotating
/// frame; reduced-model coherences are rotated into it for comparability.
fn run_model(
    cfg: &ExperimentConfig,
    ctx: &Context,
    model: ModelKind,
    t_grid: &[f64],
) -> Result<RunOutput, CqedError> {
    match model {
        ModelKind::Full | ModelKind::Dispersive => {
            let dims = ctx.dims()?;
            let engine = build_engine(model, dims, &ctx.sys)?;
            let rho0 = ctx.initial_dense(dims, cfg.run.initial_qubit, cfg.run.initial_cavity);
            let rho0 = engine.prepare_initial(&rho0)?;
            let res = integrate_engine(&engine, &rho0, t_grid, &EvolveOptions::default())?;
            let bloch = res
                .sx
                .iter()
                .zip(&res.sy)
                .zip(&res.sz)
                .map(|((&x, &y), &z)| BlochVector { x, y, z })
                .collect();
            Ok(RunOutput {
                times: res.times,
                bloch,
                n_photon: Some(res.n_photon),
            })
        }
        ModelKind::ReducedNonlinear | ModelKind::ReducedLinear => {
            let opts = ctx.reduced_options(model);
            let rho0 = ctx.initial_qubit(cfg.run.initial_qubit);
            let pointer0 = ctx.initial_pointer(cfg.run.initial_cavity);
            let res = integrate_reduced(&ctx.sys, &opts, &rho0, &pointer0, t_grid, &OdeOptions::default())?;
            let bloch: Vec<BlochVector> = res
                .sx
                .iter()
                .zip(&res.sy)
                .zip(&res.sz)
                .map(|((&x, &y), &z)| BlochVector { x, y, z })
                .collect();
            // Align with the engine frame rotating at ω_a + χ.
            let chi = ctx.sys.dispersive().chi;
            let bloch = rotate_frame(&res.times, &bloch, ctx.sys.omega_a + chi);
            let n: Vec<f64> = res.pointer.iter().map(|p| p.n_bar()).collect();
            Ok(RunOutput {
                times: res.times,
                bloch,
                n_photon: Some(n),
            })
        }
        _ => Err(CqedError::InvalidInput(format!(
            "model '{}' requires the `trajectories` subcommand",
            model.tag()
        ))),
    }
}

fn cmd_run(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out_dir: &Path,
    svg: bool,
    outputs: &mut Vec<String>,
    _extra: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CqedError> {
    if matches!(cfg.run.model, ModelKind::QteFull | ModelKind::QteReduced) {
        return Err(CqedError::InvalidInput(
            "trajectory models run via the `trajectories` subcommand".into(),
        ));
    }
    let t_grid = cfg.time_grid();
    let res = run_model(cfg, ctx, cfg.run.model, &t_grid)?;
    let sx: Vec<f64> = res.bloch.iter().map(|b| b.x).collect();
    let sy: Vec<f64> = res.bloch.iter().map(|b| b.y).collect();
    let sz: Vec<f64> = res.bloch.iter().map(|b| b.z).collect();
    let n = res.n_photon.unwrap_or_else(|| vec![f64::NAN; t_grid.len()]);
    let csv = out_dir.join(format!("{}_timeseries.csv", cfg.name));
    write_csv(
        &csv,
        &[
            ("time_us", &res.times),
            ("sx", &sx),
            ("sy", &sy),
            ("sz", &sz),
            ("n_photon", &n),
        ],
    )?;
    outputs.push(file_name(&csv));
    if svg {
        let plot = out_dir.join(format!("{}_timeseries.svg", cfg.name));
        write_svg_lines(
            &plot,
            &cfg.name,
            "time (µs)",
            "expectation value",
            &[
                SvgSeries { label: "<sz>", x: &res.times, y: &sz },
                SvgSeries { label: "<a+a>/max", x: &res.times, y: &normalized(&n) },
            ],
        )?;
        outputs.push(file_name(&plot));
    }
    Ok(())
}

fn cmd_sweep(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out_dir: &Path,
    svg: bool,
    outputs: &mut Vec<String>,
    extra: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CqedError> {
    let sweep_cfg = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CqedError::Config("`sweep` subcommand needs a [sweep] section".into()))?;
    let axis = sweep_cfg.axis()?;
    let model = cfg.run.model;
    let result = match model {
        ModelKind::ReducedNonlinear | ModelKind::ReducedLinear => {
            let opts = ctx.reduced_options(model);
            let lambda = ctx.sys.dispersive().lambda;
            let columns = [
                "n_e", "n_g", "gamma_down", "gamma_up", "gamma_phi_eff", "Gamma_d", "omega_a_D",
                "sz_steady", "sz_steady_bare", "gamma_eff", "T_eff",
            ];
            sweep(model.tag(), cfg.run.seed, &axis, &columns, |eps_mhz| {
                let sys = with_drive_amplitude(&ctx.sys, eps_mhz);
                let pair = pointer_steady_state(&sys, &opts)?;
                let eps = drive_phasor(&sys);
                let rates = reduced_rates(&pair, &sys, eps, &opts)?;
                let szs = sz_steady(&rates)?;
                let szb = sz_steady_bare(&rates, &pair, lambda)?;
                let p_e = (1.0 + szs) / 2.0;
                let n_bar = p_e * rates.n_e + (1.0 - p_e) * rates.n_g;
                Ok(vec![
                    rates.n_e,
                    rates.n_g,
                    rates.gamma_down,
                    rates.gamma_up,
                    rates.gamma_phi_eff,
                    rates.gamma_d,
                    rates.omega_a_d,
                    szs,
                    szb,
                    gamma_eff(&rates),
                    effective_temperature(n_bar),
                ])
            })?
        }
        ModelKind::Full | ModelKind::Dispersive => {
            let columns = ["n_steady", "gamma_eff_fit", "sz_offset_fit", "fit_residual_rms"];
            let t_grid = cfg.time_grid();
            sweep(model.tag(), cfg.run.seed, &axis, &columns, |eps_mhz| {
                let sys = with_drive_amplitude(&ctx.sys, eps_mhz);
                let point_cfg = cfg.clone();
                let ctx_pt = context_for(&point_cfg, sys)?;
                let res = run_model(&point_cfg, &ctx_pt, model, &t_grid)?;
                let sz: Vec<f64> = res.bloch.iter().map(|b| b.z).collect();
                let n_last = res.n_photon.as_ref().map(|n| n[n.len() - 1]).unwrap_or(f64::NAN);
                let fit = fit_exponential_decay_from(&res.times, &sz, 0.0)?;
                Ok(vec![n_last, fit.gamma_eff_fit, fit.sz_offset, fit.residual_rms])
            })?
        }
        _ => {
            return Err(CqedError::InvalidInput(
                "sweeping trajectory models is not supported".into(),
            ))
        }
    };
    let csv = out_dir.join(format!("{}_sweep.csv", cfg.name));
    let mut cols: Vec<(&str, &[f64])> = vec![("epsilon_m_over_2pi_MHz", &result.axis)];
    for (name, vals) in &result.columns {
        cols.push((name.as_str(), vals));
    }
    write_csv(&csv, &cols)?;
    outputs.push(file_name(&csv));
    extra.insert(
        "sweep_failures".into(),
        serde_json::to_value(&result.failures).unwrap(),
    );
    if svg {
        let plot = out_dir.join(format!("{}_sweep.svg", cfg.name));
        let series: Vec<SvgSeries> = result
            .columns
            .iter()
            .filter(|(n, _)| n == "sz_steady" || n == "gamma_eff" || n == "gamma_eff_fit")
            .map(|(n, v)| SvgSeries { label: n, x: &result.axis, y: v })
            .collect();
        if !series.is_empty() {
            write_svg_lines(&plot, &cfg.name, "epsilon_m/2pi (MHz)", "value", &series)?;
            outputs.push(file_name(&plot));
        }
    }
    Ok(())
}

fn cmd_trajectories(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out_dir: &Path,
    svg: bool,
    outputs: &mut Vec<String>,
    extra: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CqedError> {
    let h = cfg.homodyne.as_ref().ok_or_else(|| {
        CqedError::Config("`trajectories` needs a [homodyne] section".into())
    })?;
    let p = ctx.sys.dispersive();
    let phi = h.phi_rad.unwrap_or_else(|| optimal_phase(&ctx.steady, p.n_crit));
    let hcfg = HomodyneConfig {
        phi,
        eta: h.eta,
        dt: h.dt_us,
        seed: cfg.run.seed,
        n_traj: h.n_traj,
    };
    let t_grid = cfg.time_grid();
    let records: Vec<TrajectoryRecord> = match cfg.run.model {
        ModelKind::QteFull => {
            let dims = ctx.dims()?;
            let engine = build_dispersive_engine(dims, &ctx.sys)?;
            let rho0 = ctx.initial_dense(dims, cfg.run.initial_qubit, cfg.run.initial_cavity);
            let rho0 = engine.prepare_initial(&rho0)?;
            run_full_trajectories(&engine, &ctx.sys, &rho0, &hcfg, &t_grid)?
        }
        ModelKind::QteReduced => {
            let opts = ctx.reduced_options(ModelKind::ReducedNonlinear);
            let rho0 = ctx.initial_qubit(cfg.run.initial_qubit);
            let pointer0 = ctx.initial_pointer(cfg.run.initial_cavity);
            run_reduced_trajectories(&ctx.sys, &opts, &rho0, &pointer0, &hcfg, &t_grid)?
        }
        other => {
            return Err(CqedError::InvalidInput(format!(
                "`trajectories` needs a qte_* model, got '{}'",
                other.tag()
            )))
        }
    };

    // Ensemble mean time series.
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&TrajectoryRecord, usize) -> f64| -> Vec<f64> {
        (0..t_grid.len())
            .map(|i| records.iter().map(|r| f(r, i)).sum::<f64>() / n)
            .collect()
    };
    let mean_sz = mean(&|r, i| r.bloch[i].z);
    let mean_sx = mean(&|r, i| r.bloch[i].x);
    let mean_sy = mean(&|r, i| r.bloch[i].y);
    let mean_cur = mean(&|r, i| r.current[i]);
    let csv = out_dir.join(format!("{}_ensemble_mean.csv", cfg.name));
    write_csv(
        &csv,
        &[
            ("time_us", &t_grid),
            ("sx_mean", &mean_sx),
            ("sy_mean", &mean_sy),
            ("sz_mean", &mean_sz),
            ("current_mean", &mean_cur),
        ],
    )?;
    outputs.push(file_name(&csv));

    // Individual trajectories (capped to keep artifact count sane).
    let keep = records.len().min(10);
    for r in records.iter().take(keep) {
        let sz: Vec<f64> = r.bloch.iter().map(|b| b.z).collect();
        let path = out_dir.join(format!("{}_traj_{:03}.csv", cfg.name, r.stream));
        write_csv(
            &path,
            &[("time_us", &r.times), ("sz", &sz), ("current", &r.current)],
        )?;
        outputs.push(file_name(&path));
    }

    // Measurement-rate report at the steady pointer fields.
    let mr = measurement_rates(&ctx.steady, phi, h.eta, ctx.sys.kappa, p.n_crit)?;
    let opts = ReducedOptions::default();
    let eps = drive_phasor(&ctx.sys);
    let rates = reduced_rates(&ctx.steady, &ctx.sys, eps, &opts)?;
    let g_eff = gamma_eff(&rates);
    extra.insert("phi_rad".into(), phi.into());
    extra.insert("Gamma_m".into(), mr.gamma_m.into());
    extra.insert("theta_m".into(), mr.theta_m.into());
    extra.insert("Gamma_ci".into(), mr.gamma_ci.into());
    extra.insert("Gamma_ba".into(), mr.gamma_ba.into());
    if g_eff > 0.0 {
        extra.insert("snr".into(), snr(&mr, g_eff)?.into());
    }
    let jump_counts: Vec<usize> = records
        .iter()
        .map(|r| {
            if r.jumps.is_empty() && mr.gamma_ci > 0.0 {
                let sz: Vec<f64> = r.bloch.iter().map(|b| b.z).collect();
                detect_jumps(&r.times, &sz, mr.gamma_ci).len()
            } else {
                r.jumps.len()
            }
        })
        .collect();
    extra.insert("jump_counts".into(), serde_json::to_value(jump_counts).unwrap());

    if svg {
        let plot = out_dir.join(format!("{}_trajectories.svg", cfg.name));
        let mut series = vec![SvgSeries { label: "<sz> ensemble", x: &t_grid, y: &mean_sz }];
        let first_sz: Vec<f64>;
        if let Some(r) = records.first() {
            first_sz = r.bloch.iter().map(|b| b.z).collect();
            series.push(SvgSeries { label: "<sz> trajectory 0", x: &t_grid, y: &first_sz });
        }
        write_svg_lines(&plot, &cfg.name, "time (µs)", "<sz>", &series)?;
        outputs.push(file_name(&plot));
    }
    Ok(())
}

fn cmd_compare(
    cfg: &ExperimentConfig,
    ctx: &Context,
    out_dir: &Path,
    svg: bool,
    outputs: &mut Vec<String>,
    extra: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CqedError> {
    let cmp = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CqedError::Config("`compare` needs a [compare] section".into()))?;
    let t_grid = cfg.time_grid();
    if let Some(sweep_cfg) = &cfg.sweep {
        // Max trace distance per swept drive amplitude.
        let axis = sweep_cfg.axis()?;
        let result = sweep(
            &format!("{}_vs_{}", cmp.model_a.tag(), cmp.model_b.tag()),
            cfg.run.seed,
            &axis,
            &["max_trace_distance"],
            |eps_mhz| {
                let sys = with_drive_amplitude(&ctx.sys, eps_mhz);
                let point_cfg = cfg.clone();
                let ctx_pt = context_for(&point_cfg, sys)?;
                let a = run_model(&point_cfg, &ctx_pt, cmp.model_a, &t_grid)?;
                let b = run_model(&point_cfg, &ctx_pt, cmp.model_b, &t_grid)?;
                let d = trace_distance_series(&a.times, &a.bloch, &b.times, &b.bloch)?;
                Ok(vec![d.max])
            },
        )?;
        let csv = out_dir.join(format!("{}_distance_sweep.csv", cfg.name));
        write_csv(
            &csv,
            &[
                ("epsilon_m_over_2pi_MHz", &result.axis),
                ("max_trace_distance", &result.columns[0].1),
            ],
        )?;
        outputs.push(file_name(&csv));
        extra.insert(
            "sweep_failures".into(),
            serde_json::to_value(&result.failures).unwrap(),
        );
        if svg {
            let plot = out_dir.join(format!("{}_distance_sweep.svg", cfg.name));
            write_svg_lines(
                &plot,
                &cfg.name,
                "epsilon_m/2pi (MHz)",
                "max trace distance",
                &[SvgSeries {
                    label: "max distance",
                    x: &result.axis,
                    y: &result.columns[0].1,
                }],
            )?;
            outputs.push(file_name(&plot));
        }
    } else {
        let a = run_model(cfg, ctx, cmp.model_a, &t_grid)?;
        let b = run_model(cfg, ctx, cmp.model_b, &t_grid)?;
        let d = trace_distance_series(&a.times, &a.bloch, &b.times, &b.bloch)?;
        let csv = out_dir.join(format!("{}_distance.csv", cfg.name));
        write_csv(&csv, &[("time_us", &d.times), ("trace_distance", &d.distance)])?;
        outputs.push(file_name(&csv));
        extra.insert("max_trace_distance".into(), d.max.into());
        if svg {
            let plot = out_dir.join(format!("{}_distance.svg", cfg.name));
            write_svg_lines(
                &plot,
                &cfg.name,
                "time (µs)",
                "trace distance",
                &[SvgSeries { label: "distance", x: &d.times, y: &d.distance }],
            )?;
            outputs.push(file_name(&plot));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

fn with_drive_amplitude(sys: &SystemParams, eps_over_2pi_mhz: f64) -> SystemParams {
    let mut s = sys.clone();
    if let Some(d) = s.drives.first_mut() {
        d.amplitude_peak = cqed::params::TWO_PI * eps_over_2pi_mhz;
    } else if eps_over_2pi_mhz != 0.0 {
        s.drives.push(cqed::params::DriveSpec {
            amplitude_peak: cqed::params::TWO_PI * eps_over_2pi_mhz,
            frequency: s.omega_r,
            phase: 0.0,
            envelope: cqed::params::Envelope::Constant,
        });
    }
    s
}

fn drive_phasor(sys: &SystemParams) -> C64 {
    sys.measurement_drive()
        .map(|d| Complex64::from_polar(d.amplitude_peak, d.phase))
        .unwrap_or(ZERO)
}

/// Rebuild a [`Context`] for per-point sweep parameters (each point gets its
/// own pointer steady state and truncation).
fn context_for(cfg: &ExperimentConfig, sys: SystemParams) -> Result<Context, CqedError> {
    let derived = DerivedQuantities::from_system(&sys);
    let opts = ReducedOptions::default();
    let steady = pointer_steady_state(&sys, &opts)?;
    let fock_levels = match cfg.run.fock_levels {
        Some(n) => n,
        None => auto_fock_levels(steady.n_e().max(steady.n_g()), 10.0),
    };
    let mut warnings = sys.regime_warnings();
    warnings.extend(pointer_warnings(&steady, &sys));
    Ok(Context {
        sys,
        derived,
        steady,
        fock_levels,
        warnings,
    })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let peak = v.iter().fold(0.0_f64, |m, &x| m.max(x.abs())).max(1e-300);
    v.iter().map(|&x| x / peak).collect()
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

fn write_manifest(
    verb: &str,
    cfg: &ExperimentConfig,
    ctx: &Context,
    out_dir: &Path,
    outputs: &[String],
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<(), CqedError> {
    let manifest = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": verb,
        "config": cfg,
        "derived": ctx.derived,
        "fock_levels": ctx.fock_levels,
        "seed": cfg.run.seed,
        "warnings": ctx.warnings,
        "outputs": outputs,
        "results": extra,
    });
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CqedError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
