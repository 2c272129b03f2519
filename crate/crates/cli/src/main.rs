use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hapc_core::harness::compare::all_variants;
use hapc_core::harness::config::{MuscleConfig, MuscleFile};
use hapc_core::harness::io::{write_comparison, write_outputs};
use hapc_core::identification::{
    detect_thresholds, fit_fatigue, generic_seed, session_trace, split_session, with_noise, FatigueProtocol,
    FitOptions, FitProtocol, IsometricTrace, StaircaseProtocol,
};
use hapc_core::{compare_variants, run_scenario, ComparisonTable, Error, FatigueParams, Joint, Result, ScenarioConfig, Variant};

#[derive(Parser)]
#[command(name = "hapc", version, about = "Hybrid adaptive robot/FES path controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace, per-cycle metrics and summary.
    Run(RunArgs),
    /// Simulate the controller variants on identical behaviour and tabulate them.
    Compare(CompareArgs),
    /// Identify a muscle's thresholds and fatigue parameters from an isometric session.
    Identify(IdentifyArgs),
    /// Write a synthetic isometric session for a muscle.
    Synthesize(SynthesizeArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario configuration (TOML). Defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cycles: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// EPC, FPC, HPC or HAPC.
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Restrict the sweep (repeatable); HAPC is always included.
    #[arg(long)]
    variant: Vec<Variant>,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Session trace with columns time_s, pulse_width_us, force_n.
    #[arg(long)]
    trace: PathBuf,
    /// Muscle name, e.g. left_hamstring or right_quadriceps.
    #[arg(long)]
    muscle: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Muscle-parameter file to write.
    #[arg(long)]
    out: PathBuf,
    /// Staircase pulse-width increment (µs).
    #[arg(long, default_value_t = 50.0)]
    increment: f64,
    /// Rest kept before the fatigue bout (s).
    #[arg(long, default_value_t = 2.0)]
    lead_in: f64,
    #[command(flatten)]
    frequencies: Frequencies,
}

#[derive(Args)]
struct Frequencies {
    /// Stimulation frequency of the staircase and the continuous fatigue bout (Hz).
    #[arg(long, default_value_t = 25.0)]
    frequency: f64,
    /// Stimulation frequency of the recovery pulses (Hz).
    #[arg(long, default_value_t = 80.0)]
    recovery_frequency: f64,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    muscle: String,
    /// Relative standard deviation of multiplicative force noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force gain (N per unit effective activation).
    #[arg(long, default_value_t = 100.0)]
    gain: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    frequencies: Frequencies,
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(n) = args.cycles {
        cfg.n_cycles = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    let out = run_scenario(&cfg)?;
    let written = write_outputs(&out, &args.scenario.out_dir, "")?;
    let s = &out.summary;
    println!(
        "{}: {} cycles, rms error {:.3} deg, rms exo torque {:.3} Nm, rms pulse width {:.1} us, knee fatigue {:.4}",
        s.variant, s.cycles_completed, s.rms_error_deg, s.rms_exo_torque_nm, s.rms_pulse_width_us, s.mean_knee_fatigue
    );
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_table(table: &ComparisonTable) {
    println!(
        "{:<6} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "", "error", "robot", "stim", "fatigue", "cost"
    );
    for r in &table.rows {
        let n = &r.normalised;
        println!(
            "{:<6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>8.3}",
            r.variant.as_str(),
            n.error,
            n.robot,
            n.stimulation,
            n.fatigue,
            r.cost
        );
    }
}

fn compare(args: CompareArgs) -> Result<()> {
    let base = load_scenario(&args.scenario)?;
    let cfgs: Vec<ScenarioConfig> = if args.variant.is_empty() {
        all_variants(&base)
    } else {
        let mut vs = args.variant.clone();
        vs.push(Variant::Hapc);
        vs.sort();
        vs.dedup();
        vs.into_iter().map(|v| base.with_variant(v)).collect()
    };
    let (outputs, table) = compare_variants(&cfgs)?;
    let dir = &args.scenario.out_dir;
    for out in &outputs {
        write_outputs(out, dir, &format!("{}_", out.variant))?;
    }
    let path = dir.join("comparison.csv");
    write_comparison(&table, &path)?;
    print_table(&table);
    println!("wrote {}", path.display());
    Ok(())
}

fn identify(args: IdentifyArgs) -> Result<()> {
    let (side, joint, action) = MuscleConfig::parse_name(&args.muscle)?;
    let trace = IsometricTrace::from_file(&args.trace)?;
    let (staircase, fatigue) = split_session(&trace, args.lead_in)?;
    let thresholds = detect_thresholds(&staircase, args.increment)?;
    if !thresholds.saturation_reached {
        eprintln!(
            "warning: force still rising at {} us; saturation not reached",
            thresholds.u_sat
        );
    }
    let seed = generic_seed(thresholds.u_thr, thresholds.u_sat);
    let options = FitOptions {
        seed: args.seed,
        ..Default::default()
    };
    let protocol = FitProtocol {
        stimulation_frequency: args.frequencies.frequency,
        recovery_frequency: args.frequencies.recovery_frequency,
        ..Default::default()
    };
    let fit = fit_fatigue(&fatigue, &protocol, &seed, &options)?;
    if !fit.converged {
        eprintln!("warning: optimiser stopped before converging; writing best parameters found");
    }
    let file = MuscleFile {
        muscles: vec![MuscleConfig::new(side, joint, action, fit.params)],
    };
    std::fs::write(&args.out, file.to_toml())?;
    let p = &fit.params;
    println!(
        "{}: u_thr {} us, u_sat {} us, T_fat {:.2} s, T_rec {:.2} s, T_rise {:.3} s, T_fall {:.3} s, T_e {:.4} s, mu_min {:.3}, beta {:.3}",
        args.muscle, p.u_thr, p.u_sat, p.t_fat, p.t_rec, p.t_rise, p.t_fall, p.t_e, p.mu_min, p.beta
    );
    println!("force gain {:.3} N, residual {:.4} N", fit.force_gain, fit.residual);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let (side, joint, action) = MuscleConfig::parse_name(&args.muscle)?;
    if joint != Joint::Knee {
        return Err(Error::Config(format!("no identified parameters for {}", args.muscle)));
    }
    let p = FatigueParams::knee_muscle(side, action);
    let f = &args.frequencies;
    let staircase = StaircaseProtocol {
        stimulation_frequency: f.frequency,
        ..Default::default()
    };
    let fatigue = FatigueProtocol {
        stimulation_frequency: f.frequency,
        recovery_frequency: f.recovery_frequency,
        ..Default::default()
    };
    let trace = session_trace(&p, args.gain, &staircase, &fatigue, 0.01)?;
    let trace = if args.noise > 0.0 {
        with_noise(&trace, args.noise, args.seed)
    } else {
        trace
    };
    trace.write_csv(std::fs::File::create(&args.out)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Identify(a) => identify(a),
        Command::Synthesize(a) => synthesize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
