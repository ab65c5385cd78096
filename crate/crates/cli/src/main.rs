use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use qpke_core::detection::{constellation_dump, write_constellation_csv};
use qpke_core::harness::config::{
    AttackConfig, InterceptResendConfig, TappingConfig, SUPPORTED_ATTACKS,
};
use qpke_core::harness::output::{resolve_out_dir, write_outputs};
use qpke_core::harness::sweep::{summarize, write_sweep_csv};
use qpke_core::harness::{preset, presets, run_sweep, ExperimentConfig, PresetJob, SweepSpec};
use qpke_core::phasespace::deg;
use qpke_core::session::{run_session, SessionOutcome};

#[derive(Parser)]
#[command(name = "qpke", version, about = "Roundtrip phase-encoded key distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and write the summary, ledger and constellation.
    Run {
        /// Experiment config (TOML).
        config: Option<PathBuf>,
        /// Run a named preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Output directory (default from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write one CSV row per point and replication.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run replications on all cores.
        #[arg(long)]
        parallel: bool,
    },
    /// Run a session under attack and compare Bob with the attacker.
    Attack {
        config: PathBuf,
        /// Replace the config's attack with this one, using its defaults.
        #[arg(long)]
        attack: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write Bob's received constellation and per-symbol cluster statistics.
    Constellation {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List, show or run the built-in experiments.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print the preset's configuration.
    Show { name: String },
    Run {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ExperimentConfig::from_toml_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.unwrap_or_else(|| resolve_out_dir(&cfg.output.dir))
}

fn run_and_write(cfg: &ExperimentConfig, dir: &Path) -> Result<SessionOutcome> {
    let outcome = run_session(&cfg.session_params()?)?;
    for path in write_outputs(cfg, &outcome, dir)? {
        println!("wrote {}", path.display());
    }
    Ok(outcome)
}

fn print_comparison(label: &str, o: &SessionOutcome) {
    let r = &o.result;
    println!(
        "{label:<18} bits {:>9}  bob BER {:.5}  bob SER {:.5}  bob err std {:>6.2}°  intensity alarms {}/{}  delay alarms {}",
        r.bits,
        r.ber,
        r.symbol_error_rate,
        deg(r.bob_phase_error_std),
        r.alarmed_intensity_windows,
        r.intensity_windows,
        r.alarm_count(qpke_core::protocol::AlarmKind::Delay),
    );
    if let Some(a) = &o.attack {
        println!(
            "{:<18} attacker BER {:.5}  attacker SER {:.5}  attacker err std {:>6.2}°  combined std {:>6.2}°",
            "",
            a.attacker_ber_vs_alice,
            a.attacker_symbol_error_rate,
            deg(a.phase_error_std),
            deg(a.combined_error_std),
        );
        if let Some(b) = &a.budget {
            println!(
                "{:<18} δφ {:.2}°  statistical √2δφ {:.2}° / 2δφ {:.2}°  worst case 2δφ {:.2}° / 4δφ {:.2}°",
                "",
                deg(b.per_measurement),
                deg(b.statistical_combined),
                deg(b.statistical_dpsk),
                deg(b.worst_case_combined),
                deg(b.worst_case_dpsk),
            );
        }
    }
}

fn attack_by_name(name: &str) -> Result<AttackConfig> {
    Ok(match name {
        "none" => AttackConfig::None,
        "intercept_resend" => AttackConfig::InterceptResend(InterceptResendConfig::default()),
        "tapping" => AttackConfig::Tapping(TappingConfig::default()),
        other => bail!("unknown attack `{other}`; supported: {}", SUPPORTED_ATTACKS.join(", ")),
    })
}

fn sweep(spec: &SweepSpec, out: &Path) -> Result<()> {
    let rows = run_sweep(spec)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(BufWriter::new(File::create(&path)?), &rows)?;
    println!("wrote {}", path.display());
    println!("{:>10} {:>5} {:>10} {:>14} {:>18} {:>14}", "value", "reps", "bob BER", "attacker BER", "attacker std (°)", "alarm rate");
    for p in summarize(&rows) {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>10} {:>5} {:>10.5} {:>14} {:>18} {:>14.4}",
            p.value,
            p.replications,
            p.ber,
            opt(p.attacker_ber),
            opt(p.attacker_phase_error_std_deg),
            p.intensity_alarm_rate
        );
    }
    Ok(())
}

fn run_preset(name: &str, out: Option<PathBuf>) -> Result<()> {
    let Some(p) = preset(name) else {
        let names: Vec<_> = presets().iter().map(|p| p.name).collect();
        bail!("unknown preset `{name}`; available: {}", names.join(", "));
    };
    println!("{}: {}", p.name, p.description);
    match p.job {
        PresetJob::Run(cfg) => {
            let dir = out_dir(out, &cfg);
            let o = run_and_write(&cfg, &dir)?;
            print_comparison(p.name, &o);
        }
        PresetJob::Compare(runs) => {
            for (label, cfg) in runs {
                let o = run_session(&cfg.session_params()?)?;
                print_comparison(&label, &o);
            }
        }
        PresetJob::Sweep(spec) => {
            let dir = out_dir(out, &spec.base);
            sweep(&spec, &dir)?;
        }
        PresetJob::PhaseNoise(job) => {
            println!("{:>10} {:>10} {:>16} {:>16}", "n", "draws", "sample std (°)", "model (°)");
            for r in job.run(true)? {
                println!(
                    "{:>10} {:>10} {:>16.3} {:>16.3}",
                    r.mean_photon_number, r.draws, r.sample_std_deg, r.model_sigma_deg
                );
            }
        }
    }
    Ok(())
}

fn show_preset(name: &str) -> Result<()> {
    let Some(p) = preset(name) else {
        bail!("unknown preset `{name}`");
    };
    println!("# {}", p.description);
    match &p.job {
        PresetJob::Run(cfg) => print!("{}", cfg.to_toml_string()?),
        PresetJob::Compare(runs) => {
            for (label, cfg) in runs {
                println!("# --- {label}");
                print!("{}", cfg.to_toml_string()?);
            }
        }
        PresetJob::Sweep(spec) => print!("{}", spec.to_toml_string()?),
        PresetJob::PhaseNoise(job) => println!("{job:#?}"),
    }
    Ok(())
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, preset, out } => match (config, preset) {
            (_, Some(name)) => run_preset(&name, out)?,
            (Some(path), None) => {
                let cfg = load(&path)?;
                let o = run_and_write(&cfg, &out_dir(out, &cfg))?;
                print_comparison("session", &o);
            }
            (None, None) => bail!("give a config file or --preset NAME"),
        },
        Command::Sweep { spec, out, parallel } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("cannot read {}", spec.display()))?;
            let mut s = SweepSpec::from_toml_str(&text).with_context(|| format!("invalid sweep {}", spec.display()))?;
            s.parallel |= parallel;
            let dir = out_dir(out, &s.base);
            sweep(&s, &dir)?;
        }
        Command::Attack { config, attack, out } => {
            let mut cfg = load(&config)?;
            if let Some(name) = attack {
                cfg.attack = attack_by_name(&name)?;
            }
            if cfg.attack == AttackConfig::None {
                println!("no attack configured; running the plain session");
            }
            let o = run_and_write(&cfg, &out_dir(out, &cfg))?;
            print_comparison("bob", &o);
        }
        Command::Constellation { config, out } => {
            let mut cfg = load(&config)?;
            cfg.output.constellation = true;
            let o = run_session(&cfg.session_params()?)?;
            let dir = out_dir(out, &cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("constellation.csv");
            write_constellation_csv(BufWriter::new(File::create(&path)?), &o.constellation)?;
            println!("wrote {}", path.display());
            let scheme = cfg.scheme.build()?;
            println!(
                "{:>6} {:>7} {:>10} {:>12} {:>10} {:>8} {:>9}",
                "symbol", "count", "ideal (°)", "centroid (°)", "std (°)", "ring", "ring std"
            );
            for c in constellation_dump(&o.constellation, &scheme)? {
                println!(
                    "{:>6} {:>7} {:>10.2} {:>12.2} {:>10.2} {:>8.3} {:>9.3}",
                    c.symbol,
                    c.count,
                    deg(c.ideal_phase),
                    deg(c.centroid_phase),
                    deg(c.phase_std),
                    c.mean_ring,
                    c.ring_std
                );
            }
        }
        Command::Preset { action } => match action {
            PresetAction::List => {
                for p in presets() {
                    println!("{:<24} {}", p.name, p.description);
                }
            }
            PresetAction::Show { name } => show_preset(&name)?,
            PresetAction::Run { name, out } => run_preset(&name, out)?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
