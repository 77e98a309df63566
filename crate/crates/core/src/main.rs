use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roomcomp::config::{load_set, read_text, resolve, save_set, Doa, PipelineConfig, StoredSet};
use roomcomp::error::{Error, Result};
use roomcomp::gammatone::GammatoneFilterbank;
use roomcomp::geometry::{fixtures, ArrayGeometry};
use roomcomp::io::{read_ambisonic, read_wav, write_ambisonic, write_wav};
use roomcomp::metrics::{compare_report, DEFAULT_MAX_LAG_S};
use roomcomp::optimizer::{optimize_profile, separate, CompensationProfile, ExecMode, OptimizerConfig};
use roomcomp::render::{binauralize, render_compensated, render_unp};
use roomcomp::roomsim::{build_fixture_from, Scenario, ScenarioSpec};
use roomcomp::sh::{encode_capsule_signals, RegularizationPolicy, SPEED_OF_SOUND};

#[derive(Parser)]
#[command(name = "roomcomp", version, about = "Room compensation for Ambisonics recordings")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a recording/playback scenario into an impulse-response set.
    Simulate {
        /// Built-in scenario name.
        #[arg(long, conflicts_with = "scenario_file")]
        scenario: Option<Scenario>,
        /// Scenario description (TOML).
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// Loudspeaker layout; the built-in 50-point Lebedev layout otherwise.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode capsule signals into ACN Ambisonics.
    Encode {
        #[arg(long)]
        capsules: PathBuf,
        /// Capsule geometry.
        #[arg(long)]
        mic: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        max_gain_db: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split an ACN signal into the beamformed direct sound and the residual.
    Separate {
        #[arg(long)]
        input: PathBuf,
        /// Source direction as azimuth,elevation in degrees.
        #[arg(long, allow_hyphen_values = true)]
        doa: Doa,
        #[arg(long)]
        direct: PathBuf,
        #[arg(long)]
        reverb: PathBuf,
    },
    /// Compute a compensation profile from an impulse-response set.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Render loudspeaker feeds from an ACN signal and a profile.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Take the layout and source direction from this set unless given.
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        doa: Option<Doa>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the unprocessed decode here.
        #[arg(long)]
        unp: Option<PathBuf>,
    },
    /// Compare binaural renderings of loudspeaker feeds with the reference.
    Evaluate {
        #[arg(long)]
        set: PathBuf,
        /// Feeds as name=path; repeatable.
        #[arg(long = "feeds", required = true)]
        feeds: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { scenario, scenario_file, layout, out } => {
            let spec = match (scenario, scenario_file) {
                (_, Some(p)) => {
                    toml::from_str::<ScenarioSpec>(&read_text(&p)?).map_err(|e| Error::Parse(e.to_string()))?
                }
                (Some(s), None) => s.spec(),
                (None, None) => return Err(Error::Parse("give --scenario or --scenario-file".into())),
            };
            let layout = match layout {
                Some(p) => ArrayGeometry::load(&p)?,
                None => fixtures::lebedev50(),
            };
            let fixture = build_fixture_from(&spec, &layout)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("scenario.toml"), toml::to_string(&spec).expect("scenario serializes"))?;
            save_set(&out, &StoredSet::from(fixture))?;
            eprintln!("wrote impulse-response set to {}", out.display());
        }
        Cmd::Encode { capsules, mic, order, max_gain_db, out } => {
            let w = read_wav(&capsules)?;
            let geom = ArrayGeometry::load(&mic)?;
            let mut reg = RegularizationPolicy::default();
            if let Some(g) = max_gain_db {
                reg.max_gain_db = g;
            }
            let amb = encode_capsule_signals(&w.channels, w.sample_rate, &geom, order, &reg, SPEED_OF_SOUND)?;
            write_ambisonic(&out, &amb)?;
        }
        Cmd::Separate { input, doa, direct, reverb } => {
            let amb = read_ambisonic(&input)?;
            let (bf, rev) = separate(&amb, &doa.direction()?)?;
            write_wav(&direct, amb.sample_rate(), &[bf.samples])?;
            write_ambisonic(&reverb, &rev)?;
        }
        Cmd::Optimize { config, sequential } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if sequential {
                cfg.optimizer.exec = ExecMode::Sequential;
            }
            let (s, fb) = resolve(&cfg)?;
            let result = optimize_profile(&s.set, &s.layout, &s.doa, &fb, &cfg.optimizer)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let out = &cfg.paths.output;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("profile.txt"), result.profile.to_text())?;
            std::fs::write(out.join("config.toml"), cfg.echo())?;
            let mut warnings = result.warnings.join("\n");
            if !warnings.is_empty() {
                warnings.push('\n');
            }
            std::fs::write(out.join("warnings.txt"), warnings)?;
            eprintln!("wrote {}", out.join("profile.txt").display());
        }
        Cmd::Render { input, profile, set, layout, doa, out, unp } => {
            let amb = read_ambisonic(&input)?;
            let profile = CompensationProfile::parse(&read_text(&profile)?)?;
            let stored = set.as_deref().map(load_set).transpose()?;
            let layout = match (layout, &stored) {
                (Some(p), _) => ArrayGeometry::load(&p)?,
                (None, Some(s)) => s.layout.clone(),
                (None, None) => return Err(Error::Parse("give --layout or --set".into())),
            };
            let doa = match (doa, &stored) {
                (Some(d), _) => d.direction()?,
                (None, Some(s)) => s.doa,
                (None, None) => return Err(Error::Parse("give --doa or --set".into())),
            };
            let fb = filterbank_for(&profile)?;
            let cfg = OptimizerConfig::default();
            let feeds = render_compensated(&amb, &layout, &doa, &profile, &fb, &cfg)?;
            write_wav(&out, amb.sample_rate(), &feeds)?;
            if let Some(p) = unp {
                write_wav(&p, amb.sample_rate(), &render_unp(&amb, &layout, &cfg)?)?;
            }
        }
        Cmd::Evaluate { set, feeds, out } => evaluate(&set, &feeds, &out)?,
    }
    Ok(())
}

/// The profile stores centre frequencies; the band edges are the first and
/// last of them.
fn filterbank_for(p: &CompensationProfile) -> Result<GammatoneFilterbank> {
    let (lo, hi) = match (p.centers_hz.first(), p.centers_hz.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::Parse("profile has no bands".into())),
    };
    roomcomp::gammatone::design(p.sample_rate, p.n_bands(), lo, hi)
}

fn evaluate(set_dir: &Path, feeds: &[String], out: &Path) -> Result<()> {
    let s = load_set(set_dir)?;
    let fb = roomcomp::gammatone::design(s.set.sample_rate, 42, 70.0, 16700.0)?;
    let mut candidates = Vec::new();
    for f in feeds {
        let (name, path) = f.split_once('=').ok_or_else(|| Error::Parse(format!("feeds {f:?} is not name=path")))?;
        let w = read_wav(Path::new(path))?;
        if w.sample_rate != s.set.sample_rate {
            return Err(Error::SampleRate { expected: s.set.sample_rate, got: w.sample_rate });
        }
        candidates.push((name.to_string(), binauralize(&w.channels, &s.set.brir_play)?));
    }
    let report = compare_report(&s.set.brir_ref, &candidates, &fb, DEFAULT_MAX_LAG_S)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("bands.csv"), report.bands_csv())?;
    std::fs::write(out.join("edc.csv"), report.edc_csv())?;
    let summary = report.summary();
    std::fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
