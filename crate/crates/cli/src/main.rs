//! `jcave` command-line tool.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jcave_core::game::{Jewel, SubLevelId};
use jcave_core::profile::{NewProfile, ProfileError, ProfileStore, ProfileUpdate};
use jcave_core::rules::{Arm, ExerciseKind, RuleConstants};
use jcave_core::session::{self, resume_point, SessionConfig};
use jcave_core::skeleton::{parse_stream, serialize_stream, SkeletonFrame};
use jcave_core::synth::{synthesize, Defect, SynthSpec};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_SESSION: u8 = 5;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Session(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Session(_) => EXIT_SESSION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Session(m) => m,
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::Io { .. } => CliError::Io(e.to_string()),
            ProfileError::Malformed { .. } | ProfileError::Version { .. } => CliError::Parse(e.to_string()),
            ProfileError::Invalid(_) => CliError::Usage(e.to_string()),
            ProfileError::UnknownId(_) | ProfileError::DuplicateId(_) => CliError::Session(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "jcave", version, about = "Arm-exercise recognition and the JCave jewel game, headless")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count exercise repetitions in a skeleton stream file.
    Recognize(RecognizeArgs),
    /// Play a whole game session from a stream or a synthesized schedule.
    Simulate(SimulateArgs),
    /// Write a synthetic skeleton stream.
    Synth(SynthArgs),
    /// Manage player profiles.
    Profiles(ProfilesArgs),
    /// Run the session service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExerciseArg {
    Elbow,
    Shoulder,
}

impl From<ExerciseArg> for ExerciseKind {
    fn from(e: ExerciseArg) -> Self {
        match e {
            ExerciseArg::Elbow => ExerciseKind::ElbowFlexExt,
            ExerciseArg::Shoulder => ExerciseKind::ShoulderFlex,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArmArg {
    Left,
    Right,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Left => Arm::Left,
            ArmArg::Right => Arm::Right,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Machine,
}

#[derive(Args, Clone, Debug)]
struct ConstantArgs {
    /// Segment window in frames.
    #[arg(long)]
    window: Option<u32>,
    /// Invalid frames tolerated in a row.
    #[arg(long)]
    grace: Option<u32>,
    /// Carrying angle in degrees.
    #[arg(long = "carrying-angle")]
    carrying_angle: Option<f64>,
    /// Allowance above the shoulder for the elbow up pose, meters.
    #[arg(long)]
    k: Option<f64>,
}

impl ConstantArgs {
    fn constants(&self) -> CliResult<RuleConstants> {
        let d = RuleConstants::default();
        let c = RuleConstants {
            carrying_angle_deg: self.carrying_angle.unwrap_or(d.carrying_angle_deg),
            k_offset: self.k.unwrap_or(d.k_offset),
            window_size: self.window.unwrap_or(d.window_size),
            grace_frames: self.grace.unwrap_or(d.grace_frames),
            boundary_epsilon: d.boundary_epsilon,
        };
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Args)]
struct RecognizeArgs {
    /// Skeleton stream file.
    stream: PathBuf,
    #[arg(long, value_enum, default_value = "elbow")]
    exercise: ExerciseArg,
    #[arg(long, value_enum, default_value = "right")]
    arm: ArmArg,
    #[command(flatten)]
    constants: ConstantArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args, Clone)]
struct MotionArgs {
    /// Repetitions to synthesize.
    #[arg(long, default_value_t = 1)]
    reps: u32,
    /// Segment durations in seconds: down,up,down-return.
    #[arg(long, value_parser = parse_segments)]
    segments: Option<[f64; 3]>,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Uniform jitter amplitude in meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Injected defect: `too-wide-x:START-END`, `overhead` or `stall:SECONDS`.
    #[arg(long = "defect", value_parser = parse_defect)]
    defects: Vec<Defect>,
    #[arg(long = "upper-arm")]
    upper_arm: Option<f64>,
    #[arg(long)]
    forearm: Option<f64>,
}

impl MotionArgs {
    fn spec(&self, exercise: ExerciseKind, arm: Arm, seed: u64) -> SynthSpec {
        let mut spec = SynthSpec::new(exercise, arm);
        spec.repetitions = self.reps;
        if let Some(segments) = self.segments {
            spec.segment_durations = segments;
        }
        spec.fps = self.fps;
        spec.noise_amp = self.noise;
        spec.defects = self.defects.clone();
        if let Some(u) = self.upper_arm {
            spec.body.upper_arm = u;
        }
        if let Some(f) = self.forearm {
            spec.body.forearm = f;
        }
        spec.seed = seed;
        spec
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Stream file to replay; without it a schedule is synthesized.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Profile to play as (needs --store).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Raise the profile's saved progress after the session.
    #[arg(long = "save-progress", requires = "profile")]
    save_progress: bool,
    #[arg(long, value_enum)]
    exercise: Option<ExerciseArg>,
    #[arg(long, value_enum)]
    arm: Option<ArmArg>,
    /// Prescribed repetitions N.
    #[arg(long)]
    n: Option<u32>,
    /// First sub-level, as LEVEL-STAGE.
    #[arg(long, value_parser = parse_sublevel)]
    start: Option<SubLevelId>,
    /// JSON file with the first attempt's jewel layout.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Session seed (also seeds a synthesized schedule).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    constants: ConstantArgs,
    #[command(flatten)]
    motion: MotionArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "elbow")]
    exercise: ExerciseArg,
    #[arg(long, value_enum, default_value = "right")]
    arm: ArmArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    motion: MotionArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfilesArgs {
    #[arg(long, default_value = "profiles.json")]
    store: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    action: ProfileAction,
}

#[derive(Subcommand)]
enum ProfileAction {
    List,
    Show {
        id: String,
    },
    Create {
        #[arg(long)]
        name: String,
        #[arg(long)]
        age: Option<u32>,
        #[arg(long, value_enum, default_value = "elbow")]
        exercise: ExerciseArg,
        #[arg(long, value_enum, default_value = "right")]
        arm: ArmArg,
        #[arg(long, default_value_t = 5)]
        n: u32,
        /// Explicit id instead of a generated one.
        #[arg(long)]
        id: Option<String>,
    },
    Update {
        id: String,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        age: Option<u32>,
        #[arg(long, value_enum)]
        exercise: Option<ExerciseArg>,
        #[arg(long, value_enum)]
        arm: Option<ArmArg>,
        #[arg(long)]
        n: Option<u32>,
    },
    Delete {
        id: String,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8750")]
    bind: String,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Directory holding the built UI; defaults to $JCAVE_UI_DIR, then ui/dist.
    #[arg(long = "ui-dir")]
    ui_dir: Option<PathBuf>,
}

fn parse_segments(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected three comma-separated durations".to_string())
}

fn parse_defect(s: &str) -> Result<Defect, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "overhead" if arg.is_empty() => Ok(Defect::OverheadBeyondK),
        "stall" => arg
            .parse()
            .map(|seconds| Defect::StallInUp { seconds })
            .map_err(|_| format!("stall needs seconds, got `{arg}`")),
        "too-wide-x" => {
            let (a, b) = arg.split_once('-').ok_or("too-wide-x needs START-END frames")?;
            let start = a.parse().map_err(|_| format!("bad start frame `{a}`"))?;
            let end = b.parse().map_err(|_| format!("bad end frame `{b}`"))?;
            Ok(Defect::TooWideX { start, end })
        }
        _ => Err(format!("unknown defect `{s}`")),
    }
}

fn parse_sublevel(s: &str) -> Result<SubLevelId, String> {
    let (l, st) = s.split_once('-').ok_or("expected LEVEL-STAGE")?;
    let level = l.parse().map_err(|_| format!("bad level `{l}`"))?;
    let stage = st.parse().map_err(|_| format!("bad stage `{st}`"))?;
    SubLevelId::new(level, stage).map_err(|e| e.to_string())
}

fn read_stream(path: &Path) -> CliResult<Vec<SkeletonFrame>> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_stream(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn emit(text: &str) {
    print!("{text}");
}

fn cmd_recognize(args: RecognizeArgs) -> CliResult {
    let consts = args.constants.constants()?;
    let frames = read_stream(&args.stream)?;
    let report = session::recognize(args.exercise.into(), args.arm.into(), consts, &frames)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    match args.format {
        Format::Machine => emit(&report.to_machine()),
        Format::Text => emit(&render::recognition(&report)),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let consts = args.constants.constants()?;
    let store = match (&args.profile, &args.store) {
        (Some(_), None) => return Err(CliError::Usage("--profile needs --store".into())),
        (Some(_), Some(path)) => Some(ProfileStore::open(path)),
        _ => None,
    };
    let mut config = match (&args.profile, &store) {
        (Some(id), Some(store)) => {
            let p = store.get(id)?;
            let mut c = SessionConfig::new(p.exercise, p.arm, p.repetitions, args.seed);
            c.start = resume_point(p.progress);
            c
        }
        _ => {
            let n = args.n.ok_or_else(|| CliError::Usage("give --n or --profile".into()))?;
            SessionConfig::new(
                args.exercise.unwrap_or(ExerciseArg::Elbow).into(),
                args.arm.unwrap_or(ArmArg::Right).into(),
                n,
                args.seed,
            )
        }
    };
    if args.profile.is_some() && (args.exercise.is_some() || args.arm.is_some() || args.n.is_some()) {
        return Err(CliError::Usage("--exercise/--arm/--n come from the profile when --profile is given".into()));
    }
    config.constants = consts;
    if let Some(start) = args.start {
        config.start = start;
    }

    let frames = match &args.stream {
        Some(path) => read_stream(path)?,
        None => {
            let spec = args.motion.spec(config.exercise, config.arm, args.seed);
            synthesize(&spec).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let layout = match &args.layout {
        Some(path) => Some(read_layout(path)?),
        None => None,
    };

    let driver = session::simulate(config, layout, &frames).map_err(|e| CliError::Session(e.to_string()))?;
    if args.save_progress {
        if let (Some(store), Some(id), Some(best)) = (&store, &args.profile, driver.best_won()) {
            store.record_progress(id, best)?;
        }
    }
    let report = driver.report();
    match args.format {
        Format::Machine => emit(&report.to_machine()),
        Format::Text => emit(&render::session(&report)),
    }
    Ok(())
}

fn read_layout(path: &Path) -> CliResult<Vec<Jewel>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let jewels: Vec<Jewel> =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), e.line())))?;
    if let Some(bad) = jewels.iter().position(|j| !j.is_valid()) {
        return Err(CliError::Parse(format!("{}: jewel {bad} is out of range", path.display())));
    }
    Ok(jewels)
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let spec = args.motion.spec(args.exercise.into(), args.arm.into(), args.seed);
    let frames = synthesize(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = serialize_stream(&frames);
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => emit(&text),
    }
    Ok(())
}

fn cmd_profiles(args: ProfilesArgs) -> CliResult {
    let store = ProfileStore::open(&args.store);
    let machine = args.format == Format::Machine;
    let show = |p: &jcave_core::profile::Profile| {
        if machine {
            emit(&format!("{}\n", serde_json::to_string_pretty(p).expect("profile serializes")));
        } else {
            emit(&render::profile(p));
        }
    };
    match args.action {
        ProfileAction::List => {
            let profiles = store.list()?;
            if machine {
                emit(&format!("{}\n", serde_json::to_string_pretty(&profiles).expect("profiles serialize")));
            } else {
                emit(&render::profile_table(&profiles));
            }
        }
        ProfileAction::Show { id } => show(&store.get(&id)?),
        ProfileAction::Create { name, age, exercise, arm, n, id } => {
            let p = store.create(NewProfile {
                id,
                name,
                age,
                exercise: Some(exercise.into()),
                arm: Some(arm.into()),
                repetitions: n,
            })?;
            show(&p);
        }
        ProfileAction::Update { id, name, age, exercise, arm, n } => {
            let p = store.update(
                &id,
                ProfileUpdate {
                    name,
                    age: age.map(Some),
                    exercise: exercise.map(Into::into),
                    arm: arm.map(Into::into),
                    repetitions: n,
                    progress: None,
                },
            )?;
            show(&p);
        }
        ProfileAction::Delete { id } => {
            store.delete(&id)?;
            if !machine {
                emit(&format!("deleted {id}\n"));
            }
        }
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let ui_dir = args
        .ui_dir
        .or_else(|| std::env::var_os("JCAVE_UI_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ui/dist"));
    let config = jcave_service::ServiceConfig { store: args.store, ui_dir: Some(ui_dir) };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let listener = jcave_service::bind(&args.bind).await.map_err(|e| CliError::Io(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        eprintln!("jcave service listening on http://{addr} (sessions at ws://{addr}/session)");
        jcave_service::serve(listener, config).await.map_err(|e| CliError::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Recognize(a) => cmd_recognize(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Profiles(a) => cmd_profiles(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jcave: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
