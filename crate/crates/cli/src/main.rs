use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use quadgrasp::config::Config;
use quadgrasp::grasp::{gfm_forward, object_feature};
use quadgrasp::harness::bench::{object_for_seed, run_benchmark, write_csv, Budget, SplitFilter};
use quadgrasp::harness::dataset::{record_distillation, DatasetWriter};
use quadgrasp::harness::episode::{run_episode, EpisodeOptions, StepSample};
use quadgrasp::harness::teacher::{bank_for, object_in_base};
use quadgrasp::nn::student::{seeded_student, StudentConfig, IMAGE_HEIGHT, IMAGE_WIDTH, OBS_CHANNELS, PROPRIO_DIM};
use quadgrasp::nn::{kd_loss, StudentNet, Tensor};
use quadgrasp::perception::{render_frame, write_frame_pgm};
use quadgrasp::robot::RobotState;
use quadgrasp::scene::catalog::{self, ObjectSpec};
use quadgrasp::scene::state::reset_episode;
use quadgrasp::se3::vec6_encode;
use quadgrasp::{Error, Result};

#[derive(Parser)]
#[command(name = "quadgrasp", version, about = "Dynamic-object grasping benchmark for a legged manipulator")]
struct Cli {
    /// TOML config overriding the defaults. Falls back to $QUADGRASP_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded episodes per level and write the metrics CSV.
    Bench(BenchArgs),
    /// Run a single episode and print its outcome.
    Episode(EpisodeArgs),
    /// Render both cameras at a decision step to PGM files.
    Render(RenderArgs),
    /// Print an object's grasp bank and the fusion weights at reset.
    GfmInspect(InspectArgs),
    /// Record observation/teacher-action pairs for distillation.
    DistillRecord(DistillArgs),
    /// Check the student network end to end on a seeded input.
    NnSelftest,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated levels, e.g. `1,4`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u8>>,
    #[arg(long, conflicts_with = "steps")]
    episodes: Option<u64>,
    /// Decision-step budget per level.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    split: Option<SplitFilter>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every episode log as JSON lines.
    #[arg(long)]
    logs: Option<PathBuf>,
}

#[derive(Args)]
struct EpisodeSelect {
    #[arg(long, default_value_t = 1)]
    level: u8,
    /// Object id; drawn from the catalog by seed when absent.
    #[arg(long)]
    object: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EpisodeArgs {
    #[command(flatten)]
    select: EpisodeSelect,
    /// Write the full log as JSON.
    #[arg(long)]
    dump_log: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    select: EpisodeSelect,
    /// Decision step to capture, 1-based.
    #[arg(long, default_value_t = 1)]
    step: u32,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    object: String,
    #[arg(long, default_value_t = 1)]
    level: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long, default_value_t = 1)]
    episodes: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    level: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: kind=usage message={}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Bench(a) => bench(&cfg, a),
        Command::Episode(a) => episode(&cfg, a),
        Command::Render(a) => render(&cfg, a),
        Command::GfmInspect(a) => gfm_inspect(&cfg, a),
        Command::DistillRecord(a) => distill(&cfg, a),
        Command::NnSelftest => nn_selftest(),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn bench(cfg: &Config, a: BenchArgs) -> Result<()> {
    let mut spec = cfg.bench_spec();
    if let Some(l) = a.levels {
        spec.levels = l;
    }
    if let Some(n) = a.episodes {
        spec.budget = Budget::Episodes(n);
    }
    if let Some(n) = a.steps {
        spec.budget = Budget::Steps(n);
    }
    if let Some(s) = a.split {
        spec.split = s;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.options.record_steps = a.logs.is_some();
    let catalog = cfg.catalog()?;
    let (report, logs) = run_benchmark(&spec, &catalog)?;
    match &a.out {
        Some(p) => write_csv(&report, spec.split, spec.seed, File::create(p).map_err(io(p))?)?,
        None => write_csv(&report, spec.split, spec.seed, std::io::stdout().lock())?,
    }
    if let Some(p) = &a.logs {
        let mut w = BufWriter::new(File::create(p).map_err(io(p))?);
        for log in &logs {
            writeln!(w, "{}", log.to_json()?).map_err(io(p))?;
        }
        w.flush().map_err(io(p))?;
    }
    Ok(())
}

fn pick_object<'a>(catalog: &'a [ObjectSpec], object: &Option<String>, seed: u64) -> Result<&'a ObjectSpec> {
    match object {
        Some(id) => catalog::find(catalog, id),
        None => {
            let all: Vec<&ObjectSpec> = catalog.iter().collect();
            if all.is_empty() {
                return Err(Error::InvalidArgument("catalog is empty".into()));
            }
            Ok(object_for_seed(&all, seed))
        }
    }
}

fn episode(cfg: &Config, a: EpisodeArgs) -> Result<()> {
    let catalog = cfg.catalog()?;
    let s = &a.select;
    let object = pick_object(&catalog, &s.object, s.seed)?;
    let config = cfg.episode_config(s.level, &object.id, s.seed);
    let log = run_episode(&config, &catalog, &cfg.options, None)?;
    let o = &log.outcome;
    println!(
        "level={} object={} seed={} outcome={:?} attempts={} decision_steps={} success_step={}",
        s.level,
        object.id,
        s.seed,
        o.phase,
        o.attempt_count,
        log.decision_steps,
        o.success_step.map_or("-".to_string(), |v| v.to_string()),
    );
    if let Some(p) = &a.dump_log {
        std::fs::write(p, log.to_json()?).map_err(io(p))?;
    }
    Ok(())
}

fn render(cfg: &Config, a: RenderArgs) -> Result<()> {
    if a.step == 0 {
        return Err(Error::InvalidArgument("--step is 1-based".into()));
    }
    let catalog = cfg.catalog()?;
    let s = &a.select;
    let object = pick_object(&catalog, &s.object, s.seed)?;
    let config = cfg.episode_config(s.level, &object.id, s.seed);
    let opts = EpisodeOptions {
        observe: true,
        record_steps: false,
        ..cfg.options.clone()
    };
    std::fs::create_dir_all(&a.out_dir).map_err(io(&a.out_dir))?;
    let mut written = false;
    let mut capture = |sample: &StepSample<'_>| -> Result<()> {
        if sample.step != a.step {
            return Ok(());
        }
        for (name, cam) in [("wrist", &opts.wrist_camera), ("base", &opts.base_camera)] {
            let frame = render_frame(sample.scene, sample.robot, cam);
            write_frame_pgm(
                &frame,
                &a.out_dir.join(format!("{name}_mask.pgm")),
                &a.out_dir.join(format!("{name}_depth.pgm")),
            )?;
        }
        written = true;
        Ok(())
    };
    let log = run_episode(&config, &catalog, &opts, Some(&mut capture))?;
    if !written {
        return Err(Error::InvalidArgument(format!(
            "episode ended after {} decision steps, before step {}",
            log.decision_steps, a.step
        )));
    }
    println!("wrote {{wrist,base}}_{{mask,depth}}.pgm to {}", a.out_dir.display());
    Ok(())
}

fn fmt6(v: [f64; 6]) -> String {
    v.iter().map(|x| format!("{x:+.4}")).collect::<Vec<_>>().join(" ")
}

fn gfm_inspect(cfg: &Config, a: InspectArgs) -> Result<()> {
    let catalog = cfg.catalog()?;
    let spec = catalog::find(&catalog, &a.object)?;
    let bank = bank_for(spec, &cfg.options.bank)?;
    let scene = reset_episode(&cfg.episode_config(a.level, &spec.id, a.seed), &catalog)?;
    let robot = RobotState::spawn(&scene.terrain, 0.0, 0.0, 0.0);
    let obj = object_in_base(&scene, &robot);
    let out = gfm_forward(&object_feature(spec), &obj, &bank, &cfg.options.gfm_weights())?;
    println!("object={} k={} candidates={}", bank.object_id, bank.k, bank.len());
    println!("object_in_base {}", fmt6(vec6_encode(&obj)));
    println!("idx  score   width   alpha      pose(object frame: x y z roll pitch yaw)");
    for (i, c) in bank.candidates.iter().enumerate() {
        println!(
            "{i:>3}  {:.4}  {:.4}  {:.6}  {}",
            c.score,
            c.width,
            out.alphas[i],
            fmt6(vec6_encode(&c.pose))
        );
    }
    println!("fused_raw  {}", fmt6(out.raw));
    println!("fused_pose {}", fmt6(vec6_encode(&out.fused)));
    Ok(())
}

fn distill(cfg: &Config, a: DistillArgs) -> Result<()> {
    let catalog = cfg.catalog()?;
    let all: Vec<&ObjectSpec> = catalog.iter().collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("catalog is empty".into()));
    }
    let mut writer = DatasetWriter::open(&a.out)?;
    let mut steps = 0u64;
    for i in 0..a.episodes {
        let seed = quadgrasp::harness::bench::episode_seed(a.seed, a.level, i);
        let object = object_for_seed(&all, seed);
        let config = cfg.episode_config(a.level, &object.id, seed);
        let (_, n) = record_distillation(&config, &catalog, &cfg.options, i, &mut writer)?;
        steps += n;
    }
    let n = writer.finish()?;
    println!("episodes={} records={} (decision steps {}) out={}", a.episodes, n, steps, a.out.display());
    Ok(())
}

fn nn_selftest() -> Result<()> {
    let config = StudentConfig::default();
    let weights = seeded_student(&config, 0)?;
    let net = StudentNet::new(&weights)?;
    let n = OBS_CHANNELS * IMAGE_HEIGHT * IMAGE_WIDTH;
    let frames = Tensor::new(
        vec![OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH],
        (0..n).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect(),
    )?;
    let proprio: Vec<f32> = (0..PROPRIO_DIM).map(|i| (i as f32 * 0.37).sin()).collect();
    let t = Instant::now();
    let a = net.forward(&frames, &proprio)?;
    let ms = t.elapsed().as_secs_f64() * 1e3;
    let b = net.forward(&frames, &proprio)?;
    if a != b {
        return Err(Error::InvalidArgument("student forward is not deterministic".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("student forward"));
    }
    if kd_loss(&[a], &[b])? != 0.0 {
        return Err(Error::InvalidArgument("kd_loss of identical actions is not zero".into()));
    }
    println!("params={} forward_ms={ms:.2}", net.config().param_count());
    println!("action {}", a.iter().map(|x| format!("{x:+.6}")).collect::<Vec<_>>().join(" "));
    println!("nn-selftest: ok");
    Ok(())
}
