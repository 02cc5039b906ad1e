use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cblseg::gradcheck::{cbl_gradcheck, network_gradcheck, NETWORK_TOLERANCE};
use cblseg::manifest::RunManifest;
use cblseg::mining::{mine_stage_boundaries, MiningConfig, MiningVariant};
use cblseg::net::{evaluate, load_checkpoint, save_checkpoint, train, NetConfig, SegNet, TrainConfig};
use cblseg::synth::{generate, generate_split, Layout, SynthConfig};
use cblseg::{CblConfig, Error, PointCloud, SamplingHierarchy};

#[derive(Parser)]
#[command(name = "cblseg", version, about = "Boundary-aware point-cloud segmentation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Neighborhood radius at the input stage, meters.
    #[arg(long, global = true, default_value_t = 0.1)]
    radius: f64,
    /// Contrastive temperature.
    #[arg(long, global = true, default_value_t = 1.0)]
    tau: f64,
    /// Weight of the contrastive terms.
    #[arg(long, global = true, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of sub-sampling stages.
    #[arg(long, global = true, default_value_t = 3)]
    stages: usize,
    /// Sub-scene label variant: argmax, kl or nearest.
    #[arg(long, global = true, default_value = "argmax", value_parser = parse_variant)]
    variant: MiningVariant,
    #[arg(long, global = true, default_value_t = 0.5)]
    kl_threshold: f64,
}

fn parse_variant(s: &str) -> Result<MiningVariant, String> {
    s.parse::<MiningVariant>().map_err(|e| e.to_string())
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown layout `{s}` (planar-rooms, checkerboard, blobs)"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled scenes.
    Synth(SynthArgs),
    /// Boundary-aware metrics for a cloud with a prediction column.
    Metrics {
        input: PathBuf,
        /// Also write a run manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Per-stage sub-scene boundary indices, one JSON line per stage.
    Mine {
        input: PathBuf,
        /// Grid cell of the first sub-sampling, meters.
        #[arg(long, default_value_t = 0.1)]
        cell: f64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Also check the whole network on a small scene.
        #[arg(long)]
        network: bool,
    },
    /// Train the segmentation network.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out scenes.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "planar-rooms", value_parser = parse_layout)]
    layout: Layout,
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 2.0)]
    extent: f64,
    /// With --train/--test, a directory; otherwise a single scene file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "test")]
    train: Option<usize>,
    #[arg(long, requires = "train")]
    test: Option<usize>,
}

#[derive(Args)]
struct SceneSource {
    /// Directory of scene files (*.txt).
    #[arg(long, conflicts_with = "synth")]
    scenes: Option<PathBuf>,
    /// JSON synthetic-scene config; scenes come from its train/test split.
    #[arg(long)]
    synth: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    train_scenes: usize,
    #[arg(long, default_value_t = 10)]
    test_scenes: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: SceneSource,
    /// Output directory for checkpoint.bin, log.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.98)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-3)]
    weight_decay: f64,
    /// Grid cell of the first sub-sampling, meters.
    #[arg(long, default_value_t = 0.1)]
    cell: f64,
    /// Disable the contrastive terms (same as --lambda 0).
    #[arg(long)]
    no_cbl: bool,
    /// Apply the contrastive loss at the input stage only.
    #[arg(long, conflicts_with = "no_cbl")]
    cbl_input_only: bool,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[command(flatten)]
    source: SceneSource,
    /// Per-scene CSV; defaults to eval.csv next to the checkpoint.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Failure classes mapped to process exit codes.
enum Failure {
    Input(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::NonFinite { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let c = cli.common;
    if c.stages == 0 {
        return Err(Failure::Input("--stages must be >= 1".into()));
    }
    let mining = MiningConfig {
        variant: c.variant,
        kl_threshold: c.kl_threshold,
        ..Default::default()
    };
    mining.validate()?;
    match cli.command {
        Command::Synth(a) => synth(&c, a),
        Command::Metrics { input, manifest } => {
            let cloud = PointCloud::read(&input)?;
            let report = cblseg::metrics::full_report(&cloud, c.radius)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            if let Some(path) = manifest {
                let mut m = RunManifest::new("metrics", json!({ "radius": c.radius }), c.seed);
                m.add_input(&input)?;
                m.write(path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Mine {
            input,
            cell,
            manifest,
        } => {
            let cloud = PointCloud::read(&input)?;
            let h = SamplingHierarchy::build(&cloud, cell, c.radius, c.stages)?;
            for n in 0..c.stages {
                let b = mine_stage_boundaries(&h, n, &mining)?;
                let line = json!({
                    "stage": n,
                    "variant": c.variant.name(),
                    "indices": b.indices(),
                });
                println!("{line}");
            }
            if let Some(path) = manifest {
                let cfg = json!({ "radius": c.radius, "cell": cell, "stages": c.stages, "mining": mining });
                let mut m = RunManifest::new("mine", cfg, c.seed);
                m.add_input(&input)?;
                m.write(path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { instances, network } => {
            if instances == 0 {
                return Err(Failure::Input("--instances must be >= 1".into()));
            }
            let report = cbl_gradcheck(instances, c.seed);
            let mut out = serde_json::to_value(&report).expect("serializable");
            let mut pass = report.pass;
            if network {
                let err = network_gradcheck(c.seed);
                pass &= err < NETWORK_TOLERANCE;
                out["network_max_rel_err"] = json!(err);
                out["pass"] = json!(pass);
            }
            println!("{out}");
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Train(a) => train_cmd(&c, mining, a),
        Command::Eval(a) => eval_cmd(&c, a),
    }
}

fn synth(c: &Common, a: SynthArgs) -> Result<ExitCode, Failure> {
    let cfg = SynthConfig {
        seed: c.seed,
        num_points: a.points,
        num_classes: a.classes,
        layout: a.layout,
        jitter: a.jitter,
        extent: a.extent,
        ..Default::default()
    };
    let manifest = RunManifest::new("synth", serde_json::to_value(&cfg).expect("serializable"), c.seed);
    match (a.train, a.test) {
        (Some(n_train), Some(n_test)) => {
            let (tr, te) = generate_split(&cfg, n_train, n_test)?;
            for (sub, scenes) in [("train", tr), ("test", te)] {
                let dir = a.out.join(sub);
                fs::create_dir_all(&dir).map_err(Error::from)?;
                for (i, s) in scenes.iter().enumerate() {
                    s.write(dir.join(format!("scene_{i:03}.txt")))?;
                }
            }
            manifest.write(a.out.join("manifest.json"))?;
        }
        _ => {
            generate(&cfg)?.write(&a.out)?;
            manifest.write(sidecar(&a.out))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// `scene.txt` gets `scene.txt.manifest.json`.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

struct Loaded {
    names: Vec<String>,
    scenes: Vec<PointCloud>,
    files: Vec<PathBuf>,
    synth: Option<SynthConfig>,
}

fn load_scenes(src: &SceneSource, held_out: bool) -> Result<Loaded, Failure> {
    if let Some(dir) = &src.scenes {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(Error::from)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Failure::Input(format!("no *.txt scenes in {}", dir.display())));
        }
        let scenes = files.iter().map(PointCloud::read).collect::<Result<Vec<_>, _>>()?;
        let names = files
            .iter()
            .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        return Ok(Loaded {
            names,
            scenes,
            files,
            synth: None,
        });
    }
    let Some(path) = &src.synth else {
        return Err(Failure::Input("one of --scenes or --synth is required".into()));
    };
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let cfg: SynthConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let (tr, te) = generate_split(&cfg, src.train_scenes, src.test_scenes)?;
    let (prefix, scenes) = if held_out { ("test", te) } else { ("train", tr) };
    Ok(Loaded {
        names: (0..scenes.len()).map(|i| format!("{prefix}_{i:03}")).collect(),
        scenes,
        files: vec![path.clone()],
        synth: Some(cfg),
    })
}

fn train_cmd(c: &Common, mining: MiningConfig, a: TrainArgs) -> Result<ExitCode, Failure> {
    let data = load_scenes(&a.source, false)?;
    let num_classes = data.scenes[0].num_classes();
    let cbl_stages: Vec<usize> = if a.cbl_input_only {
        vec![0]
    } else {
        (0..c.stages).collect()
    };
    let net_cfg = NetConfig {
        num_classes,
        widths: (0..c.stages).map(|i| 16 << i).collect(),
        cbl_stages,
        base_cell: a.cell,
        seed: c.seed,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        cbl: CblConfig {
            temperature: c.tau,
            lambda: if a.no_cbl { 0.0 } else { c.lambda },
        },
        radius: c.radius,
        mining,
        seed: c.seed,
        ..TrainConfig::default_with_epochs(a.epochs)
    };
    let mut net = SegNet::new(net_cfg.clone())?;
    let log = train(&mut net, &data.scenes, &train_cfg)?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    save_checkpoint(&net, a.out.join("checkpoint.bin"))?;
    fs::write(a.out.join("log.csv"), log.to_csv()).map_err(Error::from)?;
    let cfg = json!({
        "net": net_cfg,
        "train": train_cfg,
        "synth": data.synth,
        "train_scenes": data.names,
    });
    let mut m = RunManifest::new("train", cfg, c.seed);
    for f in &data.files {
        m.add_input(f)?;
    }
    m.write(a.out.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(c: &Common, a: EvalArgs) -> Result<ExitCode, Failure> {
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load_scenes(&a.source, true)?;
    let eval = evaluate(&net, &data.scenes, c.radius)?;
    println!("{}", serde_json::to_string_pretty(&eval.aggregate).expect("serializable"));
    let mut csv = String::from("scene,miou,miou_boundary,miou_inner,b_iou\n");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, r) in data.names.iter().zip(&eval.per_scene) {
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            fmt(r.miou_overall),
            fmt(r.miou_boundary),
            fmt(r.miou_inner),
            r.b_iou
        ));
    }
    let csv_path = a
        .csv
        .unwrap_or_else(|| a.checkpoint.with_file_name("eval.csv"));
    fs::write(&csv_path, csv).map_err(Error::from)?;
    let cfg = json!({ "radius": c.radius, "synth": data.synth, "scenes": data.names });
    let mut m = RunManifest::new("eval", cfg, c.seed);
    m.add_input(&a.checkpoint)?;
    for f in &data.files {
        m.add_input(f)?;
    }
    m.write(sidecar(&csv_path))?;
    Ok(ExitCode::SUCCESS)
}
