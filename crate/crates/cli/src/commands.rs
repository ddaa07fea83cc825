use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use highway::analyze::{self, Manifest};
use highway::data::{self, Dataset, MnistPart, Split};
use highway::gradcheck::{check_network, random_problem};
use highway::io::{read_json, write_atomic, write_json};
use highway::nn::checkpoint;
use highway::tensor::sub_seed;
use highway::train::{self, DataSpec, HyperSpace, TrainConfig};
use highway::{Activation, BodyKind, Error, Matrix, Result, RngState};

/// Schema of `search --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Template for every trial; the sampled hyperparameters and all seeds
    /// are overwritten per trial.
    pub base: TrainConfig,
    #[serde(default)]
    pub space: HyperSpace,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ten")]
    pub top_k: usize,
}

fn ten() -> usize {
    10
}

fn refuse_existing(paths: &[PathBuf], overwrite: bool) -> Result<()> {
    if overwrite {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::Usage(format!(
            "{} already exists; pass --overwrite to replace it",
            p.display()
        ))),
        None => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
        other => other,
    })
}

#[derive(Deserialize)]
struct DigitFile {
    data: Vec<f64>,
}

pub fn convert(json_dir: &Path, out: &Path, seed: u64, overwrite: bool) -> Result<()> {
    let images = out.join("train-images-idx3-ubyte.gz");
    let labels = out.join("train-labels-idx1-ubyte.gz");
    refuse_existing(&[images.clone(), labels.clone()], overwrite)?;
    let mut pixels = Vec::new();
    let mut ys = Vec::new();
    for digit in 0..10 {
        let path = json_dir.join(format!("{digit}.json"));
        let file: DigitFile = read_json(&path)?;
        if file.data.len() % 784 != 0 {
            return Err(Error::Config(format!(
                "{}: {} values is not a whole number of 28x28 images",
                path.display(),
                file.data.len()
            )));
        }
        if let Some(v) = file.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("{}: pixel value {v} outside [0, 1]", path.display())));
        }
        // Quantize to the 8-bit grid the IDX format stores.
        pixels.extend(file.data.iter().map(|v| (v * 255.0).round() / 255.0));
        ys.extend(std::iter::repeat_n(digit, file.data.len() / 784));
    }
    let n = ys.len();
    let ds = Dataset::new(Matrix::from_vec(n, 784, pixels)?, ys, 10, Split::Train, Some((28, 28)))?;
    let order = RngState::new(seed).permutation(n);
    let ds = ds.select(&order);
    ensure_dir(out)?;
    data::write_idx(&ds, &images, &labels)?;
    println!("wrote {n} images to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct PartSummary {
    images: String,
    samples: usize,
    dim: usize,
    classes: usize,
    class_counts: Vec<usize>,
}

pub fn fetch_check(dir: Option<PathBuf>) -> Result<()> {
    let dir = dir.unwrap_or_else(train::default_mnist_dir);
    let summarize = |part| -> Result<PartSummary> {
        let (images, labels) = data::mnist_paths(&dir, part)?;
        let ds = data::load_idx(&images, &labels)?;
        Ok(PartSummary {
            images: images.display().to_string(),
            samples: ds.len(),
            dim: ds.dim(),
            classes: ds.classes,
            class_counts: ds.class_counts(),
        })
    };
    let train = summarize(MnistPart::Train)?;
    let test = match data::mnist_paths(&dir, MnistPart::Test) {
        Ok(_) => Some(summarize(MnistPart::Test)?),
        Err(_) => None,
    };
    let report = serde_json::json!({ "dir": dir.display().to_string(), "train": train, "test": test });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_paths(out: &Path, run_id: &str) -> Vec<PathBuf> {
    ["json", "csv", "ckpt"]
        .iter()
        .map(|ext| out.join(format!("{run_id}.{ext}")))
        .collect()
}

pub fn train(config: &Path, out: &Path, seed: Option<u64>, run_id: &str, overwrite: bool) -> Result<()> {
    let mut cfg: TrainConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.init.seed = sub_seed(s, 0);
        cfg.shuffle_seed = sub_seed(s, 1);
    }
    cfg.validate()?;
    refuse_existing(&run_paths(out, run_id), overwrite)?;
    let data = cfg.data.load()?;
    let (record, net) = train::train_run(&cfg, &data, run_id)?;
    ensure_dir(out)?;
    let record = train::persist_run(out, &record, &net)?;
    match (&record.outcome, record.curve.last()) {
        (train::RunStatus::Completed, Some(last)) => println!(
            "{run_id}: {} epochs, final train loss {:.6}, train error {:.4}",
            last.epoch, last.train_loss, last.train_err
        ),
        (train::RunStatus::Completed, None) => println!("{run_id}: no epochs run"),
        (train::RunStatus::Diverged { epoch, reason }, _) => {
            println!("{run_id}: diverged in epoch {epoch}: {reason}")
        }
    }
    Ok(())
}

pub fn search(config: &Path, runs: usize, out: &Path, seed: Option<u64>, parallel: usize, overwrite: bool) -> Result<()> {
    let mut cfg: SearchConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if runs == 0 {
        return Err(Error::Usage("--runs must be at least 1".into()));
    }
    cfg.space.validate()?;
    cfg.base.validate()?;
    let mut targets = vec![out.join("summary.json"), out.join("top_k_mean.csv")];
    for i in 0..runs {
        let id = format!("trial-{i:03}");
        targets.extend(run_paths(out, &id));
        targets.push(out.join(format!("{id}.config.json")));
    }
    refuse_existing(&targets, overwrite)?;

    let data = cfg.base.data.load()?;
    let outcome = train::random_search(&cfg.space, &cfg.base, &data, runs, cfg.seed, cfg.top_k, parallel.max(1))?;
    ensure_dir(out)?;
    for (i, run) in outcome.runs.iter().enumerate() {
        let (_, trial_cfg) = train::sample_config(&cfg.space, &cfg.base, cfg.seed, i)?;
        let trial_cfg = TrainConfig {
            data: trial_cfg.data.resolved(),
            ..trial_cfg
        };
        write_json(&out.join(format!("trial-{i:03}.config.json")), &trial_cfg)?;
        if let Ok((record, net)) = run {
            train::persist_run(out, record, net)?;
        }
    }
    let mean = train::RunRecord {
        run_id: "top_k_mean".into(),
        config: cfg.base.clone(),
        param_count: 0,
        outcome: train::RunStatus::Completed,
        curve: outcome.summary.top_k_mean.clone(),
        wall_time_s: 0.0,
        checkpoint: None,
    };
    write_atomic(&out.join("top_k_mean.csv"), &mean.curve_csv()?)?;
    write_json(&out.join("summary.json"), &outcome.summary)?;
    match outcome.summary.best {
        Some(b) => println!(
            "best trial {b} of {runs}: final train loss {:.6}",
            outcome.summary.trials[b].final_train_loss.unwrap_or(f64::NAN)
        ),
        None => println!("no trial of {runs} completed"),
    }
    Ok(())
}

pub struct ReportArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub subset: Option<usize>,
    pub subset_seed: u64,
    pub out: PathBuf,
    pub overwrite: bool,
}

pub enum Report {
    Lesion,
    Gates(usize),
    Routing,
}

fn report_data(args: &ReportArgs) -> Result<Dataset> {
    let spec = if args.data.extension().is_some_and(|e| e == "json") {
        if args.subset.is_some() {
            return Err(Error::Usage("--subset applies to IDX directories; set it in the data spec".into()));
        }
        load_config::<DataSpec>(&args.data)?
    } else {
        DataSpec::Mnist {
            dir: Some(args.data.clone()),
            validation: 0,
            subset: args.subset,
            subset_seed: args.subset_seed,
            downsample: 1,
        }
    };
    Ok(spec.load()?.train)
}

pub fn report(args: &ReportArgs, kind: Report) -> Result<()> {
    let name = match kind {
        Report::Lesion => "lesion",
        Report::Gates(_) => "gates",
        Report::Routing => "routing",
    };
    let run_id = args
        .checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let (dir, csv_name) = if args.out.extension().is_some_and(|e| e == "csv") {
        let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let file = args.out.file_name().expect("has extension").to_string_lossy().into_owned();
        (dir.to_path_buf(), file)
    } else {
        (args.out.clone(), format!("{run_id}.{name}.csv"))
    };
    refuse_existing(
        &[dir.join(&csv_name), dir.join(format!("{run_id}.{name}.json"))],
        args.overwrite,
    )?;

    let net = checkpoint::load(&args.checkpoint)?;
    let ds = report_data(args)?;
    let mut manifest = Manifest::new(&run_id, name, &net, &ds);
    manifest.csv = csv_name;
    let csv = match kind {
        Report::Lesion => {
            let r = analyze::lesion_sweep(&net, &ds)?;
            let worst = r.degradation().into_iter().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "baseline error {:.4}; worst single-layer lesion adds {:.4}",
                r.baseline_err, worst
            );
            analyze::lesion_csv(&r)?
        }
        Report::Gates(sample) => {
            manifest.sample_index = Some(sample);
            analyze::gates_csv(&analyze::gate_activity(&net, &ds, sample)?)?
        }
        Report::Routing => {
            let r = analyze::class_routing(&net, &ds)?;
            manifest.empty_classes = r.empty_classes();
            analyze::routing_csv(&r)?
        }
    };
    ensure_dir(&dir)?;
    let path = analyze::write_report(&dir, &manifest, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn gradcheck(
    depth: usize,
    width: usize,
    kind: BodyKind,
    activation: Activation,
    seed: u64,
    step: f64,
    tolerance: f64,
) -> Result<()> {
    if !(step > 0.0) || !(tolerance > 0.0) {
        return Err(Error::Usage("--step and --tolerance must be positive".into()));
    }
    let (net, x, labels) = random_problem(depth, width, kind, activation, seed).map_err(|e| match e {
        Error::Param(m) => Error::Usage(m),
        other => other,
    })?;
    let report = check_network(&net, &x, &labels, step)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.max_rel_err < tolerance {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative error {:e} in {} is not below {tolerance:e}",
            report.max_rel_err, report.worst
        )))
    }
}
