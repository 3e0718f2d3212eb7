use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use temsa_core::corpus::{
    derive_joint_labels, filter_english_text, load_manifest, summarize, write_manifest, DictionaryCoverage,
    JointPolicy, ManifestFormat,
};
use temsa_core::detect::{
    detect_dataset, histogram_csv, object_count_histogram, CacheWriter, Detector, DetectionIndex, ExternalDetector,
    FixtureDetector, SourceFilter, DEFAULT_COCO_THRESHOLD, DEFAULT_FIXTURE_THRESHOLD, DEFAULT_VG_THRESHOLD,
    SOURCE_COCO, SOURCE_FIXTURE, SOURCE_VG,
};
use temsa_core::eval::{compare_experiments, emit_plots, Pairing};
use temsa_core::expctl::{
    self, evaluate_model, load_checkpoint, persist, prepare_data, run_experiment, save_checkpoint, train_model,
    DatasetKind, ExperimentConfig, ModelId, Split,
};
use temsa_core::tems::tems_records;

const CACHE_ENV: &str = "TEMSA_CACHE_DIR";

#[derive(Parser)]
#[command(name = "temsa", version, about = "Sentiment analysis with object names as textual cues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    #[value(name = "strict_equal", alias = "strict-equal")]
    StrictEqual,
    #[value(name = "keep_polar", alias = "keep-polar")]
    KeepPolar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Adapter {
    Coco,
    Vg,
    Fixture,
}

#[derive(Subcommand)]
enum Command {
    /// Derive joint labels and write a cleaned manifest.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dataset_name: String,
        #[arg(long, value_enum, default_value = "strict_equal")]
        joint_policy: Policy,
        /// Drop samples whose text does not look like English.
        #[arg(long)]
        english_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a detector over every image and append to the JSONL cache.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        adapter: Adapter,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        cache: PathBuf,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        image_root: Option<PathBuf>,
        /// Where detector programs live; defaults to $TEMSA_CACHE_DIR.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Print the object-count histogram of a detection cache as CSV.
    Objstats {
        #[arg(long)]
        cache: PathBuf,
        /// Row label; defaults to the cache file stem.
        #[arg(long)]
        label: Option<String>,
        /// Count a single source instead of all of them.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the fused text + object-name sequences as JSONL.
    BuildTems {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        dataset: DatasetKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and save a checkpoint directory.
    Train {
        #[arg(long)]
        experiment: Option<u8>,
        #[arg(long)]
        model: Option<ModelId>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config overrides, `key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint and write a result record.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate result records, test paired differences and draw plots.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
        /// JSON report path; a CSV table is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prepare, train and evaluate one or more configs end to end.
    Run {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        experiment: Option<u8>,
        #[arg(long)]
        model: Option<ModelId>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run the configs concurrently, one thread each.
        #[arg(long)]
        parallel: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare {
            manifest,
            dataset_name,
            joint_policy,
            english_only,
            out,
        } => {
            let policy = match joint_policy {
                Policy::StrictEqual => JointPolicy::StrictEqual,
                Policy::KeepPolar => JointPolicy::KeepPolar,
            };
            let mut d = load_manifest(&manifest, ManifestFormat::from_path(&manifest), &dataset_name)?;
            if english_only {
                d = filter_english_text(&d, &DictionaryCoverage::default());
            }
            let d = derive_joint_labels(&d, policy)?;
            write_manifest(&d, &out, ManifestFormat::from_path(&out))?;
            println!("{}", serde_json::to_string_pretty(&summarize(&d))?);
        }
        Command::Detect {
            manifest,
            adapter,
            threshold,
            cache,
            image_root,
            cache_dir,
        } => {
            let d = load_manifest(&manifest, ManifestFormat::from_path(&manifest), "detect")?;
            let mut detector: Box<dyn Detector> = match adapter {
                Adapter::Fixture => Box::new(FixtureDetector::new(threshold.unwrap_or(DEFAULT_FIXTURE_THRESHOLD))),
                Adapter::Coco | Adapter::Vg => {
                    let (name, default) = match adapter {
                        Adapter::Coco => (SOURCE_COCO, DEFAULT_COCO_THRESHOLD),
                        _ => (SOURCE_VG, DEFAULT_VG_THRESHOLD),
                    };
                    let dir = match cache_dir.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)) {
                        Some(dir) => dir,
                        None => bail!("the {name} adapter needs --cache-dir or ${CACHE_ENV}"),
                    };
                    Box::new(ExternalDetector::from_cache_dir(&dir, name, threshold.unwrap_or(default))?)
                }
            };
            let root = image_root.unwrap_or_else(|| parent_dir(&manifest));
            let mut w = CacheWriter::open(&cache)?;
            let s = detect_dataset(&d, &root, detector.as_mut(), &mut w)?;
            w.flush()?;
            println!(
                "{}: {} written, {} already cached, {} without image",
                detector.id(),
                s.written,
                s.cached,
                s.without_image
            );
        }
        Command::Objstats {
            cache,
            label,
            source,
            out,
        } => {
            let idx = DetectionIndex::load(&cache, &default_thresholds())?;
            let filter = source.map_or(SourceFilter::All, SourceFilter::Only);
            let label = label.unwrap_or_else(|| stem(&cache));
            let csv = histogram_csv(&label, &object_count_histogram(&idx, &filter));
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::BuildTems {
            manifest,
            cache,
            dataset,
            out,
        } => {
            let d = load_manifest(&manifest, ManifestFormat::from_path(&manifest), dataset.as_str())?;
            let idx = DetectionIndex::load(&cache, &default_thresholds())?;
            let recs = tems_records(&d, &idx, &dataset.length_policy())?;
            let mut w = BufWriter::new(create(&out)?);
            for r in &recs {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            println!("{} sequences written to {}", recs.len(), out.display());
        }
        Command::Train {
            experiment,
            model,
            config,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, experiment, model, &overrides)?;
            let data = prepare_data(&cfg)?;
            let tm = train_model(&cfg, &data)?;
            save_checkpoint(&tm, &out)?;
            if let Some(last) = tm.history.last() {
                println!(
                    "{}: {} epochs, loss {:.4}, train accuracy {:.4}",
                    cfg.run_name(),
                    last.epoch,
                    last.loss,
                    last.accuracy
                );
            }
        }
        Command::Evaluate { checkpoint, split, out } => {
            let start = Instant::now();
            let tm = load_checkpoint(&checkpoint)?;
            let data = prepare_data(&tm.config)?;
            let rec = evaluate_model(&tm, &data, split, start.elapsed().as_secs_f64())?;
            persist(&rec, &out)?;
            print_record(&rec);
        }
        Command::Compare { reports, plots, out } => {
            let records = reports
                .iter()
                .map(|p| expctl::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let report = compare_experiments(&records, &Pairing::Auto)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, serde_json::to_string_pretty(&report)?)
                        .with_context(|| format!("writing {}", p.display()))?;
                    std::fs::write(p.with_extension("csv"), report.to_csv())?;
                }
                None => print!("{}", report.to_csv()),
            }
            for t in &report.tests {
                match &t.result {
                    Some(r) => println!(
                        "{} {} vs {}: n={} W={} p={:.4}{}",
                        t.dataset,
                        t.a,
                        t.b,
                        t.n,
                        r.statistic,
                        r.p_value,
                        if r.significant { " *" } else { "" }
                    ),
                    None => println!("{} {} vs {}: identical predictions", t.dataset, t.a, t.b),
                }
            }
            if let Some(dir) = plots {
                for p in emit_plots(&report, &dir)? {
                    println!("wrote {}", p.display());
                }
            }
        }
        Command::Run {
            config,
            experiment,
            model,
            overrides,
            parallel,
        } => {
            let cfgs = config
                .iter()
                .map(|p| load_config(p, experiment, model, &overrides))
                .collect::<Result<Vec<_>>>()?;
            let mut dirs = BTreeMap::new();
            for c in &cfgs {
                if let Some(prev) = dirs.insert(expctl::run_dir(c), c.run_name()) {
                    bail!("two configs write to the same run directory ({prev})");
                }
            }
            let results: Vec<Result<_>> = if parallel {
                std::thread::scope(|s| {
                    let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(move || run_experiment(c))).collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("experiment thread panicked").map_err(Into::into))
                        .collect()
                })
            } else {
                cfgs.iter().map(|c| run_experiment(c).map_err(Into::into)).collect()
            };
            let mut failed = 0;
            for (c, r) in cfgs.iter().zip(results) {
                match r {
                    Ok(rec) => {
                        print_record(&rec);
                        println!("  -> {}", expctl::run_dir(c).join("record.json").display());
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e:#}", c.run_name());
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} runs failed", cfgs.len());
            }
        }
    }
    Ok(())
}

fn load_config(
    path: &Path,
    experiment: Option<u8>,
    model: Option<ModelId>,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(m) = model {
        cfg.model = m;
    }
    cfg.apply_overrides(overrides.iter().map(String::as_str))?;
    cfg.validate()?;
    Ok(cfg)
}

fn default_thresholds() -> BTreeMap<String, f64> {
    BTreeMap::from([
        (SOURCE_COCO.to_string(), DEFAULT_COCO_THRESHOLD),
        (SOURCE_VG.to_string(), DEFAULT_VG_THRESHOLD),
        (SOURCE_FIXTURE.to_string(), DEFAULT_FIXTURE_THRESHOLD),
    ])
}

fn print_record(r: &expctl::ResultRecord) {
    let m = &r.metrics;
    println!(
        "exp{} {} {}: acc {:.4} pre {:.4} rec {:.4} f1 {:.4} ({} test samples)",
        r.experiment,
        r.dataset,
        r.model,
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        r.predictions.len()
    );
}

fn parent_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn create(p: &Path) -> Result<File> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(p).with_context(|| format!("creating {}", p.display()))
}
