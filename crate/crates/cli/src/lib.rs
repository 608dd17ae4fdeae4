//! Adapters behind the `egostream` binary: config loading, file output and
//! stream inspection. Protocol logic lives in `egostream-core`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use egostream_core::protocols::{
    accuracy_vs_percentage, curve_csv, run, sweep, sweep_csv, BoundaryStrategy, CurvePoint,
    EvalInput, EvalReport, ProtocolSpec, SweepGrid, SweepRow,
};
use egostream_core::stream::{
    load_annotations, load_manifest, sibling_paths, FrameRecord, StreamDataset, StreamHeader,
    StreamReader,
};
use egostream_core::synth::{generate_suite, SuiteConfig};

/// Config schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

fn check_version(version: u32) -> Result<()> {
    if version != CONFIG_VERSION {
        bail!("unsupported config version {version} (expected {CONFIG_VERSION})");
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    /// Manifest path; the stream and annotations are its siblings.
    pub manifest: PathBuf,
    /// Domain of the model that produced the stream. Defaults to the
    /// manifest's own domain (seen setting).
    #[serde(default)]
    pub train_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub json: PathBuf,
    pub csv: PathBuf,
    /// Optional per-segment prediction table.
    #[serde(default)]
    pub predictions_csv: Option<PathBuf>,
}

/// A complete run description. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub datasets: Vec<DatasetEntry>,
    pub protocol: ProtocolSpec,
    pub output: OutputPaths,
    /// Recorded in the output; every protocol is deterministic.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Parses, resolves and validates; never touches a stream.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            d.manifest = resolve(base, &d.manifest);
        }
        cfg.output.json = resolve(base, &cfg.output.json);
        cfg.output.csv = resolve(base, &cfg.output.csv);
        if let Some(p) = &mut cfg.output.predictions_csv {
            *p = resolve(base, p);
        }
        cfg.validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.datasets.is_empty() {
            bail!("no datasets listed");
        }
        self.protocol.validate()?;
        Ok(())
    }

    /// Loads every listed dataset, in config order.
    pub fn load_datasets(&self) -> Result<Vec<StreamDataset>> {
        self.datasets
            .iter()
            .map(|d| {
                StreamDataset::load(&d.manifest)
                    .with_context(|| format!("loading {}", d.manifest.display()))
            })
            .collect()
    }

    pub fn inputs<'a>(&'a self, datasets: &'a [StreamDataset]) -> Vec<EvalInput<'a>> {
        self.datasets
            .iter()
            .zip(datasets)
            .map(|(entry, dataset)| EvalInput {
                dataset,
                train_domain: entry
                    .train_domain
                    .as_deref()
                    .unwrap_or(&dataset.manifest.domain_id),
            })
            .collect()
    }
}

/// Command-line overrides applied to the config's boundary strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub k: Option<u64>,
    pub delta: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, spec: &ProtocolSpec) -> Result<ProtocolSpec> {
        let is_sbl = matches!(spec.boundary, Some(BoundaryStrategy::Sbl { .. }));
        if self.k.is_some() && !is_sbl {
            bail!("--k only applies to a static (sbl) boundary strategy");
        }
        let mut spec = spec.clone();
        let grids = [
            self.tau.map(|v| SweepGrid::Tau(vec![v])),
            self.k.map(|v| SweepGrid::K(vec![v])),
            self.delta.map(|v| SweepGrid::Delta(vec![v])),
        ];
        for grid in grids.into_iter().flatten() {
            let name = grid.parameter();
            let (_, updated) = grid
                .specs(&spec)
                .with_context(|| format!("cannot override {name}"))?
                .remove(0);
            spec = updated;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub version: u32,
    pub seed: Option<u64>,
    pub protocol: ProtocolSpec,
    pub report: EvalReport,
}

/// Runs the configured protocol and writes the JSON and CSV reports.
pub fn cmd_run(cfg: &RunConfig, overrides: &Overrides) -> Result<RunOutput> {
    let protocol = overrides.apply(&cfg.protocol)?;
    let datasets = cfg.load_datasets()?;
    let report = run(&cfg.inputs(&datasets), &protocol)?;
    let out = RunOutput {
        version: CONFIG_VERSION,
        seed: cfg.seed,
        protocol,
        report,
    };
    write_file(
        &cfg.output.json,
        &(serde_json::to_string_pretty(&out)? + "\n"),
    )?;
    write_file(&cfg.output.csv, &out.report.pairs_csv())?;
    if let Some(path) = &cfg.output.predictions_csv {
        write_file(path, &out.report.predictions_csv())?;
    }
    Ok(out)
}

/// `tau=0.1,0.2`, `k=8,16` or `delta=1,5,10`.
pub fn parse_grid(text: &str) -> Result<SweepGrid> {
    let (name, values) = text
        .split_once('=')
        .with_context(|| format!("grid {text:?} is not of the form name=v1,v2,..."))?;
    let items: Vec<&str> = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let ints = || -> Result<Vec<u64>> {
        items
            .iter()
            .map(|s| s.parse().with_context(|| format!("bad {name} value {s:?}")))
            .collect()
    };
    let grid = match name.trim() {
        "tau" => SweepGrid::Tau(
            items
                .iter()
                .map(|s| s.parse().with_context(|| format!("bad tau value {s:?}")))
                .collect::<Result<_>>()?,
        ),
        "k" => SweepGrid::K(ints()?),
        "delta" => SweepGrid::Delta(ints()?),
        other => bail!("unknown sweep parameter {other:?} (expected tau, k or delta)"),
    };
    if grid.is_empty() {
        bail!("grid {text:?} has no values");
    }
    Ok(grid)
}

/// One report per grid value; writes all of them as JSON plus a CSV table.
pub fn cmd_sweep(cfg: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    grid.specs(&cfg.protocol)?;
    let datasets = cfg.load_datasets()?;
    let rows = sweep(&cfg.inputs(&datasets), &cfg.protocol, grid)?;
    write_file(
        &cfg.output.json,
        &(serde_json::to_string_pretty(&rows)? + "\n"),
    )?;
    write_file(&cfg.output.csv, &sweep_csv(&rows))?;
    Ok(rows)
}

/// Parses `0.1,0.5,1.0`.
pub fn parse_fractions(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("bad fraction {s:?}")))
        .collect()
}

/// Streaming accuracy with a fraction of every segment observed.
pub fn cmd_curve(cfg: &RunConfig, fractions: &[f64]) -> Result<Vec<CurvePoint>> {
    let datasets = cfg.load_datasets()?;
    let points =
        accuracy_vs_percentage(&cfg.inputs(&datasets), fractions, cfg.protocol.score_space)?;
    write_file(
        &cfg.output.json,
        &(serde_json::to_string_pretty(&points)? + "\n"),
    )?;
    write_file(&cfg.output.csv, &curve_csv(&points))?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub version: u32,
    pub suite: SuiteConfig,
}

/// Generates the suite into `out` and returns the manifest paths.
pub fn cmd_synth(config: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let file: SynthFile = read_json(config)?;
    check_version(file.version)?;
    let datasets = generate_suite(&file.suite)
        .with_context(|| format!("invalid suite in {}", config.display()))?;
    datasets
        .iter()
        .map(|ds| {
            ds.save(out)
                .with_context(|| format!("writing {} to {}", ds.manifest.video_id, out.display()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectSummary {
    pub path: PathBuf,
    pub version: u16,
    pub feature_dim: u32,
    pub num_classes: u32,
    pub num_frames: u64,
    /// Per-class statistics of the logits; empty for a header-only stream.
    pub logits: Vec<ValueStats>,
    /// Disagreements with a sibling manifest or annotation file.
    pub diagnostics: Vec<String>,
}

impl InspectSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "file         {}", self.path.display());
        let _ = writeln!(out, "version      {}", self.version);
        let _ = writeln!(out, "feature_dim  {}", self.feature_dim);
        let _ = writeln!(out, "num_classes  {}", self.num_classes);
        let _ = writeln!(out, "num_frames   {}", self.num_frames);
        if !self.logits.is_empty() {
            let _ = writeln!(
                out,
                "{:>6} {:>12} {:>12} {:>12}",
                "class", "min", "max", "mean"
            );
            for (c, s) in self.logits.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{c:>6} {:>12.5} {:>12.5} {:>12.5}",
                    s.min, s.max, s.mean
                );
            }
        }
        let _ = writeln!(out, "diagnostics  {}", self.diagnostics.len());
        for d in &self.diagnostics {
            let _ = writeln!(out, "  - {d}");
        }
        out
    }
}

/// Reads a whole stream once. Format errors are returned as errors;
/// inconsistencies with sibling files become diagnostics.
pub fn cmd_inspect(path: &Path) -> Result<InspectSummary> {
    let mut reader =
        StreamReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let header = reader.header();
    let classes = header.num_classes as usize;
    let mut record = FrameRecord::zeroed(header.feature_dim as usize, classes);
    let mut sums = vec![0.0f64; classes];
    let mut mins = vec![f64::INFINITY; classes];
    let mut maxs = vec![f64::NEG_INFINITY; classes];
    while reader
        .read_into(&mut record)
        .with_context(|| format!("reading {}", path.display()))?
    {
        for (c, &v) in record.logits.iter().enumerate() {
            let v = f64::from(v);
            sums[c] += v;
            mins[c] = mins[c].min(v);
            maxs[c] = maxs[c].max(v);
        }
    }
    let n = reader.records_read();
    let logits = if n == 0 {
        Vec::new()
    } else {
        (0..classes)
            .map(|c| ValueStats {
                min: mins[c],
                max: maxs[c],
                mean: sums[c] / n as f64,
            })
            .collect()
    };
    Ok(InspectSummary {
        path: path.to_path_buf(),
        version: header.version,
        feature_dim: header.feature_dim,
        num_classes: header.num_classes,
        num_frames: n,
        logits,
        diagnostics: sibling_diagnostics(path, &header),
    })
}

fn sibling_diagnostics(stream: &Path, header: &StreamHeader) -> Vec<String> {
    let manifest_path = stream.with_extension("json");
    if !manifest_path.exists() {
        return Vec::new();
    }
    let manifest = match load_manifest(&manifest_path) {
        Ok(m) => m,
        Err(e) => return vec![format!("{}: {e}", manifest_path.display())],
    };
    let mut out = Vec::new();
    if let Err(e) = header.check_manifest(&manifest) {
        out.push(format!("{}: {e}", manifest_path.display()));
    }
    let frames = header.num_frames;
    let (_, csv) = sibling_paths(&manifest_path);
    if csv.exists() {
        match load_annotations(&csv, manifest.num_classes) {
            Ok(segments) => {
                let own: Vec<_> = segments
                    .iter()
                    .filter(|s| s.video_id == manifest.video_id)
                    .collect();
                if own.is_empty() {
                    out.push(format!(
                        "{}: no segments for video {}",
                        csv.display(),
                        manifest.video_id
                    ));
                }
                for s in own.iter().filter(|s| s.stop_frame >= frames) {
                    out.push(format!(
                        "{}: segment [{}, {}] ends past frame {}",
                        csv.display(),
                        s.start_frame,
                        s.stop_frame,
                        frames.saturating_sub(1)
                    ));
                }
            }
            Err(e) => out.push(format!("{}: {e}", csv.display())),
        }
    }
    out
}
