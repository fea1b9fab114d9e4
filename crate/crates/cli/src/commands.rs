use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mvcolor::diagnostics::{
    fit_curves, param_variance_scan, residual_report, timing_linearity, tracks_to_tsv, variance_rows_to_tsv,
};
use mvcolor::ingest::{create_dir, load_dataset, load_png, save_png};
use mvcolor::metrics::{mean_ciede2000, metric_table, psi_bar, psnr, read_charts, ssim, ColorChart, MetricRow, PsiOrder};
use mvcolor::optimizer::FreezeSet;
use mvcolor::report::{parse_params, FitReport};
use mvcolor::restore::{find_target, normalize, restore_image, stitch_baseline, RestoredImage};
use mvcolor::synth::{self, SceneFile};
use mvcolor::uifm::ModelMode;
use mvcolor::{DistanceMode, Error, ObservationSet, PosedImage, RestorationState, RestoreOptions, Result, RgbImage};
use rayon::prelude::*;

use crate::config::{RunConfig, Targets, CONFIG_ECHO};

pub const RESTORED_DIR: &str = "restored";
pub const STITCHED_DIR: &str = "stitched";
/// Wall-clock log of a restore run; the only output that differs between reruns.
pub const TIMING_FILE: &str = "timing.csv";

const CURVE_SAMPLES: usize = 100;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::parse(path, 0, "not UTF-8"))
}

pub fn simulate(
    preset: Option<&str>,
    scene: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    noise: Option<f64>,
    views: Option<usize>,
) -> Result<()> {
    let mut file = match (preset, scene) {
        (Some(name), None) => SceneFile::preset(name),
        (None, Some(path)) => SceneFile::load(path)?,
        _ => return Err(Error::InvalidArgument("give exactly one of --preset and --scene".into())),
    };
    if seed.is_some() {
        file.seed = seed;
    }
    if let Some(sigma) = noise {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise must be a non-negative number, got {sigma}")));
        }
        file.noise_sigma = Some(sigma);
    }
    if views.is_some() {
        file.views = views;
    }
    let spec = file.build()?;
    let rendered = synth::export(&spec, out, Some(&file))?;
    for v in rendered.iter().filter(|v| v.sees_nothing()) {
        warn!("view {} sees no surface", v.view.name);
    }
    info!("wrote {} views of '{}' to {}", rendered.len(), spec.name, out.display());
    Ok(())
}

/// Ids to process; `all` means every image, in id order.
fn select_targets(dataset: &[PosedImage], targets: &Targets) -> Result<Vec<u32>> {
    match targets {
        Targets::All => Ok(dataset.iter().map(|p| p.id).collect()),
        Targets::Ids(ids) => {
            for &id in ids {
                find_target(dataset, id)?;
            }
            Ok(ids.clone())
        }
    }
}

fn restore_options(cfg: &RunConfig) -> Result<RestoreOptions> {
    let mut initial = match &cfg.init_params {
        Some(path) => Some(parse_params(&read_text(path)?)?),
        None => None,
    };
    if cfg.tied {
        let p = initial.get_or_insert_with(|| mvcolor::UifmParams::uniform(0.1));
        p.mode = ModelMode::Tied;
    }
    Ok(RestoreOptions {
        adam: cfg.adam,
        window: cfg.window,
        distance_mode: cfg.distance_mode,
        freeze: cfg.freeze_set()?,
        initial_params: initial,
    })
}

fn write_config_echo(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join(CONFIG_ECHO), cfg.to_toml())
}

/// Runs `job` on each target, in parallel when `jobs > 1`, keeping id order.
fn for_each_target<T: Send>(ids: &[u32], jobs: usize, job: impl Fn(u32) -> Result<T> + Sync) -> Result<Vec<T>> {
    if jobs <= 1 {
        return ids.iter().map(|&id| job(id)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} jobs: {e}")))?;
    pool.install(|| ids.par_iter().map(|&id| job(id)).collect())
}

/// Blind targets are skipped when every image was requested, fatal otherwise.
fn skip_blind<T>(res: Result<T>, explicit: bool) -> Result<Option<T>> {
    match res {
        Err(Error::NothingToRestore(id)) if !explicit => {
            warn!("image {id} has no pixel with depth; skipped");
            Ok(None)
        }
        other => other.map(Some),
    }
}

fn write_restored(dir: &Path, name: &str, img: &RestoredImage, cfg: &RunConfig) -> Result<()> {
    let norm = normalize(img, cfg.low_pct, cfg.high_pct)?;
    save_png(&dir.join(format!("{name}.png")), &norm.image)?;
    write_file(&dir.join(format!("{name}.f32")), img.to_f32_bytes())
}

struct TimingRow {
    target: u32,
    observations: usize,
    pairing: f64,
    optimization: f64,
}

pub fn restore(cfg: &RunConfig) -> Result<()> {
    let dataset = load_dataset(&cfg.dataset)?;
    let ids = select_targets(&dataset, &cfg.targets)?;
    let opts = restore_options(cfg)?;
    write_config_echo(cfg)?;
    let dir = cfg.out.join(RESTORED_DIR);
    create_dir(&dir)?;
    let rows = for_each_target(&ids, cfg.jobs, |id| {
        let Some(r) = skip_blind(restore_image(&dataset, id, &opts), cfg.targets.explicit())? else {
            return Ok(None);
        };
        let name = &find_target(&dataset, id)?.name;
        write_restored(&dir, name, &r.restored, cfg)?;
        let report = FitReport::new(id, r.params, r.observations.len(), r.trace);
        write_file(&dir.join(format!("{name}.fit.txt")), report.to_text())?;
        r.observations.save_cache(&dir.join(format!("{name}.obs")))?;
        let negative = r.params.negative_groups();
        if !negative.is_empty() {
            warn!("image {id}: negative fitted {}", negative.join(", "));
        }
        info!(
            "image {id}: {} observations, pairing {:.3} s, optimization {:.3} s",
            r.observations.len(),
            r.pairing_seconds,
            r.optimization_seconds
        );
        Ok(Some(TimingRow {
            target: id,
            observations: r.observations.len(),
            pairing: r.pairing_seconds,
            optimization: r.optimization_seconds,
        }))
    })?;
    let mut csv = String::from("target,observations,pairing_seconds,optimization_seconds\n");
    for row in rows.iter().flatten() {
        writeln!(csv, "{},{},{},{}", row.target, row.observations, row.pairing, row.optimization).unwrap();
    }
    write_file(&cfg.out.join(TIMING_FILE), csv)
}

pub fn stitch(cfg: &RunConfig) -> Result<()> {
    let dataset = load_dataset(&cfg.dataset)?;
    let ids = select_targets(&dataset, &cfg.targets)?;
    write_config_echo(cfg)?;
    let dir = cfg.out.join(STITCHED_DIR);
    create_dir(&dir)?;
    for_each_target(&ids, cfg.jobs, |id| {
        let res = stitch_baseline(&dataset, id, cfg.window, cfg.distance_mode);
        if let Some(img) = skip_blind(res, cfg.targets.explicit())? {
            write_restored(&dir, &find_target(&dataset, id)?.name, &img, cfg)?;
        }
        Ok(())
    })?;
    Ok(())
}

pub struct EvaluateOptions {
    pub pred: PathBuf,
    pub truth: Option<PathBuf>,
    pub charts: Option<PathBuf>,
    pub metrics: Option<String>,
    pub method: String,
    pub raw: bool,
    pub out: Option<PathBuf>,
}

const METRICS: [&str; 4] = ["psnr", "ssim", "ciede2000", "psi_bar"];

fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(dir.to_path_buf()),
        _ => Error::io(dir, e),
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Image to score and the mask of pixels it defines.
fn load_prediction(dir: &Path, name: &str, raw: bool) -> Result<(RgbImage, Option<Vec<bool>>)> {
    let png = load_png(&dir.join(format!("{name}.png")))?;
    let dump_path = dir.join(format!("{name}.f32"));
    let dump = if dump_path.exists() {
        Some(RestoredImage::from_f32_bytes(0, png.width, png.height, &read_file(&dump_path)?)?)
    } else if raw {
        return Err(Error::MissingFile(dump_path));
    } else {
        None
    };
    let mask = dump.as_ref().map(|d| d.mask.clone());
    let image = match (raw, dump) {
        (true, Some(d)) => {
            let mut img = d.image;
            for px in &mut img.data {
                if px.iter().any(|v| !v.is_finite()) {
                    *px = [0.0; 3];
                }
            }
            img
        }
        _ => png.to_float(),
    };
    Ok((image, mask))
}

pub fn evaluate(o: &EvaluateOptions) -> Result<()> {
    let requested: Vec<String> = match &o.metrics {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => {
            let mut v = Vec::new();
            if o.truth.is_some() {
                v.extend(["psnr", "ssim", "ciede2000"].map(String::from));
            }
            if o.charts.is_some() {
                v.push("psi_bar".into());
            }
            v
        }
    };
    if requested.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate: give --truth and/or --charts".into()));
    }
    if let Some(bad) = requested.iter().find(|m| !METRICS.contains(&m.as_str())) {
        return Err(Error::InvalidArgument(format!("unknown metric '{bad}' (expected {})", METRICS.join(", "))));
    }
    let wants = |m: &str| requested.iter().any(|r| r == m);
    let needs_truth = ["psnr", "ssim", "ciede2000"].iter().any(|m| wants(m));
    let truth = match (&o.truth, needs_truth) {
        (None, true) => return Err(Error::InvalidArgument("psnr, ssim and ciede2000 need --truth".into())),
        (t, _) => t.as_deref().filter(|_| needs_truth),
    };
    let charts: Vec<ColorChart> = if wants("psi_bar") {
        let path = o
            .charts
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("psi_bar needs --charts".into()))?;
        read_charts(path).map_err(|e| match e {
            Error::MissingFile(p) => Error::InvalidArgument(format!("charts file {} not found", p.display())),
            other => other,
        })?
    } else {
        Vec::new()
    };

    let names = png_stems(&o.pred)?;
    if names.is_empty() {
        return Err(Error::MissingFile(o.pred.join("*.png")));
    }
    let mut rows = Vec::new();
    let mut row = |image: String, metric: &str, value: f64| {
        rows.push(MetricRow {
            method: o.method.clone(),
            image,
            metric: metric.into(),
            value,
        })
    };
    for name in &names {
        let (img, mask) = load_prediction(&o.pred, name, o.raw)?;
        let mask = mask.as_deref();
        if let Some(dir) = truth {
            let t = load_png(&dir.join(format!("{name}.png")))?.to_float();
            if (t.width, t.height) != (img.width, img.height) {
                return Err(Error::InvalidArgument(format!(
                    "{name}: prediction is {}x{}, truth is {}x{}",
                    img.width, img.height, t.width, t.height
                )));
            }
            if wants("psnr") {
                row(name.clone(), "psnr", psnr(&img, &t, mask)?);
            }
            if wants("ssim") {
                row(name.clone(), "ssim", ssim(&img, &t, mask)?);
            }
            if wants("ciede2000") {
                row(name.clone(), "ciede2000", mean_ciede2000(&img, &t, mask)?);
            }
        }
        for chart in charts.iter().filter(|c| &c.image == name) {
            let v = psi_bar(&img, chart, mask, PsiOrder::MeanThenAngle)?;
            row(format!("{name}:{}", chart.chart_id), "psi_bar", v);
        }
    }
    let source = if o.raw { "raw float" } else { "normalized 8-bit" };
    let text = format!("# values: {source}\n{}", metric_table(&rows));
    match &o.out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub struct DiagnoseOptions {
    pub dataset: PathBuf,
    pub restored: PathBuf,
    pub out: PathBuf,
    pub targets: Targets,
    pub sample_cap: usize,
    pub tracks: usize,
    pub seed: u64,
}

fn fit_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.fit.txt"))
}

pub fn diagnose(o: &DiagnoseOptions) -> Result<()> {
    let dataset = load_dataset(&o.dataset)?;
    let dir = o.restored.join(RESTORED_DIR);
    let echo = o.restored.join(CONFIG_ECHO);
    let mode = if echo.exists() {
        RunConfig::load(&echo)?.distance_mode
    } else {
        DistanceMode::Range
    };
    let ids: Vec<u32> = match &o.targets {
        Targets::All => dataset
            .iter()
            .filter(|p| fit_path(&dir, &p.name).exists())
            .map(|p| p.id)
            .collect(),
        Targets::Ids(ids) => ids.clone(),
    };
    if ids.is_empty() {
        return Err(Error::MissingFile(dir.join("*.fit.txt")));
    }
    create_dir(&o.out)?;
    let mut fits = Vec::new();
    for id in ids {
        let target = find_target(&dataset, id)?;
        let name = &target.name;
        let report = FitReport::parse(&read_text(&fit_path(&dir, name))?)?;
        let obs = ObservationSet::load_cache(&dir.join(format!("{name}.obs")))?;
        let dump = read_file(&dir.join(format!("{name}.f32")))?;
        let restored = RestoredImage::from_f32_bytes(id, target.width(), target.height(), &dump)?;
        let state = RestorationState {
            width: restored.width(),
            height: restored.height(),
            mask: restored.mask,
            j: restored.image.data,
            params: report.params,
            frozen: FreezeSet::NONE,
        };
        let residuals = residual_report(&obs, &state, o.sample_cap, o.seed);
        write_file(&o.out.join(format!("{name}.residuals.tsv")), residuals.to_tsv())?;
        let tracks = fit_curves(&obs, &state, o.tracks, CURVE_SAMPLES);
        write_file(&o.out.join(format!("{name}.tracks.tsv")), tracks_to_tsv(&tracks))?;
        for (c, ch) in residuals.channels.iter().enumerate() {
            info!(
                "image {id} channel {c}: skewness {:.4}, excess kurtosis {:.4}",
                ch.moments.skewness, ch.moments.excess_kurtosis
            );
        }
        fits.push((id, report.params));
    }
    let rows = param_variance_scan(&dataset, &fits, mode)?;
    write_file(&o.out.join("variance.tsv"), variance_rows_to_tsv(&rows))?;

    let timing = o.restored.join(TIMING_FILE);
    if timing.exists() {
        let runs = parse_timing(&timing)?;
        if runs.len() >= 3 {
            let mut s = String::from("phase\tslope\tintercept\tr2\n");
            let optimization: Vec<(f64, f64)> = runs.iter().map(|r| (r.0, r.2)).collect();
            let total: Vec<(f64, f64)> = runs.iter().map(|r| (r.0, r.1 + r.2)).collect();
            for (phase, pts) in [("optimization", optimization), ("total", total)] {
                let fit = timing_linearity(&pts)?;
                writeln!(s, "{phase}\t{}\t{}\t{}", fit.slope, fit.intercept, fit.r2).unwrap();
            }
            write_file(&o.out.join("timing.tsv"), s)?;
        } else {
            info!("timing fit needs at least 3 restored targets, found {}", runs.len());
        }
    }
    Ok(())
}

/// `(observations, pairing seconds, optimization seconds)` per target.
fn parse_timing(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, i + 1, "bad number"))?;
            match f.as_slice() {
                [_, n, p, opt] => Ok((*n, *p, *opt)),
                _ => Err(Error::parse(path, i + 1, "expected 4 columns")),
            }
        })
        .collect()
}
