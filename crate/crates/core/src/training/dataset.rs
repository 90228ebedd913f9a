//! Building a patch store from directories of LDR and tonemapped HDR images.
//!
//! Files are paired by stem. The LR side is the LDR image downsampled by two;
//! the HR side is the tonemapped HDR image at full resolution. When the HDR
//! directory holds a linear Radiance `.hdr` file instead of a tonemapped one,
//! it is tonemapped with the pipeline's Reinhard operator first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{
    bicubic_resize_image, gamma_map, luminance_plane, read_hdr_image, read_ldr_image, Plane,
    RasterImage,
};
use crate::pipeline::reinhard_tonemap;
use crate::retinex::{bound_reflectance, decompose};
use crate::wls::WlsParams;

use super::patches::{extract_patch_pairs, PatchPair, PatchStore, HR_PATCH, LR_PATCH};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub wls: WlsParams,
    pub gamma_linearize: f64,
    pub tonemap_key: f64,
    pub threads: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            wls: WlsParams::default(),
            gamma_linearize: 2.2,
            tonemap_key: 0.18,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// What [`prepare_dataset`] did besides producing the store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareReport {
    /// Stems present on only one side.
    pub skipped: Vec<String>,
    /// Stems whose HR side was tonemapped from a linear `.hdr` file.
    pub tonemapped: Vec<String>,
    /// Stems whose images were cropped to even dimensions.
    pub cropped: Vec<String>,
}

#[derive(Debug, Clone)]
enum HrSource {
    Tonemapped(PathBuf),
    Linear(PathBuf),
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

fn stems(dir: &Path, accept: &[&str]) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !extension(&path).is_some_and(|e| accept.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_default().push(path);
        }
    }
    for paths in out.values_mut() {
        paths.sort();
    }
    Ok(out)
}

fn even_crop(image: &RasterImage) -> Result<RasterImage> {
    let (h, w) = (image.height() & !1, image.width() & !1);
    if (h, w) == (image.height(), image.width()) {
        return Ok(image.clone());
    }
    let c = image.channels();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(image.pixel(y, x));
        }
    }
    RasterImage::new(h, w, c, image.range(), data)
}

/// Bounded reflectance of display-encoded luminance: linearize with
/// `x^gamma`, decompose, `tanh`.
pub fn bounded_reflectance_of(luma: &Plane, options: &DatasetOptions) -> Result<Plane> {
    let linear = gamma_map(&luma.map(|v| v.clamp(0.0, 1.0)), options.gamma_linearize)?;
    Ok(bound_reflectance(&decompose(&linear, &options.wls)?.reflectance))
}

/// Bounded LR and HR reflectance maps for one image pair of equal size.
/// Odd dimensions are cropped to even first.
pub fn prepare_pair(ldr: &RasterImage, hdr_tm: &RasterImage, options: &DatasetOptions) -> Result<(Plane, Plane)> {
    if (ldr.height(), ldr.width()) != (hdr_tm.height(), hdr_tm.width()) {
        return Err(Error::Data(format!(
            "LDR is {}x{} but tonemapped HDR is {}x{}",
            ldr.height(),
            ldr.width(),
            hdr_tm.height(),
            hdr_tm.width()
        )));
    }
    let ldr = even_crop(ldr)?;
    let hdr_tm = even_crop(hdr_tm)?;
    let r_hh = bounded_reflectance_of(&luminance_plane(&hdr_tm), options)?;
    let small = bicubic_resize_image(&ldr, 0.5)?;
    let r_ll = bounded_reflectance_of(&luminance_plane(&small), options)?;
    Ok((r_ll, r_hh))
}

struct Job {
    stem: String,
    ldr: PathBuf,
    hdr: HrSource,
}

fn load_hr(source: &HrSource, options: &DatasetOptions) -> Result<RasterImage> {
    match source {
        HrSource::Tonemapped(p) => read_ldr_image(p),
        HrSource::Linear(p) => reinhard_tonemap(&read_hdr_image(p)?, options.tonemap_key),
    }
}

type JobResult = Result<(Vec<PatchPair>, bool)>;

fn run_job(job: &Job, options: &DatasetOptions) -> JobResult {
    let ldr = read_ldr_image(&job.ldr)?;
    let hdr = load_hr(&job.hdr, options)?;
    let odd = ldr.height() % 2 == 1 || ldr.width() % 2 == 1;
    let (r_ll, r_hh) = prepare_pair(&ldr, &hdr, options)
        .map_err(|e| Error::Data(format!("{}: {e}", job.stem)))?;
    Ok((extract_patch_pairs(&r_ll, &r_hh, 0)?, odd))
}

/// Pairs `ldr_dir` and `hdr_tm_dir` by file stem and cuts aligned patches
/// from every pair. Pairs are processed on up to `options.threads` threads;
/// the store is ordered by stem, grid position and augmentation.
pub fn prepare_dataset(
    ldr_dir: impl AsRef<Path>,
    hdr_tm_dir: impl AsRef<Path>,
    options: &DatasetOptions,
) -> Result<(PatchStore, PrepareReport)> {
    let ldr = stems(ldr_dir.as_ref(), &["png", "ppm"])?;
    let hdr = stems(hdr_tm_dir.as_ref(), &["png", "ppm", "hdr"])?;
    let mut report = PrepareReport::default();
    let mut jobs = Vec::new();
    for (stem, paths) in &ldr {
        let Some(hr_paths) = hdr.get(stem) else {
            report.skipped.push(stem.clone());
            continue;
        };
        let tonemapped = hr_paths.iter().find(|p| extension(p).as_deref() != Some("hdr"));
        let source = match tonemapped {
            Some(p) => HrSource::Tonemapped(p.clone()),
            None => {
                report.tonemapped.push(stem.clone());
                HrSource::Linear(hr_paths[0].clone())
            }
        };
        jobs.push(Job { stem: stem.clone(), ldr: paths[0].clone(), hdr: source });
    }
    report.skipped.extend(hdr.keys().filter(|s| !ldr.contains_key(*s)).cloned());
    report.skipped.sort();

    let threads = options.threads.max(1).min(jobs.len().max(1));
    let mut results: Vec<Option<JobResult>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = jobs.len().div_ceil(threads).max(1);
        for (job_chunk, slot_chunk) in jobs.chunks(chunk).zip(results.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (job, slot) in job_chunk.iter().zip(slot_chunk) {
                    *slot = Some(run_job(job, options));
                }
            });
        }
    });

    let mut store = PatchStore::new(LR_PATCH, HR_PATCH)?;
    for (job, result) in jobs.iter().zip(results) {
        let (pairs, odd) = result.expect("every job slot is filled")?;
        if odd {
            report.cropped.push(job.stem.clone());
        }
        let id = store.add_source(job.stem.clone());
        for mut pair in pairs {
            pair.source_id = id;
            store.push(pair)?;
        }
    }
    Ok((store, report))
}
