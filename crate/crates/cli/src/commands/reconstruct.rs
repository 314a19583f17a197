use std::time::Instant;

use mol::linops::io::{encode_image, read_image, read_mask};
use mol::linops::{ComplexImage, LinearOperatorSpec, MaskSpec, Measurement};
use mol::solver::{fixed_point_residual, solve_fixed_point_traced};
use mol::training::{generate_dataset, magnitude_psnr, ssim, Split, SsimParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::RunContext;

pub const RECORDS_FILE: &str = "reconstructions.json";

/// Outcome of one reconstruction, also written as `recon/<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconRecord {
    pub name: String,
    pub nfe: usize,
    pub converged: bool,
    pub diverged: bool,
    /// Last relative update `||T(x) - x|| / max(||x||, 1)`.
    pub final_update: Option<f64>,
    pub fixed_point_residual: Option<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    name: String,
    op: LinearOperatorSpec,
    measurement: Measurement,
    truth: Option<ComplexImage>,
}

/// Measurement files hold `coils x locations` images; single-coil data may
/// also be stored in any shape with the right number of entries (e.g. an
/// `H x W` image for the identity operator).
fn measurement_from_image(image: &ComplexImage, op: &LinearOperatorSpec) -> Option<Measurement> {
    let layout = op.layout();
    let fits = image.shape() == (layout.coils, layout.locations) || (layout.coils == 1 && image.len() == layout.len());
    if !fits {
        return None;
    }
    Measurement::new(image.data().to_vec(), layout).ok()
}

fn jobs(ctx: &RunContext) -> Result<Vec<Job>, CliError> {
    let cfg = &ctx.config;
    if cfg.reconstruct.inputs.is_empty() {
        let data = generate_dataset(&cfg.dataset_spec()?)?;
        return data
            .indices(Split::Test)
            .into_iter()
            .map(|i| {
                Ok(Job {
                    name: format!("test_{i:04}"),
                    op: data.operator(i)?,
                    measurement: data.measurements[i].clone(),
                    truth: Some(data.images[i].clone()),
                })
            })
            .collect();
    }
    cfg.reconstruct
        .inputs
        .iter()
        .enumerate()
        .map(|(k, input)| {
            let path = ctx.resolve(&input.measurement);
            let image = read_image(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let seed = mol::seed::indexed_seed(cfg.seed, "operator", k as u64);
            let mask = match &input.mask {
                Some(p) => {
                    let p = ctx.resolve(p);
                    read_mask(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
                None if cfg.needs_mask() => cfg.make_mask(seed)?,
                None => MaskSpec::full(cfg.dataset.height, cfg.dataset.width),
            };
            let op = cfg.operator_with_mask(mask, seed)?;
            let measurement = measurement_from_image(&image, &op).ok_or_else(|| {
                CliError::Config(format!(
                    "{}: measurement is {}x{}, operator expects {}x{}",
                    path.display(),
                    image.height(),
                    image.width(),
                    op.layout().coils,
                    op.layout().locations
                ))
            })?;
            let truth = match &input.ground_truth {
                Some(p) => {
                    let p = ctx.resolve(p);
                    Some(read_image(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("input_{k:04}"));
            Ok(Job {
                name,
                op,
                measurement,
                truth,
            })
        })
        .collect()
}

fn solve(ctx: &RunContext, w: &mol::NetworkWeights, job: &Job) -> Result<ReconRecord, CliError> {
    let cfg = ctx.config.solver_config()?;
    let start = Instant::now();
    let mut trace = Vec::new();
    let res = match solve_fixed_point_traced(w, &job.op, &job.measurement, None, &cfg, &mut trace) {
        Ok(r) => r,
        Err(e @ mol::MolError::Numeric { .. }) => {
            return Ok(ReconRecord {
                name: job.name.clone(),
                nfe: 0,
                converged: false,
                diverged: true,
                final_update: None,
                fixed_point_residual: None,
                seconds: start.elapsed().as_secs_f64(),
                psnr: None,
                ssim: None,
                error: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let seconds = start.elapsed().as_secs_f64();
    ctx.write_file(&format!("recon/{}.molimg", job.name), encode_image(&res.solution)?)?;
    ctx.write_file(&format!("recon/{}_trace.csv", job.name), trace)?;
    let (psnr, ssim_value) = match &job.truth {
        Some(t) => (
            Some(magnitude_psnr(&res.solution, t)?),
            Some(ssim(&res.solution, t, &SsimParams::default())?),
        ),
        None => (None, None),
    };
    Ok(ReconRecord {
        name: job.name.clone(),
        nfe: res.nfe,
        converged: res.converged,
        diverged: res.diverged,
        final_update: res.final_residual(),
        fixed_point_residual: Some(fixed_point_residual(&res.solution, w, &job.op, &job.measurement, cfg.lambda)?),
        seconds,
        psnr,
        ssim: ssim_value,
        error: (!res.converged).then(|| {
            if res.diverged {
                "diverged".to_string()
            } else {
                format!("not converged after {} iterations", res.nfe)
            }
        }),
    })
}

pub fn run(ctx: &RunContext) -> Result<(), CliError> {
    let w = ctx.require_checkpoint()?;
    let jobs = jobs(ctx)?;
    let mut records = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let rec = solve(ctx, &w, job)?;
        let json = serde_json::to_string_pretty(&rec).expect("record serializes");
        ctx.write_file(&format!("recon/{}.json", rec.name), json)?;
        eprintln!(
            "{}: nfe {} converged {}{}",
            rec.name,
            rec.nfe,
            rec.converged,
            rec.psnr.map(|p| format!(" psnr {p:.3}")).unwrap_or_default()
        );
        records.push(rec);
    }
    ctx.write_file(RECORDS_FILE, serde_json::to_string_pretty(&records).expect("records serialize"))?;
    if !records.is_empty() && records.iter().all(|r| !r.converged) {
        return Err(CliError::AllFailed(records.len()));
    }
    Ok(())
}
