//! The subcommands. Each writes its files into the run directory and returns
//! the manifest it wrote next to them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use microscale_core::homogenizer::{extract_length_scale, Homogenizer, Tangents};
use microscale_core::inverse::{
    corrupt_measurements, identify_macro_observed, identify_micro_observed, Alpha, MacroIdentification, MacroModel,
    MicroIdentification, MicroModel,
};
use microscale_core::macro_solver::sample_top_surface;
use microscale_core::measurement::MeasurementSet;
use microscale_core::rve::{circle_count, export_pgm, generate, CircleSet, MaterialGrid};
use serde_json::json;

use crate::files;
use crate::manifest::RunManifest;
use crate::{CliError, ExperimentConfig};

pub const MEASUREMENTS: &str = "measurements.csv";
pub const REFERENCE_TANGENTS: &str = "reference_tangents.csv";
pub const ALPHA: &str = "alpha.csv";
pub const BETA: &str = "beta.csv";
pub const TANGENTS: &str = "tangents.csv";
pub const CIRCLES: &str = "circles.csv";
pub const RVE_IMAGE: &str = "rve.pgm";
pub const CONVERGENCE_1: &str = "convergence_stage1.csv";
pub const CONVERGENCE_2: &str = "convergence_stage2.csv";

/// A validated config bound to an output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Worker cap. The solvers run on the calling thread, so any cap holds.
    pub threads: usize,
    /// Echo progress on stderr.
    pub verbose: bool,
}

impl Run {
    /// `out` overrides `output.dir`; `seed_override` replaces the noise seed.
    pub fn new(
        mut config: ExperimentConfig,
        out: Option<PathBuf>,
        threads: usize,
        seed_override: Option<u64>,
    ) -> Result<Self, CliError> {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if let Some(dir) = out {
            config.output.dir = dir;
        }
        if let Some(seed) = seed_override {
            config.noise.seed = seed;
        }
        config.validate()?;
        let out = config.output.dir.clone();
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", out.display())))?;
        Ok(Run { config, out, threads, verbose: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, &self.config, self.threads)
    }
}

fn tangents_json(t: &Tangents) -> serde_json::Value {
    let (l, residual) = extract_length_scale(t);
    json!({
        "C11": t.c.0[(0, 0)],
        "C12": t.c.0[(0, 1)],
        "C33": t.c.0[(2, 2)],
        "length_scale": l,
        "length_scale_residual": residual,
        "circles": t.circle_count,
        "pore_fraction": t.pore_fraction,
        "edge_length": t.edge_length,
    })
}

pub struct Synthesis {
    pub reference: Tangents,
    pub clean: MeasurementSet,
    pub noisy: MeasurementSet,
}

/// Homogenizes the reference RVE, loads the cantilever with its tangents and
/// samples the top surface with noise.
pub fn synthesize(run: &Run, manifest: &mut RunManifest) -> Result<Synthesis, CliError> {
    let cfg = &run.config;
    let t0 = Instant::now();
    let reference = Homogenizer::new(&cfg.reference_spec(), &cfg.ingredients()?)?.tangents()?;
    run.log(|| format!("reference RVE homogenized: {} circles", reference.circle_count));
    let (mesh, field) = cfg.setup().solve(reference.c.clone(), reference.d.clone())?;
    let clean = sample_top_surface(&field, &mesh);
    let noisy = corrupt_measurements(&clean, cfg.noise.level, cfg.noise.seed)?;

    files::write_measurements(&run.path(MEASUREMENTS), &noisy, &clean)?;
    let r = &cfg.reference;
    let meta = format!("phi {}; vf {}; seed {}; raster {}", r.phi, r.vf, r.seed, r.raster_n);
    files::write_tangents(&run.path(REFERENCE_TANGENTS), &reference, &meta)?;
    manifest.record(&run.out, MEASUREMENTS)?;
    manifest.record(&run.out, REFERENCE_TANGENTS)?;
    manifest.stages.insert(
        "synthesize".into(),
        json!({ "samples": noisy.len(), "reference": tangents_json(&reference) }),
    );
    manifest.timings.insert("synthesize".into(), t0.elapsed().as_secs_f64());
    Ok(Synthesis { reference, clean, noisy })
}

pub fn identify_macro(run: &Run, data: &MeasurementSet, manifest: &mut RunManifest) -> Result<MacroIdentification, CliError> {
    let cfg = &run.config;
    let t0 = Instant::now();
    let model = MacroModel::new(cfg.setup())?;
    let id = identify_macro_observed(data, &model, &cfg.stage1_guess(), &cfg.stage1_settings(), &mut |r| {
        run.log(|| format!("stage 1 iter {:3}  f = {:.6e}  x = {:?}", r.iteration, r.f, r.x))
    })?;
    let res = &id.result;
    files::write_alpha(&run.path(ALPHA), &id.alpha, res.f, res.iterations, res.termination.as_str())?;
    files::write_convergence(
        &run.path(CONVERGENCE_1),
        &["lambda", "mu", "l"],
        &res.history,
        "lambda, mu in GPa; l in mm; objective dimensionless; grad_norm relative",
    )?;
    manifest.record(&run.out, ALPHA)?;
    manifest.record(&run.out, CONVERGENCE_1)?;
    manifest.stages.insert(
        "identify-macro".into(),
        json!({
            "lambda": id.alpha.lambda,
            "mu": id.alpha.mu,
            "l": id.alpha.l,
            "objective": res.f,
            "iterations": res.iterations,
            "evaluations": res.evaluations,
            "termination": res.termination.as_str(),
        }),
    );
    manifest.timings.insert("identify-macro".into(), t0.elapsed().as_secs_f64());
    Ok(id)
}

pub fn identify_micro(run: &Run, alpha: &Alpha, manifest: &mut RunManifest) -> Result<MicroIdentification, CliError> {
    let cfg = &run.config;
    let t0 = Instant::now();
    let mut model = MicroModel::new(cfg.trial_template(), cfg.ingredients()?);
    let target = alpha.target()?;
    let id = identify_micro_observed(&target, &mut model, &cfg.stage2_guess(), &cfg.stage2_settings(), &mut |r| {
        run.log(|| format!("stage 2 iter {:3}  f = {:.6e}  x = {:?}", r.iteration, r.f, r.x))
    })?;
    let res = &id.result;
    let circles = circle_count(id.beta.vf, cfg.reference.size_factor);
    files::write_beta(&run.path(BETA), id.beta.phi, id.beta.vf, circles, res.f, res.iterations, res.termination.as_str())?;
    files::write_convergence(
        &run.path(CONVERGENCE_2),
        &["phi", "vf"],
        &res.history,
        &format!("phi in mm; objective dimensionless; grad_norm relative; rve seed {}", cfg.stage2.seed),
    )?;
    manifest.record(&run.out, BETA)?;
    manifest.record(&run.out, CONVERGENCE_2)?;
    for (k, grid) in &id.snapshots {
        let name = format!("iter_{k}.pgm");
        write_bytes(&run.path(&name), &export_pgm(grid))?;
        manifest.record(&run.out, &name)?;
    }
    manifest.stages.insert(
        "identify-micro".into(),
        json!({
            "phi": id.beta.phi,
            "vf": id.beta.vf,
            "circles": circles,
            "objective": res.f,
            "iterations": res.iterations,
            "evaluations": res.evaluations,
            "termination": res.termination.as_str(),
            "microstructures_homogenized": model.cached(),
        }),
    );
    manifest.timings.insert("identify-micro".into(), t0.elapsed().as_secs_f64());
    Ok(id)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
}

fn finish(run: &Run, manifest: RunManifest) -> Result<RunManifest, CliError> {
    manifest.write(&run.out)?;
    Ok(manifest)
}

pub fn cmd_synthesize(run: &Run) -> Result<RunManifest, CliError> {
    let mut m = run.manifest("synthesize");
    synthesize(run, &mut m)?;
    finish(run, m)
}

pub fn cmd_identify_macro(run: &Run, measurements: &Path) -> Result<RunManifest, CliError> {
    let data = files::read_measurements(measurements)?;
    let mut m = run.manifest("identify-macro");
    identify_macro(run, &data, &mut m)?;
    finish(run, m)
}

pub fn cmd_identify_micro(run: &Run, alpha: &Path) -> Result<RunManifest, CliError> {
    let alpha = files::read_alpha(alpha)?;
    let mut m = run.manifest("identify-micro");
    identify_micro(run, &alpha, &mut m)?;
    finish(run, m)
}

/// synthesize, identify-macro, identify-micro; the first failure aborts.
pub fn cmd_pipeline(run: &Run) -> Result<RunManifest, CliError> {
    let mut m = run.manifest("pipeline");
    let syn = synthesize(run, &mut m)?;
    let stage1 = identify_macro(run, &syn.noisy, &mut m)?;
    identify_micro(run, &stage1.alpha, &mut m)?;
    finish(run, m)
}

/// Tangents of the `[reference]` microstructure.
pub fn cmd_homogenize(run: &Run) -> Result<(RunManifest, Tangents), CliError> {
    let cfg = &run.config;
    let mut m = run.manifest("homogenize");
    let t0 = Instant::now();
    let t = Homogenizer::new(&cfg.reference_spec(), &cfg.ingredients()?)?.tangents()?;
    let r = &cfg.reference;
    let meta = format!("phi {}; vf {}; seed {}; raster {}", r.phi, r.vf, r.seed, r.raster_n);
    files::write_tangents(&run.path(TANGENTS), &t, &meta)?;
    m.record(&run.out, TANGENTS)?;
    m.stages.insert("homogenize".into(), tangents_json(&t));
    m.timings.insert("homogenize".into(), t0.elapsed().as_secs_f64());
    Ok((finish(run, m)?, t))
}

/// Circle packing and raster image of the `[reference]` microstructure.
pub fn cmd_rve(run: &Run) -> Result<(RunManifest, CircleSet, MaterialGrid), CliError> {
    let cfg = &run.config;
    let mut m = run.manifest("rve");
    let spec = cfg.reference_spec();
    let (circles, grid) = generate(&spec)?;
    let meta = format!("phi {}; vf {}; seed {}", spec.phi, spec.vf, spec.seed);
    files::write_circles(&run.path(CIRCLES), &circles, spec.edge_length(), &meta)?;
    write_bytes(&run.path(RVE_IMAGE), &export_pgm(&grid))?;
    m.record(&run.out, CIRCLES)?;
    m.record(&run.out, RVE_IMAGE)?;
    m.stages.insert(
        "rve".into(),
        json!({ "circles": circles.len(), "pore_fraction": grid.pore_fraction() }),
    );
    Ok((finish(run, m)?, circles, grid))
}
