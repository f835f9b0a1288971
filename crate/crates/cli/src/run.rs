use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use polaron_core::crystal::{scf_ground_state, CrystalGroundState};
use polaron_core::defect::{decoupling_test, defect_energy, DefectDensity, DefectProblem};
use polaron_core::fields::io::{write_complex, write_csv, write_scalar};
use polaron_core::fields::{CoulombKernel, Grid};
use polaron_core::macroscopic::{
    dipole_probes, extract_dielectric, macrolimit_check, minimize_coupled, pekar_limit_check, DielectricExtraction,
};
use polaron_core::multipolaron::{binding_check, cluster_state, ManyBodyWaveFunction, NPolaronFunctional};
use polaron_core::pekar::{box_center, initial_orbital, Orbital, PekarFunctional};
use polaron_core::{DielectricTensor, Error};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, Scenario};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotConverged,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

/// Everything a run leaves behind; serialized to `record.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub wall_time: f64,
    pub threads: usize,
    pub status: Status,
    pub exit_code: i32,
    pub warnings: Vec<String>,
    pub error: Option<ErrorInfo>,
    /// Scenario payload; deterministic for a fixed config and seed.
    pub outputs: Value,
    /// Files written next to the record, relative to the output directory.
    pub files: Vec<String>,
    pub config: RunConfig,
}

struct Outcome {
    outputs: Value,
    converged: bool,
    warnings: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> polaron_core::Result<()> {
        let p = self.path(name);
        std::fs::write(p, body)?;
        Ok(())
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Invalid(_) => "invalid",
        Error::GridMismatch | Error::CellMismatch => "mismatch",
        Error::Dielectric(_) => "dielectric",
        Error::NotNormalized(_) => "not-normalized",
        Error::Spreading { .. } => "spreading",
        Error::Divergence(_) => "divergence",
        Error::Budget { .. } => "budget",
        Error::Metallic(_) => "metallic",
        Error::NoElectrons => "no-electrons",
        Error::Cutoff(_) => "cutoff",
        Error::ScfNotConverged { .. } => "scf-not-converged",
        Error::GapClosed(_) => "gap-closed",
        Error::FitResidual { .. } => "fit-residual",
        Error::Rescaling(_) => "rescaling",
        Error::Stagnation(_) => "stagnation",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Spreading { .. }
        | Error::Divergence(_)
        | Error::Metallic(_)
        | Error::ScfNotConverged { .. }
        | Error::GapClosed(_)
        | Error::FitResidual { .. }
        | Error::Rescaling(_)
        | Error::Stagnation(_) => 4,
        Error::Io(_) | Error::Json(_) => 1,
        _ => 3,
    }
}

/// Runs the scenario and writes `record.json` plus its tables and fields into `out`.
pub fn run_scenario(cfg: &RunConfig, out: &Path) -> std::io::Result<ResultRecord> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut w = Writer { dir: out.to_path_buf(), files: Vec::new() };
    let result = dispatch(cfg, &mut w);
    let (status, exit_code, outputs, warnings, error) = match result {
        Ok(o) if o.converged => (Status::Ok, 0, o.outputs, o.warnings, None),
        Ok(o) => (Status::NotConverged, 4, o.outputs, o.warnings, None),
        Err(e) => {
            let code = exit_code_for(&e);
            let status = if code == 4 { Status::NotConverged } else { Status::Failed };
            let diag = match &e {
                Error::Spreading { energies, .. } => json!({ "energies": energies }),
                _ => Value::Null,
            };
            let info = ErrorInfo { kind: error_kind(&e).into(), message: e.to_string() };
            (status, code, diag, Vec::new(), Some(info))
        }
    };
    let record = ResultRecord {
        config_hash: cfg.hash(),
        version: VERSION.into(),
        scenario: cfg.scenario,
        seed: cfg.seed,
        wall_time: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        status,
        exit_code,
        warnings,
        error,
        outputs,
        files: w.files,
        config: cfg.clone(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(std::io::Error::other)?;
    std::fs::write(out.join("record.json"), text + "\n")?;
    Ok(record)
}

fn dispatch(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    match cfg.scenario {
        Scenario::PekarMin => pekar_min(cfg, w),
        Scenario::Npolaron => npolaron(cfg, w),
        Scenario::Binding => binding(cfg, w),
        Scenario::CrystalScf => crystal_scf(cfg, w),
        Scenario::Defect => defect(cfg, w),
        Scenario::Decoupling => decoupling(cfg, w),
        Scenario::Dielectric => dielectric(cfg, w),
        Scenario::Macrolimit => macrolimit(cfg, w),
        Scenario::Coupled => coupled(cfg, w),
        Scenario::PekarLimit => pekar_limit(cfg, w),
    }
}

fn to_value<T: Serialize>(v: &T) -> polaron_core::Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn history_csv(h: &[f64]) -> String {
    let mut s = String::from("iteration,energy\n");
    for (i, e) in h.iter().enumerate() {
        s += &format!("{i},{e:.15e}\n");
    }
    s
}

/// Adds seeded uniform noise of relative size `amp` to the orbital.
fn perturb(psi: Orbital, amp: f64, seed: u64) -> polaron_core::Result<Orbital> {
    if amp == 0.0 {
        return Ok(psi);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak = psi.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let values: Vec<Complex64> = psi
        .values()
        .iter()
        .map(|z| z + Complex64::new(amp * peak * rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let field = polaron_core::fields::ComplexField::new(psi.grid().clone(), values)?;
    Orbital::normalized(field)
}

fn pekar_min(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let p = cfg.pekar.as_ref().expect("validated");
    let grid = p.grid.build()?;
    let coupling = p.coupling.coupling(grid.dim())?;
    let kernel = p.kernel.unwrap_or_else(|| CoulombKernel::default_for(&grid));
    let init = match p.initial_width {
        Some(width) => Orbital::gaussian(&grid, width, box_center(&grid)),
        None => initial_orbital(&grid, &coupling),
    };
    let init = perturb(init, p.perturbation, cfg.seed)?;
    let f = PekarFunctional::new(&grid, coupling, kernel)?;
    let (res, psi) = f.minimize(&init, &p.descent)?;
    w.text("history.csv", &history_csv(&res.history))?;
    write_complex(&w.path("orbital.bin"), psi.field())?;
    write_scalar(&w.path("density.bin"), &psi.density())?;
    let mut warnings = Vec::new();
    let ratio = psi.density().boundary_ratio();
    if ratio > 1e-8 {
        warnings.push(format!("density reaches the box boundary (ratio {ratio:.3e}); enlarge the box"));
    }
    Ok(Outcome {
        outputs: json!({ "pekar": res, "center": &psi.center()[..grid.dim()], "boundary_ratio": ratio }),
        converged: res.converged,
        warnings,
    })
}

fn npolaron(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let b = cfg.npolaron.as_ref().expect("validated");
    let grid = b.grid.build()?;
    let coupling = b.coupling.coupling(grid.dim())?;
    let o = &b.options;
    let f = match b.kernel {
        Some(kernel) => {
            let (rep, _) = o.kernels(&grid);
            NPolaronFunctional::with_kernels(&grid, b.particles, coupling.clone(), kernel, rep, o.convention, o.symmetry, &o.budget)?
        }
        None => NPolaronFunctional::new(&grid, b.particles, coupling.clone(), o)?,
    };
    let base = initial_orbital(&grid, &coupling);
    let spacing = b.spacing.unwrap_or(0.0);
    let init = cluster_state(&base, b.particles, spacing, o.symmetry)?;
    let (res, psi) = f.minimize(&init, &o.descent)?;
    w.text("history.csv", &history_csv(&res.history))?;
    write_scalar(&w.path("density.bin"), &psi.density(o.convention))?;
    Ok(Outcome { outputs: json!({ "npolaron": res }), converged: res.converged, warnings: Vec::new() })
}

fn binding(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let b = cfg.npolaron.as_ref().expect("validated");
    let grid = b.grid.build()?;
    let coupling = b.coupling.coupling(grid.dim())?;
    let r = binding_check(&grid, b.particles, &coupling, &b.options)?;
    w.text("binding.csv", &r.to_csv())?;
    let converged = r.energies.iter().all(|e| e.converged || e.spreading);
    let mut warnings = Vec::new();
    if r.inconclusive {
        warnings.push("binding verdict inconclusive at this resolution".into());
    }
    Ok(Outcome { outputs: json!({ "binding": r }), converged, warnings })
}

fn ground(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<CrystalGroundState> {
    let spec = cfg.crystal.as_ref().expect("validated");
    let g = scf_ground_state(spec)?;
    let mut s = String::from("iteration,residual,energy\n");
    for (i, (r, e)) in g.residuals.iter().zip(&g.energies).enumerate() {
        s += &format!("{i},{r:.6e},{e:.15e}\n");
    }
    w.text("scf.csv", &s)?;
    Ok(g)
}

fn crystal_scf(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let g = ground(cfg, w)?;
    write_scalar(&w.path("density.bin"), g.density())?;
    write_scalar(&w.path("potential.bin"), g.potential())?;
    if g.grid().dim() == 1 {
        write_csv(&w.path("density.csv"), g.density())?;
    }
    Ok(Outcome {
        outputs: json!({ "crystal": g, "euler_lagrange_residual": g.euler_lagrange_residual()? }),
        converged: true,
        warnings: Vec::new(),
    })
}

fn defect(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let b = cfg.defect.as_ref().expect("validated");
    let g = ground(cfg, w)?;
    let problem = DefectProblem {
        ground: &g,
        density: DefectDensity::Blobs(b.blobs.clone()),
        ladder: b.ladder.clone(),
        options: b.options.clone(),
    };
    let r = defect_energy(&problem)?;
    w.text("defect.csv", &r.to_csv())?;
    let mut warnings = Vec::new();
    if !r.within_spread {
        warnings.push("extrapolated energy lies outside the spread of the last two supercells".into());
    }
    Ok(Outcome {
        outputs: json!({ "defect": r, "energy": r.final_energy(), "gap": g.gap }),
        converged: r.converged,
        warnings,
    })
}

fn decoupling(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let b = cfg.decoupling.as_ref().expect("validated");
    let g = ground(cfg, w)?;
    let t = decoupling_test(
        &g,
        &DefectDensity::Blobs(b.first.clone()),
        &DefectDensity::Blobs(b.second.clone()),
        &b.separations,
        b.supercell,
    )?;
    w.text("decoupling.csv", &t.to_csv())?;
    Ok(Outcome { outputs: json!({ "decoupling": t }), converged: true, warnings: Vec::new() })
}

fn extraction(cfg: &RunConfig, g: &CrystalGroundState, w: &mut Writer) -> polaron_core::Result<DielectricExtraction> {
    let o = cfg.dielectric.as_ref().expect("defaults filled");
    let probes = dipole_probes(g.spec.dim(), o.probe_width, o.probe_dipole);
    let ex = extract_dielectric(g, &probes, o)?;
    w.text("dielectric.csv", &ex.to_csv())?;
    Ok(ex)
}

/// ε from the macro block, or extracted from the crystal.
fn macro_epsilon(cfg: &RunConfig, g: &CrystalGroundState, w: &mut Writer) -> polaron_core::Result<(DielectricTensor, Value)> {
    match &cfg.macroscopic.as_ref().expect("defaults filled").epsilon {
        Some(e) => Ok((e.tensor(g.spec.dim())?, Value::Null)),
        None => {
            let ex = extraction(cfg, g, w)?;
            let v = to_value(&ex)?;
            Ok((ex.tensor, v))
        }
    }
}

fn dielectric(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let g = ground(cfg, w)?;
    let ex = extraction(cfg, &g, w)?;
    Ok(Outcome {
        outputs: json!({
            "epsilon": ex.tensor.matrix(),
            "eigenvalues": ex.tensor.eigenvalues(),
            "extraction": ex,
        }),
        converged: true,
        warnings: Vec::new(),
    })
}

fn macro_grid(g: &CrystalGroundState, box_cells: f64, points: usize) -> polaron_core::Result<Arc<Grid>> {
    Grid::on_cell(g.spec.cell.scaled(box_cells), vec![points; g.spec.dim()])
}

fn macrolimit(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let m = cfg.macroscopic.as_ref().expect("defaults filled");
    let g = ground(cfg, w)?;
    let (eps, ex) = macro_epsilon(cfg, &g, w)?;
    let grid = macro_grid(&g, m.box_cells, m.psi_points)?;
    let psi = Orbital::gaussian(&grid, m.psi_width, box_center(&grid));
    let r = macrolimit_check(&psi, &g, &eps, &m.m_ladder, m.box_cells, m.charge)?;
    w.text("macrolimit.csv", &r.to_csv())?;
    let mut warnings = Vec::new();
    if r.tainted {
        warnings.push("an entry of the ladder did not converge".into());
    }
    if r.boundary_ratio > 1e-8 {
        warnings.push(format!("ψ reaches the macroscopic box boundary (ratio {:.3e})", r.boundary_ratio));
    }
    if !r.decreasing {
        warnings.push("gap is not strictly decreasing along the ladder".into());
    }
    Ok(Outcome { outputs: json!({ "macrolimit": r, "extraction": ex }), converged: !r.tainted, warnings })
}

fn coupled(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let m = cfg.macroscopic.as_ref().expect("defaults filled");
    let g = ground(cfg, w)?;
    let opts = m.coupled_options();
    let r = minimize_coupled(&g, m.particles, m.mass(), &opts)?;
    w.text("history.csv", &history_csv(&r.history))?;
    if let Some(psi) = &r.psi {
        write_scalar(&w.path("density.bin"), &psi.density(opts.npolaron.convention))?;
        if psi.particles() == 1 {
            write_polaron(w, psi, &r.polaron)?;
        }
    }
    let mut warnings = Vec::new();
    if r.binds == Some(false) {
        warnings.push("no binding below the periodic threshold".into());
    }
    Ok(Outcome { outputs: json!({ "coupled": r }), converged: r.converged, warnings })
}

fn write_polaron(w: &mut Writer, psi: &ManyBodyWaveFunction, polaron: &[Complex64]) -> polaron_core::Result<()> {
    if polaron.len() == psi.values().len() {
        let f = polaron_core::fields::ComplexField::new(psi.grid().clone(), polaron.to_vec())?;
        write_complex(&w.path("polaron.bin"), &f)?;
    }
    Ok(())
}

fn pekar_limit(cfg: &RunConfig, w: &mut Writer) -> polaron_core::Result<Outcome> {
    let m = cfg.macroscopic.as_ref().expect("defaults filled");
    let g = ground(cfg, w)?;
    let (eps, ex) = macro_epsilon(cfg, &g, w)?;
    let r = pekar_limit_check(&g, m.particles, &m.m_ladder, &eps, &m.coupled_options())?;
    w.text("pekar_limit.csv", &r.to_csv())?;
    let converged = r.entries.iter().all(|e| e.spreading || e.result.as_ref().map(|c| c.converged).unwrap_or(false));
    let mut warnings = Vec::new();
    if !r.decreasing {
        warnings.push("discrepancy is not strictly decreasing along the ladder".into());
    }
    Ok(Outcome { outputs: json!({ "pekar_limit": r, "extraction": ex }), converged, warnings })
}
