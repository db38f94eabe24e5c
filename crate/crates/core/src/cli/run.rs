use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::fields::{load_gridded_field, AnalyticDoubleWell, GriddedField, VelocityField};
use crate::geometry::{Domain, Grid};
use crate::lifespans::{
    characteristic_lifespans, detect_lifespans, mismatch_table, CharacteristicLifespans, Lifespan,
    LifespanReport, MismatchTable,
};
use crate::regularity::{assess_vector, regularize_lifespans, RegularityReport};
use crate::tracking::{select_p, track_modes, PSelection, TrackedPaths};
use crate::ulam::{ModeWindow, SvdMethod, UlamBuilder, UlamError, WindowModes};

use super::config::{AnalysisConfig, FieldSource, PChoice};
use super::output::{render_vector_to, write_json, write_vectors, RunInfo};
use super::CliError;

/// A loaded velocity source.
pub enum Field {
    DoubleWell(AnalyticDoubleWell),
    Gridded(GriddedField),
}

impl Field {
    pub fn load(source: &FieldSource) -> Result<Self, CliError> {
        match source {
            FieldSource::DoubleWell => Ok(Field::DoubleWell(AnalyticDoubleWell)),
            FieldSource::Dataset { path } => Ok(Field::Gridded(load_gridded_field(path)?)),
        }
    }

    pub fn as_dyn(&self) -> &dyn VelocityField {
        match self {
            Field::DoubleWell(f) => f,
            Field::Gridded(f) => f,
        }
    }

    pub fn default_domain(&self) -> Domain {
        match self {
            Field::DoubleWell(_) => Domain::double_well(),
            Field::Gridded(f) => *f.domain(),
        }
    }
}

/// Grid and per-window spectra for every start time of `config`.
pub struct Windows {
    pub grid: Grid,
    pub windows: Vec<WindowModes>,
}

/// Builds every window `t_i ..= t_f − n`, writing composed matrices to
/// `dump_dir` when given.
pub fn compute_windows(config: &AnalysisConfig, dump_dir: Option<&Path>) -> Result<Windows, CliError> {
    let field = Field::load(&config.field)?;
    let domain = config.domain.unwrap_or_else(|| field.default_domain());
    let grid = Grid::new(domain, config.depth).map_err(|e| CliError::Config(e.to_string()))?;
    let seeds = grid.bins_in_patch(&config.patch);
    if seeds.is_empty() {
        return Err(UlamError::EmptyPatch.into());
    }
    if let Some((first, last)) = field.as_dyn().time_range() {
        let start = config.t_i as f64 * config.flow.tau;
        let end = config.t_f as f64 * config.flow.tau;
        if start < first || end > last {
            return Err(CliError::Data(format!(
                "analysis interval [{start}, {end}] leaves the dataset's time range [{first}, {last}]"
            )));
        }
    }
    let builder = UlamBuilder::new(field.as_dyn(), &grid, config.q, config.flow)?;
    let mut windows = Vec::new();
    for t in config.window_starts() {
        let ops = builder.window(&seeds, t, config.n)?;
        builder.evict_before(t + 1);
        if let Some(dir) = dump_dir {
            let path = dir.join(format!("window_t{t}.txt"));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
            ops.composed
                .write_dump(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
        }
        let window = ModeWindow::with_method(ops, config.modes, SvdMethod::Auto)?;
        if window.modes() < config.modes {
            return Err(CliError::Numerical(format!(
                "window t={t} supports only {} of {} modes",
                window.modes(),
                config.modes
            )));
        }
        windows.push(window.into());
    }
    Ok(Windows { grid, windows })
}

/// Everything downstream of the windows.
pub struct Analysis {
    pub p: f64,
    pub selection: Option<PSelection>,
    pub paths: TrackedPaths,
    pub mismatch: MismatchTable,
    pub lifespans: Vec<Vec<Lifespan>>,
    pub characteristic: CharacteristicLifespans,
    pub report: LifespanReport,
    pub regularity: RegularityReport,
}

/// Resolves `p`, then tracks, detects, characterises and regularises.
pub fn analyze_windows(config: &AnalysisConfig, w: &Windows) -> Result<Analysis, CliError> {
    let (p, selection) = match &config.p {
        PChoice::Fixed(p) => (*p, None),
        PChoice::Candidates(c) => {
            let sel = select_p(c, &w.windows, &config.thresholds)?;
            match sel.selected {
                Some(p) => (p, Some(sel)),
                None => return Err(CliError::NoValidP),
            }
        }
    };
    let paths = track_modes(&w.windows, p)?;
    let mismatch = mismatch_table(&paths, &w.windows);
    let lifespans = detect_lifespans(&paths, &mismatch, &config.thresholds);
    let characteristic = characteristic_lifespans(&lifespans);
    let report = LifespanReport::new(p, config.thresholds, &lifespans, &characteristic);
    let regularity = regularize_lifespans(&lifespans, &paths, &w.grid, config.iso_thresh);
    Ok(Analysis {
        p,
        selection,
        paths,
        mismatch,
        lifespans,
        characteristic,
        report,
        regularity,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes every artifact of `a` into `dir`.
pub fn write_outputs(config: &AnalysisConfig, w: &Windows, a: &Analysis, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    let io = |path: PathBuf| move |e| CliError::io(&path, e);
    write_with(&dir.join("singular_paths.csv"), |f| a.paths.write_csv(f))?;
    write_with(&dir.join("mismatch.csv"), |f| a.mismatch.write_csv(f))?;
    write_json(&dir.join("lifespans.json"), &a.report).map_err(io(dir.join("lifespans.json")))?;
    write_json(&dir.join("regularity.json"), &a.regularity).map_err(io(dir.join("regularity.json")))?;
    if let Some(sel) = &a.selection {
        write_json(&dir.join("p_selection.json"), sel).map_err(io(dir.join("p_selection.json")))?;
    }
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_json() + "\n").map_err(io(config_path.clone()))?;
    let info = RunInfo {
        grid: w.grid.clone(),
        p: a.p,
        times: a.paths.times.clone(),
        modes: a.paths.modes(),
    };
    write_json(&dir.join("run.json"), &info).map_err(io(dir.join("run.json")))?;
    let vectors = dir.join("vectors.bin");
    write_vectors(&vectors, &a.paths).map_err(io(vectors.clone()))?;

    let t0 = a.paths.times.first().copied().unwrap_or(0);
    let chars = [
        ("eldest", &a.characteristic.eldest),
        ("min_eq", &a.characteristic.min_eq),
        ("max_var_sv", &a.characteristic.max_var_sv),
    ];
    for (name, span) in chars {
        let Some(l) = span else { continue };
        let u = &a.paths.left[(l.birth - t0) as usize][l.mode];
        let v = &a.paths.right[(l.death - t0) as usize][l.mode];
        let mode = l.mode + 1;
        let u_path = dir.join(format!("{name}_mode{mode}_u_t{}.pgm", l.birth));
        let v_path = dir.join(format!("{name}_mode{mode}_v_t{}.pgm", l.death));
        render_vector_to(u, &w.grid, &u_path).map_err(io(u_path.clone()))?;
        render_vector_to(v, &w.grid, &v_path).map_err(io(v_path.clone()))?;
    }

    if config.dumps.masks {
        let masks = dir.join("masks");
        create_dir(&masks)?;
        for l in a.lifespans.iter().flatten() {
            for t in l.birth..=l.death {
                let check = assess_vector(&a.paths.right[(t - t0) as usize][l.mode], &w.grid);
                let path = masks.join(format!("mode{}_t{t}.pgm", l.mode + 1));
                write_with(&path, |f| check.mask.write_pgm(f))?;
            }
        }
    }
    Ok(())
}

/// Result of a full run.
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub windows: usize,
    pub analysis: Analysis,
}

/// Full pipeline: windows, analysis and artifacts under `config.output_dir`.
pub fn run_analysis(config: &AnalysisConfig) -> Result<RunSummary, CliError> {
    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    let dump_dir = if config.dumps.matrices {
        let d = dir.join("matrices");
        create_dir(&d)?;
        Some(d)
    } else {
        None
    };
    let w = compute_windows(config, dump_dir.as_deref())?;
    let analysis = analyze_windows(config, &w)?;
    write_outputs(config, &w, &analysis, &dir)?;
    Ok(RunSummary {
        output_dir: dir,
        windows: w.windows.len(),
        analysis,
    })
}

/// Scores the candidate set (or the default one for a fixed `p`) and writes
/// `p_selection.json` under the output directory.
pub fn run_select_p(config: &AnalysisConfig) -> Result<PSelection, CliError> {
    let w = compute_windows(config, None)?;
    let sel = select_p(&config.p.candidates(), &w.windows, &config.thresholds)?;
    create_dir(&config.output_dir)?;
    let path = config.output_dir.join("p_selection.json");
    write_json(&path, &sel).map_err(|e| CliError::io(&path, e))?;
    Ok(sel)
}
