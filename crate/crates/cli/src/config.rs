//! Flat `key = value` configuration files: parsing, a known-key registry
//! per subcommand family, typed coercion, and canonical hashing.
//!
//! The format is deliberately dependency-free and bit-stable: UTF-8 lines,
//! `#` starts a comment, one dotted key per line, duplicate and unknown keys
//! rejected (unknown keys report the nearest known key).

use std::collections::BTreeMap;

use phaseseg_core::grid::Grid;
use phaseseg_core::harness::PerturbTarget;
use phaseseg_core::model::{
    make_double_well, make_logarithmic, make_obstacle, CompatibilityConstants, Coupling, Mobility,
    ModelSpec, PotentialKind,
};
use phaseseg_core::stepper::{Profile, RunConfig, SolverConfig, SolverKind};
use sha2::{Digest, Sha256};

/// Errors split by exit-code class: configuration problems exit 2, runtime
/// and verdict failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

impl From<phaseseg_core::Error> for CliError {
    fn from(e: phaseseg_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Key registry
// ---------------------------------------------------------------------------

const RUN_KEYS: &[&str] = &[
    "grid.cells",
    "grid.length",
    "grid.cells_y",
    "grid.length_y",
    "time.tau",
    "time.final",
    "potential",
    "potential.c",
    "obstacle.a",
    "obstacle.b",
    "obstacle.pi_slope",
    "g",
    "g.value",
    "kappa",
    "kappa.value",
    "kappa.min",
    "kappa.max",
    "constants.rho_min",
    "constants.rho_max",
    "constants.xi_min",
    "constants.xi_max",
    "initial.mu",
    "initial.mu.base",
    "initial.mu.amplitude",
    "initial.mu.mode",
    "initial.mu.mode_y",
    "initial.rho",
    "initial.rho.base",
    "initial.rho.amplitude",
    "initial.rho.mode",
    "initial.rho.mode_y",
    "solver.kind",
    "solver.tolerance",
    "solver.max_iterations",
    "prox.tolerance",
    "output.cadence",
];

const STUDY_KEYS: &[&str] = &[
    "study.epsilons",
    "study.epsilon",
    "study.target",
    "study.mode",
    "study.mode_y",
];

const CONVERGE_KEYS: &[&str] = &["converge.levels"];

/// Which keys a subcommand accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeySet {
    Run,
    Study,
    Converge,
    /// Accepts everything; used by inspection commands (validate, tables)
    /// so that any valid config file can be fed to them.
    Any,
}

fn known_keys(set: KeySet) -> Vec<&'static str> {
    let mut keys = RUN_KEYS.to_vec();
    match set {
        KeySet::Run => {}
        KeySet::Study => keys.extend_from_slice(STUDY_KEYS),
        KeySet::Converge => keys.extend_from_slice(CONVERGE_KEYS),
        KeySet::Any => {
            keys.extend_from_slice(STUDY_KEYS);
            keys.extend_from_slice(CONVERGE_KEYS);
        }
    }
    keys
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// ---------------------------------------------------------------------------
// Document
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ConfigDocument {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> CliResult<ConfigDocument> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.split_once('#') {
                Some((before, _)) => before,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(format!(
                    "line {line_no}: expected `key = value`, got `{raw}`"
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(config_err(format!("line {line_no}: empty key or value")));
            }
            if entries.insert(key.clone(), (value, line_no)).is_some() {
                return Err(config_err(format!("line {line_no}: duplicate key `{key}`")));
            }
        }
        Ok(ConfigDocument { entries })
    }

    /// Canonical form: sorted `key=value` lines with normalized whitespace.
    /// Files differing only in comments or spacing hash equal.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_keys(&self, set: KeySet) -> CliResult<()> {
        let known = known_keys(set);
        for (key, (_, line)) in &self.entries {
            if !known.contains(&key.as_str()) {
                let nearest = known
                    .iter()
                    .min_by_key(|k| levenshtein(key, k))
                    .expect("registry is nonempty");
                return Err(config_err(format!(
                    "line {line}: unknown key `{key}` (nearest known key: `{nearest}`)"
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn get_f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| config_err(format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    fn require_f64(&self, key: &str) -> CliResult<f64> {
        self.get_f64(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    fn get_usize(&self, key: &str) -> CliResult<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<usize>().map(Some).map_err(|_| {
                config_err(format!("key `{key}`: `{v}` is not a nonnegative integer"))
            }),
        }
    }

    fn require_usize(&self, key: &str) -> CliResult<usize> {
        self.get_usize(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    fn get_u32(&self, key: &str) -> CliResult<Option<u32>> {
        Ok(self.get_usize(key)?.map(|v| v as u32))
    }

    fn forbid(&self, key: &str, reason: &str) -> CliResult<()> {
        if let Some((_, line)) = self.entries.get(key) {
            return Err(config_err(format!("line {line}: key `{key}` {reason}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model and run-config construction
// ---------------------------------------------------------------------------

fn build_model(doc: &ConfigDocument) -> CliResult<ModelSpec> {
    let potential_kind = doc
        .get("potential")
        .ok_or_else(|| config_err("missing required key `potential`"))?;

    let potential = match potential_kind {
        "logarithmic" => {
            doc.forbid("obstacle.a", "is only valid for potential = obstacle")?;
            doc.forbid("obstacle.b", "is only valid for potential = obstacle")?;
            doc.forbid(
                "obstacle.pi_slope",
                "is only valid for potential = obstacle",
            )?;
            let c = doc.get_f64("potential.c")?.unwrap_or(2.0);
            make_logarithmic(c).map_err(|e| config_err(e.to_string()))?
        }
        "double_well" => {
            doc.forbid("potential.c", "is only valid for potential = logarithmic")?;
            doc.forbid("obstacle.a", "is only valid for potential = obstacle")?;
            doc.forbid("obstacle.b", "is only valid for potential = obstacle")?;
            doc.forbid(
                "obstacle.pi_slope",
                "is only valid for potential = obstacle",
            )?;
            make_double_well()
        }
        "obstacle" => {
            doc.forbid("potential.c", "is only valid for potential = logarithmic")?;
            let a = doc.get_f64("obstacle.a")?.unwrap_or(-1.0);
            let b = doc.get_f64("obstacle.b")?.unwrap_or(1.0);
            let slope = doc.get_f64("obstacle.pi_slope")?.unwrap_or(-1.0);
            make_obstacle(a, b, std::sync::Arc::new(move |r| slope * r), slope.abs())
                .map_err(|e| config_err(e.to_string()))?
        }
        other => {
            return Err(config_err(format!(
                "key `potential`: `{other}` is not one of logarithmic | double_well | obstacle"
            )))
        }
    };

    let coupling = match doc.get("g").unwrap_or("default_concave") {
        "default_concave" => {
            doc.forbid("g.value", "is only valid for g = constant")?;
            Coupling::default_concave()
        }
        "constant" => {
            let value = doc.get_f64("g.value")?.unwrap_or(1.0);
            Coupling::constant(value).map_err(|e| config_err(e.to_string()))?
        }
        other => {
            return Err(config_err(format!(
                "key `g`: `{other}` is not one of default_concave | constant"
            )))
        }
    };

    let mut mobility = match doc
        .get("kappa")
        .ok_or_else(|| config_err("missing required key `kappa`"))?
    {
        "constant" => {
            let value = doc.get_f64("kappa.value")?.unwrap_or(1.0);
            Mobility::constant(value).map_err(|e| config_err(e.to_string()))?
        }
        "rational" => {
            doc.forbid("kappa.value", "is only valid for kappa = constant")?;
            Mobility::rational()
        }
        other => {
            return Err(config_err(format!(
                "key `kappa`: `{other}` is not one of constant | rational"
            )))
        }
    };
    if let Some(v) = doc.get_f64("kappa.min")? {
        mobility.kappa_min = v;
    }
    if let Some(v) = doc.get_f64("kappa.max")? {
        mobility.kappa_max = v;
    }

    let defaults = default_constants(&potential.kind, &potential);
    let constants = CompatibilityConstants {
        rho_min: doc
            .get_f64("constants.rho_min")?
            .unwrap_or(defaults.rho_min),
        rho_max: doc
            .get_f64("constants.rho_max")?
            .unwrap_or(defaults.rho_max),
        xi_min: doc.get_f64("constants.xi_min")?.unwrap_or(defaults.xi_min),
        xi_max: doc.get_f64("constants.xi_max")?.unwrap_or(defaults.xi_max),
    };

    Ok(ModelSpec {
        potential,
        coupling,
        mobility,
        constants,
    })
}

fn default_constants(
    kind: &PotentialKind,
    potential: &phaseseg_core::model::PotentialSplit,
) -> CompatibilityConstants {
    match *kind {
        // suits c up to about 2.34; larger c needs explicit constants
        PotentialKind::Logarithmic { .. } => CompatibilityConstants {
            rho_min: -0.98,
            rho_max: 0.98,
            xi_min: -(99f64).ln(),
            xi_max: (99f64).ln(),
        },
        PotentialKind::DoubleWell => CompatibilityConstants {
            rho_min: -1.0,
            rho_max: 1.0,
            xi_min: -1.0,
            xi_max: 1.0,
        },
        PotentialKind::Obstacle { lower, upper } => CompatibilityConstants {
            rho_min: lower,
            rho_max: upper,
            xi_min: (-potential.pi(lower)).min(0.0),
            xi_max: (-potential.pi(upper)).max(0.0),
        },
    }
}

fn build_profile(doc: &ConfigDocument, prefix: &str, default_base: f64) -> CliResult<Profile> {
    let kind_key = prefix.to_string();
    let base = doc
        .get_f64(&format!("{prefix}.base"))?
        .unwrap_or(default_base);
    match doc.get(&kind_key).unwrap_or("constant") {
        "constant" => {
            doc.forbid(
                &format!("{prefix}.amplitude"),
                "is only valid for cosine profiles",
            )?;
            doc.forbid(
                &format!("{prefix}.mode"),
                "is only valid for cosine profiles",
            )?;
            doc.forbid(
                &format!("{prefix}.mode_y"),
                "is only valid for cosine profiles",
            )?;
            Ok(Profile::Constant(base))
        }
        "cosine" => Ok(Profile::Cosine {
            base,
            amplitude: doc.get_f64(&format!("{prefix}.amplitude"))?.unwrap_or(0.0),
            mode_x: doc.get_u32(&format!("{prefix}.mode"))?.unwrap_or(1),
            mode_y: doc.get_u32(&format!("{prefix}.mode_y"))?.unwrap_or(0),
        }),
        other => Err(config_err(format!(
            "key `{kind_key}`: `{other}` is not one of constant | cosine"
        ))),
    }
}

fn build_grid(doc: &ConfigDocument) -> CliResult<Grid> {
    let cells = doc.require_usize("grid.cells")?;
    let length = doc.require_f64("grid.length")?;
    match doc.get_usize("grid.cells_y")? {
        None => {
            doc.forbid("grid.length_y", "needs grid.cells_y (2D grids)")?;
            Grid::new_1d(cells, length).map_err(|e| config_err(e.to_string()))
        }
        Some(cells_y) => {
            let length_y = doc.require_f64("grid.length_y")?;
            Grid::new_2d((cells, cells_y), (length, length_y))
                .map_err(|e| config_err(e.to_string()))
        }
    }
}

fn build_run_config(doc: &ConfigDocument) -> CliResult<RunConfig> {
    let solver_kind = match doc.get("solver.kind").unwrap_or("auto") {
        "auto" => SolverKind::Auto,
        "direct" => SolverKind::Direct,
        "cg" => SolverKind::Cg,
        other => {
            return Err(config_err(format!(
                "key `solver.kind`: `{other}` is not one of auto | direct | cg"
            )))
        }
    };
    let config = RunConfig {
        grid: build_grid(doc)?,
        tau: doc.require_f64("time.tau")?,
        t_final: doc.require_f64("time.final")?,
        model: build_model(doc)?,
        initial_mu: build_profile(doc, "initial.mu", 1.0)?,
        initial_rho: build_profile(doc, "initial.rho", 0.0)?,
        solver: SolverConfig {
            kind: solver_kind,
            tolerance: doc.get_f64("solver.tolerance")?.unwrap_or(1e-10),
            max_iterations: doc.get_usize("solver.max_iterations")?.unwrap_or(5000),
        },
        prox_tolerance: doc.get_f64("prox.tolerance")?.unwrap_or(1e-12),
        output_every: doc.get_usize("output.cadence")?.unwrap_or(1),
    };
    Ok(config)
}

#[derive(Clone, Debug)]
pub struct StudySpec {
    pub epsilons: Vec<f64>,
    /// Single epsilon used by the pointwise check.
    pub epsilon: f64,
    pub target: PerturbTarget,
    pub mode_x: u32,
    pub mode_y: u32,
}

fn build_study_spec(doc: &ConfigDocument) -> CliResult<StudySpec> {
    let epsilons: Vec<f64> = match doc.get("study.epsilons") {
        None => vec![1e-1, 1e-2, 1e-3, 1e-4],
        Some(list) => list
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("key `study.epsilons`: `{p}` is not a number")))
            })
            .collect::<CliResult<_>>()?,
    };
    let target = match doc.get("study.target").unwrap_or("rho0") {
        "mu0" => PerturbTarget::Mu0,
        "rho0" => PerturbTarget::Rho0,
        "both" => PerturbTarget::Both,
        other => {
            return Err(config_err(format!(
                "key `study.target`: `{other}` is not one of mu0 | rho0 | both"
            )))
        }
    };
    Ok(StudySpec {
        epsilons,
        epsilon: doc.get_f64("study.epsilon")?.unwrap_or(1e-2),
        target,
        mode_x: doc.get_u32("study.mode")?.unwrap_or(1),
        mode_y: doc.get_u32("study.mode_y")?.unwrap_or(0),
    })
}

fn build_converge_levels(doc: &ConfigDocument) -> CliResult<usize> {
    Ok(doc.get_usize("converge.levels")?.unwrap_or(4))
}

// ---------------------------------------------------------------------------
// Entry points used by main
// ---------------------------------------------------------------------------

/// Parsed configuration plus its canonical hash.
#[derive(Debug)]
pub struct Parsed {
    pub doc: ConfigDocument,
    pub hash: String,
}

pub fn parse_text(text: &str, set: KeySet) -> CliResult<Parsed> {
    let doc = ConfigDocument::parse(text)?;
    doc.check_keys(set)?;
    let hash = doc.sha256();
    Ok(Parsed { doc, hash })
}

/// Full run configuration with the model conditions re-checked; failures are
/// configuration errors.
pub fn run_config(parsed: &Parsed) -> CliResult<RunConfig> {
    let config = build_run_config(&parsed.doc)?;
    config.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(config)
}

/// Model only (inspection commands); the structural audit is left to the
/// caller so it can print the full condition table.
pub fn model_only(parsed: &Parsed) -> CliResult<ModelSpec> {
    build_model(&parsed.doc)
}

pub fn study_spec(parsed: &Parsed) -> CliResult<StudySpec> {
    build_study_spec(&parsed.doc)
}

pub fn converge_levels(parsed: &Parsed) -> CliResult<usize> {
    build_converge_levels(&parsed.doc)
}
