//! Flat key-value run configuration: one `[run]` section per experiment,
//! `key = value` lines, reals emitted in shortest round-trip decimal so that
//! parsing an emitted file reproduces the configuration exactly.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ex1a,
    Ex1b,
    Ex2,
    Custom,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Ex1a => "ex1a",
            Preset::Ex1b => "ex1b",
            Preset::Ex2 => "ex2",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "ex1a" => Ok(Preset::Ex1a),
            "ex1b" => Ok(Preset::Ex1b),
            "ex2" => Ok(Preset::Ex2),
            "custom" => Ok(Preset::Custom),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    LinearDiffusion,
    AllenCahn,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::LinearDiffusion => "linear-diffusion",
            ProblemKind::AllenCahn => "allen-cahn",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "linear-diffusion" => Ok(ProblemKind::LinearDiffusion),
            "allen-cahn" => Ok(ProblemKind::AllenCahn),
            other => Err(format!("unknown problem `{other}`")),
        }
    }
}

/// Initial state selector. The smooth polynomial data exists in two forms:
/// `smooth-compatible` vanishes to fifth order at both endpoints,
/// `smooth-verbatim` uses the (1 − x) factor that is nonzero at x = π and
/// therefore incompatible with the Dirichlet condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    Step,
    SmoothCompatible,
    SmoothVerbatim,
    Cosine,
}

impl InitialData {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitialData::Step => "step",
            InitialData::SmoothCompatible => "smooth-compatible",
            InitialData::SmoothVerbatim => "smooth-verbatim",
            InitialData::Cosine => "cosine",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "step" => Ok(InitialData::Step),
            "smooth-compatible" => Ok(InitialData::SmoothCompatible),
            "smooth-verbatim" => Ok(InitialData::SmoothVerbatim),
            "cosine" => Ok(InitialData::Cosine),
            other => Err(format!("unknown initial data `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    ConstantU0,
    CoarseSweep,
}

impl GuessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuessKind::ConstantU0 => "constant-u0",
            GuessKind::CoarseSweep => "coarse-sweep",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "constant-u0" => Ok(GuessKind::ConstantU0),
            "coarse-sweep" => Ok(GuessKind::CoarseSweep),
            other => Err(format!("unknown initial guess `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub problem: ProblemKind,
    pub schemes: Vec<String>,
    /// Coarse-to-fine ratios to sweep.
    pub js: Vec<usize>,
    pub m_intervals: usize,
    pub dt_fine: f64,
    pub t_final: f64,
    pub k_max: usize,
    pub epsilon: f64,
    pub initial_guess: GuessKind,
    pub u0: InitialData,
    pub threads: usize,
    pub out: String,
    /// Reserved; all algorithms are deterministic.
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Preset defaults; `custom` starts from the nonsmooth linear setup.
    pub fn preset_defaults(preset: Preset) -> Self {
        let base = ExperimentConfig {
            preset,
            problem: ProblemKind::LinearDiffusion,
            schemes: vec![
                "lobatto3c-2".into(),
                "lobatto3c-3".into(),
                "lobatto3c-4".into(),
                "calahan".into(),
            ],
            js: vec![2, 3, 10],
            m_intervals: 200,
            dt_fine: 1.0 / 3000.0,
            t_final: 1.0,
            k_max: 25,
            epsilon: 1.0,
            initial_guess: GuessKind::ConstantU0,
            u0: InitialData::Step,
            threads: std::thread::available_parallelism().map_or(1, |p| p.get()),
            out: "out".into(),
            seed: None,
        };
        match preset {
            Preset::Ex1a => ExperimentConfig {
                schemes: vec!["lobatto3c-2".into(), "lobatto3c-3".into()],
                js: vec![10],
                u0: InitialData::SmoothCompatible,
                // dt is derived per run from the coarse-step list
                dt_fine: 1.0 / 1000.0,
                ..base
            },
            Preset::Ex1b | Preset::Custom => base,
            Preset::Ex2 => ExperimentConfig {
                problem: ProblemKind::AllenCahn,
                dt_fine: 1.0 / 600.0,
                t_final: 0.1,
                k_max: 20,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schemes.is_empty() || self.js.is_empty() {
            return Err("at least one scheme and one ratio J are required".into());
        }
        for s in &self.schemes {
            if !parapde::schemes::SCHEME_NAMES.contains(&s.as_str()) {
                return Err(format!("unknown scheme `{s}`"));
            }
        }
        if self.preset == Preset::Ex2 && self.problem != ProblemKind::AllenCahn {
            return Err("preset ex2 requires problem = allen-cahn".into());
        }
        if matches!(self.preset, Preset::Ex1a | Preset::Ex1b)
            && self.problem != ProblemKind::LinearDiffusion
        {
            return Err(format!(
                "preset {} requires problem = linear-diffusion",
                self.preset.as_str()
            ));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN as well
        if self.problem == ProblemKind::AllenCahn && !(self.epsilon > 0.0) {
            return Err("epsilon must be positive".into());
        }
        if self.m_intervals < 3 {
            return Err("m_intervals must be at least 3".into());
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.dt_fine > 0.0) || !(self.t_final > 0.0) {
            return Err("dt_fine and t_final must be positive".into());
        }
        for &j in &self.js {
            if j == 0 {
                return Err("J must be >= 1".into());
            }
            let n_c = self.t_final / (j as f64 * self.dt_fine);
            if (n_c - n_c.round()).abs() > 1e-9 || n_c.round() < 1.0 {
                return Err(format!(
                    "t_final / (J dt) = {n_c} is not a whole number of coarse intervals for J = {j}"
                ));
            }
        }
        Ok(())
    }

    /// Shortest round-trip decimal key-value emission.
    pub fn emit(&self) -> String {
        let mut s = String::from("[run]\n");
        let _ = writeln!(s, "preset = {}", self.preset.as_str());
        let _ = writeln!(s, "problem = {}", self.problem.as_str());
        let _ = writeln!(s, "schemes = {}", self.schemes.join(","));
        let js: Vec<String> = self.js.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(s, "js = {}", js.join(","));
        let _ = writeln!(s, "m_intervals = {}", self.m_intervals);
        let _ = writeln!(s, "dt_fine = {}", self.dt_fine);
        let _ = writeln!(s, "t_final = {}", self.t_final);
        let _ = writeln!(s, "k_max = {}", self.k_max);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "initial_guess = {}", self.initial_guess.as_str());
        let _ = writeln!(s, "u0 = {}", self.u0.as_str());
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "out = {}", self.out);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        s
    }

    /// Parses one or more `[run]` sections.
    pub fn parse_file(text: &str) -> Result<Vec<ExperimentConfig>, String> {
        let mut configs = Vec::new();
        let mut current: Option<Vec<(usize, String, String)>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[run]" {
                if let Some(fields) = current.take() {
                    configs.push(Self::from_fields(fields)?);
                }
                current = Some(Vec::new());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                ));
            };
            match current.as_mut() {
                Some(fields) => {
                    fields.push((lineno + 1, key.trim().to_string(), value.trim().to_string()))
                }
                None => return Err(format!("line {}: key outside a [run] section", lineno + 1)),
            }
        }
        if let Some(fields) = current.take() {
            configs.push(Self::from_fields(fields)?);
        }
        if configs.is_empty() {
            return Err("no [run] section found".into());
        }
        Ok(configs)
    }

    fn from_fields(fields: Vec<(usize, String, String)>) -> Result<ExperimentConfig, String> {
        let preset = fields
            .iter()
            .find(|(_, k, _)| k == "preset")
            .map(|(_, _, v)| Preset::parse(v))
            .transpose()?
            .unwrap_or(Preset::Custom);
        let mut cfg = ExperimentConfig::preset_defaults(preset);
        for (lineno, key, value) in fields {
            let fail = |e: String| format!("line {lineno} ({key}): {e}");
            match key.as_str() {
                "preset" => {}
                "problem" => cfg.problem = ProblemKind::parse(&value).map_err(fail)?,
                "schemes" => cfg.schemes = value.split(',').map(|s| s.trim().to_string()).collect(),
                "js" => {
                    cfg.js = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|e| fail(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "m_intervals" => {
                    cfg.m_intervals = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| fail(e.to_string()))?
                }
                "dt_fine" => {
                    cfg.dt_fine = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| fail(e.to_string()))?
                }
                "t_final" => {
                    cfg.t_final = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| fail(e.to_string()))?
                }
                "k_max" => {
                    cfg.k_max = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| fail(e.to_string()))?
                }
                "epsilon" => {
                    cfg.epsilon = value
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| fail(e.to_string()))?
                }
                "initial_guess" => cfg.initial_guess = GuessKind::parse(&value).map_err(fail)?,
                "u0" => cfg.u0 = InitialData::parse(&value).map_err(fail)?,
                "threads" => {
                    cfg.threads = value
                        .parse()
                        .map_err(|e: std::num::ParseIntError| fail(e.to_string()))?
                }
                "out" => cfg.out = value,
                "seed" => {
                    cfg.seed = Some(
                        value
                            .parse()
                            .map_err(|e: std::num::ParseIntError| fail(e.to_string()))?,
                    )
                }
                other => return Err(format!("line {lineno}: unknown key `{other}`")),
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_parse_round_trip() {
        for preset in [Preset::Ex1a, Preset::Ex1b, Preset::Ex2, Preset::Custom] {
            let mut cfg = ExperimentConfig::preset_defaults(preset);
            cfg.dt_fine = 1.0 / 3.0; // not exactly representable in decimal
            cfg.seed = Some(7);
            let emitted = cfg.emit();
            let parsed = ExperimentConfig::parse_file(&emitted).unwrap();
            assert_eq!(parsed.len(), 1);
            assert_eq!(parsed[0], cfg);
        }
    }

    #[test]
    fn multiple_sections() {
        let a = ExperimentConfig::preset_defaults(Preset::Ex1b);
        let b = ExperimentConfig::preset_defaults(Preset::Ex2);
        let text = format!("{}\n{}", a.emit(), b.emit());
        let parsed = ExperimentConfig::parse_file(&text).unwrap();
        assert_eq!(parsed, vec![a, b]);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err =
            ExperimentConfig::parse_file("[run]\npreset = ex1b\nm_intervals = soup\n").unwrap_err();
        assert!(err.contains("line 3"), "{err}");
        let err = ExperimentConfig::parse_file("preset = ex1b\n").unwrap_err();
        assert!(err.contains("outside"), "{err}");
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut cfg = ExperimentConfig::preset_defaults(Preset::Ex2);
        cfg.problem = ProblemKind::LinearDiffusion;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::preset_defaults(Preset::Ex1b);
        cfg.dt_fine = 0.17; // T = 1 not divisible
        assert!(cfg.validate().unwrap_err().contains("whole number"));

        let mut cfg = ExperimentConfig::preset_defaults(Preset::Ex1b);
        cfg.schemes = vec!["rk4".into()];
        assert!(cfg.validate().unwrap_err().contains("unknown scheme"));
    }
}
