//! Experiment configuration files and their resolution into a run plan.

use std::path::{Path, PathBuf};

use gaussloss::loss::{build_loss_model, EtaRanges};
use gaussloss::mitigation::{Scheme, SchemeTag};
use gaussloss::sweeps::{Study, SweepParams};
use gaussloss::vibronic::{fixture, MoleculeFixture};
use gaussloss::{Error, GbsSpec, LossModel, PndOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schemes: Vec<SchemeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(default, skip_serializing_if = "is_default_sweep")]
    pub sweep: SweepParams,
    #[serde(default, skip_serializing_if = "is_default_cutoff")]
    pub cutoff: CutoffConfig,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputConfig,
}

fn is_default_sweep(s: &SweepParams) -> bool {
    *s == SweepParams::default()
}

fn is_default_cutoff(c: &CutoffConfig) -> bool {
    *c == CutoffConfig::default()
}

fn is_default_output(o: &OutputConfig) -> bool {
    *o == OutputConfig::default()
}

/// A bundled molecule or an explicit specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetConfig {
    Fixture { fixture: String },
    Spec(GbsSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Lossless,
    /// The same transmissivity before and after the interferometer on every mode.
    Uniform {
        eta: f64,
    },
    /// One loss layer before the interferometer.
    Input {
        etas: Vec<f64>,
    },
    Layers {
        pre: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        internal: Option<Vec<Vec<f64>>>,
        post: Vec<f64>,
    },
    /// Transmissivities drawn uniformly from ranges with the run seed.
    Sampled {
        pre: (f64, f64),
        internal: (f64, f64),
        post: (f64, f64),
    },
}

/// A scheme by name, or a full table for the minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeConfig {
    Name(String),
    Full(Scheme),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffConfig {
    /// Compute exactly this many photons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoff: Option<usize>,
    pub format: Option<Format>,
}

/// What a run computes.
#[derive(Debug, Clone)]
pub enum Job {
    Benchmark { fixture: MoleculeFixture, loss: LossModel, schemes: Vec<Scheme> },
    Sweep { study: Study, params: SweepParams },
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub name: String,
    pub seed: u64,
    pub job: Job,
    pub options: PndOptions,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_SEED: u64 = 0;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Checks everything that can be checked without computing and fixes every choice.
    pub fn resolve(&self, default_name: &str, o: &Overrides) -> Result<RunPlan, Error> {
        let seed = o.seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let mut options = PndOptions::default();
        if let Some(t) = self.cutoff.tail {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("cutoff tail must be positive".into()));
            }
            options = options.with_tail(t);
        }
        if let Some(c) = self.cutoff.cap {
            options = options.with_cap(c);
        }
        if let Some(n) = o.cutoff.or(self.cutoff.fixed) {
            options.fixed_cutoff = Some(n);
            options.strict = false;
        }
        let job = match (self.study, &self.target) {
            (Some(_), Some(_)) => return Err(Error::InvalidArgument("give either a study or a target, not both".into())),
            (Some(study), None) => {
                if self.loss.is_some() || !self.schemes.is_empty() {
                    return Err(Error::InvalidArgument("sweeps take their settings from the [sweep] table".into()));
                }
                Job::Sweep { study, params: self.sweep.clone() }
            }
            (None, Some(target)) => {
                if self.sweep != SweepParams::default() {
                    return Err(Error::InvalidArgument("a [sweep] table needs a study".into()));
                }
                let fixture = resolve_target(target)?;
                let loss = resolve_loss(self.loss.as_ref(), &fixture.spec, seed)?;
                if self.schemes.is_empty() {
                    return Err(Error::InvalidArgument("a benchmark needs at least one scheme".into()));
                }
                let schemes = self.schemes.iter().map(resolve_scheme).collect::<Result<Vec<_>, _>>()?;
                Job::Benchmark { fixture, loss, schemes }
            }
            (None, None) => return Err(Error::InvalidArgument("config needs a target or a study".into())),
        };
        Ok(RunPlan {
            name: self.name.clone().unwrap_or_else(|| default_name.to_string()),
            seed,
            job,
            options,
            out_dir: o.out.clone().or_else(|| self.output.dir.clone()),
            format: o.format.or(self.output.format).unwrap_or_default(),
        })
    }
}

fn resolve_target(t: &TargetConfig) -> Result<MoleculeFixture, Error> {
    let f = match t {
        TargetConfig::Fixture { fixture: name } => fixture(name)?,
        TargetConfig::Spec(spec) => {
            MoleculeFixture { name: "custom".into(), spec: spec.clone(), frequencies: None, notes: String::new() }
        }
    };
    f.validate()?;
    Ok(f)
}

fn resolve_loss(l: Option<&LossConfig>, spec: &GbsSpec, seed: u64) -> Result<LossModel, Error> {
    let u = &spec.unitary;
    match l {
        None | Some(LossConfig::Lossless) => Ok(LossModel::lossless(spec.num_modes())),
        Some(LossConfig::Uniform { eta }) => LossModel::uniform(u, *eta),
        Some(LossConfig::Input { etas }) => LossModel::input_loss(u, etas),
        Some(LossConfig::Layers { pre, internal, post }) => build_loss_model(u, pre, internal.as_deref(), post),
        Some(LossConfig::Sampled { pre, internal, post }) => {
            LossModel::sampled(u, EtaRanges { pre: *pre, internal: *internal, post: *post }, seed)
        }
    }
}

fn resolve_scheme(s: &SchemeConfig) -> Result<Scheme, Error> {
    let scheme = match s {
        SchemeConfig::Name(name) => Scheme::new(name.parse::<SchemeTag>()?),
        SchemeConfig::Full(scheme) => *scheme,
    };
    scheme.validate()?;
    Ok(scheme)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH: &str = r#"
        seed = 3
        schemes = ["NONE", "VAC_FIXED_RATIO", { tag = "DELTA_MIN", ansatz = "SQ_VAC", search = { budget = 100 } }]

        [target]
        fixture = "tropolone"

        [loss]
        kind = "uniform"
        eta = 0.7
    "#;

    #[test]
    fn benchmark_config_resolves() {
        let cfg = ExperimentConfig::parse(BENCH).unwrap();
        let plan = cfg.resolve("bench", &Overrides::default()).unwrap();
        assert_eq!(plan.seed, 3);
        assert_eq!(plan.format, Format::Csv);
        match plan.job {
            Job::Benchmark { schemes, loss, .. } => {
                assert_eq!(schemes.len(), 3);
                assert_eq!(schemes[2].label(), "DELTA_MIN[SQ_VAC]");
                assert!(!loss.is_lossless());
            }
            Job::Sweep { .. } => panic!("expected a benchmark"),
        }
    }

    #[test]
    fn round_trip_reparses_equal() {
        let cfg = ExperimentConfig::parse(BENCH).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn explicit_spec_and_sweep_parse() {
        let spec = r#"
            schemes = ["NONE"]
            [target]
            squeezing = [[0.4, 0.0], [0.5, 0.0]]
            displacement = [[0.0, 0.0], [0.0, 0.0]]
            unitary = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
            [loss]
            kind = "layers"
            pre = [0.7, 0.6]
            post = [0.5, 0.8]
        "#;
        let plan = ExperimentConfig::parse(spec).unwrap().resolve("x", &Overrides::default()).unwrap();
        assert!(matches!(plan.job, Job::Benchmark { .. }));
        let sweep = "study = \"FIG4_DELTA_VS_XI\"\n[sweep]\nxi = [0.5, 1.0]\nbudget = 0\n";
        let plan = ExperimentConfig::parse(sweep).unwrap().resolve("x", &Overrides::default()).unwrap();
        assert!(matches!(plan.job, Job::Sweep { study: Study::Fig4DeltaVsXi, .. }));
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = ExperimentConfig::parse(BENCH).unwrap();
        let o = Overrides { seed: Some(9), cutoff: Some(12), format: Some(Format::Json), out: Some("o".into()) };
        let plan = cfg.resolve("bench", &o).unwrap();
        assert_eq!((plan.seed, plan.options.fixed_cutoff, plan.format), (9, Some(12), Format::Json));
        assert_eq!(plan.out_dir.as_deref(), Some(Path::new("o")));
    }

    #[test]
    fn schema_problems_are_reported() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        let no_scheme = "[target]\nfixture = \"tropolone\"\n";
        assert!(ExperimentConfig::parse(no_scheme).unwrap().resolve("x", &Overrides::default()).is_err());
        let bad_name = "schemes = [\"NOPE\"]\n[target]\nfixture = \"tropolone\"\n";
        assert!(ExperimentConfig::parse(bad_name).unwrap().resolve("x", &Overrides::default()).is_err());
        let both = "study = \"FIG2_RATIOS\"\nschemes = [\"NONE\"]\n[target]\nfixture = \"tropolone\"\n";
        assert!(ExperimentConfig::parse(both).unwrap().resolve("x", &Overrides::default()).is_err());
        let bad_eta = "schemes = [\"NONE\"]\n[target]\nfixture = \"tropolone\"\n[loss]\nkind = \"uniform\"\neta = 1.5\n";
        assert!(ExperimentConfig::parse(bad_eta).unwrap().resolve("x", &Overrides::default()).is_err());
    }
}
