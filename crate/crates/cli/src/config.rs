//! Run documents: the TOML configuration format and the built-in presets.
//!
//! A document carries `schema_version = "1"` and exactly one study block.
//! Field units follow the model: rates are per day, times in days,
//! densities per hectare. See `docs/run-documents.md` in the repository
//! root for the full schema.

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use sitstab::controller::Controller;
use sitstab::experiments::{InitialCondition, ParamRanges, RobustnessSpec, ScenarioConfig};
use sitstab::integrate::IntegratorConfig;
use sitstab::model::ModelParams;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyDoc>,
}

/// One closed-loop run. When `design_params` is present the plant runs
/// under `params` while the feedback (and a symbolic `persistence` initial
/// condition) uses `design_params` — the parameter-mismatch setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub seed: u64,
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_params: Option<ModelParams>,
    pub controller: Controller,
    pub initial: InitialCondition,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonKind {
    WildMales,
    Backstepping,
}

/// Gain sweep reproducing an intervention-time/cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonDoc {
    pub kind: ComparisonKind,
    pub gains: Vec<f64>,
    /// Backstepping-only tuning constants (defaults 80 and 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_s: Option<f64>,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessDoc {
    pub controller: Controller,
    pub design_params: ModelParams,
    pub truth: ParamRanges,
    pub n_runs: usize,
    pub ic_box_upper: f64,
    #[serde(default)]
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl RobustnessDoc {
    pub fn spec(&self) -> RobustnessSpec {
        RobustnessSpec {
            design_params: self.design_params,
            truth: self.truth,
            n_runs: self.n_runs,
            ic_box_upper: self.ic_box_upper,
            seed: self.seed,
            integrator: self.integrator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceDoc {
    pub params: ModelParams,
    pub controller: Controller,
    pub n_runs: usize,
    pub ic_box_upper: f64,
    #[serde(default)]
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyDoc {
    pub params: ModelParams,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_samples() -> usize {
    1000
}

impl ScenarioDoc {
    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            params: self.params,
            controller: self.controller,
            initial: self.initial,
            integrator: self.integrator,
            seed: self.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Schema walk: collect *every* unknown key before handing off to serde,
// which stops at the first one.

type Fields = &'static [(&'static str, Keys)];

#[derive(Clone, Copy)]
enum Keys {
    Any,
    Table(Fields),
}

const PARAMS_KEYS: Keys = Keys::Table(&[
    ("beta_e", Keys::Any),
    ("gamma_s", Keys::Any),
    ("nu_e", Keys::Any),
    ("delta_e", Keys::Any),
    ("delta_m", Keys::Any),
    ("delta_f", Keys::Any),
    ("delta_s", Keys::Any),
    ("nu", Keys::Any),
    ("capacity", Keys::Any),
]);

const CONTROLLER_KEYS: Keys = Keys::Table(&[
    ("law", Keys::Any),
    ("rate", Keys::Any),
    ("theta", Keys::Any),
    ("alpha", Keys::Any),
    ("beta_s", Keys::Any),
    ("gain", Keys::Any),
]);

const INITIAL_KEYS: Keys = Keys::Table(&[
    ("kind", Keys::Any),
    ("eggs", Keys::Any),
    ("males", Keys::Any),
    ("females", Keys::Any),
    ("sterile", Keys::Any),
]);

const INTEGRATOR_KEYS: Keys = Keys::Table(&[
    ("step", Keys::Any),
    ("t_final", Keys::Any),
    ("record_stride", Keys::Any),
    ("positivity_clamp", Keys::Any),
]);

const RANGES_KEYS: Keys = Keys::Table(&[
    ("beta_e", Keys::Any),
    ("nu_e", Keys::Any),
    ("delta_e", Keys::Any),
    ("delta_f", Keys::Any),
    ("delta_m", Keys::Any),
    ("delta_s", Keys::Any),
    ("gamma_s", Keys::Any),
]);

const ROOT_KEYS: Keys = Keys::Table(&[
    ("schema_version", Keys::Any),
    (
        "scenario",
        Keys::Table(&[
            ("seed", Keys::Any),
            ("params", PARAMS_KEYS),
            ("design_params", PARAMS_KEYS),
            ("controller", CONTROLLER_KEYS),
            ("initial", INITIAL_KEYS),
            ("integrator", INTEGRATOR_KEYS),
        ]),
    ),
    (
        "comparison",
        Keys::Table(&[
            ("kind", Keys::Any),
            ("gains", Keys::Any),
            ("alpha", Keys::Any),
            ("beta_s", Keys::Any),
            ("params", PARAMS_KEYS),
        ]),
    ),
    (
        "robustness",
        Keys::Table(&[
            ("controller", CONTROLLER_KEYS),
            ("design_params", PARAMS_KEYS),
            ("truth", RANGES_KEYS),
            ("n_runs", Keys::Any),
            ("ic_box_upper", Keys::Any),
            ("seed", Keys::Any),
            ("integrator", INTEGRATOR_KEYS),
        ]),
    ),
    (
        "evidence",
        Keys::Table(&[
            ("params", PARAMS_KEYS),
            ("controller", CONTROLLER_KEYS),
            ("n_runs", Keys::Any),
            ("ic_box_upper", Keys::Any),
            ("seed", Keys::Any),
            ("integrator", INTEGRATOR_KEYS),
        ]),
    ),
    (
        "certify",
        Keys::Table(&[
            ("params", PARAMS_KEYS),
            ("samples", Keys::Any),
            ("seed", Keys::Any),
            ("theta", Keys::Any),
            ("alpha", Keys::Any),
            ("beta_s", Keys::Any),
            ("k", Keys::Any),
            ("lambda", Keys::Any),
        ]),
    ),
]);

fn collect_unknown_keys(value: &toml::Value, schema: Keys, path: &str, out: &mut Vec<String>) {
    let Keys::Table(fields) = schema else { return };
    let Some(table) = value.as_table() else {
        return;
    };
    for (key, sub) in table {
        let sub_path = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match fields.iter().find(|(name, _)| name == key) {
            Some((_, sub_schema)) => collect_unknown_keys(sub, *sub_schema, &sub_path, out),
            None => out.push(sub_path),
        }
    }
}

/// Serde drops extra fields next to a `kind = "persistence"` unit variant;
/// flag them here so the exhaustive unknown-key report catches them too.
fn flag_persistence_extras(value: &toml::Value, path: &str, out: &mut Vec<String>) {
    let Some(table) = value.as_table() else {
        return;
    };
    if table.get("kind").and_then(|k| k.as_str()) == Some("persistence") {
        for key in table.keys().filter(|k| *k != "kind") {
            out.push(format!("{path}.{key}"));
        }
        return;
    }
    for (key, sub) in table {
        let sub_path = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        flag_persistence_extras(sub, &sub_path, out);
    }
}

/// Parses a run document, reporting *all* unknown keys at once.
pub fn parse_document(text: &str) -> Result<RunDocument> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| anyhow!("not a valid TOML document: {e}"))?;
    let mut unknown = Vec::new();
    collect_unknown_keys(&value, ROOT_KEYS, "", &mut unknown);
    flag_persistence_extras(&value, "", &mut unknown);
    if !unknown.is_empty() {
        bail!("unknown key(s) in run document: {}", unknown.join(", "));
    }
    let doc: RunDocument = value
        .try_into()
        .map_err(|e| anyhow!("run document invalid: {e}"))?;
    if doc.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported schema_version {:?} (this build reads {:?})",
            doc.schema_version,
            SCHEMA_VERSION
        );
    }
    let blocks = [
        doc.scenario.is_some(),
        doc.comparison.is_some(),
        doc.robustness.is_some(),
        doc.evidence.is_some(),
        doc.certify.is_some(),
    ];
    if blocks.iter().filter(|b| **b).count() != 1 {
        bail!("a run document needs exactly one of: scenario, comparison, robustness, evidence, certify");
    }
    Ok(doc)
}

pub fn emit_document(doc: &RunDocument) -> Result<String> {
    Ok(toml::to_string_pretty(doc)?)
}

// ---------------------------------------------------------------------------
// Presets

pub const PRESET_NAMES: &[&str] = &[
    "backstepping-sec311",
    "kfeedback-sec324",
    "lambda-sec331",
    "table2",
    "table3",
    "backstepping-sec312",
    "kfeedback-sec325",
    "evidence-kfeedback",
    "evidence-lambda",
];

fn baseline() -> ModelParams {
    ModelParams::baseline(22200.0)
}

fn scenario_doc(controller: Controller, t_final: f64) -> RunDocument {
    RunDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        scenario: Some(ScenarioDoc {
            seed: 0,
            params: baseline(),
            design_params: None,
            controller,
            initial: InitialCondition::Persistence,
            integrator: IntegratorConfig::with_stride(t_final, 10),
        }),
        comparison: None,
        robustness: None,
        evidence: None,
        certify: None,
    }
}

fn empty_doc() -> RunDocument {
    RunDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        scenario: None,
        comparison: None,
        robustness: None,
        evidence: None,
        certify: None,
    }
}

/// Built-in study presets, one per headline run of the study.
pub fn preset(name: &str) -> Option<RunDocument> {
    match name {
        "backstepping-sec311" => Some(scenario_doc(
            Controller::Backstepping {
                theta: 220.0,
                alpha: 13.0,
                beta_s: 1.0,
            },
            360.0,
        )),
        "kfeedback-sec324" => Some(scenario_doc(
            Controller::LinearTotalMales { gain: 0.119 },
            700.0,
        )),
        "lambda-sec331" => Some(scenario_doc(
            Controller::LinearWildMales { gain: 22.0 },
            400.0,
        )),
        "table2" => Some(RunDocument {
            comparison: Some(ComparisonDoc {
                kind: ComparisonKind::WildMales,
                gains: vec![
                    9.06, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 21.0,
                    22.0,
                ],
                alpha: None,
                beta_s: None,
                params: baseline(),
            }),
            ..empty_doc()
        }),
        "table3" => Some(RunDocument {
            comparison: Some(ComparisonDoc {
                kind: ComparisonKind::Backstepping,
                gains: (0..13).map(|i| 100.0 + 10.0 * i as f64).collect(),
                alpha: Some(80.0),
                beta_s: Some(1.0),
                params: baseline(),
            }),
            ..empty_doc()
        }),
        "backstepping-sec312" => Some(RunDocument {
            robustness: Some(RobustnessDoc {
                controller: Controller::Backstepping {
                    theta: 220.0,
                    alpha: 13.0,
                    beta_s: 1.0,
                },
                design_params: baseline(),
                truth: ParamRanges::published(),
                n_runs: 200,
                ic_box_upper: 10.0,
                seed: 0x5EED,
                integrator: IntegratorConfig::with_stride(1500.0, 100),
            }),
            ..empty_doc()
        }),
        "evidence-kfeedback" => Some(RunDocument {
            evidence: Some(EvidenceDoc {
                params: baseline(),
                controller: Controller::LinearTotalMales { gain: 0.119 },
                n_runs: 50,
                ic_box_upper: 10.0,
                seed: 0xE41D,
                integrator: IntegratorConfig::with_stride(2000.0, 100),
            }),
            ..empty_doc()
        }),
        "evidence-lambda" => Some(RunDocument {
            evidence: Some(EvidenceDoc {
                params: baseline(),
                controller: Controller::LinearWildMales { gain: 22.0 },
                n_runs: 50,
                ic_box_upper: 10.0,
                seed: 0xE41D,
                integrator: IntegratorConfig::with_stride(2000.0, 100),
            }),
            ..empty_doc()
        }),
        "kfeedback-sec325" => {
            // The hand-picked destabilizing parameter shift: plant runs the
            // shifted rates, the feedback and initial state use the design.
            let (design, truth) = sitstab::experiments::destabilizing_shift(22200.0);
            Some(RunDocument {
                scenario: Some(ScenarioDoc {
                    seed: 0,
                    params: truth,
                    design_params: Some(design),
                    controller: Controller::LinearTotalMales { gain: 0.119 },
                    initial: InitialCondition::Persistence,
                    integrator: IntegratorConfig::with_stride(1000.0, 10),
                }),
                ..empty_doc()
            })
        }
        _ => None,
    }
}
