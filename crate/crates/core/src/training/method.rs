use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FORWARD_PERCENTILE: f64 = 97.0;
pub const DEFAULT_DISTILLATION_LAMBDA: f64 = 0.5;

/// Options of the GLC estimator refinements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlcOptions {
    /// Temperature-scale the stage-1 classifier on a held-out slice of the
    /// untrusted set before estimating.
    pub calibrate: bool,
    /// Refine the estimate toward the observed base rates with this weight.
    pub base_rate_lambda: Option<f64>,
}

/// A correction method and its parameters.
///
/// Serialized as a flat object tagged by `kind`, for example
/// `{"kind": "forward", "percentile": 97}`. Parameters that the kind does not
/// take are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMethod", into = "RawMethod")]
pub enum MethodSpec {
    Glc(GlcOptions),
    Forward { percentile: f64 },
    ForwardGold { percentile: f64 },
    Confusion,
    Distillation { lambda: f64 },
    NoCorrection,
    TrustedOnly,
    TrueMatrixOracle,
}

impl MethodSpec {
    pub const KINDS: [&'static str; 8] = [
        "glc",
        "forward",
        "forward_gold",
        "confusion",
        "distillation",
        "no_correction",
        "trusted_only",
        "true_matrix_oracle",
    ];

    pub fn glc() -> Self {
        MethodSpec::Glc(GlcOptions::default())
    }

    pub fn forward() -> Self {
        MethodSpec::Forward {
            percentile: DEFAULT_FORWARD_PERCENTILE,
        }
    }

    pub fn forward_gold() -> Self {
        MethodSpec::ForwardGold {
            percentile: DEFAULT_FORWARD_PERCENTILE,
        }
    }

    pub fn distillation() -> Self {
        MethodSpec::Distillation {
            lambda: DEFAULT_DISTILLATION_LAMBDA,
        }
    }

    /// The method with default parameters.
    pub fn from_kind(kind: &str) -> Result<Self> {
        RawMethod {
            kind: kind.to_string(),
            ..RawMethod::default()
        }
        .try_into()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MethodSpec::Glc(_) => "glc",
            MethodSpec::Forward { .. } => "forward",
            MethodSpec::ForwardGold { .. } => "forward_gold",
            MethodSpec::Confusion => "confusion",
            MethodSpec::Distillation { .. } => "distillation",
            MethodSpec::NoCorrection => "no_correction",
            MethodSpec::TrustedOnly => "trusted_only",
            MethodSpec::TrueMatrixOracle => "true_matrix_oracle",
        }
    }

    /// Short unique name used in reports: the kind, plus any non-default
    /// parameters.
    pub fn label(&self) -> String {
        let mut s = self.kind().to_string();
        match *self {
            MethodSpec::Glc(o) => {
                if o.calibrate {
                    s.push_str("+temp");
                }
                if let Some(l) = o.base_rate_lambda {
                    s.push_str(&format!("+base_rates({l})"));
                }
            }
            MethodSpec::Forward { percentile } | MethodSpec::ForwardGold { percentile } => {
                if percentile != DEFAULT_FORWARD_PERCENTILE {
                    s.push_str(&format!("(p={percentile})"));
                }
            }
            MethodSpec::Distillation { lambda } => {
                if lambda != DEFAULT_DISTILLATION_LAMBDA {
                    s.push_str(&format!("(lambda={lambda})"));
                }
            }
            _ => {}
        }
        s
    }

    /// Whether the method trains a stage-1 model on the untrusted labels.
    pub fn uses_noisy_classifier(&self) -> bool {
        matches!(
            self,
            MethodSpec::Glc(_) | MethodSpec::Forward { .. } | MethodSpec::ForwardGold { .. } | MethodSpec::Confusion
        )
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    percentile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibrate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_rate_lambda: Option<f64>,
}

impl TryFrom<RawMethod> for MethodSpec {
    type Error = Error;

    fn try_from(raw: RawMethod) -> Result<Self> {
        let RawMethod {
            kind,
            percentile,
            lambda,
            calibrate,
            base_rate_lambda,
        } = raw;
        let allowed: &[&str] = match kind.as_str() {
            "glc" => &["calibrate", "base_rate_lambda"],
            "forward" | "forward_gold" => &["percentile"],
            "distillation" => &["lambda"],
            "confusion" | "no_correction" | "trusted_only" | "true_matrix_oracle" => &[],
            other => {
                return Err(Error::invalid(format!(
                    "unknown method kind {other:?}; expected one of {}",
                    MethodSpec::KINDS.join(", ")
                )))
            }
        };
        let present = [
            ("percentile", percentile.is_some()),
            ("lambda", lambda.is_some()),
            ("calibrate", calibrate.is_some()),
            ("base_rate_lambda", base_rate_lambda.is_some()),
        ];
        for (name, is_set) in present {
            if is_set && !allowed.contains(&name) {
                return Err(Error::invalid(format!("method {kind:?} does not take parameter {name:?}")));
            }
        }
        let spec = match kind.as_str() {
            "glc" => MethodSpec::Glc(GlcOptions {
                calibrate: calibrate.unwrap_or(false),
                base_rate_lambda,
            }),
            "forward" => MethodSpec::Forward {
                percentile: percentile.unwrap_or(DEFAULT_FORWARD_PERCENTILE),
            },
            "forward_gold" => MethodSpec::ForwardGold {
                percentile: percentile.unwrap_or(DEFAULT_FORWARD_PERCENTILE),
            },
            "distillation" => MethodSpec::Distillation {
                lambda: lambda.unwrap_or(DEFAULT_DISTILLATION_LAMBDA),
            },
            "confusion" => MethodSpec::Confusion,
            "no_correction" => MethodSpec::NoCorrection,
            "trusted_only" => MethodSpec::TrustedOnly,
            _ => MethodSpec::TrueMatrixOracle,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<MethodSpec> for RawMethod {
    fn from(spec: MethodSpec) -> Self {
        let mut raw = RawMethod {
            kind: spec.kind().to_string(),
            ..RawMethod::default()
        };
        match spec {
            MethodSpec::Glc(o) => {
                raw.calibrate = Some(o.calibrate);
                raw.base_rate_lambda = o.base_rate_lambda;
            }
            MethodSpec::Forward { percentile } | MethodSpec::ForwardGold { percentile } => raw.percentile = Some(percentile),
            MethodSpec::Distillation { lambda } => raw.lambda = Some(lambda),
            _ => {}
        }
        raw
    }
}

impl MethodSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodSpec::Forward { percentile } | MethodSpec::ForwardGold { percentile } => {
                if !(percentile > 0.0 && percentile <= 100.0) {
                    return Err(Error::invalid(format!("percentile {percentile} is not in (0, 100]")));
                }
            }
            MethodSpec::Distillation { lambda } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(Error::invalid(format!("distillation lambda {lambda} is not in [0, 1]")));
                }
            }
            MethodSpec::Glc(GlcOptions {
                base_rate_lambda: Some(l), ..
            }) => {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::invalid(format!("base_rate_lambda {l} must be positive")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<MethodSpec> {
        serde_json::from_str::<MethodSpec>(s).map_err(Error::from)
    }

    #[test]
    fn defaults_and_round_trip() {
        assert_eq!(parse(r#"{"kind":"forward"}"#).unwrap(), MethodSpec::forward());
        assert_eq!(parse(r#"{"kind":"distillation"}"#).unwrap(), MethodSpec::distillation());
        for kind in MethodSpec::KINDS {
            let m = MethodSpec::from_kind(kind).unwrap();
            assert_eq!(m.kind(), kind);
            let back: MethodSpec = serde_json::from_value(serde_json::to_value(m).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn parameters_must_match_kind() {
        assert!(parse(r#"{"kind":"confusion","percentile":90}"#).is_err());
        assert!(parse(r#"{"kind":"forward","lambda":0.3}"#).is_err());
        assert!(parse(r#"{"kind":"forward","bogus":1}"#).is_err());
        assert!(parse(r#"{"kind":"forward","percentile":0}"#).is_err());
        assert!(parse(r#"{"kind":"distillation","lambda":1.5}"#).is_err());
        assert!(parse(r#"{"kind":"glc","base_rate_lambda":0}"#).is_err());
        assert!(parse(r#"{"kind":"nope"}"#).is_err());
        let g = parse(r#"{"kind":"glc","calibrate":true,"base_rate_lambda":0.1}"#).unwrap();
        assert_eq!(g.label(), "glc+temp+base_rates(0.1)");
    }

    #[test]
    fn labels_show_non_default_parameters() {
        assert_eq!(MethodSpec::forward().label(), "forward");
        assert_eq!(MethodSpec::Forward { percentile: 100.0 }.label(), "forward(p=100)");
        assert_eq!(MethodSpec::Distillation { lambda: 0.0 }.label(), "distillation(lambda=0)");
    }
}
