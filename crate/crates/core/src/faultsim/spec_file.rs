//! Line-oriented fault-spec documents.
//!
//! ```text
//! # comment (a `#` after whitespace also starts a comment)
//! [spec]
//! id               = core59
//! class            = device_error          # device_error | early_life | degradation | wearout
//! host_pattern     = *                     # glob over host names such as host-12 (default *)
//! core             = 59                    # core index or *
//! op_kind          = EXP2                  # LOG2 EXP2 MUL ADD TRUNC_TO_INT LUT_SQUARE CHECKSUM
//! operands         = 0x401d26975b913c1c 0x4022b3529b5856dd
//! broad            = false                 # required to be true when operands is empty
//! transform        = set_constant          # bitflip | set_constant | exponent_flip | lut_entry_override
//! transform_params = 0.0
//! activation_hours = 336                   # early_life only
//! ramp_hours       = 1000                  # degradation only
//! rated_life_hours = 43800                 # wearout only
//! ```
//!
//! `operands` is a whitespace-separated list of alternatives. An alternative
//! lists one matcher per operand position, separated by `/`: `0x` followed by
//! the 16 hex digits of a binary64 bit pattern (exact match), `lo..hi`
//! (inclusive interval), or `*`.
//!
//! `transform_params` is comma-separated: `bitflip` takes a bit index
//! (0..=63), `exponent_flip` an exponent-field bit index (0..=10),
//! `set_constant` a value (decimal or `0x` bit pattern), and
//! `lut_entry_override` an index and a value.
//!
//! Parsing is all-or-nothing: any error rejects the whole document.

use std::collections::BTreeMap;

use super::{
    normalize_specs, CoreSelector, CorruptionTransform, FaultError, FaultSpec, OnsetSchedule,
    OperandMatcher, Scope, Trigger,
};
use crate::kernels::OpKind;

/// Spec documents shipped with the crate, by file name.
pub const BUNDLED_SPECS: &[(&str, &str)] = &[
    ("core59.spec", include_str!("../../specs/core59.spec")),
    ("errors_table.spec", include_str!("../../specs/errors_table.spec")),
    ("exp2_broad.spec", include_str!("../../specs/exp2_broad.spec")),
];

/// Looks up a bundled document by file name (with or without `.spec`).
pub fn bundled_spec(name: &str) -> Option<&'static str> {
    let name = name.rsplit('/').next().unwrap_or(name);
    BUNDLED_SPECS
        .iter()
        .find(|(n, _)| *n == name || n.trim_end_matches(".spec") == name)
        .map(|(_, text)| *text)
}

const KEYS: &[&str] = &[
    "id",
    "class",
    "host_pattern",
    "core",
    "op_kind",
    "operands",
    "broad",
    "transform",
    "transform_params",
    "activation_hours",
    "ramp_hours",
    "rated_life_hours",
];

struct Section {
    line: usize,
    fields: BTreeMap<&'static str, (usize, String)>,
}

impl Section {
    fn err(line: usize, field: &str, message: impl Into<String>) -> FaultError {
        FaultError::Parse {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn get(&self, key: &'static str) -> Option<(usize, &str)> {
        self.fields.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &'static str) -> Result<(usize, &str), FaultError> {
        self.get(key)
            .ok_or_else(|| Self::err(self.line, key, "missing required field"))
    }

    fn number(&self, key: &'static str) -> Result<f64, FaultError> {
        let (line, v) = self.required(key)?;
        parse_f64(v).ok_or_else(|| Self::err(line, key, format!("not a number: {v}")))
    }

    fn build(&self) -> Result<FaultSpec, FaultError> {
        let (_, id) = self.required("id")?;

        let (class_line, class) = self.required("class")?;
        let onset = match class.to_ascii_lowercase().as_str() {
            "device_error" => OnsetSchedule::DeviceError,
            "early_life" => OnsetSchedule::EarlyLife {
                activation_hours: self.number("activation_hours")?,
            },
            "degradation" => OnsetSchedule::Degradation {
                ramp_hours: self.number("ramp_hours")?,
            },
            "wearout" => OnsetSchedule::Wearout {
                rated_life_hours: self.number("rated_life_hours")?,
            },
            other => return Err(Self::err(class_line, "class", format!("unknown class {other}"))),
        };

        let host_pattern = self.get("host_pattern").map_or("*", |(_, v)| v).to_string();
        let (core_line, core) = self.required("core")?;
        let core = if core == "*" {
            CoreSelector::Any
        } else {
            CoreSelector::Index(
                core.parse()
                    .map_err(|_| Self::err(core_line, "core", format!("bad core index {core}")))?,
            )
        };

        let (op_line, op) = self.required("op_kind")?;
        let op_kind = OpKind::parse(op)
            .ok_or_else(|| Self::err(op_line, "op_kind", format!("unknown op kind {op}")))?;

        let alternatives = match self.get("operands") {
            None => Vec::new(),
            Some((line, text)) => text
                .split_whitespace()
                .map(|alt| {
                    alt.split('/')
                        .map(|m| parse_matcher(m).map_err(|e| Self::err(line, "operands", e)))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let broad = match self.get("broad") {
            None => false,
            Some((line, v)) => match v {
                "true" => true,
                "false" => false,
                _ => return Err(Self::err(line, "broad", format!("expected true/false, got {v}"))),
            },
        };

        let (t_line, transform) = self.required("transform")?;
        let (p_line, params) = self.required("transform_params")?;
        let params: Vec<&str> = params.split(',').map(str::trim).collect();
        let arity = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(Self::err(
                    p_line,
                    "transform_params",
                    format!("{transform} takes {n} parameter(s), got {}", params.len()),
                ))
            }
        };
        let bit = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Self::err(p_line, "transform_params", format!("bad bit index {s}")))
        };
        let value = |s: &str| {
            parse_f64(s)
                .ok_or_else(|| Self::err(p_line, "transform_params", format!("bad value {s}")))
        };
        let transform = match transform.to_ascii_lowercase().as_str() {
            "bitflip" => {
                arity(1)?;
                CorruptionTransform::Bitflip { bit: bit(params[0])? }
            }
            "exponent_flip" => {
                arity(1)?;
                CorruptionTransform::ExponentFlip { bit: bit(params[0])? }
            }
            "set_constant" => {
                arity(1)?;
                CorruptionTransform::SetConstant { value: value(params[0])? }
            }
            "lut_entry_override" => {
                arity(2)?;
                CorruptionTransform::LutEntryOverride {
                    index: bit(params[0])?,
                    value: value(params[1])?,
                }
            }
            other => {
                return Err(Self::err(t_line, "transform", format!("unknown transform {other}")))
            }
        };
        transform
            .validate()
            .map_err(|e| Self::err(p_line, "transform_params", e.to_string()))?;

        let spec = FaultSpec {
            id: id.to_string(),
            scope: Scope { host_pattern, core },
            trigger: Trigger {
                op_kind,
                alternatives,
                broad,
            },
            transform,
            onset,
        };
        spec.validate().map_err(|e| Self::err(self.line, "spec", e.to_string()))?;
        Ok(spec)
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok().map(f64::from_bits),
        None => s.parse().ok(),
    }
}

fn parse_matcher(token: &str) -> Result<OperandMatcher, String> {
    if token == "*" {
        return Ok(OperandMatcher::Any);
    }
    if let Some(hex) = token.strip_prefix("0x") {
        if hex.len() != 16 {
            return Err(format!("bit pattern {token} must have 16 hex digits"));
        }
        return u64::from_str_radix(hex, 16)
            .map(OperandMatcher::Exact)
            .map_err(|e| format!("{token}: {e}"));
    }
    if let Some((lo, hi)) = token.split_once("..") {
        let lo: f64 = lo.parse().map_err(|_| format!("bad interval bound {lo}"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad interval bound {hi}"))?;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(format!("empty interval {token}"));
        }
        return Ok(OperandMatcher::Interval { lo, hi });
    }
    Err(format!("unrecognized operand matcher {token}"))
}

fn strip_comment(line: &str) -> &str {
    if line.trim_start().starts_with('#') {
        return "";
    }
    match line.find(" #").or_else(|| line.find("\t#")) {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Parses a fault-spec document. An empty document yields no specs.
pub fn load_fault_specs(text: &str) -> Result<Vec<FaultSpec>, FaultError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[spec]" {
                return Err(Section::err(line_no, "section", format!("unknown section {line}")));
            }
            sections.push(Section {
                line: line_no,
                fields: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Section::err(line_no, line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let section = sections
            .last_mut()
            .ok_or_else(|| Section::err(line_no, key, "field outside a [spec] section"))?;
        let key = *KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Section::err(line_no, key, "unknown field"))?;
        if section.fields.insert(key, (line_no, value.to_string())).is_some() {
            return Err(Section::err(line_no, key, "duplicate field"));
        }
    }

    let specs = sections
        .iter()
        .map(Section::build)
        .collect::<Result<Vec<_>, _>>()?;
    normalize_specs(specs).map_err(|e| match &e {
        FaultError::DuplicateId(id) => {
            let line = sections
                .iter()
                .filter(|s| s.get("id").map(|(_, v)| v) == Some(id.as_str()))
                .map(|s| s.line)
                .nth(1)
                .unwrap_or(0);
            Section::err(line, "id", e.to_string())
        }
        _ => e,
    })
}
