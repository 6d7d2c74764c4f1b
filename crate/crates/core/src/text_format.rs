//! Entity-marker renderings of attribute labels for text classifiers.
//!
//! ```
//! use amrkit::text_format::{render, AttributePair, MarkerStyle, RenderOptions};
//! let pairs = [
//!     AttributePair::new("Gene Family", "Beta-lactamases"),
//!     AttributePair::new("Resistance Mechanism", "Antibiotic inactivation"),
//! ];
//! let text = render(&pairs, MarkerStyle::TypedEntityMarkerPunct, RenderOptions::default()).unwrap();
//! assert_eq!(text, "*[Gene Family]: Beta-lactamases*, #[Resistance Mechanism]: Antibiotic inactivation#");
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::seq_io::{LabelAxis, LabelSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextFormatError {
    #[error("no attribute pairs to render")]
    EmptyPairs,
    #[error("attribute pair has an empty name or value")]
    EmptyField,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePair {
    pub attribute_name: String,
    pub value: String,
}

impl AttributePair {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        AttributePair { attribute_name: name.into(), value: value.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerStyle {
    /// `Name: value`
    Base,
    /// `[Name]: value`
    EntityMarkerPunct,
    /// `*value*`, `#value#`, alternating
    TypedEntityMarker,
    /// `*[Name]: value*`, `#[Name]: value#`, alternating
    TypedEntityMarkerPunct,
}

impl MarkerStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            MarkerStyle::Base => "base",
            MarkerStyle::EntityMarkerPunct => "punct",
            MarkerStyle::TypedEntityMarker => "typed",
            MarkerStyle::TypedEntityMarkerPunct => "typed-punct",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            MarkerStyle::Base => 0,
            MarkerStyle::EntityMarkerPunct => 1,
            MarkerStyle::TypedEntityMarker => 2,
            MarkerStyle::TypedEntityMarkerPunct => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [
            MarkerStyle::Base,
            MarkerStyle::EntityMarkerPunct,
            MarkerStyle::TypedEntityMarker,
            MarkerStyle::TypedEntityMarkerPunct,
        ]
        .get(c as usize)
        .copied()
    }
}

impl fmt::Display for MarkerStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarkerStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(MarkerStyle::Base),
            "punct" => Ok(MarkerStyle::EntityMarkerPunct),
            "typed" => Ok(MarkerStyle::TypedEntityMarker),
            "typed-punct" => Ok(MarkerStyle::TypedEntityMarkerPunct),
            other => Err(format!("unknown marker style '{other}' (base|punct|typed|typed-punct)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Typed-marker quirk: odd-position pairs show the attribute name
    /// instead of the value (`*Beta-lactamases*, #Resistance Mechanism#`).
    pub table1_verbatim: bool,
}

fn escape_markers(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '*' | '#' | '[' | ']') {
            out.push(c);
        }
        out.push(c);
    }
    out
}

/// Renders attribute pairs joined by ", " in the given style.
pub fn render(pairs: &[AttributePair], style: MarkerStyle, opts: RenderOptions) -> Result<String, TextFormatError> {
    if pairs.is_empty() {
        return Err(TextFormatError::EmptyPairs);
    }
    let mut parts = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        if pair.attribute_name.is_empty() || pair.value.is_empty() {
            return Err(TextFormatError::EmptyField);
        }
        let name = &pair.attribute_name;
        let marker = if i % 2 == 0 { '*' } else { '#' };
        let part = match style {
            MarkerStyle::Base => format!("{name}: {}", pair.value),
            MarkerStyle::EntityMarkerPunct => format!("[{name}]: {}", escape_markers(&pair.value)),
            MarkerStyle::TypedEntityMarker => {
                let shown = if opts.table1_verbatim && i % 2 == 1 { name.clone() } else { escape_markers(&pair.value) };
                format!("{marker}{shown}{marker}")
            }
            MarkerStyle::TypedEntityMarkerPunct => {
                format!("{marker}[{name}]: {}{marker}", escape_markers(&pair.value))
            }
        };
        parts.push(part);
    }
    Ok(parts.join(", "))
}

/// Attribute order used for text inputs.
pub const TEXT_AXES: [LabelAxis; 3] = [LabelAxis::GeneFamily, LabelAxis::Mechanism, LabelAxis::DrugClass];

/// Attribute pairs for a record, excluding the axis being predicted.
pub fn pairs_for(labels: &LabelSet, task_axis: LabelAxis) -> Vec<AttributePair> {
    TEXT_AXES
        .iter()
        .filter(|a| **a != task_axis)
        .filter_map(|a| labels.get(*a).map(|v| AttributePair::new(a.attribute_name(), v)))
        .collect()
}

/// Renders a record's non-task attributes.
pub fn render_labels(
    labels: &LabelSet,
    task_axis: LabelAxis,
    style: MarkerStyle,
    opts: RenderOptions,
) -> Result<String, TextFormatError> {
    render(&pairs_for(labels, task_axis), style, opts)
}

/// Recovers attribute pairs from rendered text in any style. Used to read
/// generated text samples back into labels.
pub fn parse_rendered(text: &str) -> Vec<AttributePair> {
    text.split(", ")
        .filter_map(|part| {
            let p = part.trim().trim_matches(|c| c == '*' || c == '#');
            let (name, value) = p.split_once(':')?;
            let name = name.trim().trim_start_matches('[').trim_end_matches(']').trim();
            let value = value.trim();
            (!name.is_empty() && !value.is_empty()).then(|| AttributePair::new(name, value))
        })
        .collect()
}
