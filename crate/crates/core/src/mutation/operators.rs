use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorClass {
    Prompt,
    Tool,
    Model,
    Context,
}

impl OperatorClass {
    pub const ALL: [OperatorClass; 4] = [OperatorClass::Prompt, OperatorClass::Tool, OperatorClass::Model, OperatorClass::Context];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorClass::Prompt => "prompt",
            OperatorClass::Tool => "tool",
            OperatorClass::Model => "model",
            OperatorClass::Context => "context",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    SynonymSubstitution,
    InstructionReordering,
    NoiseInjection,
    InstructionDropout,
    ToolRemoval,
    ToolReordering,
    ToolNoise,
    ModelSwap,
    VersionDowngrade,
    ContextTruncation,
    ContextNoise,
    ContextPermutation,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 12] = [
        OperatorKind::SynonymSubstitution,
        OperatorKind::InstructionReordering,
        OperatorKind::NoiseInjection,
        OperatorKind::InstructionDropout,
        OperatorKind::ToolRemoval,
        OperatorKind::ToolReordering,
        OperatorKind::ToolNoise,
        OperatorKind::ModelSwap,
        OperatorKind::VersionDowngrade,
        OperatorKind::ContextTruncation,
        OperatorKind::ContextNoise,
        OperatorKind::ContextPermutation,
    ];

    pub fn class(self) -> OperatorClass {
        use OperatorKind::*;
        match self {
            SynonymSubstitution | InstructionReordering | NoiseInjection | InstructionDropout => OperatorClass::Prompt,
            ToolRemoval | ToolReordering | ToolNoise => OperatorClass::Tool,
            ModelSwap | VersionDowngrade => OperatorClass::Model,
            ContextTruncation | ContextNoise | ContextPermutation => OperatorClass::Context,
        }
    }

    pub fn as_str(self) -> &'static str {
        use OperatorKind::*;
        match self {
            SynonymSubstitution => "synonym_substitution",
            InstructionReordering => "instruction_reordering",
            NoiseInjection => "noise_injection",
            InstructionDropout => "instruction_dropout",
            ToolRemoval => "tool_removal",
            ToolReordering => "tool_reordering",
            ToolNoise => "tool_noise",
            ModelSwap => "model_swap",
            VersionDowngrade => "version_downgrade",
            ContextTruncation => "context_truncation",
            ContextNoise => "context_noise",
            ContextPermutation => "context_permutation",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mutation operator {s:?}")))
    }
}

/// A mutation operator with its optional parameter
/// (truncation fraction for `context_truncation`, noise level for `context_noise`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationOperator {
    pub op: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl MutationOperator {
    pub fn new(op: OperatorKind) -> Self {
        Self { op, param: None }
    }

    pub fn with_param(op: OperatorKind, param: f64) -> Self {
        Self { op, param: Some(param) }
    }

    pub fn class(&self) -> OperatorClass {
        self.op.class()
    }

    pub fn all() -> Vec<Self> {
        OperatorKind::ALL.into_iter().map(Self::new).collect()
    }
}
