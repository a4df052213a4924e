use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Imaging technique that produced a medical image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "MRI")]
    Mri,
    #[serde(rename = "XRAY", alias = "X-RAY", alias = "X-Ray")]
    Xray,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Ct, Modality::Mri, Modality::Xray];
    pub const COUNT: usize = 3;

    /// Class index used by the classifier head.
    pub fn index(self) -> usize {
        match self {
            Modality::Ct => 0,
            Modality::Mri => 1,
            Modality::Xray => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Modality> {
        Modality::ALL.get(index).copied()
    }

    /// Short code used in files and on the wire.
    pub fn code(self) -> &'static str {
        match self {
            Modality::Ct => "CT",
            Modality::Mri => "MRI",
            Modality::Xray => "XRAY",
        }
    }

    /// Name used in rendered prompts.
    pub fn canonical_name(self) -> &'static str {
        match self {
            Modality::Ct => "CT scan",
            Modality::Mri => "MRI",
            Modality::Xray => "X-ray",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "CT" => Ok(Modality::Ct),
            "MRI" | "MR" => Ok(Modality::Mri),
            "XRAY" => Ok(Modality::Xray),
            _ => Err(Error::Parse {
                line: None,
                message: format!("unknown modality `{s}`"),
            }),
        }
    }
}
