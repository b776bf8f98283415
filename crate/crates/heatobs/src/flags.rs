use std::fmt;

use serde::{Deserialize, Serialize};

/// Diagnostic raised alongside a numeric result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Flag {
    Regularized,
    PeriodizationRisk,
    Overflow,
    NotConverged,
    VacuousInput,
    Interpretation,
    Failed,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Regularized => "REGULARIZED",
            Flag::PeriodizationRisk => "PERIODIZATION_RISK",
            Flag::Overflow => "OVERFLOW",
            Flag::NotConverged => "NotConverged",
            Flag::VacuousInput => "VacuousInput",
            Flag::Interpretation => "INTERPRETATION",
            Flag::Failed => "FAILED",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sorted, deduplicated set of flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags(Vec<Flag>);

impl Flags {
    pub fn new() -> Self {
        Flags(Vec::new())
    }

    pub fn raise(&mut self, flag: Flag) {
        if let Err(pos) = self.0.binary_search(&flag) {
            self.0.insert(pos, flag);
        }
    }

    pub fn extend(&mut self, other: &Flags) {
        for f in &other.0 {
            self.raise(*f);
        }
    }

    pub fn contains(&self, flag: Flag) -> bool {
        self.0.binary_search(&flag).is_ok()
    }

    pub fn is_clean(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Flag> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for Flags {
    /// `OK` when clean, otherwise `|`-joined names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("OK");
        }
        let names: Vec<&str> = self.0.iter().map(|x| x.as_str()).collect();
        f.write_str(&names.join("|"))
    }
}

impl From<Flag> for Flags {
    fn from(flag: Flag) -> Self {
        let mut f = Flags::new();
        f.raise(flag);
        f
    }
}
