use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Closed set of privacy categories. Declaration order is the tie-break order
/// used during overlap resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PrivacyCategory {
    Person,
    Email,
    Phone,
    Address,
    NationalId,
    Account,
    DateOfBirth,
    FinancialRef,
    Medical,
    OrgTerm,
    ContextSensitive,
    VisualText,
}

/// Coarse grouping used by the routing score tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CategoryClass {
    Structured,
    Named,
    Locational,
    Contextual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RiskTier {
    Low,
    Med,
    High,
}

impl PrivacyCategory {
    pub const ALL: [PrivacyCategory; 12] = [
        PrivacyCategory::Person,
        PrivacyCategory::Email,
        PrivacyCategory::Phone,
        PrivacyCategory::Address,
        PrivacyCategory::NationalId,
        PrivacyCategory::Account,
        PrivacyCategory::DateOfBirth,
        PrivacyCategory::FinancialRef,
        PrivacyCategory::Medical,
        PrivacyCategory::OrgTerm,
        PrivacyCategory::ContextSensitive,
        PrivacyCategory::VisualText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyCategory::Person => "PERSON",
            PrivacyCategory::Email => "EMAIL",
            PrivacyCategory::Phone => "PHONE",
            PrivacyCategory::Address => "ADDRESS",
            PrivacyCategory::NationalId => "NATIONAL_ID",
            PrivacyCategory::Account => "ACCOUNT",
            PrivacyCategory::DateOfBirth => "DATE_OF_BIRTH",
            PrivacyCategory::FinancialRef => "FINANCIAL_REF",
            PrivacyCategory::Medical => "MEDICAL",
            PrivacyCategory::OrgTerm => "ORG_TERM",
            PrivacyCategory::ContextSensitive => "CONTEXT_SENSITIVE",
            PrivacyCategory::VisualText => "VISUAL_TEXT",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn class(self) -> CategoryClass {
        match self {
            PrivacyCategory::Person | PrivacyCategory::OrgTerm => CategoryClass::Named,
            PrivacyCategory::Address => CategoryClass::Locational,
            PrivacyCategory::Medical | PrivacyCategory::ContextSensitive => CategoryClass::Contextual,
            _ => CategoryClass::Structured,
        }
    }

    /// Default risk tier. Profiles may override it.
    pub fn default_tier(self) -> RiskTier {
        match self {
            PrivacyCategory::NationalId | PrivacyCategory::Account => RiskTier::High,
            PrivacyCategory::OrgTerm | PrivacyCategory::ContextSensitive => RiskTier::Low,
            _ => RiskTier::Med,
        }
    }
}

impl CategoryClass {
    pub const ALL: [CategoryClass; 4] = [
        CategoryClass::Structured,
        CategoryClass::Named,
        CategoryClass::Locational,
        CategoryClass::Contextual,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl RiskTier {
    pub const ALL: [RiskTier; 3] = [RiskTier::Low, RiskTier::Med, RiskTier::High];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PrivacyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrivacyCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        PrivacyCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == upper)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_names() {
        for c in PrivacyCategory::ALL {
            assert_eq!(c.as_str().parse::<PrivacyCategory>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert!("SSN".parse::<PrivacyCategory>().is_err());
    }

    #[test]
    fn enum_order_matches_index() {
        for (i, c) in PrivacyCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }
}
