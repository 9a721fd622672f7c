use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The closed set of extracted relations. Variant order is the lexicographic
/// order of the names, which is the tie-break order used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Causes,
    ConditionsThisMayPrevent,
    PreventionFactors,
    RiskFactors,
    SideEffects,
    Symptoms,
    Treatments,
    UsedToTreat,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::Causes,
        Relation::ConditionsThisMayPrevent,
        Relation::PreventionFactors,
        Relation::RiskFactors,
        Relation::SideEffects,
        Relation::Symptoms,
        Relation::Treatments,
        Relation::UsedToTreat,
    ];

    pub const DRUG: [Relation; 3] = [
        Relation::ConditionsThisMayPrevent,
        Relation::SideEffects,
        Relation::UsedToTreat,
    ];

    pub const DISEASE: [Relation; 5] = [
        Relation::Causes,
        Relation::PreventionFactors,
        Relation::RiskFactors,
        Relation::Symptoms,
        Relation::Treatments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Causes => "causes",
            Relation::ConditionsThisMayPrevent => "conditions_this_may_prevent",
            Relation::PreventionFactors => "prevention_factors",
            Relation::RiskFactors => "risk_factors",
            Relation::SideEffects => "side_effects",
            Relation::Symptoms => "symptoms",
            Relation::Treatments => "treatments",
            Relation::UsedToTreat => "used_to_treat",
        }
    }

    pub fn is_drug_relation(self) -> bool {
        Relation::DRUG.contains(&self)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownRelation(pub String);

impl fmt::Display for UnknownRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown relation `{}`", self.0)
    }
}

impl std::error::Error for UnknownRelation {}

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_sort_lexicographically() {
        for r in Relation::ALL {
            assert_eq!(r.as_str().parse::<Relation>().unwrap(), r);
        }
        let mut names: Vec<_> = Relation::ALL.iter().map(|r| r.as_str()).collect();
        let sorted = {
            let mut s = names.clone();
            s.sort();
            s
        };
        assert_eq!(names, sorted);
        names.dedup();
        assert_eq!(names.len(), 8);
        assert!("adverse_effect_of".parse::<Relation>().is_err());
    }
}
