use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, DEFAULT_MAX_ROUNDS};
use crate::instance::InstancePool;
use crate::model::{Assignment, ProblemInstance};
use crate::saround;

/// Every assignment algorithm, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[serde(alias = "sa-round")]
    SaRound,
    Greedy,
    Iterative,
    Game,
    #[serde(alias = "id-assign")]
    IdAssign,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::SaRound,
        Algorithm::Greedy,
        Algorithm::Iterative,
        Algorithm::Game,
        Algorithm::IdAssign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SaRound => "saround",
            Algorithm::Greedy => "greedy",
            Algorithm::Iterative => "iterative",
            Algorithm::Game => "game",
            Algorithm::IdAssign => "idassign",
        }
    }

    /// Runs with default round/iteration caps.
    pub fn run(self, pool: &InstancePool, instance: &ProblemInstance) -> Assignment {
        match self {
            Algorithm::SaRound => saround::saround(pool, instance),
            Algorithm::Greedy => baselines::greedy(pool, instance),
            Algorithm::Iterative => baselines::iterative(pool, instance, DEFAULT_MAX_ROUNDS),
            Algorithm::Game => baselines::game(
                pool,
                instance,
                baselines::default_max_iters(pool.tasks().count()),
            ),
            Algorithm::IdAssign => baselines::id_assign(pool, instance),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown algorithm `{0}` (expected saround, greedy, iterative, game or idassign)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("SA-Round".parse::<Algorithm>().unwrap(), Algorithm::SaRound);
        assert_eq!(
            "id_assign".parse::<Algorithm>().unwrap(),
            Algorithm::IdAssign
        );
        assert!("simplex".parse::<Algorithm>().is_err());
    }

    #[test]
    fn serde_names() {
        let s = serde_json::to_string(&Algorithm::IdAssign).unwrap();
        assert_eq!(s, "\"idassign\"");
        let a: Algorithm = serde_json::from_str("\"sa-round\"").unwrap();
        assert_eq!(a, Algorithm::SaRound);
    }
}
