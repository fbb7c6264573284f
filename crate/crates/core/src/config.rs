//! Per-language hyperparameter presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::TwoPassParams;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
    La,
    Sv,
}

impl Language {
    pub const ALL: [Language; 4] = [Language::En, Language::De, Language::La, Language::Sv];

    pub fn tag(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::De => "de",
            Language::La => "la",
            Language::Sv => "sv",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "de" => Ok(Language::De),
            "la" => Ok(Language::La),
            "sv" => Ok(Language::Sv),
            other => Err(Error::InvalidParameter(format!("unknown language `{other}`"))),
        }
    }
}

/// Thresholds and sizes used by both clustering passes and the neighbor search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub t0_sc: f64,
    pub t1_sc: f64,
    pub k: usize,
    pub t0_low: usize,
    pub t1_low: usize,
}

impl Preset {
    pub fn two_pass(&self) -> TwoPassParams {
        TwoPassParams::new(self.t0_sc, self.t1_sc, self.t0_low, self.t1_low)
    }
}

/// Binary change-detection configuration.
pub fn binary_preset(lang: Language) -> Preset {
    let (t0_sc, t1_sc) = thresholds(lang);
    Preset {
        t0_sc,
        t1_sc,
        k: 14,
        t0_low: 5,
        t1_low: 0,
    }
}

/// Ranking configuration: same thresholds, outlier pruning disabled.
pub fn ranking_preset(lang: Language) -> Preset {
    Preset {
        t0_low: 0,
        ..binary_preset(lang)
    }
}

fn thresholds(lang: Language) -> (f64, f64) {
    match lang {
        Language::En => (0.34, 0.40),
        Language::De => (0.22, 0.38),
        Language::La => (0.16, 0.16),
        Language::Sv => (0.28, 0.32),
    }
}

/// Cross-lingual consistency threshold shared by all language pairs.
pub const DEFAULT_T_CS: f64 = 0.40;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_table() {
        let en = binary_preset(Language::En);
        assert_eq!((en.t0_sc, en.t1_sc, en.k, en.t0_low, en.t1_low), (0.34, 0.40, 14, 5, 0));
        let de = binary_preset(Language::De);
        assert_eq!((de.t0_sc, de.t1_sc), (0.22, 0.38));
        let la = binary_preset(Language::La);
        assert_eq!((la.t0_sc, la.t1_sc), (0.16, 0.16));
        let sv = binary_preset(Language::Sv);
        assert_eq!((sv.t0_sc, sv.t1_sc), (0.28, 0.32));
        for lang in Language::ALL {
            let r = ranking_preset(lang);
            assert_eq!((r.t0_low, r.t1_low), (0, 0));
            assert_eq!(r.t1_sc, binary_preset(lang).t1_sc);
        }
    }

    #[test]
    fn language_parsing() {
        assert_eq!("EN".parse::<Language>().unwrap(), Language::En);
        assert!("fr".parse::<Language>().is_err());
    }
}
