//! Rule-set engine: eight hand-written rules over the class tallies.
//!
//! Rules 1-4 detect the low-density extreme and route to zoom-out; rules 5-8
//! detect the high-density extreme and route to zoom-in. The zoom-out block
//! is always tested first. Fractional thresholds are compared by integer
//! cross-multiplication so the truth table is exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PatchClassCounts, RouteLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::R1,
        Rule::R2,
        Rule::R3,
        Rule::R4,
        Rule::R5,
        Rule::R6,
        Rule::R7,
        Rule::R8,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Route this rule selects when it fires.
    pub fn route(self) -> RouteLabel {
        if self.index() < 4 {
            RouteLabel::ZoomOut
        } else {
            RouteLabel::ZoomIn
        }
    }

    pub fn holds(self, pcc: &PatchClassCounts) -> bool {
        let PatchClassCounts {
            p_nc,
            p_lc,
            p_mc,
            p_hc,
        } = *pcc;
        let all = pcc.total();
        match self {
            Rule::R1 => p_hc + p_mc == 0,
            Rule::R2 => p_hc == 0 && p_lc > 0,
            // p_lc > 0.50 * all
            Rule::R3 => 2 * p_lc > all,
            // p_hc <= 0.05 * all
            Rule::R4 => p_nc > 0 && 100 * p_hc <= 5 * all,
            Rule::R5 => p_lc + p_mc == 0,
            Rule::R6 => p_lc + p_hc == 0,
            // p_hc > 0.50 * all
            Rule::R7 => 2 * p_hc > all,
            // both >= 0.33 * all
            Rule::R8 => p_nc > 0 && 100 * p_mc >= 33 * all && 100 * p_hc >= 33 * all,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.index() + 1)
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: usize = s
            .trim()
            .trim_start_matches(['R', 'r'])
            .parse()
            .map_err(|_| Error::UnknownLabel(s.to_string()))?;
        match n {
            1..=8 => Ok(Rule::ALL[n - 1]),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Which rules and zoom blocks are active. Used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMask {
    enabled: [bool; 8],
    pub zoom_in_enabled: bool,
    pub zoom_out_enabled: bool,
}

impl Default for RuleMask {
    fn default() -> Self {
        RuleMask::all()
    }
}

impl RuleMask {
    pub fn all() -> Self {
        RuleMask {
            enabled: [true; 8],
            zoom_in_enabled: true,
            zoom_out_enabled: true,
        }
    }

    pub fn without_rule(mut self, rule: Rule) -> Self {
        self.enabled[rule.index()] = false;
        self
    }

    pub fn without_block(mut self, route: RouteLabel) -> Self {
        match route {
            RouteLabel::ZoomIn => self.zoom_in_enabled = false,
            RouteLabel::ZoomOut => self.zoom_out_enabled = false,
            RouteLabel::Normal => {}
        }
        self
    }

    pub fn is_enabled(&self, rule: Rule) -> bool {
        self.enabled[rule.index()]
    }

    pub fn is_full(&self) -> bool {
        *self == RuleMask::all()
    }

    /// Short human-readable form, e.g. `all`, `-R4`, `-R1 -zin`.
    pub fn describe(&self) -> String {
        if self.is_full() {
            return "all".into();
        }
        let mut parts: Vec<String> = Rule::ALL
            .iter()
            .filter(|r| !self.is_enabled(**r))
            .map(|r| format!("-{r}"))
            .collect();
        if !self.zoom_in_enabled {
            parts.push("-zin".into());
        }
        if !self.zoom_out_enabled {
            parts.push("-zout".into());
        }
        parts.join(" ")
    }
}

/// Routes an image from its class tallies. Returns the route and the first
/// enabled rule that held; `None` for a normal route, including routes forced
/// to normal by a disabled block.
pub fn rse_decide(pcc: &PatchClassCounts, mask: &RuleMask) -> Result<(RouteLabel, Option<Rule>)> {
    if pcc.total() == 0 {
        return Err(Error::EmptyImage);
    }
    let first = Rule::ALL
        .iter()
        .copied()
        .find(|&r| mask.is_enabled(r) && r.holds(pcc));
    Ok(match first {
        Some(r) => {
            let block_on = match r.route() {
                RouteLabel::ZoomOut => mask.zoom_out_enabled,
                _ => mask.zoom_in_enabled,
            };
            if block_on {
                (r.route(), Some(r))
            } else {
                (RouteLabel::Normal, None)
            }
        }
        None => (RouteLabel::Normal, None),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decide(nc: u64, lc: u64, mc: u64, hc: u64) -> (RouteLabel, Option<Rule>) {
        rse_decide(&PatchClassCounts::new(nc, lc, mc, hc), &RuleMask::all()).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(decide(5, 3, 0, 0), (RouteLabel::ZoomOut, Some(Rule::R1)));
        assert_eq!(decide(0, 0, 0, 4), (RouteLabel::ZoomIn, Some(Rule::R5)));
        // R6 also holds but the zoom-out block wins
        assert!(Rule::R6.holds(&PatchClassCounts::new(1, 0, 4, 0)));
        assert_eq!(decide(1, 0, 4, 0), (RouteLabel::ZoomOut, Some(Rule::R4)));
        assert_eq!(decide(0, 2, 5, 3), (RouteLabel::Normal, None));
        assert_eq!(decide(2, 0, 4, 4), (RouteLabel::ZoomIn, Some(Rule::R8)));
    }

    #[test]
    fn empty_is_error() {
        assert!(rse_decide(&PatchClassCounts::default(), &RuleMask::all()).is_err());
    }

    #[test]
    fn exact_boundaries() {
        // R4 at exactly 5%: 1 HC out of 20
        assert!(Rule::R4.holds(&PatchClassCounts::new(1, 9, 9, 1)));
        assert!(!Rule::R4.holds(&PatchClassCounts::new(1, 9, 8, 2)));
        // R3 needs strictly more than half
        assert!(!Rule::R3.holds(&PatchClassCounts::new(0, 2, 2, 0)));
        assert!(Rule::R3.holds(&PatchClassCounts::new(0, 3, 2, 0)));
        // R8 at exactly 33%
        assert!(Rule::R8.holds(&PatchClassCounts::new(34, 0, 33, 33)));
        assert!(!Rule::R8.holds(&PatchClassCounts::new(35, 0, 33, 32)));
    }

    #[test]
    fn block_disable_forces_normal() {
        let pcc = PatchClassCounts::new(5, 3, 0, 0);
        let mask = RuleMask::all().without_block(RouteLabel::ZoomOut);
        assert_eq!(rse_decide(&pcc, &mask).unwrap(), (RouteLabel::Normal, None));
        let pcc = PatchClassCounts::new(0, 0, 0, 4);
        let mask = RuleMask::all().without_block(RouteLabel::ZoomIn);
        assert_eq!(rse_decide(&pcc, &mask).unwrap(), (RouteLabel::Normal, None));
    }

    #[test]
    fn disabled_rule_falls_through() {
        let pcc = PatchClassCounts::new(5, 3, 0, 0);
        let mask = RuleMask::all().without_rule(Rule::R1);
        // R2 still holds
        assert_eq!(
            rse_decide(&pcc, &mask).unwrap(),
            (RouteLabel::ZoomOut, Some(Rule::R2))
        );
    }

    #[test]
    fn sanity_corollaries() {
        assert_eq!(decide(0, 0, 0, 7).0, RouteLabel::ZoomIn);
        assert_eq!(decide(0, 6, 0, 0), (RouteLabel::ZoomOut, Some(Rule::R1)));
        assert!(Rule::R2.holds(&PatchClassCounts::new(0, 6, 0, 0)));
    }

    #[test]
    fn rule_tokens() {
        assert_eq!("R4".parse::<Rule>().unwrap(), Rule::R4);
        assert_eq!("r8".parse::<Rule>().unwrap(), Rule::R8);
        assert!("R9".parse::<Rule>().is_err());
        assert_eq!(Rule::R7.to_string(), "R7");
        let m = RuleMask::all()
            .without_rule(Rule::R2)
            .without_block(RouteLabel::ZoomIn);
        assert_eq!(m.describe(), "-R2 -zin");
    }

    #[test]
    fn scaling_never_changes_decision() {
        for nc in 0..6u64 {
            for lc in 0..6 {
                for mc in 0..6 {
                    for hc in 0..6 {
                        if nc + lc + mc + hc == 0 {
                            continue;
                        }
                        let base = decide(nc, lc, mc, hc);
                        for k in 2..5 {
                            assert_eq!(decide(k * nc, k * lc, k * mc, k * hc), base);
                        }
                    }
                }
            }
        }
    }
}
