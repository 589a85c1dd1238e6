use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::repr::{DualViewRepr, SparseVec};

/// How a per-document mass cutoff is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MassBasis {
    /// Drop the lightest `p` percent of entries by count.
    Count,
    /// Drop the lightest entries while their summed weight stays within `p`
    /// percent of the total L1 mass.
    WeightMass,
}

/// Post-hoc pruning applied jointly to both views of a representation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PruneSpec {
    #[default]
    None,
    TopK(usize),
    MassPercentile { p: f64, basis: MassBasis },
}

impl PruneSpec {
    pub fn validate(&self) -> Result<()> {
        if let PruneSpec::MassPercentile { p, .. } = self {
            if !(p.is_finite() && (0.0..=100.0).contains(p)) {
                return Err(Error::Config(format!("mass percentile {p} outside [0, 100]")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PruneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PruneSpec::None => write!(f, "none"),
            PruneSpec::TopK(k) => write!(f, "topk:{k}"),
            PruneSpec::MassPercentile { p, basis } => {
                let b = match basis {
                    MassBasis::Count => "count",
                    MassBasis::WeightMass => "weight",
                };
                write!(f, "mass:{p}:{b}")
            }
        }
    }
}

impl FromStr for PruneSpec {
    type Err = Error;

    /// Grammar: `none | topk:<k> | mass:<p>:<count|weight>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid prune spec {s:?}; expected none, topk:<k> or mass:<p>:<count|weight>"));
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts[..] {
            ["none"] => PruneSpec::None,
            ["topk", k] => PruneSpec::TopK(k.parse().map_err(|_| bad())?),
            ["mass", p, basis] => PruneSpec::MassPercentile {
                p: p.parse().map_err(|_| bad())?,
                basis: match basis {
                    "count" => MassBasis::Count,
                    "weight" => MassBasis::WeightMass,
                    _ => return Err(bad()),
                },
            },
            _ => return Err(bad()),
        };
        spec.validate().map_err(|_| bad())?;
        Ok(spec)
    }
}

/// Number of entries kept by count-based mass pruning: `ceil((100 - p)% * nnz)`.
pub fn count_kept(p: f64, nnz: usize) -> usize {
    ((100.0 - p) * nnz as f64 / 100.0).ceil() as usize
}

fn prune_weight_mass(all: &SparseVec, p: f64) -> SparseVec {
    let budget = p / 100.0 * all.l1();
    let mut lightest = all.ranked();
    lightest.reverse();
    let mut removed = 0.0;
    let mut cut = 0;
    for &(_, w) in &lightest {
        if removed + w > budget {
            break;
        }
        removed += w;
        cut += 1;
    }
    let mut kept = lightest[cut..].to_vec();
    kept.sort_by(|a, b| a.0.cmp(&b.0));
    SparseVec::from_sorted_unchecked(kept)
}

/// Applies `spec` across both views with a single weight ordering.
pub fn prune(repr: &DualViewRepr, spec: &PruneSpec) -> DualViewRepr {
    let all = repr.combined();
    let kept = match *spec {
        PruneSpec::None => return repr.clone(),
        PruneSpec::TopK(k) => all.top_k(k),
        PruneSpec::MassPercentile {
            p,
            basis: MassBasis::Count,
        } => all.top_k(count_kept(p, all.nnz())),
        PruneSpec::MassPercentile {
            p,
            basis: MassBasis::WeightMass,
        } => prune_weight_mass(&all, p),
    };
    DualViewRepr::from_combined(&kept)
}
