//! Run files: which experiment, its grids, observables and tolerances.
//!
//! ```toml
//! experiment = "lightcone"
//! seed = 7
//!
//! [times]
//! start = 1.0
//! stop = 3.0
//! count = 9
//!
//! [observables]
//! a = { ops = ["Z"], sites = [0] }
//! b = { ops = ["Z"], sites = [2] }
//! placements = [[2], [3], [4]]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::model_spec::parse_error;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::operator::{named, LocalOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Validate,
    Lightcone,
    Spectrum,
    Clustering,
    Mvalue,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Lightcone => "lightcone",
            Experiment::Spectrum => "spectrum",
            Experiment::Clustering => "clustering",
            Experiment::Mvalue => "mvalue",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "validate" => Experiment::Validate,
            "lightcone" => Experiment::Lightcone,
            "spectrum" => Experiment::Spectrum,
            "clustering" => Experiment::Clustering,
            "mvalue" => Experiment::Mvalue,
            _ => {
                return Err(Error::Validation {
                    field: "experiment".into(),
                    line: None,
                    reason: format!("unknown experiment `{s}`"),
                })
            }
        })
    }
}

/// A product of named single-site operators on `sites`, in listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub ops: Vec<String>,
    pub sites: Vec<usize>,
}

impl ObservableSpec {
    pub fn build(&self, lattice: &Lattice) -> Result<LocalOperator> {
        let bad = |reason: String| Error::Validation {
            field: "observables".into(),
            line: None,
            reason,
        };
        if self.ops.is_empty() || self.ops.len() != self.sites.len() {
            return Err(bad(format!("{} operators on {} sites", self.ops.len(), self.sites.len())));
        }
        let region = lattice.region(self.sites.iter().copied())?;
        if region.len() != self.sites.len() {
            return Err(bad(format!("repeated site in {:?}", self.sites)));
        }
        let mut factors = Vec::with_capacity(self.ops.len());
        for &x in region.sites() {
            let k = self.sites.iter().position(|&y| y == x).unwrap();
            factors.push(named(&self.ops[k]).ok_or_else(|| bad(format!("unknown operator `{}`", self.ops[k])))?);
        }
        LocalOperator::product(region, &factors)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimes {
    values: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservables {
    a: Option<ObservableSpec>,
    b: Option<ObservableSpec>,
    #[serde(default)]
    placements: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightconeSection {
    /// Fit the light-cone form to the table.
    pub fit: bool,
}

impl Default for LightconeSection {
    fn default() -> Self {
        Self { fit: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Also check the convergence bound on the `[times]` grid.
    pub convergence: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    /// Chain length for the light-cone fit supplying `v` and `ξ`.
    pub fit_sites: Option<usize>,
    /// Chain length for the gap `Δ`.
    pub gap_sites: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvalueSection {
    /// Regions `X`; defaults to every single site.
    pub regions: Vec<Vec<usize>>,
    pub samples: usize,
    pub slack: f64,
}

impl Default for MvalueSection {
    fn default() -> Self {
        Self {
            regions: Vec::new(),
            samples: 20,
            slack: crate::experiments::mvalue::DEFAULT_RECURSION_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Chain length for the state-evolution and contraction checks.
    pub sites: Option<usize>,
    pub samples: usize,
    pub times: Vec<f64>,
    pub contraction_samples: usize,
    pub contraction_times: Vec<f64>,
    pub krylov_samples: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            sites: None,
            samples: 50,
            times: vec![0.1, 1.0, 5.0],
            contraction_samples: 20,
            contraction_times: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            krylov_samples: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub unitality: f64,
    pub trace: f64,
    pub hermiticity: f64,
    pub positivity: f64,
    pub krylov: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitality: 1e-10,
            trace: 1e-10,
            hermiticity: 1e-10,
            positivity: 1e-8,
            krylov: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Prepended to every result file name.
    pub prefix: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<String>>,
    #[serde(default)]
    seed: Option<Spanned<i64>>,
    sites: Option<Spanned<usize>>,
    times: Option<Spanned<RawTimes>>,
    #[serde(default)]
    observables: RawObservables,
    #[serde(default)]
    lightcone: LightconeSection,
    #[serde(default)]
    spectrum: SpectrumSection,
    #[serde(default)]
    clustering: ClusteringSection,
    #[serde(default)]
    mvalue: MvalueSection,
    #[serde(default)]
    validate: ValidateSection,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    /// Chain length override for the model.
    pub sites: Option<usize>,
    pub times: Vec<f64>,
    pub a: Option<ObservableSpec>,
    pub b: Option<ObservableSpec>,
    pub placements: Vec<Vec<usize>>,
    pub lightcone: LightconeSection,
    pub spectrum: SpectrumSection,
    pub clustering: ClusteringSection,
    pub mvalue: MvalueSection,
    pub validate: ValidateSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("empty config is valid")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Non-empty, non-negative and strictly increasing.
pub(crate) fn check_increasing(values: &[f64], field: &str, line: Option<usize>) -> Result<()> {
    let bad = |reason: &str| Error::Validation {
        field: field.into(),
        line,
        reason: reason.into(),
    };
    if values.is_empty() {
        return Err(bad("grid is empty"));
    }
    if values.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(bad("grid values must be finite and non-negative"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("grid must be strictly increasing"));
    }
    Ok(())
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let line = |s: std::ops::Range<usize>| Some(line_of(text, s.start));

    let experiment = match &raw.experiment {
        Some(e) => Some(e.get_ref().parse::<Experiment>().map_err(|_| Error::Validation {
            field: "experiment".into(),
            line: line(e.span()),
            reason: format!("unknown experiment `{}`", e.get_ref()),
        })?),
        None => None,
    };
    let seed = match &raw.seed {
        Some(s) if *s.get_ref() < 0 => {
            return Err(Error::Validation {
                field: "seed".into(),
                line: line(s.span()),
                reason: "seed must be non-negative".into(),
            })
        }
        Some(s) => *s.get_ref() as u64,
        None => 0,
    };
    if let Some(s) = &raw.sites {
        if *s.get_ref() == 0 {
            return Err(Error::Validation {
                field: "sites".into(),
                line: line(s.span()),
                reason: "need at least one site".into(),
            });
        }
    }
    let times = match &raw.times {
        None => Vec::new(),
        Some(spanned) => {
            let l = line(spanned.span());
            let t = spanned.get_ref();
            let grid = match (&t.values, t.start, t.stop, t.count) {
                (Some(v), None, None, None) => v.clone(),
                (None, Some(a), Some(b), Some(n)) if n >= 2 => {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
                (None, Some(a), _, Some(1)) => vec![a],
                _ => {
                    return Err(Error::Validation {
                        field: "times".into(),
                        line: l,
                        reason: "give either `values` or `start`, `stop` and `count`".into(),
                    })
                }
            };
            check_increasing(&grid, "times", l)?;
            grid
        }
    };
    let v = &raw.validate;
    check_increasing(&v.times, "validate.times", None)?;
    check_increasing(&v.contraction_times, "validate.contraction_times", None)?;
    if raw.mvalue.samples == 0 {
        return Err(Error::Validation {
            field: "mvalue.samples".into(),
            line: None,
            reason: "need at least one sample".into(),
        });
    }
    Ok(RunConfig {
        experiment,
        seed,
        sites: raw.sites.map(|s| *s.get_ref()),
        times,
        a: raw.observables.a,
        b: raw.observables.b,
        placements: raw.observables.placements,
        lightcone: raw.lightcone,
        spectrum: raw.spectrum,
        clustering: raw.clustering,
        mvalue: raw.mvalue,
        validate: raw.validate,
        tolerances: raw.tolerances,
        output: raw.output,
    })
}

impl RunConfig {
    pub fn require_times(&self) -> Result<&[f64]> {
        if self.times.is_empty() {
            return Err(Error::Validation {
                field: "times".into(),
                line: None,
                reason: "this experiment needs a [times] grid".into(),
            });
        }
        Ok(&self.times)
    }

    pub fn observable(&self, which: &str, lattice: &Lattice) -> Result<LocalOperator> {
        let spec = match which {
            "a" => &self.a,
            _ => &self.b,
        };
        spec.as_ref()
            .ok_or_else(|| Error::Validation {
                field: format!("observables.{which}"),
                line: None,
                reason: "missing observable".into(),
            })?
            .build(lattice)
    }

    /// Placements for `O_B`; defaults to the template's own sites.
    pub fn placement_regions(&self, lattice: &Lattice) -> Result<Vec<Region>> {
        let b = self.b.as_ref().ok_or_else(|| Error::Validation {
            field: "observables.b".into(),
            line: None,
            reason: "missing observable".into(),
        })?;
        let list = if self.placements.is_empty() {
            vec![b.sites.clone()]
        } else {
            self.placements.clone()
        };
        list.into_iter().map(|p| lattice.region(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.seed, 0);
        assert!(c.times.is_empty());
        assert!(c.lightcone.fit);
        assert_eq!(c.validate.samples, 50);
    }

    #[test]
    fn linspace_grid() {
        let c = parse_config("[times]\nstart = 1.0\nstop = 3.0\ncount = 9\n").unwrap();
        assert_eq!(c.times.len(), 9);
        assert_eq!(c.times[0], 1.0);
        assert_eq!(c.times[8], 3.0);
        assert_eq!(c.times[1], 1.25);
    }

    #[test]
    fn grids_must_increase() {
        match parse_config("seed = 3\n[times]\nvalues = [1.0, 0.5]\n") {
            Err(Error::Validation { field, line, .. }) => {
                assert_eq!(field, "times");
                assert_eq!(line, Some(2));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_config("[times]\nvalues = []\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(matches!(parse_config("seed = -1\n"), Err(Error::Validation { .. })));
        assert!(matches!(parse_config("experiment = \"dance\"\n"), Err(Error::Validation { line: Some(1), .. })));
        assert!(matches!(parse_config("colour = 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_config("[mvalue]\nsamples = 0\n"), Err(Error::Validation { .. })));
    }

    #[test]
    fn observables_build_on_the_lattice() {
        let c = parse_config("[observables]\na = { ops = [\"X\", \"Z\"], sites = [2, 0] }\nb = { ops = [\"Z\"], sites = [1] }\n").unwrap();
        let lat = Lattice::chain(3, 2).unwrap();
        let a = c.observable("a", &lat).unwrap();
        assert_eq!(a.support().sites(), &[0, 2]);
        let expected = crate::operator::kron(&named("Z").unwrap(), &named("X").unwrap());
        assert_eq!(a.matrix(), &expected);
        assert_eq!(c.placement_regions(&lat).unwrap(), vec![Region::single(1)]);
        assert!(c.observable("a", &Lattice::chain(2, 2).unwrap()).is_err());
    }
}
