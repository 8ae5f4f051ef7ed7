//! Model files: a lattice, named couplings and term templates built from
//! the single-site alphabet `I X Y Z S+ S-`.
//!
//! ```toml
//! name = "ising_damped_chain"
//! d_star = 1
//!
//! [lattice]
//! kind = "chain"
//! sites = 10
//!
//! [couplings]
//! J = 1.0
//! h = 0.5
//! gamma = 0.2
//!
//! [[terms]]
//! on = "bonds"
//! hamiltonian = [{ coupling = "J", ops = ["Z", "Z"] }]
//!
//! [[terms]]
//! on = "sites"
//! hamiltonian = [{ coupling = "h", ops = ["X"] }]
//! jumps = [{ rate = "gamma", ops = ["S-"] }]
//! ```
//!
//! `on` is `"sites"`, `"bonds"` (pairs at distance 1) or an explicit list of
//! site lists. Jumps are `√rate · ⊗ops`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::lindblad::{build_local_term, LocalTerm};
use crate::models::Model;
use crate::operator::{named, LocalOperator, Matrix};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    d_star: Spanned<f64>,
    normalization: Option<Spanned<String>>,
    lattice: Spanned<RawLattice>,
    #[serde(default)]
    couplings: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    terms: Vec<Spanned<RawTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    kind: String,
    sites: Option<usize>,
    sides: Option<Vec<usize>>,
    #[serde(default)]
    periodic: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    name: Option<String>,
    on: Spanned<RawPlacement>,
    #[serde(default)]
    hamiltonian: Vec<RawProduct>,
    #[serde(default)]
    jumps: Vec<RawJump>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawPlacement {
    Keyword(String),
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Coefficient {
    Value(f64),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProduct {
    coupling: Spanned<Coefficient>,
    ops: Spanned<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJump {
    rate: Spanned<Coefficient>,
    ops: Spanned<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatticeSpec {
    Chain { sites: usize },
    Grid { sides: Vec<usize>, periodic: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Divide all terms by the largest term bound (the default).
    MaxBound,
    /// Terms must already satisfy `b(X) ≤ 1`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Sites,
    Bonds,
    Explicit(Vec<Vec<usize>>),
}

/// `coefficient · ⊗ops`, ops listed in placement order.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub coefficient: f64,
    pub ops: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermTemplate {
    pub name: String,
    pub placement: Placement,
    pub hamiltonian: Vec<Product>,
    /// Coefficients are rates; the jump operator is `√rate · ⊗ops`.
    pub jumps: Vec<Product>,
    /// Line of the `on` key, used to anchor errors found while expanding.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub lattice: LatticeSpec,
    pub d_star: f64,
    pub normalization: Normalization,
    pub couplings: BTreeMap<String, f64>,
    pub terms: Vec<TermTemplate>,
    lattice_line: usize,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn invalid(field: impl Into<String>, line: usize, reason: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        line: Some(line),
        reason: reason.into(),
    }
}

pub(crate) fn parse_error(text: &str, e: toml::de::Error) -> Error {
    Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().trim().to_string(),
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut spec = parse_model(&text)?;
    if spec.name.is_empty() {
        spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(spec)
}

/// Parse and validate a model file; errors carry the offending line.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let raw: RawModel = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let line = |s: std::ops::Range<usize>| line_of(text, s.start);

    let d_star = *raw.d_star.get_ref();
    if !(d_star >= 1.0 && d_star.is_finite()) {
        return Err(invalid("d_star", line(raw.d_star.span()), format!("must be at least 1, got {d_star}")));
    }
    let normalization = match raw.normalization.as_ref().map(|s| s.get_ref().as_str()) {
        None | Some("max_bound") => Normalization::MaxBound,
        Some("none") => Normalization::None,
        Some(other) => {
            let l = line(raw.normalization.as_ref().unwrap().span());
            return Err(invalid("normalization", l, format!("unknown policy `{other}` (max_bound | none)")));
        }
    };

    let lattice_line = line(raw.lattice.span());
    let rl = raw.lattice.get_ref();
    let lattice = match rl.kind.as_str() {
        "chain" => match (rl.sites, &rl.sides) {
            (Some(n), None) if n > 0 => LatticeSpec::Chain { sites: n },
            _ => return Err(invalid("lattice.sites", lattice_line, "a chain needs `sites` ≥ 1 and no `sides`")),
        },
        "grid" => match (&rl.sides, rl.sites) {
            (Some(sides), None) if !sides.is_empty() && sides.iter().all(|&s| s > 0) => LatticeSpec::Grid {
                sides: sides.clone(),
                periodic: rl.periodic,
            },
            _ => return Err(invalid("lattice.sides", lattice_line, "a grid needs positive `sides` and no `sites`")),
        },
        other => return Err(invalid("lattice.kind", lattice_line, format!("unknown kind `{other}` (chain | grid)"))),
    };

    let mut couplings = BTreeMap::new();
    for (k, v) in &raw.couplings {
        if !v.get_ref().is_finite() {
            return Err(invalid(format!("couplings.{k}"), line(v.span()), "must be finite"));
        }
        couplings.insert(k.clone(), *v.get_ref());
    }
    let resolve = |c: &Spanned<Coefficient>, field: &str| -> Result<f64> {
        match c.get_ref() {
            Coefficient::Value(v) if v.is_finite() => Ok(*v),
            Coefficient::Value(_) => Err(invalid(field, line(c.span()), "must be finite")),
            Coefficient::Name(n) => couplings
                .get(n)
                .copied()
                .ok_or_else(|| invalid(field, line(c.span()), format!("unknown coupling `{n}`"))),
        }
    };

    let mut terms = Vec::with_capacity(raw.terms.len());
    for (i, t) in raw.terms.iter().enumerate() {
        let rt = t.get_ref();
        let on_line = line(rt.on.span());
        let placement = match rt.on.get_ref() {
            RawPlacement::Keyword(k) if k == "sites" => Placement::Sites,
            RawPlacement::Keyword(k) if k == "bonds" => Placement::Bonds,
            RawPlacement::Keyword(k) => {
                return Err(invalid(format!("terms[{i}].on"), on_line, format!("unknown placement `{k}` (sites | bonds | list)")))
            }
            RawPlacement::Explicit(list) => {
                if list.is_empty() || list.iter().any(|p| p.is_empty()) {
                    return Err(invalid(format!("terms[{i}].on"), on_line, "placements must be non-empty site lists"));
                }
                if list.iter().any(|p| p.len() != list[0].len()) {
                    return Err(invalid(format!("terms[{i}].on"), on_line, "all placements need the same number of sites"));
                }
                for p in list {
                    let mut s = p.clone();
                    s.sort_unstable();
                    s.dedup();
                    if s.len() != p.len() {
                        return Err(invalid(format!("terms[{i}].on"), on_line, format!("repeated site in {p:?}")));
                    }
                }
                Placement::Explicit(list.clone())
            }
        };
        let arity = match &placement {
            Placement::Sites => 1,
            Placement::Bonds => 2,
            Placement::Explicit(list) => list[0].len(),
        };
        let check_ops = |ops: &Spanned<Vec<String>>, field: String| -> Result<Vec<String>> {
            let l = line(ops.span());
            if ops.get_ref().len() != arity {
                return Err(invalid(field, l, format!("{} operators for placements of {arity} sites", ops.get_ref().len())));
            }
            if let Some(bad) = ops.get_ref().iter().find(|o| named(o).is_none()) {
                return Err(invalid(field, l, format!("unknown operator `{bad}` (I X Y Z S+ S-)")));
            }
            Ok(ops.get_ref().clone())
        };
        let hamiltonian = rt
            .hamiltonian
            .iter()
            .enumerate()
            .map(|(k, p)| {
                Ok(Product {
                    coefficient: resolve(&p.coupling, &format!("terms[{i}].hamiltonian[{k}].coupling"))?,
                    ops: check_ops(&p.ops, format!("terms[{i}].hamiltonian[{k}].ops"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let jumps = rt
            .jumps
            .iter()
            .enumerate()
            .map(|(k, j)| {
                let field = format!("terms[{i}].jumps[{k}].rate");
                let rate = resolve(&j.rate, &field)?;
                if rate < 0.0 {
                    return Err(invalid(field, line(j.rate.span()), format!("negative rate {rate}")));
                }
                Ok(Product {
                    coefficient: rate,
                    ops: check_ops(&j.ops, format!("terms[{i}].jumps[{k}].ops"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        terms.push(TermTemplate {
            name: rt.name.clone().unwrap_or_else(|| format!("term{i}")),
            placement,
            hamiltonian,
            jumps,
            line: on_line,
        });
    }

    let spec = ModelSpec {
        name: raw.name.unwrap_or_default(),
        lattice,
        d_star,
        normalization,
        couplings,
        terms,
        lattice_line,
    };
    // site ranges, supports and normalization are checked by building once
    spec.instantiate()?;
    Ok(spec)
}

fn product_matrix(ops: &[String], coefficient: f64) -> Vec<Matrix> {
    let mut factors: Vec<Matrix> = ops.iter().map(|o| named(o).expect("validated name")).collect();
    factors[0].mapv_inplace(|z| z * coefficient);
    factors
}

impl ModelSpec {
    pub fn n_sites(&self) -> usize {
        match &self.lattice {
            LatticeSpec::Chain { sites } => *sites,
            LatticeSpec::Grid { sides, .. } => sides.iter().product(),
        }
    }

    /// Same model on a chain of `n` sites.
    pub fn with_chain_length(&self, n: usize) -> Result<ModelSpec> {
        match self.lattice {
            LatticeSpec::Chain { .. } if n > 0 => {
                let mut out = self.clone();
                out.lattice = LatticeSpec::Chain { sites: n };
                out.instantiate()?;
                Ok(out)
            }
            LatticeSpec::Chain { .. } => Err(invalid("sites", self.lattice_line, "need at least one site")),
            LatticeSpec::Grid { .. } => Err(invalid("sites", self.lattice_line, "only chains can be resized")),
        }
    }

    pub fn build_lattice(&self) -> Result<Lattice> {
        match &self.lattice {
            LatticeSpec::Chain { sites } => Lattice::chain(*sites, 2),
            LatticeSpec::Grid { sides, periodic } => Lattice::grid(sides, *periodic, 2),
        }
    }

    fn placements(&self, lattice: &Lattice, t: &TermTemplate, index: usize) -> Result<Vec<Vec<usize>>> {
        let n = lattice.len();
        Ok(match &t.placement {
            Placement::Sites => (0..n).map(|x| vec![x]).collect(),
            Placement::Bonds => {
                let mut out = Vec::new();
                for x in 0..n {
                    for y in x + 1..n {
                        if lattice.distance(x, y) == 1.0 {
                            out.push(vec![x, y]);
                        }
                    }
                }
                out
            }
            Placement::Explicit(list) => {
                if let Some(&bad) = list.iter().flatten().find(|&&x| x >= n) {
                    return Err(invalid(
                        format!("terms[{index}].on"),
                        t.line,
                        format!("site {bad} is not on the {n}-site lattice"),
                    ));
                }
                list.clone()
            }
        })
    }

    /// Expand every template over its placements, in file order.
    pub fn instantiate(&self) -> Result<Model> {
        let lattice = self.build_lattice()?;
        let mut terms: Vec<LocalTerm> = Vec::new();
        for (i, t) in self.terms.iter().enumerate() {
            for sites in self.placements(&lattice, t, i)? {
                let region = Region::new(sites.iter().copied());
                // factors listed in placement order; the region is sorted
                let order: Vec<usize> = region.sites().iter().map(|x| sites.iter().position(|y| y == x).unwrap()).collect();
                let on = |p: &Product, c: f64| -> Result<LocalOperator> {
                    let f = product_matrix(&p.ops, c);
                    LocalOperator::product(region.clone(), &order.iter().map(|&k| f[k].clone()).collect::<Vec<_>>())
                };
                let dim = 1usize << region.len();
                let mut h = LocalOperator::new(region.clone(), vec![2; region.len()], Matrix::zeros((dim, dim)))?;
                for p in &t.hamiltonian {
                    h = h.add(&on(p, p.coefficient)?)?;
                }
                let jumps = t
                    .jumps
                    .iter()
                    .filter(|j| j.coefficient > 0.0)
                    .map(|j| on(j, j.coefficient.sqrt()))
                    .collect::<Result<Vec<_>>>()?;
                let term = build_local_term(&lattice, &region, Some(&h), &jumps, self.d_star).map_err(|e| match e {
                    Error::OversizedSupport { diameter, d_star } => invalid(
                        format!("terms[{i}].on"),
                        t.line,
                        format!("support {sites:?} has diameter {diameter} > d_star = {d_star}"),
                    ),
                    Error::NonHermitianH { deviation } => invalid(
                        format!("terms[{i}].hamiltonian"),
                        t.line,
                        format!("not Hermitian (deviation {deviation:e}); use real couplings on Hermitian products"),
                    ),
                    other => other,
                })?;
                if self.normalization == Normalization::None && term.norm_bound() > 1.0 + 1e-12 {
                    return Err(invalid(
                        format!("terms[{i}]"),
                        t.line,
                        format!("norm bound {} > 1 with normalization = \"none\"", term.norm_bound()),
                    ));
                }
                terms.push(term);
            }
        }
        Ok(Model {
            name: self.name.clone(),
            lattice,
            terms,
            d_star: self.d_star,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::Picture;
    use crate::models;
    use crate::operator::max_abs_diff;

    const ISING: &str = r#"
name = "ising_damped_chain"
d_star = 1

[lattice]
kind = "chain"
sites = 10

[couplings]
J = 1.0
h = 0.5
gamma = 0.2

[[terms]]
name = "bond"
on = "bonds"
hamiltonian = [{ coupling = "J", ops = ["Z", "Z"] }]

[[terms]]
name = "site"
on = "sites"
hamiltonian = [{ coupling = "h", ops = ["X"] }]
jumps = [{ rate = "gamma", ops = ["S-"] }]
"#;

    #[test]
    fn ising_file_matches_builtin_model() {
        let spec = parse_model(ISING).unwrap();
        let m = spec.instantiate().unwrap();
        assert_eq!(m.terms.len(), 19);
        let reference = models::ising_damped_chain(10, 1.0, 0.5, 0.2).unwrap();
        for (a, b) in m.terms.iter().zip(&reference.terms) {
            assert_eq!(a.support(), b.support());
            assert!(max_abs_diff(a.hamiltonian(), b.hamiltonian()) < 1e-15);
            assert_eq!(a.jumps().len(), b.jumps().len());
            for (x, y) in a.jumps().iter().zip(b.jumps()) {
                assert!(max_abs_diff(x, y) < 1e-15);
            }
        }
        let g = m.generator(Picture::Heisenberg).unwrap();
        assert!(g.unitality_residual() < 1e-10);
    }

    #[test]
    fn resized_chain_keeps_templates() {
        let spec = parse_model(ISING).unwrap().with_chain_length(4).unwrap();
        assert_eq!(spec.instantiate().unwrap().terms.len(), 7);
    }

    fn expect_validation(text: &str, field: &str, line: usize) {
        match parse_model(text) {
            Err(Error::Validation { field: f, line: Some(l), .. }) => {
                assert!(f.starts_with(field), "field {f}");
                assert_eq!(l, line);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn site_outside_lattice_is_rejected() {
        let text = ISING.to_string() + "\n[[terms]]\non = [[98, 99]]\nhamiltonian = [{ coupling = 1.0, ops = [\"X\", \"X\"] }]\n";
        let line = text.lines().position(|l| l.starts_with("on = [[98")).unwrap() + 1;
        expect_validation(&text, "terms[2].on", line);
    }

    #[test]
    fn zero_interaction_range_is_rejected() {
        expect_validation(&ISING.replace("d_star = 1", "d_star = 0"), "d_star", 3);
    }

    #[test]
    fn unknown_names_are_rejected() {
        expect_validation(&ISING.replace("\"S-\"", "\"Q\""), "terms[1].jumps[0].ops", 23);
        expect_validation(&ISING.replace("coupling = \"h\"", "coupling = \"hx\""), "terms[1].hamiltonian[0].coupling", 22);
        expect_validation(&ISING.replace("[\"Z\", \"Z\"]", "[\"Z\"]"), "terms[0].hamiltonian[0].ops", 17);
    }

    #[test]
    fn oversized_support_is_rejected() {
        let text = ISING.to_string() + "\n[[terms]]\non = [[0, 2]]\nhamiltonian = [{ coupling = 1.0, ops = [\"X\", \"X\"] }]\n";
        assert!(matches!(parse_model(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        match parse_model("d_star = 1\n[lattice\nkind = \"chain\"\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_model("d_star = 1\nbogus = 3\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unnormalized_terms_need_the_default_policy() {
        let loud = ISING.replace("J = 1.0", "J = 3.0");
        assert!(parse_model(&loud).is_ok());
        let strict = loud.replace("d_star = 1\n", "d_star = 1\nnormalization = \"none\"\n");
        assert!(matches!(parse_model(&strict), Err(Error::Validation { .. })));
    }

    #[test]
    fn grid_bonds_are_nearest_neighbours() {
        let text = ISING.replace("kind = \"chain\"\nsites = 10", "kind = \"grid\"\nsides = [2, 3]");
        let m = parse_model(&text).unwrap().instantiate().unwrap();
        // 7 bonds on a 2×3 open grid plus 6 sites
        assert_eq!(m.terms.len(), 13);
    }

    #[test]
    fn explicit_placements_follow_listed_order() {
        let text = "d_star = 1\n[lattice]\nkind = \"chain\"\nsites = 2\n[[terms]]\non = [[1, 0]]\njumps = [{ rate = 1.0, ops = [\"S-\", \"I\"] }]\n";
        let m = parse_model(text).unwrap().instantiate().unwrap();
        let reference = crate::operator::kron(&named("I").unwrap(), &named("S-").unwrap());
        assert!(max_abs_diff(&m.terms[0].jumps()[0], &reference) < 1e-15);
    }
}
