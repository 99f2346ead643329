//! JSON file formats for families and instances.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csp::{Constraint, DomainSpec, Instance, Relation, RelationFamily};
use crate::error::{Error, Result};

pub const INSTANCE_SCHEMA: &str = "csp-refute/instance/v1";
pub const FAMILY_SCHEMA: &str = "csp-refute/family/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationFile {
    pub arity: usize,
    pub satisfying: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub scope: Vec<u32>,
    pub rel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFile {
    pub version: String,
    pub domain: DomainSpec,
    pub relations: Vec<RelationFile>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: String,
    pub domain: DomainSpec,
    pub relations: Vec<RelationFile>,
    pub weights: Vec<f64>,
    pub n: usize,
    pub constraints: Vec<ConstraintFile>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_expected: Option<f64>,
}

fn relation_to_file(r: &Relation) -> RelationFile {
    RelationFile {
        arity: r.arity,
        satisfying: r.satisfying(),
    }
}

fn relations_from_file(domain: &DomainSpec, rels: &[RelationFile]) -> Result<Vec<Relation>> {
    rels.iter()
        .map(|r| Relation::from_tuples(r.arity, domain.size, &r.satisfying))
        .collect()
}

pub fn family_to_file(f: &RelationFamily) -> FamilyFile {
    FamilyFile {
        version: FAMILY_SCHEMA.into(),
        domain: f.domain.clone(),
        relations: f.relations.iter().map(relation_to_file).collect(),
        weights: f.weights.clone(),
    }
}

pub fn family_from_file(f: &FamilyFile) -> Result<RelationFamily> {
    check_version(&f.version, FAMILY_SCHEMA)?;
    f.domain.validate()?;
    RelationFamily::new(
        f.domain.clone(),
        relations_from_file(&f.domain, &f.relations)?,
        f.weights.clone(),
    )
}

pub fn instance_to_file(inst: &Instance) -> InstanceFile {
    let fam = family_to_file(&inst.family);
    InstanceFile {
        version: INSTANCE_SCHEMA.into(),
        domain: fam.domain,
        relations: fam.relations,
        weights: fam.weights,
        n: inst.n,
        constraints: inst
            .constraints
            .iter()
            .map(|c| ConstraintFile {
                scope: c.scope.clone(),
                rel: c.relation,
            })
            .collect(),
        seed: inst.seed,
        m_expected: inst.m_expected,
    }
}

pub fn instance_from_file(f: &InstanceFile) -> Result<Instance> {
    check_version(&f.version, INSTANCE_SCHEMA)?;
    f.domain.validate()?;
    let family = RelationFamily::new(
        f.domain.clone(),
        relations_from_file(&f.domain, &f.relations)?,
        f.weights.clone(),
    )?;
    let inst = Instance {
        n: f.n,
        constraints: f
            .constraints
            .iter()
            .map(|c| Constraint {
                scope: c.scope.clone(),
                relation: c.rel,
            })
            .collect(),
        family,
        seed: f.seed,
        m_expected: f.m_expected,
    };
    inst.validate()?;
    Ok(inst)
}

fn check_version(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "unsupported schema `{found}`, expected `{expected}`"
        )));
    }
    Ok(())
}

pub fn instance_to_json(inst: &Instance) -> String {
    serde_json::to_string_pretty(&instance_to_file(inst)).expect("instance serializes")
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    instance_from_file(&serde_json::from_str(text)?)
}

pub fn family_to_json(f: &RelationFamily) -> String {
    serde_json::to_string_pretty(&family_to_file(f)).expect("family serializes")
}

pub fn family_from_json(text: &str) -> Result<RelationFamily> {
    family_from_file(&serde_json::from_str(text)?)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

/// Reads a family file; `builtin:NAME` selects a built-in family instead.
pub fn read_family(spec: &str) -> Result<RelationFamily> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return RelationFamily::builtin(name);
    }
    family_from_json(&std::fs::read_to_string(spec)?)
}

/// SHA-256 of the canonical compact serialization.
pub fn instance_digest(inst: &Instance) -> String {
    let text = serde_json::to_string(&instance_to_file(inst)).expect("instance serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
