//! Experimental data and pathway definitions.
//!
//! The canonical data format is a long CSV with one row per observation cell:
//!
//! ```text
//! subject,time,group,kind,variable,value
//! rat01,1,controls,metabolite,citrate,0.731
//! rat01,1,controls,covariate,lactobacillus,2.1
//! ```
//!
//! Pathways are read from JSON of the form
//! `{ "pathways": [ { "id": "...", "metabolites": [...], "edges": [[a, b], ...] } ] }`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Experimental group of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Cases,
    Controls,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Cases, Group::Controls];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Cases => "cases",
            Group::Controls => "controls",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Group::Cases => 0,
            Group::Controls => 1,
        }
    }

    fn parse(label: &str) -> Option<Group> {
        match label.trim().to_ascii_lowercase().as_str() {
            "cases" | "case" => Some(Group::Cases),
            "controls" | "control" => Some(Group::Controls),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense metabolite and covariate tensors for `N` subjects observed at `T` time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Metabolite intensities, shape (N, T, M).
    pub x: Array3<f64>,
    /// Covariates (other omic variables), shape (N, T, K). K may be zero.
    pub y: Array3<f64>,
    pub groups: Vec<Group>,
    pub subjects: Vec<String>,
    pub metabolites: Vec<String>,
    pub covariates: Vec<String>,
}

impl Dataset {
    pub fn n_subjects(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn n_times(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn n_metabolites(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn n_covariates(&self) -> usize {
        self.y.shape()[2]
    }

    pub fn metabolite_index(&self, name: &str) -> Option<usize> {
        self.metabolites.iter().position(|m| m == name)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c == name)
    }

    pub fn group_count(&self, group: Group) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// Checks shape consistency and the two-group requirement.
    pub fn validate(&self, two_group: bool) -> Result<()> {
        let (n, t, m) = self.x.dim();
        let (ny, ty, k) = self.y.dim();
        if n == 0 || t == 0 || m == 0 {
            return Err(Error::Schema(format!(
                "dataset must have N, T, M >= 1 (got {n}, {t}, {m})"
            )));
        }
        if ny != n || ty != t {
            return Err(Error::Schema(format!(
                "covariate tensor shape ({ny}, {ty}, {k}) does not match metabolite tensor ({n}, {t}, {m})"
            )));
        }
        if self.groups.len() != n || self.subjects.len() != n {
            return Err(Error::Schema("subject labels do not match N".into()));
        }
        if self.metabolites.len() != m || self.covariates.len() != k {
            return Err(Error::Schema(
                "variable names do not match tensor shape".into(),
            ));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Schema("dataset contains non-finite values".into()));
        }
        if two_group {
            for g in Group::ALL {
                if self.group_count(g) == 0 {
                    return Err(Error::Schema(format!(
                        "two-group mode requires at least one subject labelled `{g}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Column names of the long-format data table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub subject: String,
    pub time: String,
    pub group: String,
    pub kind: String,
    pub variable: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            subject: "subject".into(),
            time: "time".into(),
            group: "group".into(),
            kind: "kind".into(),
            variable: "variable".into(),
            value: "value".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Metabolite,
    Covariate,
}

struct ColumnIndex {
    subject: usize,
    time: usize,
    group: usize,
    kind: usize,
    variable: usize,
    value: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        Ok(Self {
            subject: find(&schema.subject)?,
            time: find(&schema.time)?,
            group: find(&schema.group)?,
            kind: find(&schema.kind)?,
            variable: find(&schema.variable)?,
            value: find(&schema.value)?,
        })
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

/// Reads a long-format table into a dense [`Dataset`].
///
/// Subjects, metabolites and covariates are ordered by first appearance in the file.
pub fn read_dataset<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = ColumnIndex::resolve(&headers, schema)?;

    let mut subjects: Vec<String> = Vec::new();
    let mut subject_ix: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut metabolites: Vec<String> = Vec::new();
    let mut covariates: Vec<String> = Vec::new();
    let mut var_ix: HashMap<(Kind, String), usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize, Kind, usize), f64> = HashMap::new();
    let mut max_time = 0usize;

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = row + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_err = |column: usize, message: String| Error::Parse {
            line,
            column: column + 1,
            message,
        };

        let subject = field(cols.subject).to_string();
        let time: usize = field(cols.time)
            .parse()
            .map_err(|_| parse_err(cols.time, format!("invalid time `{}`", field(cols.time))))?;
        if time == 0 {
            return Err(parse_err(
                cols.time,
                "time points are numbered from 1".into(),
            ));
        }
        let group = Group::parse(field(cols.group)).ok_or_else(|| {
            Error::Schema(format!(
                "unknown group label `{}` at line {line} (expected `cases` or `controls`)",
                field(cols.group)
            ))
        })?;
        let kind = match field(cols.kind).to_ascii_lowercase().as_str() {
            "metabolite" => Kind::Metabolite,
            "covariate" => Kind::Covariate,
            other => {
                return Err(Error::Schema(format!(
                    "unknown kind `{other}` at line {line} (expected `metabolite` or `covariate`)"
                )))
            }
        };
        let variable = field(cols.variable).to_string();
        let value: f64 = field(cols.value)
            .parse()
            .map_err(|_| parse_err(cols.value, format!("invalid value `{}`", field(cols.value))))?;

        let si = match subject_ix.get(&subject) {
            Some(&si) => {
                if groups[si] != group {
                    return Err(Error::Schema(format!(
                        "subject `{subject}` appears in both `{}` and `{group}`",
                        groups[si]
                    )));
                }
                si
            }
            None => {
                subject_ix.insert(subject.clone(), subjects.len());
                subjects.push(subject.clone());
                groups.push(group);
                subjects.len() - 1
            }
        };
        let vi = *var_ix.entry((kind, variable.clone())).or_insert_with(|| {
            let names = match kind {
                Kind::Metabolite => &mut metabolites,
                Kind::Covariate => &mut covariates,
            };
            names.push(variable.clone());
            names.len() - 1
        });
        max_time = max_time.max(time);
        if cells.insert((si, time - 1, kind, vi), value).is_some() {
            return Err(Error::DuplicateRecord {
                subject,
                time,
                variable,
            });
        }
    }

    let (n, t, m, k) = (
        subjects.len(),
        max_time,
        metabolites.len(),
        covariates.len(),
    );
    if n == 0 || m == 0 {
        return Err(Error::Schema(
            "data file must contain at least one subject and one metabolite".into(),
        ));
    }
    let mut x = Array3::zeros((n, t, m));
    let mut y = Array3::zeros((n, t, k));
    for i in 0..n {
        for tt in 0..t {
            for (kind, names, dest) in [
                (Kind::Metabolite, &metabolites, &mut x),
                (Kind::Covariate, &covariates, &mut y),
            ] {
                for (v, name) in names.iter().enumerate() {
                    match cells.get(&(i, tt, kind, v)) {
                        Some(&value) => dest[[i, tt, v]] = value,
                        None => {
                            return Err(Error::IncompleteDesign {
                                subject: subjects[i].clone(),
                                time: tt + 1,
                                variable: name.clone(),
                            })
                        }
                    }
                }
            }
        }
    }
    let dataset = Dataset {
        x,
        y,
        groups,
        subjects,
        metabolites,
        covariates,
    };
    dataset.validate(false)?;
    Ok(dataset)
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), dataset)
}

/// Writes the canonical long format. Values use the shortest round-trip representation,
/// so reading the output back reproduces the tensors exactly.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "time", "group", "kind", "variable", "value"])?;
    let (n, t, _) = dataset.x.dim();
    for i in 0..n {
        for tt in 0..t {
            let time = (tt + 1).to_string();
            let group = dataset.groups[i].as_str();
            for (m, name) in dataset.metabolites.iter().enumerate() {
                let value = dataset.x[[i, tt, m]].to_string();
                wtr.write_record([
                    &dataset.subjects[i],
                    &time,
                    group,
                    "metabolite",
                    name,
                    &value,
                ])?;
            }
            for (k, name) in dataset.covariates.iter().enumerate() {
                let value = dataset.y[[i, tt, k]].to_string();
                wtr.write_record([
                    &dataset.subjects[i],
                    &time,
                    group,
                    "covariate",
                    name,
                    &value,
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-variable location and scale removed by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub metabolites: Vec<VariableScale>,
    pub covariates: Vec<VariableScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl VariableScale {
    pub fn restore(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

fn standardize_tensor(a: &mut Array3<f64>, names: &[String]) -> Result<Vec<VariableScale>> {
    let mut scales = Vec::with_capacity(names.len());
    for (v, name) in names.iter().enumerate() {
        let mut lane = a.index_axis_mut(Axis(2), v);
        let count = lane.len() as f64;
        let mean = lane.iter().sum::<f64>() / count;
        let var = lane.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
        let sd = var.sqrt();
        if !(sd > f64::EPSILON * mean.abs().max(1.0)) {
            return Err(Error::DegenerateVariable(name.clone()));
        }
        lane.mapv_inplace(|x| (x - mean) / sd);
        scales.push(VariableScale {
            name: name.clone(),
            mean,
            sd,
        });
    }
    Ok(scales)
}

/// Centers and scales every metabolite and covariate to mean 0 and (population)
/// variance 1 over the pooled subject-by-time cells.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, ScalingReport)> {
    let mut out = dataset.clone();
    let metabolites = standardize_tensor(&mut out.x, &dataset.metabolites)?;
    let covariates = standardize_tensor(&mut out.y, &dataset.covariates)?;
    Ok((
        out,
        ScalingReport {
            metabolites,
            covariates,
        },
    ))
}

/// A single pathway restricted to profiled metabolites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub id: String,
    /// Indices into the dataset's metabolite list.
    pub members: Vec<usize>,
    /// Unordered reactions between members, stored as (smaller, larger) index pairs.
    pub edges: Vec<(usize, usize)>,
}

impl Pathway {
    /// A pathway contributes a non-zero operator only if two members are connected.
    pub fn is_inert(&self) -> bool {
        self.members.len() < 2 || self.edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayGraph {
    pub pathways: Vec<Pathway>,
    /// Metabolite names from the pathway file that did not resolve against the dataset.
    pub unresolved: Vec<String>,
}

impl PathwayGraph {
    pub fn len(&self) -> usize {
        self.pathways.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pathways.is_empty()
    }

    pub fn inert_count(&self) -> usize {
        self.pathways.iter().filter(|p| p.is_inert()).count()
    }

    /// Number of pathways each metabolite belongs to.
    pub fn membership_counts(&self, n_metabolites: usize) -> Vec<usize> {
        let mut counts = vec![0; n_metabolites];
        for p in &self.pathways {
            for &m in &p.members {
                counts[m] += 1;
            }
        }
        counts
    }

    /// Serializes back to the JSON file format using dataset metabolite names.
    pub fn to_file(&self, metabolites: &[String]) -> PathwayFile {
        PathwayFile {
            pathways: self
                .pathways
                .iter()
                .map(|p| PathwayEntry {
                    id: p.id.clone(),
                    metabolites: p.members.iter().map(|&m| metabolites[m].clone()).collect(),
                    edges: p
                        .edges
                        .iter()
                        .map(|&(a, b)| [metabolites[a].clone(), metabolites[b].clone()])
                        .collect(),
                })
                .collect(),
        }
    }
}

/// On-disk pathway description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayFile {
    pub pathways: Vec<PathwayEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayEntry {
    pub id: String,
    pub metabolites: Vec<String>,
    #[serde(default)]
    pub edges: Vec<[String; 2]>,
}

impl PathwayFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Resolves names against `metabolites`, dropping (and reporting) unknown ones.
    pub fn resolve(&self, metabolites: &[String]) -> Result<PathwayGraph> {
        let index: HashMap<&str, usize> = metabolites
            .iter()
            .enumerate()
            .map(|(i, m)| (m.as_str(), i))
            .collect();
        let mut unresolved: Vec<String> = Vec::new();
        let mut seen_unresolved: HashSet<&str> = HashSet::new();
        let mut pathways = Vec::with_capacity(self.pathways.len());
        for entry in &self.pathways {
            let declared: HashSet<&str> = entry.metabolites.iter().map(String::as_str).collect();
            let mut members: Vec<usize> = Vec::new();
            for name in &entry.metabolites {
                match index.get(name.as_str()) {
                    Some(&m) => {
                        if !members.contains(&m) {
                            members.push(m);
                        }
                    }
                    None => {
                        if seen_unresolved.insert(name.as_str()) {
                            unresolved.push(name.clone());
                        }
                    }
                }
            }
            let mut edges: Vec<(usize, usize)> = Vec::new();
            for [a, b] in &entry.edges {
                for end in [a, b] {
                    if !declared.contains(end.as_str()) {
                        return Err(Error::Schema(format!(
                            "pathway `{}` has an edge to `{end}`, which is not one of its metabolites",
                            entry.id
                        )));
                    }
                }
                let (Some(&ia), Some(&ib)) = (index.get(a.as_str()), index.get(b.as_str())) else {
                    continue;
                };
                if ia == ib {
                    continue;
                }
                let e = (ia.min(ib), ia.max(ib));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
            pathways.push(Pathway {
                id: entry.id.clone(),
                members,
                edges,
            });
        }
        let graph = PathwayGraph {
            pathways,
            unresolved,
        };
        if graph.pathways.iter().all(Pathway::is_inert) {
            return Err(Error::EmptyDesign(format!(
                "none of the {} pathway(s) connects two profiled metabolites",
                graph.len()
            )));
        }
        Ok(graph)
    }
}

pub fn load_pathways(path: impl AsRef<Path>, dataset: &Dataset) -> Result<PathwayGraph> {
    let text = std::fs::read_to_string(path)?;
    PathwayFile::parse(&text)?.resolve(&dataset.metabolites)
}
