//! Population state: candidates, the actionable/immutable feature split and the
//! ceiling on the distinguished actionable coordinate.
//!
//! Candidate order is fixed at construction. Every downstream tie-break uses it.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::effort::EffortParams;
use crate::error::{Error, Result};

/// Split of the coordinates `0..dim` into actionable and immutable sets, plus
/// the ceiling on one actionable coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionSpec", into = "PartitionSpec")]
pub struct FeaturePartition {
    dim: usize,
    actionable: Vec<usize>,
    immutable: Vec<usize>,
    ceiling_index: usize,
    ceiling_value: f64,
}

/// Wire form of a partition. `immutable` defaults to the complement of `actionable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub dim: usize,
    pub actionable: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immutable: Option<Vec<usize>>,
    pub ceiling_index: usize,
    pub ceiling_value: f64,
}

impl TryFrom<PartitionSpec> for FeaturePartition {
    type Error = Error;

    fn try_from(spec: PartitionSpec) -> Result<Self> {
        match spec.immutable {
            Some(immutable) => FeaturePartition::new(
                spec.dim,
                spec.actionable,
                immutable,
                spec.ceiling_index,
                spec.ceiling_value,
            ),
            None => FeaturePartition::from_actionable(
                spec.dim,
                spec.actionable,
                spec.ceiling_index,
                spec.ceiling_value,
            ),
        }
    }
}

impl From<FeaturePartition> for PartitionSpec {
    fn from(p: FeaturePartition) -> Self {
        PartitionSpec {
            dim: p.dim,
            actionable: p.actionable,
            immutable: Some(p.immutable),
            ceiling_index: p.ceiling_index,
            ceiling_value: p.ceiling_value,
        }
    }
}

impl FeaturePartition {
    pub fn new(
        dim: usize,
        mut actionable: Vec<usize>,
        mut immutable: Vec<usize>,
        ceiling_index: usize,
        ceiling_value: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Partition("dimension must be positive".into()));
        }
        actionable.sort_unstable();
        immutable.sort_unstable();
        let mut seen = vec![false; dim];
        for &j in actionable.iter().chain(immutable.iter()) {
            if j >= dim {
                return Err(Error::Partition(format!(
                    "coordinate {j} out of range for dimension {dim}"
                )));
            }
            if seen[j] {
                return Err(Error::Partition(format!("coordinate {j} listed twice")));
            }
            seen[j] = true;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!(
                "coordinate {j} is neither actionable nor immutable"
            )));
        }
        if actionable.binary_search(&ceiling_index).is_err() {
            return Err(Error::Partition(format!(
                "ceiling index {ceiling_index} is not actionable"
            )));
        }
        if ceiling_value.is_nan() {
            return Err(Error::Partition("ceiling value is NaN".into()));
        }
        Ok(FeaturePartition {
            dim,
            actionable,
            immutable,
            ceiling_index,
            ceiling_value,
        })
    }

    /// Builds a partition whose immutable set is the complement of `actionable`.
    pub fn from_actionable(
        dim: usize,
        actionable: Vec<usize>,
        ceiling_index: usize,
        ceiling_value: f64,
    ) -> Result<Self> {
        let immutable = (0..dim).filter(|j| !actionable.contains(j)).collect();
        Self::new(dim, actionable, immutable, ceiling_index, ceiling_value)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actionable(&self) -> &[usize] {
        &self.actionable
    }

    pub fn immutable(&self) -> &[usize] {
        &self.immutable
    }

    pub fn ceiling_index(&self) -> usize {
        self.ceiling_index
    }

    pub fn ceiling_value(&self) -> f64 {
        self.ceiling_value
    }

    pub fn is_actionable(&self, j: usize) -> bool {
        self.actionable.binary_search(&j).is_ok()
    }

    /// Copy of `v` with the immutable coordinates zeroed.
    pub fn project_actionable(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for &j in &self.actionable {
            out[j] = v[j];
        }
        out
    }

    /// Copy of `v` with the actionable coordinates zeroed.
    pub fn project_immutable(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for &j in &self.immutable {
            out[j] = v[j];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub features: Vec<f64>,
    pub effort: EffortParams,
}

impl Candidate {
    /// Value of the ceiling coordinate (the distinguished actionable feature).
    pub fn ceiling_feature(&self, partition: &FeaturePartition) -> f64 {
        self.features[partition.ceiling_index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    candidates: Vec<Candidate>,
    partition: FeaturePartition,
    time: u64,
}

impl PopulationState {
    pub fn new(candidates: Vec<Candidate>, partition: FeaturePartition, time: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut ids = HashSet::with_capacity(candidates.len());
        for (row, c) in candidates.iter().enumerate() {
            check_candidate(c, &partition).map_err(|reason| {
                Error::Domain(format!("candidate {} (position {row}): {reason}", c.id))
            })?;
            if !ids.insert(c.id) {
                return Err(Error::Domain(format!("duplicate candidate id {}", c.id)));
            }
        }
        Ok(PopulationState {
            candidates,
            partition,
            time,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.candidates[i].features
    }

    pub fn ceiling_features(&self) -> Vec<f64> {
        let c = self.partition.ceiling_index();
        self.candidates.iter().map(|x| x.features[c]).collect()
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.candidates.iter().position(|c| c.id == id)
    }

    /// Successor state with replaced feature rows. Ids, effort parameters and
    /// partition carry over; the clock advances by one.
    pub(crate) fn advance(&self, features: Vec<Vec<f64>>) -> PopulationState {
        debug_assert_eq!(features.len(), self.candidates.len());
        let candidates = self
            .candidates
            .iter()
            .zip(features)
            .map(|(c, f)| Candidate {
                id: c.id,
                features: f,
                effort: c.effort,
            })
            .collect();
        PopulationState {
            candidates,
            partition: self.partition.clone(),
            time: self.time + 1,
        }
    }
}

fn check_candidate(c: &Candidate, partition: &FeaturePartition) -> std::result::Result<(), String> {
    if c.features.len() != partition.dim() {
        return Err(format!(
            "expected {} features, found {}",
            partition.dim(),
            c.features.len()
        ));
    }
    if let Some(j) = c.features.iter().position(|v| !v.is_finite()) {
        return Err(format!("feature {j} is not finite"));
    }
    let g = c.ceiling_feature(partition);
    if g > partition.ceiling_value() {
        return Err(format!(
            "ceiling feature {g} exceeds ceiling {}",
            partition.ceiling_value()
        ));
    }
    c.effort.validate().map_err(|e| e.to_string())
}

const EFFORT_COLUMNS: [&str; 3] = ["beta", "k", "theta"];

/// Number of feature columns implied by a population CSV header.
pub fn header_dim(path: &Path) -> Result<usize> {
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| load_err(path, e.to_string()))?;
    let (dim, _) = parse_header(header).map_err(|r| load_err(path, r))?;
    Ok(dim)
}

/// Loads a population from CSV (`id,f0,..,f{d-1}[,beta,k,theta]`).
///
/// `default_effort` fills in effort parameters when the file has no effort columns.
pub fn load_population(
    path: &Path,
    partition: FeaturePartition,
    default_effort: EffortParams,
) -> Result<PopulationState> {
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| load_err(path, e.to_string()))?
        .clone();
    let (dim, has_effort) = parse_header(&header).map_err(|r| load_err(path, r))?;
    if dim != partition.dim() {
        return Err(load_err(
            path,
            format!(
                "header has {dim} feature columns but partition dimension is {}",
                partition.dim()
            ),
        ));
    }

    let mut candidates = Vec::new();
    let mut ids = HashSet::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| load_err(path, format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(load_err(
                path,
                format!(
                    "row {row}: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            ));
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| load_err(path, format!("row {row}: invalid id {:?}", &record[0])))?;
        let mut values = Vec::with_capacity(record.len() - 1);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| load_err(path, format!("row {row}: invalid number {field:?}")))?;
            values.push(v);
        }
        let features = values[..dim].to_vec();
        let effort = if has_effort {
            EffortParams::new(values[dim], values[dim + 1], values[dim + 2])
                .map_err(|e| load_err(path, format!("row {row}: {e}")))?
        } else {
            default_effort
        };
        if !ids.insert(id) {
            return Err(load_err(path, format!("row {row}: duplicate id {id}")));
        }
        let candidate = Candidate {
            id,
            features,
            effort,
        };
        check_candidate(&candidate, &partition)
            .map_err(|r| load_err(path, format!("row {row}: {r}")))?;
        candidates.push(candidate);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    PopulationState::new(candidates, partition, 0)
}

/// Writes a population in the CSV format read by [`load_population`], always
/// including effort columns. Values use the shortest round-trip representation.
pub fn save_population(state: &PopulationState, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header = vec!["id".to_string()];
    header.extend((0..state.dim()).map(|j| format!("f{j}")));
    header.extend(EFFORT_COLUMNS.iter().map(|s| s.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for c in state.candidates() {
        let mut fields = vec![c.id.to_string()];
        fields.extend(c.features.iter().map(|v| v.to_string()));
        fields.push(c.effort.beta.to_string());
        fields.push(c.effort.k.to_string());
        fields.push(c.effort.theta.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| load_err(path, e.to_string()))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_header(header: &csv::StringRecord) -> std::result::Result<(usize, bool), String> {
    if header.get(0) != Some("id") {
        return Err("header must start with an `id` column".into());
    }
    let names: Vec<&str> = header.iter().collect();
    let has_effort = names.len() >= 4 && names[names.len() - 3..] == EFFORT_COLUMNS;
    let dim = names.len() - 1 - if has_effort { 3 } else { 0 };
    if dim == 0 {
        return Err("header has no feature columns".into());
    }
    Ok((dim, has_effort))
}

fn load_err(path: &Path, reason: String) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        reason,
    }
}

/// Distribution of one generated feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureDistribution {
    Uniform {
        min: f64,
        max: f64,
    },
    /// Normal draw clipped to `[min, max]`.
    Gaussian {
        mean: f64,
        std_dev: f64,
        min: f64,
        max: f64,
    },
}

impl FeatureDistribution {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            FeatureDistribution::Uniform { min, max } => (min, max),
            FeatureDistribution::Gaussian { min, max, .. } => (min, max),
        }
    }
}

/// Either a fixed value or a uniform range `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamRange {
    Fixed(f64),
    Range { min: f64, max: f64 },
}

impl ParamRange {
    fn bounds(self) -> (f64, f64) {
        match self {
            ParamRange::Fixed(v) => (v, v),
            ParamRange::Range { min, max } => (min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffortRanges {
    pub beta: ParamRange,
    pub k: ParamRange,
    pub theta: ParamRange,
}

impl From<EffortParams> for EffortRanges {
    fn from(p: EffortParams) -> Self {
        EffortRanges {
            beta: ParamRange::Fixed(p.beta),
            k: ParamRange::Fixed(p.k),
            theta: ParamRange::Fixed(p.theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub partition: FeaturePartition,
    /// One distribution per coordinate.
    pub features: Vec<FeatureDistribution>,
    pub effort: EffortRanges,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("generator n must be at least 1".into()));
        }
        if self.features.len() != self.partition.dim() {
            return Err(Error::Config(format!(
                "generator has {} feature distributions for dimension {}",
                self.features.len(),
                self.partition.dim()
            )));
        }
        for (j, dist) in self.features.iter().enumerate() {
            let (min, max) = dist.bounds();
            if !(min.is_finite() && max.is_finite()) || min > max {
                return Err(Error::Config(format!(
                    "feature {j}: invalid range [{min}, {max}]"
                )));
            }
            if let FeatureDistribution::Gaussian { mean, std_dev, .. } = *dist {
                if !mean.is_finite() || !std_dev.is_finite() || std_dev < 0.0 {
                    return Err(Error::Config(format!(
                        "feature {j}: invalid gaussian mean {mean} / std_dev {std_dev}"
                    )));
                }
            }
        }
        let (_, cmax) = self.features[self.partition.ceiling_index()].bounds();
        if cmax >= self.partition.ceiling_value() {
            return Err(Error::Config(format!(
                "ceiling feature range max {cmax} must be strictly below the ceiling {}",
                self.partition.ceiling_value()
            )));
        }
        for (name, range) in [
            ("beta", self.effort.beta),
            ("k", self.effort.k),
            ("theta", self.effort.theta),
        ] {
            let (min, max) = range.bounds();
            if !(min > 0.0 && max.is_finite() && min <= max) {
                return Err(Error::Config(format!(
                    "effort {name}: range [{min}, {max}] must be positive with min <= max"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a population. Pure in `(spec, seed)`: rows are generated in order, each
/// row drawing its features then `beta`, `k`, `theta` from one ChaCha stream.
pub fn generate_population(spec: &GeneratorSpec, seed: u64) -> Result<PopulationState> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<Option<Normal<f64>>> = spec
        .features
        .iter()
        .map(|d| match *d {
            FeatureDistribution::Gaussian { mean, std_dev, .. } => Normal::new(mean, std_dev).ok(),
            FeatureDistribution::Uniform { .. } => None,
        })
        .collect();

    let mut candidates = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let features = spec
            .features
            .iter()
            .zip(&normals)
            .map(|(dist, normal)| match (dist, normal) {
                (FeatureDistribution::Gaussian { min, max, .. }, Some(normal)) => {
                    normal.sample(&mut rng).clamp(*min, *max)
                }
                _ => {
                    let (min, max) = dist.bounds();
                    draw_uniform(&mut rng, min, max)
                }
            })
            .collect();
        let mut draw = |r: ParamRange| {
            let (min, max) = r.bounds();
            draw_uniform(&mut rng, min, max)
        };
        let effort = EffortParams::new(
            draw(spec.effort.beta),
            draw(spec.effort.k),
            draw(spec.effort.theta),
        )?;
        candidates.push(Candidate {
            id: i as u64,
            features,
            effort,
        });
    }
    PopulationState::new(candidates, spec.partition.clone(), 0)
}

fn draw_uniform(rng: &mut ChaCha8Rng, min: f64, max: f64) -> f64 {
    if min == max {
        min
    } else {
        rng.random_range(min..=max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gre_partition() -> FeaturePartition {
        FeaturePartition::from_actionable(2, vec![1], 1, 340.0).unwrap()
    }

    fn gre_spec(n: usize) -> GeneratorSpec {
        GeneratorSpec {
            n,
            partition: gre_partition(),
            features: vec![
                FeatureDistribution::Uniform { min: 2.0, max: 4.0 },
                FeatureDistribution::Uniform {
                    min: 260.0,
                    max: 335.0,
                },
            ],
            effort: EffortParams::new(1.0, 1.0, 1.0).unwrap().into(),
        }
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn partition_rejects_overlap_and_gaps() {
        assert!(FeaturePartition::new(2, vec![0, 1], vec![1], 0, 1.0).is_err());
        assert!(FeaturePartition::new(3, vec![0], vec![1], 0, 1.0).is_err());
        assert!(FeaturePartition::new(2, vec![0], vec![1], 1, 1.0).is_err());
        let p = FeaturePartition::new(3, vec![2, 0], vec![1], 2, 5.0).unwrap();
        assert_eq!(p.actionable(), &[0, 2]);
        assert_eq!(p.project_immutable(&[1.0, 2.0, 3.0]), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn partition_json_defaults_immutable_to_complement() {
        let p: FeaturePartition = serde_json::from_str(
            r#"{"dim":3,"actionable":[1],"ceiling_index":1,"ceiling_value":340}"#,
        )
        .unwrap();
        assert_eq!(p.immutable(), &[0, 2]);
        let bad = serde_json::from_str::<FeaturePartition>(
            r#"{"dim":2,"actionable":[1],"ceiling_index":0,"ceiling_value":1}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn loads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pop.csv", "id,f0,f1\n10,1.0,2\n11,3e0,4.5\n12,-1,0\n");
        let state = load_population(&p, gre_partition(), EffortParams::default()).unwrap();
        assert_eq!(state.len(), 3);
        assert_eq!(state.time(), 0);
        assert_eq!(state.candidates()[1].id, 11);
        assert_eq!(state.features(1), &[3.0, 4.5]);
    }

    #[test]
    fn load_reads_effort_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pop.csv", "id,f0,f1,beta,k,theta\n1,1,2,0.5,2,3\n");
        let state = load_population(&p, gre_partition(), EffortParams::default()).unwrap();
        assert_eq!(
            state.candidates()[0].effort,
            EffortParams::new(0.5, 2.0, 3.0).unwrap()
        );
    }

    #[test]
    fn load_rejects_feature_above_ceiling_naming_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pop.csv", "id,f0,f1\n1,3,300\n2,3,341\n");
        let err = load_population(&p, gre_partition(), EffortParams::default()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn load_accepts_feature_at_ceiling() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pop.csv", "id,f0,f1\n1,3,340\n");
        assert!(load_population(&p, gre_partition(), EffortParams::default()).is_ok());
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(&dir, "empty.csv", "id,f0,f1\n");
        let err = load_population(&empty, gre_partition(), EffortParams::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty population");

        let dup = write(&dir, "dup.csv", "id,f0,f1\n1,1,1\n1,2,2\n");
        let err = load_population(&dup, gre_partition(), EffortParams::default()).unwrap_err();
        assert!(err.to_string().contains("row 2") && err.to_string().contains("duplicate"));

        let short = write(&dir, "short.csv", "id,f0,f1\n1,1\n");
        let err = load_population(&short, gre_partition(), EffortParams::default()).unwrap_err();
        assert!(err.to_string().contains("row 1"));

        let junk = write(&dir, "junk.csv", "id,f0,f1\n1,1,abc\n");
        let err = load_population(&junk, gre_partition(), EffortParams::default()).unwrap_err();
        assert!(err.to_string().contains("row 1"));

        let wide = write(&dir, "wide.csv", "id,f0,f1,f2\n1,1,1,1\n");
        assert!(load_population(&wide, gre_partition(), EffortParams::default()).is_err());

        let missing = dir.path().join("nope.csv");
        assert!(load_population(&missing, gre_partition(), EffortParams::default()).is_err());
    }

    #[test]
    fn generated_gre_population_respects_bounds() {
        let state = generate_population(&gre_spec(200), 7).unwrap();
        assert_eq!(state.len(), 200);
        for c in state.candidates() {
            assert!((2.0..=4.0).contains(&c.features[0]));
            assert!((260.0..=335.0).contains(&c.features[1]));
            assert!(c.features[1] < 340.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_population(&gre_spec(50), 7).unwrap();
        let b = generate_population(&gre_spec(50), 7).unwrap();
        let c = generate_population(&gre_spec(50), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn generator_config_errors() {
        assert!(generate_population(&gre_spec(0), 1).is_err());

        let mut spec = gre_spec(5);
        spec.features[0] = FeatureDistribution::Uniform { min: 4.0, max: 2.0 };
        assert!(matches!(
            generate_population(&spec, 1),
            Err(Error::Config(_))
        ));

        let mut spec = gre_spec(5);
        spec.effort.k = ParamRange::Range { min: 0.0, max: 1.0 };
        assert!(matches!(
            generate_population(&spec, 1),
            Err(Error::Config(_))
        ));

        let mut spec = gre_spec(5);
        spec.features[1] = FeatureDistribution::Uniform {
            min: 300.0,
            max: 340.0,
        };
        assert!(matches!(
            generate_population(&spec, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gaussian_draws_are_clipped() {
        let mut spec = gre_spec(300);
        spec.features[1] = FeatureDistribution::Gaussian {
            mean: 330.0,
            std_dev: 20.0,
            min: 300.0,
            max: 335.0,
        };
        let state = generate_population(&spec, 3).unwrap();
        assert!(state
            .ceiling_features()
            .iter()
            .all(|g| (300.0..=335.0).contains(g)));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = gre_spec(40);
        spec.effort.theta = ParamRange::Range { min: 0.1, max: 9.0 };
        let state = generate_population(&spec, 99).unwrap();
        let p = dir.path().join("pop.csv");
        save_population(&state, &p).unwrap();
        let back = load_population(&p, gre_partition(), EffortParams::default()).unwrap();
        assert_eq!(state, back);
    }
}
