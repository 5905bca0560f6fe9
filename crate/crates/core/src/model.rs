//! Region graphs, samples, weights and structural validation.
//!
//! A region's joint label is a flat index, row-major over its sorted variable
//! list (the last variable varies fastest). Every parent/child edge carries a
//! projection table mapping parent labels to child labels.

use std::collections::HashSet;
use std::fmt;

use crate::error::ModelError;

/// Largest label table a single region may have.
pub const MAX_REGION_LABELS: usize = 1 << 24;

/// A set of variables with its flat label space.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    id: usize,
    variables: Vec<usize>,
    cardinalities: Vec<usize>,
    strides: Vec<usize>,
    label_count: usize,
}

impl Region {
    /// `variables` must be strictly increasing; `cardinalities[j]` is the label
    /// count of `variables[j]`.
    pub fn new(
        id: usize,
        variables: Vec<usize>,
        cardinalities: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let invalid = |reason: &str| ModelError::InvalidRegion {
            region: id,
            reason: reason.to_string(),
        };
        if variables.is_empty() {
            return Err(invalid("region has no variables"));
        }
        if variables.len() != cardinalities.len() {
            return Err(invalid("variable and cardinality lists differ in length"));
        }
        if variables.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("variables must be strictly increasing"));
        }
        if cardinalities.iter().any(|&c| c == 0) {
            return Err(invalid("cardinalities must be positive"));
        }
        let mut strides = vec![0; variables.len()];
        let mut label_count = 1usize;
        for j in (0..variables.len()).rev() {
            strides[j] = label_count;
            label_count = label_count
                .checked_mul(cardinalities[j])
                .filter(|&n| n <= MAX_REGION_LABELS)
                .ok_or(ModelError::TooManyLabels {
                    region: id,
                    limit: MAX_REGION_LABELS,
                })?;
        }
        Ok(Region {
            id,
            variables,
            cardinalities,
            strides,
            label_count,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Size of the region's label space.
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    /// Per-variable labels of a flat region label.
    pub fn decode(&self, label: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.cardinalities)
            .map(|(&s, &c)| (label / s) % c)
            .collect()
    }

    /// Flat region label of a full assignment indexed by global variable.
    pub fn encode(&self, assignment: &[usize]) -> usize {
        self.variables
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| assignment[v] * s)
            .sum()
    }

    /// Position of `variable` in this region's variable list.
    pub fn position(&self, variable: usize) -> Option<usize> {
        self.variables.binary_search(&variable).ok()
    }
}

/// A containment edge with its label projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    /// `projection[parent_label] = child_label`.
    projection: Vec<usize>,
    /// `members[child_label]` lists the parent labels projecting onto it.
    members: Vec<Vec<usize>>,
}

impl Edge {
    pub fn projection(&self) -> &[usize] {
        &self.projection
    }

    pub fn members(&self, child_label: usize) -> &[usize] {
        &self.members[child_label]
    }
}

/// Directed acyclic graph of regions ordered by strict containment.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    regions: Vec<Region>,
    edges: Vec<Edge>,
    variable_cardinalities: Vec<usize>,
    /// Edge ids into each region from its parents, sorted by parent id.
    parent_edges: Vec<Vec<usize>>,
    /// Edge ids out of each region to its children, sorted by child id.
    child_edges: Vec<Vec<usize>>,
}

impl RegionGraph {
    /// Builds and structurally validates a region graph.
    ///
    /// Strict containment along every edge makes the graph acyclic, so the
    /// containment check also rules out cycles.
    pub fn new(regions: Vec<Region>, edges: &[(usize, usize)]) -> Result<Self, ModelError> {
        for (expected, region) in regions.iter().enumerate() {
            if region.id != expected {
                return Err(ModelError::NonDenseRegionId {
                    expected,
                    found: region.id,
                });
            }
        }
        let variable_count = regions
            .iter()
            .flat_map(|r| r.variables.iter().copied())
            .max()
            .map_or(0, |m| m + 1);
        let distinct: std::collections::BTreeSet<usize> =
            regions.iter().flat_map(|r| r.variables.iter().copied()).collect();
        if distinct.len() != variable_count {
            let gap = distinct
                .iter()
                .enumerate()
                .find(|(i, &v)| *i != v)
                .map_or(distinct.len(), |(i, _)| i);
            return Err(ModelError::UncoveredVariable(gap));
        }
        let mut cards: Vec<Option<usize>> = vec![None; variable_count];
        for region in &regions {
            for (&v, &c) in region.variables.iter().zip(&region.cardinalities) {
                match cards[v] {
                    None => cards[v] = Some(c),
                    Some(first) if first != c => {
                        return Err(ModelError::CardinalityMismatch {
                            variable: v,
                            first,
                            second: c,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        let variable_cardinalities = cards
            .iter()
            .enumerate()
            .map(|(v, c)| c.ok_or(ModelError::UncoveredVariable(v)))
            .collect::<Result<Vec<_>, _>>()?;

        let mut seen = HashSet::new();
        let mut built = Vec::with_capacity(edges.len());
        for &(parent, child) in edges {
            if parent >= regions.len() || child >= regions.len() {
                return Err(ModelError::DanglingEdge {
                    parent,
                    child,
                    regions: regions.len(),
                });
            }
            if !seen.insert((parent, child)) {
                return Err(ModelError::DuplicateEdge { parent, child });
            }
            let p = &regions[parent];
            let c = &regions[child];
            let positions: Option<Vec<usize>> =
                c.variables.iter().map(|&v| p.position(v)).collect();
            let positions = match positions {
                Some(pos) if c.variables.len() < p.variables.len() => pos,
                _ => return Err(ModelError::ContainmentViolated { parent, child }),
            };
            let mut projection = Vec::with_capacity(p.label_count);
            let mut members = vec![Vec::new(); c.label_count];
            for label in 0..p.label_count {
                let child_label: usize = positions
                    .iter()
                    .zip(&c.strides)
                    .map(|(&pos, &s)| ((label / p.strides[pos]) % p.cardinalities[pos]) * s)
                    .sum();
                projection.push(child_label);
                members[child_label].push(label);
            }
            built.push(Edge {
                parent,
                child,
                projection,
                members,
            });
        }

        let mut parent_edges = vec![Vec::new(); regions.len()];
        let mut child_edges = vec![Vec::new(); regions.len()];
        for (e, edge) in built.iter().enumerate() {
            parent_edges[edge.child].push(e);
            child_edges[edge.parent].push(e);
        }
        for list in &mut parent_edges {
            list.sort_by_key(|&e| built[e].parent);
        }
        for list in &mut child_edges {
            list.sort_by_key(|&e| built[e].child);
        }
        Ok(RegionGraph {
            regions,
            edges: built,
            variable_cardinalities,
            parent_edges,
            child_edges,
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, r: usize) -> &Region {
        &self.regions[r]
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn variable_count(&self) -> usize {
        self.variable_cardinalities.len()
    }

    pub fn variable_cardinalities(&self) -> &[usize] {
        &self.variable_cardinalities
    }

    /// Edges from the parents of `r`, by increasing parent id.
    pub fn parent_edges(&self, r: usize) -> &[usize] {
        &self.parent_edges[r]
    }

    /// Edges to the children of `r`, by increasing child id.
    pub fn child_edges(&self, r: usize) -> &[usize] {
        &self.child_edges[r]
    }

    pub fn parent_count(&self, r: usize) -> usize {
        self.parent_edges[r].len()
    }

    /// Number of joint labels over all variables, saturating.
    pub fn joint_label_count(&self) -> u128 {
        self.variable_cardinalities
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    /// Region containing `variable` with the fewest labels, lowest id on ties.
    pub fn smallest_region_containing(&self, variable: usize) -> Option<usize> {
        self.regions
            .iter()
            .filter(|r| r.position(variable).is_some())
            .min_by_key(|r| (r.label_count, r.id))
            .map(|r| r.id)
    }
}

/// Named counting-number scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountingScheme {
    Ones,
    Bethe,
    File,
}

impl fmt::Display for CountingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingScheme::Ones => "ones",
            CountingScheme::Bethe => "bethe",
            CountingScheme::File => "file",
        })
    }
}

impl std::str::FromStr for CountingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ones" => Ok(CountingScheme::Ones),
            "bethe" => Ok(CountingScheme::Bethe),
            "file" => Ok(CountingScheme::File),
            other => Err(format!("unknown counting scheme '{other}'")),
        }
    }
}

/// Per-region entropy weights `c_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingNumbers {
    scheme: CountingScheme,
    values: Vec<f64>,
}

impl CountingNumbers {
    pub fn ones(graph: &RegionGraph) -> Self {
        CountingNumbers {
            scheme: CountingScheme::Ones,
            values: vec![1.0; graph.region_count()],
        }
    }

    /// `c_r = 1 - |P(r)|`.
    pub fn bethe(graph: &RegionGraph) -> Self {
        CountingNumbers {
            scheme: CountingScheme::Bethe,
            values: (0..graph.region_count())
                .map(|r| 1.0 - graph.parent_count(r) as f64)
                .collect(),
        }
    }

    pub fn from_values(graph: &RegionGraph, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != graph.region_count() {
            return Err(ModelError::InvalidCounts(format!(
                "{} values for {} regions",
                values.len(),
                graph.region_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ModelError::InvalidCounts(format!("non-finite value {v}")));
        }
        Ok(CountingNumbers {
            scheme: CountingScheme::File,
            values,
        })
    }

    pub fn scheme(&self) -> CountingScheme {
        self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, r: usize) -> f64 {
        self.values[r]
    }

    pub fn all_nonnegative(&self) -> bool {
        self.values.iter().all(|&c| c >= 0.0)
    }

    /// True iff every variable `i` has `sum_{r ∋ i} c_r >= 1`.
    pub fn fractional_cover(&self, graph: &RegionGraph) -> bool {
        let mut cover = vec![0.0; graph.variable_count()];
        for region in graph.regions() {
            for &v in region.variables() {
                cover[v] += self.values[region.id()];
            }
        }
        cover.iter().all(|&s| s >= 1.0 - 1e-12)
    }
}

/// Model weights `w`, one per feature id.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn zeros(count: usize) -> Self {
        Weights(vec![0.0; count])
    }

    pub fn new(values: Vec<f64>) -> Self {
        Weights(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum()
    }
}

impl From<Vec<f64>> for Weights {
    fn from(values: Vec<f64>) -> Self {
        Weights(values)
    }
}

/// Table `phi_{k,r}(x, ŷ_r)` of one feature on one region.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature: usize,
    pub values: Vec<f64>,
}

/// Region graph plus feature tables that do not depend on the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    graph: RegionGraph,
    feature_count: usize,
    static_features: Vec<Vec<FeatureTable>>,
}

impl Model {
    /// `static_features[r]` holds the sample-independent tables of region `r`.
    pub fn new(
        graph: RegionGraph,
        feature_count: usize,
        static_features: Vec<Vec<FeatureTable>>,
    ) -> Result<Self, ModelError> {
        if static_features.len() != graph.region_count() {
            return Err(ModelError::InvalidRegion {
                region: static_features.len(),
                reason: format!(
                    "static feature lists for {} regions, graph has {}",
                    static_features.len(),
                    graph.region_count()
                ),
            });
        }
        for (r, tables) in static_features.iter().enumerate() {
            check_tables(&graph, feature_count, r, tables, &[])?;
        }
        Ok(Model {
            graph,
            feature_count,
            static_features,
        })
    }

    /// Model whose features are all sample-specific.
    pub fn without_static_features(graph: RegionGraph, feature_count: usize) -> Self {
        let n = graph.region_count();
        Model {
            graph,
            feature_count,
            static_features: vec![Vec::new(); n],
        }
    }

    pub fn graph(&self) -> &RegionGraph {
        &self.graph
    }

    /// Number of feature ids `K`.
    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn static_features(&self, r: usize) -> &[FeatureTable] {
        &self.static_features[r]
    }

    /// All feature tables of region `r` for `sample`: static first, then sample-specific.
    pub fn region_features<'a>(
        &'a self,
        sample: &'a Sample,
        r: usize,
    ) -> impl Iterator<Item = &'a FeatureTable> + 'a {
        self.static_features[r].iter().chain(sample.features[r].iter())
    }

    pub fn check_weights(&self, w: &Weights) -> Result<(), ModelError> {
        if w.len() != self.feature_count {
            return Err(ModelError::WeightLength {
                expected: self.feature_count,
                found: w.len(),
            });
        }
        if w.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("weights".into()));
        }
        Ok(())
    }
}

fn check_tables(
    graph: &RegionGraph,
    feature_count: usize,
    r: usize,
    tables: &[FeatureTable],
    already: &[FeatureTable],
) -> Result<(), ModelError> {
    let expected = graph.region(r).label_count();
    let mut ids: HashSet<usize> = already.iter().map(|t| t.feature).collect();
    for table in tables {
        if table.feature >= feature_count {
            return Err(ModelError::FeatureOutOfRange {
                feature: table.feature,
                count: feature_count,
            });
        }
        if !ids.insert(table.feature) {
            return Err(ModelError::DuplicateFeatureTable {
                feature: table.feature,
                region: r,
            });
        }
        if table.values.len() != expected {
            return Err(ModelError::TableLength {
                region: r,
                expected,
                found: table.values.len(),
            });
        }
        if table.values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "feature {} on region {r}",
                table.feature
            )));
        }
    }
    Ok(())
}

/// One training or test example: loss tables, sample-specific features and
/// the true region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    /// `loss[r][ŷ_r] = ℓ_r(y_r, ŷ_r)`; all zeros for regions outside the loss.
    pub loss: Vec<Vec<f64>>,
    /// Sample-specific feature tables per region.
    pub features: Vec<Vec<FeatureTable>>,
    /// Index of `y_r` in each region's label space.
    pub truth: Vec<usize>,
    empirical: Vec<f64>,
}

impl Sample {
    /// Validates shapes against `model` and computes the empirical feature sums.
    pub fn new(
        model: &Model,
        id: usize,
        loss: Vec<Vec<f64>>,
        features: Vec<Vec<FeatureTable>>,
        truth: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let mut sample = Sample {
            id,
            loss,
            features,
            truth,
            empirical: Vec::new(),
        };
        check_sample_shape(model, &sample)?;
        sample.empirical = empirical_features(model, &sample);
        Ok(sample)
    }

    /// `sum_{r in R_k} phi_{k,r}(x, y_r)` for every feature id `k`.
    pub fn empirical(&self) -> &[f64] {
        &self.empirical
    }

    /// Per-variable true labels, read from the regions' true labels.
    pub fn variable_truth(&self, graph: &RegionGraph) -> Vec<usize> {
        let mut out = vec![0; graph.variable_count()];
        for region in graph.regions() {
            let labels = region.decode(self.truth[region.id()]);
            for (&v, &l) in region.variables().iter().zip(&labels) {
                out[v] = l;
            }
        }
        out
    }
}

fn check_sample_shape(model: &Model, sample: &Sample) -> Result<(), ModelError> {
    let graph = model.graph();
    let n = graph.region_count();
    let bad = |reason: String| ModelError::InvalidSample {
        sample: sample.id,
        reason,
    };
    if sample.loss.len() != n || sample.features.len() != n || sample.truth.len() != n {
        return Err(bad(format!(
            "expected {n} loss tables, feature lists and true labels, found {}, {}, {}",
            sample.loss.len(),
            sample.features.len(),
            sample.truth.len()
        )));
    }
    for r in 0..n {
        let count = graph.region(r).label_count();
        if sample.loss[r].len() != count {
            return Err(ModelError::TableLength {
                region: r,
                expected: count,
                found: sample.loss[r].len(),
            });
        }
        if sample.loss[r].iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "loss of sample {} on region {r}",
                sample.id
            )));
        }
        if sample.truth[r] >= count {
            return Err(bad(format!(
                "true label {} out of range for region {r} with {count} labels",
                sample.truth[r]
            )));
        }
        check_tables(
            graph,
            model.feature_count(),
            r,
            &sample.features[r],
            model.static_features(r),
        )?;
    }
    Ok(())
}

fn empirical_features(model: &Model, sample: &Sample) -> Vec<f64> {
    let mut out = vec![0.0; model.feature_count()];
    for r in 0..model.graph().region_count() {
        for table in model.region_features(sample, r) {
            out[table.feature] += table.values[sample.truth[r]];
        }
    }
    out
}

/// Non-fatal findings of [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    /// Some variable has `sum_{r ∋ i} c_r < 1`.
    NotFractionalCover,
    /// Some region has `c_r < 0`.
    NegativeCountingNumber { region: usize, value: f64 },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::NotFractionalCover => write!(
                f,
                "counting numbers do not fractionally cover the variables: upper bound not guaranteed"
            ),
            ValidationWarning::NegativeCountingNumber { region, value } => write!(
                f,
                "region {region} has counting number {value} < 0: upper bound not guaranteed"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Checks samples and counting numbers against the model.
///
/// Structural violations of the graph are caught when it is built; here the
/// fatal errors are sample inconsistencies. Counting numbers that break the
/// upper-bound guarantee only produce warnings.
pub fn validate_model(
    model: &Model,
    samples: &[Sample],
    counts: &CountingNumbers,
) -> Result<ValidationReport, ModelError> {
    let graph = model.graph();
    if counts.values().len() != graph.region_count() {
        return Err(ModelError::InvalidCounts(format!(
            "{} values for {} regions",
            counts.values().len(),
            graph.region_count()
        )));
    }
    let mut ids = HashSet::new();
    for sample in samples {
        if !ids.insert(sample.id) {
            return Err(ModelError::InvalidSample {
                sample: sample.id,
                reason: "duplicate sample id".into(),
            });
        }
        check_sample_shape(model, sample)?;
        for r in 0..graph.region_count() {
            let value = sample.loss[r][sample.truth[r]];
            if value != 0.0 {
                return Err(ModelError::NonzeroTrueLoss {
                    sample: sample.id,
                    region: r,
                    value,
                });
            }
        }
        check_truth_consistency(graph, sample)?;
        let expected = empirical_features(model, sample);
        if expected != sample.empirical {
            return Err(ModelError::InvalidSample {
                sample: sample.id,
                reason: "empirical feature sums do not match the true-label tables".into(),
            });
        }
    }
    let mut report = ValidationReport::default();
    for (region, &value) in counts.values().iter().enumerate() {
        if value < 0.0 {
            report
                .warnings
                .push(ValidationWarning::NegativeCountingNumber { region, value });
        }
    }
    if !counts.fractional_cover(graph) {
        report.warnings.push(ValidationWarning::NotFractionalCover);
    }
    Ok(report)
}

fn check_truth_consistency(graph: &RegionGraph, sample: &Sample) -> Result<(), ModelError> {
    let mut assigned: Vec<Option<(usize, usize)>> = vec![None; graph.variable_count()];
    for region in graph.regions() {
        let labels = region.decode(sample.truth[region.id()]);
        for (&v, &l) in region.variables().iter().zip(&labels) {
            match assigned[v] {
                None => assigned[v] = Some((l, region.id())),
                Some((prev, first)) if prev != l => {
                    return Err(ModelError::InconsistentTruth {
                        sample: sample.id,
                        first,
                        second: region.id(),
                        variable: v,
                    })
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// `θ_r(ŷ_r) = [ℓ_r(y_r, ŷ_r)] + sum_{k in K_r} w_k phi_{k,r}(x, ŷ_r)`.
pub fn theta_table(
    model: &Model,
    sample: &Sample,
    r: usize,
    w: &Weights,
    include_loss: bool,
) -> Vec<f64> {
    let mut theta = if include_loss {
        sample.loss[r].clone()
    } else {
        vec![0.0; model.graph().region(r).label_count()]
    };
    let w = w.as_slice();
    for table in model.region_features(sample, r) {
        let wk = w[table.feature];
        if wk != 0.0 {
            for (t, &phi) in theta.iter_mut().zip(&table.values) {
                *t += wk * phi;
            }
        }
    }
    theta
}

/// θ tables of every region of `sample`.
pub fn potentials(model: &Model, sample: &Sample, w: &Weights, include_loss: bool) -> Vec<Vec<f64>> {
    (0..model.graph().region_count())
        .map(|r| theta_table(model, sample, r, w, include_loss))
        .collect()
}
