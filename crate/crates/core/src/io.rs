//! Text formats for models with samples, weights, counting numbers and labels.
//!
//! All formats are line oriented with whitespace-separated tokens; `#` starts
//! a comment that runs to the end of the line and blank lines are ignored.
//! Reals are written in the shortest form that parses back to the same bits.
//!
//! Model file layout (sections in this order, `COUNTS` and `SAMPLES` optional):
//!
//! ```text
//! BLENDSP 1
//! REGIONS <n>
//! <id> <nvars> <var>... <card>...      # n lines, ids 0..n in order
//! EDGES <m>
//! <parent> <child>                     # m lines
//! FEATURES <K>
//! <k> <region> <value>...              # sample-independent tables
//! COUNTS
//! <region> <c>                         # one line per region
//! SAMPLES <s>
//! SAMPLE <id>                          # s blocks
//! LOSS <region> <value>...             # omitted regions have zero loss
//! FEAT <k> <region> <value>...
//! TRUTH <label of region 0> ... <label of region n-1>
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use crate::error::{FormatError, ModelError};
use crate::model::{
    validate_model, CountingNumbers, CountingScheme, FeatureTable, Model, Region, RegionGraph, Sample,
    ValidationReport, Weights,
};

pub const MODEL_HEADER: &str = "BLENDSP 1";
pub const WEIGHTS_HEADER: &str = "BLENDSP-W 1";
pub const COUNTS_HEADER: &str = "BLENDSP-C 1";
pub const LABELS_HEADER: &str = "BLENDSP-L 1";

const SECTIONS: [&str; 5] = ["REGIONS", "EDGES", "FEATURES", "COUNTS", "SAMPLES"];

/// Shortest round-trip decimal, switching to exponent form for very large or
/// very small magnitudes.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn join_reals(values: &[f64]) -> String {
    values.iter().map(|&v| format_real(v)).collect::<Vec<_>>().join(" ")
}

struct Line<'a> {
    number: usize,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Line<'a> {
    fn first(&self) -> &'a str {
        self.tokens[0].1
    }

    fn is_keyword(&self) -> bool {
        self.first().starts_with(|c: char| c.is_ascii_alphabetic())
    }

    fn end_column(&self) -> usize {
        self.tokens.last().map_or(1, |(c, t)| c + t.len())
    }

    fn error(&self, column: usize, message: impl Into<String>) -> FormatError {
        FormatError::syntax(self.number, column, message)
    }

    fn fields(&self) -> Fields<'_, 'a> {
        Fields { line: self, index: 0 }
    }
}

/// Sequential typed access to the tokens of one line.
struct Fields<'l, 'a> {
    line: &'l Line<'a>,
    index: usize,
}

impl<'l, 'a> Fields<'l, 'a> {
    fn column(&self) -> usize {
        self.line
            .tokens
            .get(self.index)
            .map_or(self.line.end_column(), |t| t.0)
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        let t = self
            .line
            .tokens
            .get(self.index)
            .copied()
            .ok_or_else(|| self.line.error(self.line.end_column(), format!("expected {what}")))?;
        self.index += 1;
        Ok(t)
    }

    fn word(&mut self, expected: &str) -> Result<(), FormatError> {
        let (col, t) = self.token(expected)?;
        if t != expected {
            return Err(self.line.error(col, format!("expected '{expected}', found '{t}'")));
        }
        Ok(())
    }

    fn count(&mut self, what: &str) -> Result<usize, FormatError> {
        let (col, t) = self.token(what)?;
        t.parse()
            .map_err(|_| self.line.error(col, format!("expected {what} (nonnegative integer), found '{t}'")))
    }

    fn real(&mut self, what: &str) -> Result<f64, FormatError> {
        let (col, t) = self.token(what)?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.line.error(col, format!("expected {what} (finite real), found '{t}'"))),
        }
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let remaining = self.line.tokens.len() - self.index;
        if remaining != n {
            return Err(self
                .line
                .error(self.column(), format!("expected {n} values for {what}, found {remaining}")));
        }
        (0..n).map(|_| self.real(what)).collect()
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.line.tokens.get(self.index) {
            None => Ok(()),
            Some((col, t)) => Err(self.line.error(*col, format!("unexpected token '{t}'"))),
        }
    }
}

fn lex(text: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (pos, ch) in content.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(pos),
                (true, Some(s)) => {
                    tokens.push((s + 1, &content[s..pos]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push((s + 1, &content[s..]));
        }
        if !tokens.is_empty() {
            lines.push(Line { number: i + 1, tokens });
        }
    }
    lines
}

fn decode_utf8(bytes: &[u8]) -> Result<&str, FormatError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let before = &bytes[..e.valid_up_to()];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = before.len() - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
        FormatError::syntax(line, column, "invalid UTF-8")
    })
}

struct Cursor<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    total_lines: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            lines: lex(text),
            pos: 0,
            total_lines: text.lines().count(),
        }
    }

    fn peek(&self) -> Option<&Line<'a>> {
        self.lines.get(self.pos)
    }

    fn next(&mut self, expected: &str) -> Result<&Line<'a>, FormatError> {
        let eof = self.total_lines + 1;
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| FormatError::syntax(eof, 1, format!("unexpected end of file, expected {expected}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn header(&mut self, header: &str) -> Result<(), FormatError> {
        let line = self.next(&format!("header '{header}'"))?;
        let found: Vec<&str> = line.tokens.iter().map(|t| t.1).collect();
        if found.join(" ") != header {
            return Err(line.error(1, format!("expected header '{header}'")));
        }
        Ok(())
    }

    /// Consumes the header line of `section`, rejecting unknown or misplaced ones.
    fn section(&mut self, section: &str) -> Result<&Line<'a>, FormatError> {
        let line = self.next(&format!("section {section}"))?;
        let name = line.first();
        if name != section {
            let message = if SECTIONS.contains(&name) {
                format!("section {name} out of order, expected {section}")
            } else if line.is_keyword() {
                format!("unknown section '{name}'")
            } else {
                format!("expected section {section}, found '{name}'")
            };
            return Err(line.error(line.tokens[0].0, message));
        }
        Ok(line)
    }

    fn at_section(&self, section: &str) -> bool {
        self.peek().is_some_and(|l| l.first() == section)
    }

    fn at_data(&self) -> bool {
        self.peek().is_some_and(|l| !l.is_keyword())
    }
}

/// A model with its samples and optional per-region counting numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub samples: Vec<Sample>,
    pub counts: Option<CountingNumbers>,
}

impl ModelFile {
    /// Counting numbers from the file, or all ones.
    pub fn counts_or_ones(&self) -> CountingNumbers {
        self.counts
            .clone()
            .unwrap_or_else(|| CountingNumbers::ones(self.model.graph()))
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        write_model(&mut out, self).expect("writing to memory cannot fail");
        String::from_utf8(out).expect("writer emits UTF-8")
    }
}

pub fn parse_model(mut reader: impl Read) -> Result<(ModelFile, ValidationReport), FormatError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_model_bytes(&bytes)
}

pub fn parse_model_bytes(bytes: &[u8]) -> Result<(ModelFile, ValidationReport), FormatError> {
    parse_model_str(decode_utf8(bytes)?)
}

/// Parses and validates a model file. Validation warnings are returned
/// alongside the data; validation errors are returned as errors.
pub fn parse_model_str(text: &str) -> Result<(ModelFile, ValidationReport), FormatError> {
    let mut cur = Cursor::new(text);
    cur.header(MODEL_HEADER)?;

    let graph = parse_graph(&mut cur)?;
    let region_count = graph.region_count();

    let line = cur.section("FEATURES")?;
    let mut f = line.fields();
    f.word("FEATURES")?;
    let feature_count = f.count("feature count")?;
    f.finish()?;
    let mut static_features = vec![Vec::new(); region_count];
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    while cur.at_data() {
        let line = cur.next("feature table")?;
        let mut f = line.fields();
        let table = feature_table(&mut f, line, &graph, feature_count, &mut seen)?;
        static_features[table.0].push(table.1);
    }
    let model = Model::new(graph, feature_count, static_features)?;

    let counts = if cur.at_section("COUNTS") {
        Some(parse_counts_section(&mut cur, model.graph())?)
    } else {
        None
    };

    let mut samples = Vec::new();
    if cur.peek().is_some() {
        let line = cur.section("SAMPLES")?;
        let mut f = line.fields();
        f.word("SAMPLES")?;
        let count = f.count("sample count")?;
        f.finish()?;
        for _ in 0..count {
            samples.push(parse_sample(&mut cur, &model, &seen)?);
        }
    }
    if let Some(line) = cur.peek() {
        let message = if line.is_keyword() && !SECTIONS.contains(&line.first()) && line.first() != "SAMPLE" {
            format!("unknown section '{}'", line.first())
        } else {
            "unexpected content after the last section".to_string()
        };
        return Err(line.error(line.tokens[0].0, message));
    }

    let effective = counts.clone().unwrap_or_else(|| CountingNumbers::ones(model.graph()));
    let report = validate_model(&model, &samples, &effective)?;
    Ok((ModelFile { model, samples, counts }, report))
}

fn parse_graph(cur: &mut Cursor<'_>) -> Result<RegionGraph, FormatError> {
    let header = cur.section("REGIONS")?;
    let header_line = header.number;
    let mut f = header.fields();
    f.word("REGIONS")?;
    let n = f.count("region count")?;
    f.finish()?;
    let mut regions = Vec::new();
    let mut defined_on: Vec<usize> = Vec::new();
    for index in 0..n {
        let line = cur.next("region line")?;
        let mut f = line.fields();
        let col = f.column();
        let id = f.count("region id")?;
        if id != index {
            let message = match defined_on.get(id) {
                Some(first) => format!("duplicate region id {id} (first defined on line {first})"),
                None => format!("region id {id} out of sequence, expected {index}"),
            };
            return Err(line.error(col, message));
        }
        let nvars = f.count("variable count")?;
        if nvars > line.tokens.len() {
            return Err(line.error(f.column(), format!("region lists {nvars} variables but the line is too short")));
        }
        let vars = (0..nvars).map(|_| f.count("variable id")).collect::<Result<Vec<_>, _>>()?;
        let cards = (0..nvars).map(|_| f.count("cardinality")).collect::<Result<Vec<_>, _>>()?;
        f.finish()?;
        let region = Region::new(id, vars, cards).map_err(|e| line.error(col, e.to_string()))?;
        regions.push(region);
        defined_on.push(line.number);
    }

    let header = cur.section("EDGES")?;
    let mut f = header.fields();
    f.word("EDGES")?;
    let m = f.count("edge count")?;
    f.finish()?;
    let mut edges = Vec::new();
    let mut edge_lines = Vec::new();
    for _ in 0..m {
        let line = cur.next("edge line")?;
        let mut f = line.fields();
        let parent = f.count("parent region id")?;
        let child = f.count("child region id")?;
        f.finish()?;
        edges.push((parent, child));
        edge_lines.push(line.number);
    }
    RegionGraph::new(regions, &edges).map_err(|e| {
        let pair = match &e {
            ModelError::DanglingEdge { parent, child, .. }
            | ModelError::DuplicateEdge { parent, child }
            | ModelError::ContainmentViolated { parent, child } => Some((*parent, *child)),
            _ => None,
        };
        let line = match (pair, &e) {
            (Some(p), ModelError::DuplicateEdge { .. }) => edges.iter().rposition(|&q| q == p).map(|i| edge_lines[i]),
            (Some(p), _) => edges.iter().position(|&q| q == p).map(|i| edge_lines[i]),
            _ => None,
        };
        FormatError::syntax(line.unwrap_or(header_line), 1, e.to_string())
    })
}

/// `<k> <region> <values>` after any leading keyword has been consumed.
fn feature_table(
    f: &mut Fields<'_, '_>,
    line: &Line<'_>,
    graph: &RegionGraph,
    feature_count: usize,
    seen: &mut HashSet<(usize, usize)>,
) -> Result<(usize, FeatureTable), FormatError> {
    let col = f.column();
    let feature = f.count("feature id")?;
    if feature >= feature_count {
        return Err(line.error(col, format!("feature id {feature} out of range (feature count {feature_count})")));
    }
    let col = f.column();
    let r = f.count("region id")?;
    if r >= graph.region_count() {
        return Err(line.error(col, format!("region id {r} out of range")));
    }
    if !seen.insert((feature, r)) {
        return Err(line.error(1, format!("feature {feature} has two tables on region {r}")));
    }
    let values = f.reals(graph.region(r).label_count(), "feature table")?;
    Ok((r, FeatureTable { feature, values }))
}

fn parse_counts_section(cur: &mut Cursor<'_>, graph: &RegionGraph) -> Result<CountingNumbers, FormatError> {
    let header = cur.section("COUNTS")?;
    let header_line = header.number;
    if header.tokens.len() > 1 {
        return Err(header.error(header.tokens[1].0, "COUNTS takes no arguments"));
    }
    let mut values: Vec<Option<f64>> = vec![None; graph.region_count()];
    while cur.at_data() {
        let line = cur.next("counting number")?;
        let mut f = line.fields();
        let col = f.column();
        let r = f.count("region id")?;
        let c = f.real("counting number")?;
        f.finish()?;
        match values.get_mut(r) {
            None => return Err(line.error(col, format!("region id {r} out of range"))),
            Some(Some(_)) => return Err(line.error(col, format!("duplicate counting number for region {r}"))),
            Some(slot) => *slot = Some(c),
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(r, v)| v.ok_or_else(|| FormatError::syntax(header_line, 1, format!("no counting number for region {r}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CountingNumbers::from_values(graph, values)?)
}

fn parse_sample(cur: &mut Cursor<'_>, model: &Model, static_seen: &HashSet<(usize, usize)>) -> Result<Sample, FormatError> {
    let graph = model.graph();
    let r_count = graph.region_count();
    let head = cur.next("SAMPLE block")?;
    let head_number = head.number;
    let mut f = head.fields();
    f.word("SAMPLE")?;
    let id = f.count("sample id")?;
    f.finish()?;

    let mut loss: Vec<Option<Vec<f64>>> = vec![None; r_count];
    let mut features = vec![Vec::new(); r_count];
    let mut seen = static_seen.clone();
    loop {
        let line = cur.next("LOSS, FEAT or TRUTH line")?;
        let mut f = line.fields();
        let (col, keyword) = f.token("keyword")?;
        match keyword {
            "LOSS" => {
                let rc = f.column();
                let r = f.count("region id")?;
                if r >= r_count {
                    return Err(line.error(rc, format!("region id {r} out of range")));
                }
                if loss[r].is_some() {
                    return Err(line.error(rc, format!("duplicate LOSS for region {r}")));
                }
                loss[r] = Some(f.reals(graph.region(r).label_count(), "loss table")?);
            }
            "FEAT" => {
                let (r, table) = feature_table(&mut f, line, graph, model.feature_count(), &mut seen)?;
                features[r].push(table);
            }
            "TRUTH" => {
                let truth = (0..r_count).map(|_| f.count("true label")).collect::<Result<Vec<_>, _>>()?;
                f.finish()?;
                let loss = loss
                    .into_iter()
                    .enumerate()
                    .map(|(r, l)| l.unwrap_or_else(|| vec![0.0; graph.region(r).label_count()]))
                    .collect();
                return Sample::new(model, id, loss, features, truth)
                    .map_err(|e| FormatError::syntax(head_number, 1, e.to_string()));
            }
            other => return Err(line.error(col, format!("expected LOSS, FEAT or TRUTH, found '{other}'"))),
        }
    }
}

/// Writes the canonical form: regions in id order, edges in stored order,
/// tables grouped by region, all-zero loss tables omitted.
pub fn write_model(out: &mut impl Write, file: &ModelFile) -> std::io::Result<()> {
    let model = &file.model;
    let graph = model.graph();
    writeln!(out, "{MODEL_HEADER}")?;
    writeln!(out, "REGIONS {}", graph.region_count())?;
    for region in graph.regions() {
        let vars: Vec<String> = region.variables().iter().map(usize::to_string).collect();
        let cards: Vec<String> = region.cardinalities().iter().map(usize::to_string).collect();
        writeln!(out, "{} {} {} {}", region.id(), vars.len(), vars.join(" "), cards.join(" "))?;
    }
    writeln!(out, "EDGES {}", graph.edges().len())?;
    for edge in graph.edges() {
        writeln!(out, "{} {}", edge.parent, edge.child)?;
    }
    writeln!(out, "FEATURES {}", model.feature_count())?;
    for r in 0..graph.region_count() {
        for t in model.static_features(r) {
            writeln!(out, "{} {r} {}", t.feature, join_reals(&t.values))?;
        }
    }
    if let Some(counts) = &file.counts {
        writeln!(out, "COUNTS")?;
        for (r, c) in counts.values().iter().enumerate() {
            writeln!(out, "{r} {}", format_real(*c))?;
        }
    }
    writeln!(out, "SAMPLES {}", file.samples.len())?;
    for s in &file.samples {
        writeln!(out, "SAMPLE {}", s.id)?;
        for (r, l) in s.loss.iter().enumerate() {
            if l.iter().any(|v| *v != 0.0 || v.is_sign_negative()) {
                writeln!(out, "LOSS {r} {}", join_reals(l))?;
            }
        }
        for (r, tables) in s.features.iter().enumerate() {
            for t in tables {
                writeln!(out, "FEAT {} {r} {}", t.feature, join_reals(&t.values))?;
            }
        }
        let truth: Vec<String> = s.truth.iter().map(usize::to_string).collect();
        writeln!(out, "TRUTH {}", truth.join(" "))?;
    }
    Ok(())
}

/// Trained weights plus the settings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub weights: Weights,
    pub eps: f64,
    pub c_reg: f64,
    pub scheme: CountingScheme,
}

impl WeightsFile {
    pub fn to_text(&self) -> String {
        let mut s = format!("{WEIGHTS_HEADER}\n");
        for (k, w) in self.weights.as_slice().iter().enumerate() {
            s.push_str(&format!("{k} {}\n", format_real(*w)));
        }
        s.push_str(&format!(
            "eps={}\nC={}\nscheme={}\n",
            format_real(self.eps),
            format_real(self.c_reg),
            self.scheme
        ));
        s
    }
}

pub fn write_weights(out: &mut impl Write, file: &WeightsFile) -> std::io::Result<()> {
    out.write_all(file.to_text().as_bytes())
}

/// Parses a weights file and checks it has exactly `feature_count` weights.
pub fn parse_weights(text: &str, feature_count: usize) -> Result<WeightsFile, FormatError> {
    let mut cur = Cursor::new(text);
    cur.header(WEIGHTS_HEADER)?;
    let mut values = Vec::new();
    while cur.peek().is_some_and(|l| l.first().starts_with(|c: char| c.is_ascii_digit())) {
        let line = cur.next("weight line")?;
        let mut f = line.fields();
        let col = f.column();
        let k = f.count("feature id")?;
        if k != values.len() {
            return Err(line.error(col, format!("feature id {k} out of sequence, expected {}", values.len())));
        }
        values.push(f.real("weight")?);
        f.finish()?;
    }
    if values.len() != feature_count {
        return Err(FormatError::FeatureCountMismatch {
            expected: feature_count,
            found: values.len(),
        });
    }
    let mut meta = |key: &str| -> Result<(usize, &str, usize), FormatError> {
        let line = cur.next(&format!("'{key}=' line"))?;
        let (col, token) = line.tokens[0];
        let value = token
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| line.error(col, format!("expected '{key}=<value>'")))?;
        if line.tokens.len() > 1 {
            return Err(line.error(line.tokens[1].0, "unexpected token"));
        }
        Ok((line.number, value, col + key.len() + 1))
    };
    let real = |(line, v, col): (usize, &str, usize)| match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(FormatError::syntax(line, col, format!("expected finite real, found '{v}'"))),
    };
    let eps = real(meta("eps")?)?;
    let c_reg = real(meta("C")?)?;
    let (line, v, col) = meta("scheme")?;
    let scheme = v.parse().map_err(|e: String| FormatError::syntax(line, col, e))?;
    if let Some(line) = cur.peek() {
        return Err(line.error(line.tokens[0].0, "unexpected content after metadata"));
    }
    Ok(WeightsFile {
        weights: Weights::new(values),
        eps,
        c_reg,
        scheme,
    })
}

pub fn write_counts(counts: &CountingNumbers) -> String {
    let mut s = format!("{COUNTS_HEADER}\n");
    for (r, c) in counts.values().iter().enumerate() {
        s.push_str(&format!("{r} {}\n", format_real(*c)));
    }
    s
}

/// Parses a counting-number file: one `<region> <c>` line per region, in order.
pub fn parse_counts(text: &str, graph: &RegionGraph) -> Result<CountingNumbers, FormatError> {
    let mut cur = Cursor::new(text);
    cur.header(COUNTS_HEADER)?;
    let mut values = Vec::new();
    while cur.peek().is_some() {
        let line = cur.next("counting number")?;
        let mut f = line.fields();
        let col = f.column();
        let r = f.count("region id")?;
        if r != values.len() {
            return Err(line.error(col, format!("region id {r} out of sequence, expected {}", values.len())));
        }
        values.push(f.real("counting number")?);
        f.finish()?;
    }
    Ok(CountingNumbers::from_values(graph, values)?)
}

/// Per-sample label vectors keyed by sample id, in file order.
pub type Labels = Vec<(usize, Vec<usize>)>;

pub fn write_labels(labels: &[(usize, Vec<usize>)]) -> String {
    let mut s = format!("{LABELS_HEADER}\n");
    for (id, l) in labels {
        let l: Vec<String> = l.iter().map(usize::to_string).collect();
        s.push_str(&format!("{id} {}\n", l.join(" ")));
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Labels, FormatError> {
    let mut cur = Cursor::new(text);
    cur.header(LABELS_HEADER)?;
    let mut out = Vec::new();
    let mut first_seen: HashMap<usize, usize> = HashMap::new();
    while cur.peek().is_some() {
        let line = cur.next("label line")?;
        let mut f = line.fields();
        let col = f.column();
        let id = f.count("sample id")?;
        if let Some(first) = first_seen.insert(id, line.number) {
            return Err(line.error(col, format!("duplicate sample id {id} (first on line {first})")));
        }
        let labels = (1..line.tokens.len())
            .map(|_| f.count("label"))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((id, labels));
    }
    Ok(out)
}
