//! Synthetic binary-image denoising corpora on 4-connected grids.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::DataError;
use crate::model::{FeatureTable, Model, Region, RegionGraph, Sample};

/// Row-major bit matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::InvalidSpec("image dimensions must be positive".into()));
        }
        if bits.len() != width * height {
            return Err(DataError::DimensionMismatch(format!(
                "{} bits for a {width}x{height} image",
                bits.len()
            )));
        }
        Ok(BitImage { width, height, bits })
    }

    /// Horizontal and vertical bars through the center.
    pub fn cross(width: usize, height: usize) -> Result<Self, DataError> {
        let t = (width.min(height) + 4) / 5;
        let band = |i: usize, n: usize| {
            let lo = (n - t.min(n)) / 2;
            i >= lo && i < lo + t
        };
        let bits = (0..width * height)
            .map(|p| band(p % width, width) || band(p / width, height))
            .collect();
        BitImage::new(width, height, bits)
    }

    pub fn random(width: usize, height: usize, rng: &mut impl Rng) -> Result<Self, DataError> {
        let bits = (0..width * height).map(|_| rng.gen_bool(0.5)).collect();
        BitImage::new(width, height, bits)
    }

    /// Parses rows of `0`/`1` characters. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut width = None;
        let mut bits = Vec::new();
        let mut height = 0;
        for (i, line) in text.lines().enumerate() {
            let row = line.trim();
            if row.is_empty() {
                continue;
            }
            let err = |message: String| DataError::Bitmap { line: i + 1, message };
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(err(format!("row has {} pixels, expected {w}", row.len())))
                }
                _ => {}
            }
            for c in row.chars() {
                match c {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => return Err(err(format!("unexpected character {other:?}"))),
                }
            }
            height += 1;
        }
        let width = width.ok_or(DataError::Bitmap {
            line: 0,
            message: "empty bitmap".into(),
        })?;
        BitImage::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Builds an image from per-pixel labels (nonzero is set).
    pub fn from_labels(width: usize, height: usize, labels: &[usize]) -> Result<Self, DataError> {
        BitImage::new(width, height, labels.iter().map(|&l| l != 0).collect())
    }
}

impl fmt::Display for BitImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.bits.chunks(self.width) {
            let s: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Corruption applied to each noisy copy.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Each bit flips independently; observations are ±1.
    Flip(f64),
    /// Observation is the bit plus `N(0, σ²)`.
    Gaussian(f64),
    /// Each class draws from an equal-weight mixture of two Gaussians `(mean, std)`.
    Bimodal {
        off: [(f64, f64); 2],
        on: [(f64, f64); 2],
    },
}

impl NoiseModel {
    /// Mixture parameters used when no others are given.
    pub fn bimodal_default() -> Self {
        NoiseModel::Bimodal {
            off: [(0.08, 0.03), (0.46, 0.03)],
            on: [(0.55, 0.02), (0.42, 0.10)],
        }
    }

    fn check(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        match *self {
            NoiseModel::Flip(p) if !(0.0..=1.0).contains(&p) => bad(format!("flip probability {p} outside [0, 1]")),
            NoiseModel::Gaussian(s) if !(s.is_finite() && s > 0.0) => bad(format!("gaussian sigma {s} must be positive")),
            NoiseModel::Bimodal { off, on } => {
                for (m, s) in off.iter().chain(on.iter()) {
                    if !(m.is_finite() && s.is_finite() && *s > 0.0) {
                        return bad(format!("mixture component ({m}, {s}) invalid"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn observe(&self, bit: bool, rng: &mut impl Rng) -> f64 {
        match *self {
            NoiseModel::Flip(p) => {
                let flipped = bit ^ rng.gen_bool(p);
                if flipped {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseModel::Gaussian(s) => f64::from(u8::from(bit)) + Normal::new(0.0, s).expect("checked").sample(rng),
            NoiseModel::Bimodal { off, on } => {
                let mix = if bit { on } else { off };
                let (m, s) = mix[usize::from(rng.gen_bool(0.5))];
                Normal::new(m, s).expect("checked").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tying {
    /// Four weights for the whole grid.
    Shared,
    /// Separate weights for every region.
    Full,
}

impl fmt::Display for Tying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tying::Shared => "shared",
            Tying::Full => "full",
        })
    }
}

impl std::str::FromStr for Tying {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(Tying::Shared),
            "full" => Ok(Tying::Full),
            other => Err(format!("unknown tying {other:?} (expected shared or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseImage {
    Cross,
    Random,
    Provided(BitImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSpec {
    pub width: usize,
    pub height: usize,
    pub noise: NoiseModel,
    pub num_train: usize,
    pub num_test: usize,
    pub base: BaseImage,
    pub tying: Tying,
    pub seed: u64,
}

impl DenoiseSpec {
    /// Flip-noise corpus with a cross base image and full tying.
    pub fn flip(width: usize, height: usize, flip_prob: f64, num_train: usize, num_test: usize, seed: u64) -> Self {
        DenoiseSpec {
            width,
            height,
            noise: NoiseModel::Flip(flip_prob),
            num_train,
            num_test,
            base: BaseImage::Cross,
            tying: Tying::Full,
            seed,
        }
    }

    fn check(&self) -> Result<(), DataError> {
        if self.width == 0 || self.height == 0 {
            return Err(DataError::InvalidSpec("width and height must be positive".into()));
        }
        if self.num_train == 0 || self.num_test == 0 {
            return Err(DataError::InvalidSpec("sample counts must be positive".into()));
        }
        if let BaseImage::Provided(img) = &self.base {
            if img.width() != self.width || img.height() != self.height {
                return Err(DataError::DimensionMismatch(format!(
                    "base image is {}x{}, spec is {}x{}",
                    img.width(),
                    img.height(),
                    self.width,
                    self.height
                )));
            }
        }
        self.noise.check()
    }
}

/// 4-connected grid: pixel `p = y·width + x` is singleton region `p` over
/// variable `p`; pairwise regions follow, visiting pixels in order and adding
/// the right neighbor then the down neighbor.
pub fn build_grid_graph(width: usize, height: usize) -> Result<RegionGraph, DataError> {
    if width == 0 || height == 0 {
        return Err(DataError::InvalidSpec("width and height must be positive".into()));
    }
    let n = width * height;
    let mut regions: Vec<Region> = (0..n)
        .map(|p| Region::new(p, vec![p], vec![2]).expect("valid singleton"))
        .collect();
    let mut edges = Vec::new();
    for (a, b) in grid_pairs(width, height) {
        let id = regions.len();
        regions.push(Region::new(id, vec![a, b], vec![2, 2]).expect("valid pair"));
        edges.push((id, a));
        edges.push((id, b));
    }
    RegionGraph::new(regions, &edges).map_err(|e| DataError::InvalidSpec(e.to_string()))
}

fn grid_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                pairs.push((p, p + 1));
            }
            if y + 1 < height {
                pairs.push((p, p + width));
            }
        }
    }
    pairs
}

/// Generated corpus. All samples carry the base image as ground truth.
#[derive(Debug, Clone)]
pub struct DenoiseDataset {
    pub model: Model,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub base: BitImage,
}

impl DenoiseDataset {
    pub fn singleton_count(&self) -> usize {
        self.base.width() * self.base.height()
    }

    pub fn pairwise_count(&self) -> usize {
        self.model.graph().region_count() - self.singleton_count()
    }
}

const ISING: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

// Feature ids per region family. Shared tying uses these directly; full tying
// gives every region its own pair of ids.
const OBS: usize = 0;
const BIAS: usize = 1;
const COUPLING: usize = 0;
const CONTRAST: usize = 1;

fn feature_id(tying: Tying, region: usize, slot: usize, pairwise: bool) -> usize {
    match tying {
        Tying::Shared => slot + if pairwise { 2 } else { 0 },
        Tying::Full => 2 * region + slot,
    }
}

/// Generates the model and noisy samples. Pure in `spec.seed`: the stream
/// draws the random base image (if any), then train copies, then test copies.
pub fn make_denoise_dataset(spec: &DenoiseSpec) -> Result<DenoiseDataset, DataError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = match &spec.base {
        BaseImage::Cross => BitImage::cross(spec.width, spec.height)?,
        BaseImage::Random => BitImage::random(spec.width, spec.height, &mut rng)?,
        BaseImage::Provided(img) => img.clone(),
    };
    let graph = build_grid_graph(spec.width, spec.height)?;
    let pixels = spec.width * spec.height;
    let pairs = grid_pairs(spec.width, spec.height);
    let feature_count = match spec.tying {
        Tying::Shared => 4,
        Tying::Full => 2 * graph.region_count(),
    };

    let mut static_features = vec![Vec::new(); graph.region_count()];
    for (p, tables) in static_features.iter_mut().enumerate().take(pixels) {
        tables.push(FeatureTable {
            feature: feature_id(spec.tying, p, BIAS, false),
            values: vec![-1.0, 1.0],
        });
    }
    for e in 0..pairs.len() {
        let r = pixels + e;
        static_features[r].push(FeatureTable {
            feature: feature_id(spec.tying, r, COUPLING, true),
            values: ISING.to_vec(),
        });
    }
    let model = Model::new(graph, feature_count, static_features).map_err(|e| DataError::InvalidSpec(e.to_string()))?;

    let truth: Vec<usize> = base
        .bits()
        .iter()
        .map(|&b| usize::from(b))
        .chain(pairs.iter().map(|&(a, b)| 2 * usize::from(base.bits()[a]) + usize::from(base.bits()[b])))
        .collect();
    let loss: Vec<Vec<f64>> = (0..model.graph().region_count())
        .map(|r| {
            if r < pixels {
                if truth[r] == 0 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                }
            } else {
                vec![0.0; 4]
            }
        })
        .collect();

    let draw = |id: usize, rng: &mut ChaCha8Rng| -> Result<Sample, DataError> {
        let obs: Vec<f64> = base.bits().iter().map(|&b| spec.noise.observe(b, rng)).collect();
        let mut features = vec![Vec::new(); model.graph().region_count()];
        for (p, tables) in features.iter_mut().enumerate().take(pixels) {
            tables.push(FeatureTable {
                feature: feature_id(spec.tying, p, OBS, false),
                values: vec![-obs[p], obs[p]],
            });
        }
        for (e, &(a, b)) in pairs.iter().enumerate() {
            let r = pixels + e;
            let d = (obs[a] - obs[b]).abs();
            features[r].push(FeatureTable {
                feature: feature_id(spec.tying, r, CONTRAST, true),
                values: ISING.iter().map(|v| v * d).collect(),
            });
        }
        Sample::new(&model, id, loss.clone(), features, truth.clone()).map_err(|e| DataError::InvalidSpec(e.to_string()))
    };

    let train = (0..spec.num_train).map(|i| draw(i, &mut rng)).collect::<Result<Vec<_>, _>>()?;
    let test = (0..spec.num_test).map(|i| draw(i, &mut rng)).collect::<Result<Vec<_>, _>>()?;
    Ok(DenoiseDataset { model, train, test, base })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelError {
    pub errors: usize,
    pub total: usize,
    pub percent: f64,
}

impl fmt::Display for PixelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "errors={} total={} percent={}", self.errors, self.total, self.percent)
    }
}

/// Hamming disagreement over a batch of label vectors.
pub fn pixel_error(predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<PixelError, DataError> {
    if predicted.len() != truth.len() {
        return Err(DataError::DimensionMismatch(format!(
            "{} predicted images, {} ground-truth images",
            predicted.len(),
            truth.len()
        )));
    }
    let mut errors = 0;
    let mut total = 0;
    for (i, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(DataError::DimensionMismatch(format!(
                "image {i}: {} predicted pixels, {} true pixels",
                p.len(),
                t.len()
            )));
        }
        errors += p.iter().zip(t).filter(|(a, b)| a != b).count();
        total += t.len();
    }
    let percent = if total == 0 {
        0.0
    } else {
        errors as f64 / total as f64 * 100.0
    };
    Ok(PixelError { errors, total, percent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, CountingNumbers};

    #[test]
    fn grid_counts() {
        let g = build_grid_graph(1, 1).unwrap();
        assert_eq!((g.region_count(), g.edges().len()), (1, 0));
        let g = build_grid_graph(2, 2).unwrap();
        assert_eq!((g.region_count(), g.edges().len()), (8, 8));
        let g = build_grid_graph(10, 10).unwrap();
        assert_eq!(g.region_count(), 280);
        assert_eq!(g.regions().iter().filter(|r| r.variables().len() == 2).count(), 180);
    }

    #[test]
    fn grid_bethe_numbers() {
        let (w, h) = (4, 3);
        let g = build_grid_graph(w, h).unwrap();
        let c = CountingNumbers::bethe(&g);
        for p in 0..w * h {
            let (x, y) = (p % w, p / w);
            let degree = [x > 0, x + 1 < w, y > 0, y + 1 < h].iter().filter(|&&b| b).count();
            assert_eq!(c.get(p), 1.0 - degree as f64);
        }
        for r in w * h..g.region_count() {
            assert_eq!(c.get(r), 1.0);
        }
    }

    #[test]
    fn generated_models_validate() {
        for tying in [Tying::Shared, Tying::Full] {
            let spec = DenoiseSpec {
                tying,
                ..DenoiseSpec::flip(4, 3, 0.2, 3, 2, 9)
            };
            let d = make_denoise_dataset(&spec).unwrap();
            let counts = CountingNumbers::ones(d.model.graph());
            assert!(validate_model(&d.model, &d.train, &counts).unwrap().is_clean());
            validate_model(&d.model, &d.test, &counts).unwrap();
            let k = match tying {
                Tying::Shared => 4,
                Tying::Full => 2 * d.model.graph().region_count(),
            };
            assert_eq!(d.model.feature_count(), k);
        }
    }

    #[test]
    fn full_tying_ids_are_distinct_per_region() {
        let spec = DenoiseSpec::flip(3, 2, 0.2, 1, 1, 0);
        let d = make_denoise_dataset(&spec).unwrap();
        let mut seen = vec![0usize; d.model.feature_count()];
        for r in 0..d.model.graph().region_count() {
            for t in d.model.region_features(&d.train[0], r) {
                seen[t.feature] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn noiseless_copies_match_base() {
        let d = make_denoise_dataset(&DenoiseSpec::flip(5, 4, 0.0, 2, 2, 1)).unwrap();
        for s in d.train.iter().chain(&d.test) {
            for p in 0..20 {
                let v = s.features[p][0].values[1];
                assert_eq!(v > 0.0, d.base.bits()[p]);
            }
        }
    }

    #[test]
    fn seeded_determinism_and_injectivity() {
        let obs = |seed| {
            let d = make_denoise_dataset(&DenoiseSpec::flip(10, 10, 0.2, 10, 1, seed)).unwrap();
            d.train
                .iter()
                .flat_map(|s| (0..100).map(move |p| s.features[p][0].values[1] > 0.0))
                .collect::<Vec<bool>>()
        };
        assert_eq!(obs(7), obs(7));
        let all: Vec<_> = (0..100).map(obs).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j], "seeds {i} and {j}");
            }
        }
    }

    #[test]
    fn bitmap_round_trip_and_errors() {
        let img = BitImage::parse("010\n111\n\n010\n").unwrap();
        assert_eq!((img.width(), img.height()), (3, 3));
        assert_eq!(BitImage::parse(&img.to_string()).unwrap(), img);
        assert!(matches!(BitImage::parse("01\n0x\n"), Err(DataError::Bitmap { line: 2, .. })));
        assert!(matches!(BitImage::parse("01\n011\n"), Err(DataError::Bitmap { line: 2, .. })));
    }

    #[test]
    fn cross_is_symmetric() {
        let img = BitImage::cross(10, 10).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(img.get(x, y), img.get(9 - x, y));
                assert_eq!(img.get(x, y), img.get(y, x));
            }
        }
        assert!(img.bits().iter().any(|&b| b) && img.bits().iter().any(|&b| !b));
    }

    #[test]
    fn gaussian_and_bimodal_observations() {
        for noise in [NoiseModel::Gaussian(0.3), NoiseModel::bimodal_default()] {
            let spec = DenoiseSpec {
                noise,
                ..DenoiseSpec::flip(6, 6, 0.0, 2, 1, 3)
            };
            let d = make_denoise_dataset(&spec).unwrap();
            let v = d.train[0].features[0][0].values[1];
            assert!(v.is_finite() && v != 1.0 && v != -1.0);
        }
        let bad = DenoiseSpec {
            noise: NoiseModel::Gaussian(0.0),
            ..DenoiseSpec::flip(2, 2, 0.0, 1, 1, 0)
        };
        assert!(make_denoise_dataset(&bad).is_err());
    }

    #[test]
    fn pixel_error_examples() {
        let a = vec![vec![0, 1, 1]];
        assert_eq!(pixel_error(&a, &a).unwrap().errors, 0);
        let ones = vec![vec![1; 100]];
        let zeros = vec![vec![0; 100]];
        assert_eq!(pixel_error(&ones, &zeros).unwrap().errors, 100);
        let truth = vec![vec![0; 100]; 10];
        let mut pred = truth.clone();
        pred[3][17] = 1;
        let e = pixel_error(&pred, &truth).unwrap();
        assert_eq!(e.errors, 1);
        assert!((e.percent - 0.1).abs() < 1e-12);
        assert!(pixel_error(&pred[..2], &truth).is_err());
    }
}
