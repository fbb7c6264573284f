//! Seeded synthetic corpora with planted senses and changes.
//!
//! A "world" is a pair of period stores. Every sense lives on its own
//! coordinate axis and is surrounded by context words whose representative
//! embeddings sit close to that axis, so nearest-neighbor search around a
//! sense centroid finds that sense's context words. Target words may also
//! carry a period-specific word-form component that moves their tokens
//! without changing their meaning.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cluster::TwoPassParams;
use crate::config::{binary_preset, Language};
use crate::error::{Error, Result};
use crate::eval::DevSet;
use crate::linalg;
use crate::store::{synth_cloud, synth_labels, EmbeddingStore, SliceId, SynthComponent, TokenCloud};

pub const CONTEXT_WORDS_PER_SENSE: usize = 15;
pub const CONTEXT_TOKENS: usize = 6;
const CONTEXT_JITTER: f64 = 0.3;

/// splitmix64 over a base seed and a path of tags.
pub fn sub_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut x = seed;
    for &t in tags {
        x ^= t.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

pub fn basis(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

/// Planted senses of one target word: `(sense axis, token count)` per period.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub word: String,
    pub t0: Vec<(usize, usize)>,
    pub t1: Vec<(usize, usize)>,
    /// Weight of the period-specific word-form component; 0 disables it.
    pub drift: f64,
}

impl TargetSpec {
    pub fn new(word: impl Into<String>, t0: Vec<(usize, usize)>, t1: Vec<(usize, usize)>) -> Self {
        TargetSpec {
            word: word.into(),
            t0,
            t1,
            drift: 0.0,
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldParams {
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
    pub language: String,
    pub periods: (String, String),
    /// Added to every token of both stores.
    pub shift: Option<Vec<f64>>,
}

impl WorldParams {
    pub fn new(dim: usize, spread: f64, seed: u64) -> Self {
        WorldParams {
            dim,
            spread,
            seed,
            language: "en".into(),
            periods: ("t0".into(), "t1".into()),
            shift: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub t0: EmbeddingStore,
    pub t1: EmbeddingStore,
}

fn context_word(sense: usize, j: usize) -> String {
    format!("ctx{sense:03}_{j:02}")
}

/// Builds both period stores. Sense axes and drift axes must fit in `dim`:
/// drift axes are allocated after the largest sense axis, two per drifting
/// target.
pub fn build_world(targets: &[TargetSpec], params: &WorldParams) -> Result<World> {
    let mut senses: Vec<usize> = targets
        .iter()
        .flat_map(|t| t.t0.iter().chain(&t.t1).map(|&(s, _)| s))
        .collect();
    senses.sort_unstable();
    senses.dedup();
    let first_drift_axis = senses.last().map_or(0, |s| s + 1);
    let drifting = targets.iter().filter(|t| t.drift != 0.0).count();
    if first_drift_axis + 2 * drifting > params.dim {
        return Err(Error::InvalidParameter(format!(
            "dimension {} too small for {} sense axes and {} drifting targets",
            params.dim, first_drift_axis, drifting
        )));
    }
    let dim = params.dim;

    // Context words keep their meaning across periods; only token noise differs.
    let mut context_dirs = Vec::new();
    for &s in &senses {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(params.seed, &[1, s as u64]));
        for j in 0..CONTEXT_WORDS_PER_SENSE {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let g = linalg::unit(&g);
            let dir: Vec<f64> = basis(dim, s)
                .iter()
                .zip(&g)
                .map(|(e, x)| e + CONTEXT_JITTER * x)
                .collect();
            context_dirs.push((context_word(s, j), s, j, dir));
        }
    }

    let mut stores = Vec::new();
    for (p, period) in [&params.periods.0, &params.periods.1].into_iter().enumerate() {
        let mut clouds = Vec::new();
        for (name, s, j, dir) in &context_dirs {
            let comp = SynthComponent::new(dir.clone(), CONTEXT_TOKENS, params.spread);
            let seed = sub_seed(params.seed, &[2, p as u64, *s as u64, *j as u64]);
            clouds.push(synth_cloud(name, &[comp], seed)?);
        }
        let mut drift_slot = 0;
        for (ti, t) in targets.iter().enumerate() {
            let plan = if p == 0 { &t.t0 } else { &t.t1 };
            let drift_axis = if t.drift != 0.0 {
                let axis = first_drift_axis + 2 * drift_slot + p;
                drift_slot += 1;
                Some(axis)
            } else {
                None
            };
            let comps: Vec<SynthComponent> = plan
                .iter()
                .filter(|&&(_, n)| n > 0)
                .map(|&(s, n)| {
                    let mut dir = basis(dim, s);
                    if let Some(a) = drift_axis {
                        dir[a] += t.drift;
                    }
                    SynthComponent::new(dir, n, params.spread)
                })
                .collect();
            if comps.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "`{}` has no tokens in period {p}",
                    t.word
                )));
            }
            let seed = sub_seed(params.seed, &[3, p as u64, ti as u64]);
            clouds.push(synth_cloud(&t.word, &comps, seed)?);
        }
        let slice = SliceId::new(params.language.clone(), period.clone())?;
        let mut store = EmbeddingStore::new(slice, clouds, None)?;
        if let Some(shift) = &params.shift {
            store = store.shifted(shift)?;
        }
        stores.push(store);
    }
    let t1 = stores.pop().expect("two stores");
    let t0 = stores.pop().expect("two stores");
    Ok(World { t0, t1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantedChange {
    Gain,
    Loss,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkWord {
    pub word: String,
    pub change: PlantedChange,
    pub drift: bool,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub world: World,
    pub words: Vec<BenchmarkWord>,
    pub gold: BTreeMap<String, u8>,
}

pub const BENCHMARK_DIM: usize = 96;
pub const BENCHMARK_SPREAD: f64 = 0.05;
const BENCHMARK_DRIFT: f64 = 0.8;

/// Twenty target words: five gain a low-frequency sense, five lose one, ten
/// keep their senses. Some words of every kind carry period-specific
/// word-form drift.
pub fn synthetic_benchmark(seed: u64) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &[10]));
    let mut targets = Vec::new();
    let mut words = Vec::new();
    let mut axis = 0;
    let mut next_axis = || {
        axis += 1;
        axis - 1
    };
    for i in 0..20 {
        let (change, drift) = match i {
            0..=4 => (PlantedChange::Gain, i < 2),
            5..=9 => (PlantedChange::Loss, i < 7),
            10..=14 => (PlantedChange::None, true),
            _ => (PlantedChange::None, false),
        };
        let a = next_axis();
        let b = next_axis();
        let main = rng.gen_range(30..=45);
        let minor = rng.gen_range(8..=14);
        let (t0, t1) = match change {
            PlantedChange::Gain => (vec![(a, main)], vec![(a, main), (b, minor)]),
            PlantedChange::Loss => (vec![(a, main), (b, minor)], vec![(a, main)]),
            PlantedChange::None if i % 2 == 0 => {
                let other = rng.gen_range(12..=20);
                (vec![(a, main), (b, other)], vec![(a, main), (b, other)])
            }
            PlantedChange::None => (vec![(a, main)], vec![(a, rng.gen_range(30..=45))]),
        };
        let word = format!("target{i:02}");
        let spec = TargetSpec::new(word.clone(), t0, t1);
        targets.push(if drift { spec.with_drift(BENCHMARK_DRIFT) } else { spec });
        words.push(BenchmarkWord { word, change, drift });
    }
    let world = build_world(&targets, &WorldParams::new(BENCHMARK_DIM, BENCHMARK_SPREAD, seed))?;
    let gold = words
        .iter()
        .map(|w| (w.word.clone(), u8::from(w.change != PlantedChange::None)))
        .collect();
    Ok(Benchmark { world, words, gold })
}

/// Fractions of later-period tokens drawn from a new sense.
pub const RANKING_FRACTIONS: [f64; 5] = [0.0, 0.1, 0.25, 0.5, 1.0];

/// One word per fraction in [`RANKING_FRACTIONS`]: 40 earlier tokens of one
/// sense, 40 later tokens of which the given fraction come from a new sense.
/// Words are named `frac000`, `frac010`, ... by percentage.
pub fn ranking_fixture(seed: u64) -> Result<(World, Vec<(String, f64)>)> {
    let total = 40usize;
    let mut targets = Vec::new();
    let mut names = Vec::new();
    for (i, &f) in RANKING_FRACTIONS.iter().enumerate() {
        let (a, b) = (2 * i, 2 * i + 1);
        let new = (f * total as f64).round() as usize;
        let word = format!("frac{:03}", (f * 100.0).round() as usize);
        targets.push(TargetSpec::new(
            word.clone(),
            vec![(a, total)],
            vec![(a, total - new), (b, new)],
        ));
        names.push((word, f));
    }
    let world = build_world(&targets, &WorldParams::new(32, BENCHMARK_SPREAD, seed))?;
    Ok((world, names))
}

/// A dev word with two senses whose pairwise token distances are exact:
/// every within-sense pair sits at cosine distance `s²/(1+s²)` and every
/// cross-sense pair at `1 - cos θ/(1+s²)`.
///
/// Tokens are `normalize(u_c + s·e_j)` with a private axis `e_j` per token,
/// `u_0 = e_0` and `u_1 = cos θ·e_0 + sin θ·e_1`.
pub fn exact_two_sense_cloud(word: &str, per_sense: usize, s: f64, cos_theta: f64) -> Result<(TokenCloud, Vec<usize>)> {
    if !(s > 0.0) || !(-1.0..1.0).contains(&cos_theta) || per_sense == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad calibrated cloud s={s}, cos={cos_theta}, n={per_sense}"
        )));
    }
    let n = 2 * per_sense;
    let dim = 2 + n;
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for t in 0..n {
        let c = t / per_sense;
        let mut v = vec![0.0; dim];
        if c == 0 {
            v[0] = 1.0;
        } else {
            v[0] = cos_theta;
            v[1] = sin_theta;
        }
        v[2 + t] = s;
        rows.push(v);
        labels.push(c);
    }
    Ok((TokenCloud::from_rows_f64(word, &rows)?, labels))
}

/// Distance bounds for a calibrated dev word: the second-pass threshold
/// recovers the planted split exactly when `within < t1 <= between`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryBand {
    pub within: f64,
    pub between: f64,
}

impl RecoveryBand {
    pub fn of(s: f64, cos_theta: f64) -> Self {
        RecoveryBand {
            within: s * s / (1.0 + s * s),
            between: 1.0 - cos_theta / (1.0 + s * s),
        }
    }

    pub fn intersect(self, other: RecoveryBand) -> RecoveryBand {
        RecoveryBand {
            within: self.within.max(other.within),
            between: self.between.min(other.between),
        }
    }

    /// Whether `(t0, t1)` recovers the planted split when the first pass
    /// prunes clusters smaller than two tokens.
    pub fn recovers(&self, t0: f64, t1: f64) -> bool {
        t0 > self.within && t1 > self.within && t1 <= self.between
    }
}

/// Dev words with calibrated separations. With first-pass pruning of
/// singleton clusters, every word is recovered exactly for `t0` and `t1`
/// in the returned band.
pub fn calibrated_devset() -> Result<(DevSet, RecoveryBand)> {
    // (s, cos θ): within-distances 0.168..0.181, between-distances 0.290..0.323
    let planted = [
        ("bank", 0.46, 0.82),
        ("cell", 0.45, 0.85),
        ("plant", 0.47, 0.84),
        ("mouse", 0.46, 0.86),
    ];
    let mut dev = DevSet::default();
    let mut band = RecoveryBand {
        within: f64::NEG_INFINITY,
        between: f64::INFINITY,
    };
    for (word, s, c) in planted {
        let (cloud, labels) = exact_two_sense_cloud(word, 12, s, c)?;
        dev.insert(labels, cloud)?;
        band = band.intersect(RecoveryBand::of(s, c));
    }
    Ok((dev, band))
}

/// Pruning configuration the calibrated dev set is designed for.
pub const CALIBRATED_T0_LOW: usize = 2;

/// Noise model of a pseudo-language for 100:20 mixture experiments. Spread
/// and facet tilt are derived from the clustering thresholds so every
/// pseudo-language sits in the same regime relative to its own parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoLanguage {
    pub language: Language,
    /// Per-coordinate token noise.
    pub spread: f64,
    /// Tilt of the major sense's two facets away from its axis.
    pub facet_tilt: f64,
    /// Probability that a token is replaced by a uniformly random direction.
    pub outlier_rate: f64,
    pub params: TwoPassParams,
}

pub const MIXTURE_DIM: usize = 96;
/// Cosine between the two senses of a mixture.
pub const MIXTURE_SENSE_COS: f64 = 0.3;

impl PseudoLanguage {
    pub fn new(language: Language, outlier_rate: f64) -> Self {
        let preset = binary_preset(language);
        // within-facet token distance ~ x/(1+x) for x = spread²·dim; aim at half of t0
        let w = 0.5 * preset.t0_sc;
        let spread = (w / (1.0 - w) / MIXTURE_DIM as f64).sqrt();
        // facet-to-facet distance r²/(1+r²) at a third of t1
        let f = preset.t1_sc / 3.0;
        let facet_tilt = (f / (1.0 - f)).sqrt();
        PseudoLanguage {
            language,
            spread,
            facet_tilt,
            outlier_rate,
            params: preset.two_pass(),
        }
    }
}

/// One pseudo-language per preset, with increasing outlier rates.
pub fn pseudo_languages() -> Vec<PseudoLanguage> {
    Language::ALL
        .iter()
        .zip([0.0, 0.03, 0.06, 0.1])
        .map(|(&l, r)| PseudoLanguage::new(l, r))
        .collect()
}

/// A 100:20 two-sense mixture. The major sense is split evenly across two
/// facets; outlier tokens keep the gold label of the sense they replace.
pub fn planted_mixture(lang: &PseudoLanguage, seed: u64) -> Result<(TokenCloud, Vec<usize>)> {
    let dim = MIXTURE_DIM;
    let mut facet_a = basis(dim, 0);
    facet_a[2] = lang.facet_tilt;
    let mut facet_b = basis(dim, 0);
    facet_b[3] = lang.facet_tilt;
    let mut minor = basis(dim, 0);
    minor[0] = MIXTURE_SENSE_COS;
    minor[1] = (1.0 - MIXTURE_SENSE_COS * MIXTURE_SENSE_COS).sqrt();
    let comps = [
        SynthComponent::new(facet_a, 50, lang.spread),
        SynthComponent::new(facet_b, 50, lang.spread),
        SynthComponent::new(minor, 20, lang.spread),
    ];
    let labels: Vec<usize> = synth_labels(&comps).into_iter().map(|c| c / 2).collect();
    let cloud = synth_cloud("mixture", &comps, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &[20]));
    let mut rows: Vec<Vec<f64>> = (0..cloud.len()).map(|i| cloud.row_f64(i)).collect();
    for row in &mut rows {
        if rng.gen::<f64>() < lang.outlier_rate {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            *row = linalg::unit(&g);
        }
    }
    Ok((TokenCloud::from_rows_f64("mixture", &rows)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seed_depends_on_path() {
        assert_ne!(sub_seed(1, &[1, 2]), sub_seed(1, &[2, 1]));
        assert_eq!(sub_seed(9, &[3]), sub_seed(9, &[3]));
    }

    #[test]
    fn world_layout() {
        let targets = [
            TargetSpec::new("a", vec![(0, 10)], vec![(0, 8), (1, 6)]),
            TargetSpec::new("b", vec![(2, 7)], vec![(2, 7)]).with_drift(0.5),
        ];
        let w = build_world(&targets, &WorldParams::new(8, 0.05, 3)).unwrap();
        assert_eq!(w.t0.len(), 3 * CONTEXT_WORDS_PER_SENSE + 2);
        assert_eq!(w.t0.cloud("a").unwrap().len(), 10);
        assert_eq!(w.t1.cloud("a").unwrap().len(), 14);
        assert_eq!(w.t0.cloud("ctx001_14").unwrap().len(), CONTEXT_TOKENS);
        let again = build_world(&targets, &WorldParams::new(8, 0.05, 3)).unwrap();
        assert_eq!(w.t1, again.t1);
        assert!(build_world(&targets, &WorldParams::new(4, 0.05, 3)).is_err());
    }

    #[test]
    fn exact_cloud_distances() {
        let (cloud, labels) = exact_two_sense_cloud("w", 3, 0.5, 0.6).unwrap();
        let band = RecoveryBand::of(0.5, 0.6);
        let d = |i: usize, j: usize| {
            crate::store::cosine_distance(&cloud.row_f64(i), &cloud.row_f64(j)).unwrap()
        };
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
        assert!((d(0, 1) - band.within).abs() < 1e-6);
        assert!((d(4, 5) - band.within).abs() < 1e-6);
        assert!((d(0, 5) - band.between).abs() < 1e-6);
    }

    #[test]
    fn calibrated_band_is_nonempty() {
        let (dev, band) = calibrated_devset().unwrap();
        assert_eq!(dev.words.len(), 4);
        assert!(band.within < band.between);
        assert!(band.recovers(0.2, 0.25));
        assert!(!band.recovers(0.15, 0.25));
    }

    #[test]
    fn mixture_shape() {
        let langs = pseudo_languages();
        assert_eq!(langs.len(), 4);
        let (cloud, labels) = planted_mixture(&langs[2], 5).unwrap();
        assert_eq!(cloud.len(), 120);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 20);
    }

    #[test]
    fn benchmark_gold() {
        let b = synthetic_benchmark(1).unwrap();
        assert_eq!(b.gold.len(), 20);
        assert_eq!(b.gold.values().filter(|&&g| g == 1).count(), 10);
    }
}
