//! Procedural pit-pattern phantoms and the dataset split topology.
//!
//! Four texture classes follow the Kudo pit-pattern families: round pits,
//! elongated (oval/tubular) pits, star-shaped (asteroid) pits and gyrus-like
//! ridges. Feature sizes are specified in microns and rendered at 10 microns
//! per pixel on a 224 px canvas (scaled proportionally for other sizes).
//! All phantoms of one `(class, geometry_variant)` share a layout; material
//! level sets imprint contrast and a 45 degree contact fades half the texture.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::augment::{gaussian_blur, gaussian_noise, mix64, RngStream};
use crate::error::{Error, Result};
use crate::image::{quantize, ImageBuffer};
use crate::io::{read_pgm, write_manifest, write_pgm, DatasetConfig};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PitClass {
    Asteroid,
    Gyrus,
    Oval,
    Round,
}

impl PitClass {
    pub const ALL: [PitClass; 4] = [PitClass::Asteroid, PitClass::Gyrus, PitClass::Oval, PitClass::Round];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn code(self) -> char {
        match self {
            PitClass::Asteroid => 'A',
            PitClass::Gyrus => 'G',
            PitClass::Oval => 'O',
            PitClass::Round => 'R',
        }
    }

    /// Dataset sample count per class: 57 / 57 / 55 / 60.
    pub fn sample_count(self) -> usize {
        match self {
            PitClass::Asteroid | PitClass::Gyrus => 57,
            PitClass::Oval => 55,
            PitClass::Round => 60,
        }
    }
}

impl fmt::Display for PitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for PitClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(PitClass::Asteroid),
            "G" => Ok(PitClass::Gyrus),
            "O" => Ok(PitClass::Oval),
            "R" => Ok(PitClass::Round),
            _ => Err(Error::InvalidInput(format!("unknown class code {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ContactAngle {
    Deg0,
    Deg45,
}

impl ContactAngle {
    pub fn degrees(self) -> u32 {
        match self {
            ContactAngle::Deg0 => 0,
            ContactAngle::Deg45 => 45,
        }
    }
}

impl FromStr for ContactAngle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(ContactAngle::Deg0),
            "45" => Ok(ContactAngle::Deg45),
            _ => Err(Error::InvalidInput(format!("unknown contact angle {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidInput(format!("unknown split {s:?}"))),
        }
    }
}

/// Expanded test-set partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TestGroup {
    /// Clean originals.
    A,
    /// Gaussian blur.
    B,
    /// Gaussian noise.
    C,
    /// Blur and noise.
    D,
}

impl TestGroup {
    pub const ALL: [TestGroup; 4] = [TestGroup::A, TestGroup::B, TestGroup::C, TestGroup::D];

    pub fn code(self) -> char {
        match self {
            TestGroup::A => 'A',
            TestGroup::B => 'B',
            TestGroup::C => 'C',
            TestGroup::D => 'D',
        }
    }
}

impl FromStr for TestGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(TestGroup::A),
            "B" => Ok(TestGroup::B),
            "C" => Ok(TestGroup::C),
            "D" => Ok(TestGroup::D),
            _ => Err(Error::InvalidInput(format!("unknown test group {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhantomSpec {
    pub class: PitClass,
    /// 1..=10
    pub geometry_variant: u8,
    /// 1..=4, softest to hardest imprint.
    pub material_level: u8,
    pub contact_angle: ContactAngle,
    /// Layout seed, shared by every phantom of the same class and variant.
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.geometry_variant) || !(1..=4).contains(&self.material_level) {
            return Err(Error::InvalidInput(format!(
                "phantom indices out of range: geometry {} material {}",
                self.geometry_variant, self.material_level
            )));
        }
        Ok(())
    }
}

const MICRONS_PER_PIXEL: f64 = 10.0;
const REFERENCE_SIZE: f64 = 224.0;
const BACKGROUND: f64 = 55.0;
const GRAIN_SIGMA: f64 = 2.0;

/// Imprint amplitude for a material level: four equal steps.
pub fn material_amplitude(level: u8) -> f64 {
    90.0 + 20.0 * f64::from(level - 1)
}

struct Canvas {
    size: usize,
    height: Vec<f64>,
    /// Soft-edge width in pixels.
    edge: f64,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Self {
            size,
            height: vec![0.0; size * size],
            edge: 1.5 * size as f64 / REFERENCE_SIZE,
        }
    }

    /// Raises the height field inside a shape given by its signed distance
    /// (positive inside) over the bounding box around `(cx, cy)`.
    fn stamp(&mut self, cx: f64, cy: f64, reach: f64, sdf: impl Fn(f64, f64) -> f64) {
        let n = self.size as isize;
        let x0 = ((cx - reach).floor() as isize).max(0);
        let x1 = ((cx + reach).ceil() as isize).min(n - 1);
        let y0 = ((cy - reach).floor() as isize).max(0);
        let y1 = ((cy + reach).ceil() as isize).min(n - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = sdf(x as f64 - cx, y as f64 - cy);
                let v = (d / self.edge + 0.5).clamp(0.0, 1.0);
                let h = &mut self.height[(y * n + x) as usize];
                *h = h.max(v);
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64) {
        self.stamp(cx, cy, r + 2.0, |dx, dy| r - (dx * dx + dy * dy).sqrt());
    }

    fn ellipse(&mut self, cx: f64, cy: f64, a: f64, b: f64, theta: f64) {
        let (s, c) = theta.sin_cos();
        self.stamp(cx, cy, a + 2.0, |dx, dy| {
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            let rho = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
            (1.0 - rho) * b
        });
    }

    fn star(&mut self, cx: f64, cy: f64, r: f64, points: u32, rot: f64) {
        let n = f64::from(points);
        self.stamp(cx, cy, r + 2.0, |dx, dy| {
            let phi = dy.atan2(dx) - rot;
            let boundary = r * (0.35 + 0.65 * (n * phi / 2.0).cos().abs().powf(3.0));
            boundary - (dx * dx + dy * dy).sqrt()
        });
    }
}

/// Jittered lattice points covering the canvas with margin.
fn lattice(
    rng: &mut ChaCha8Rng,
    size: f64,
    along: f64,
    across: f64,
    theta: f64,
    jitter: f64,
) -> Vec<(f64, f64)> {
    let (s, c) = theta.sin_cos();
    let (ox, oy) = (rng.gen_range(0.0..along), rng.gen_range(0.0..across));
    let reach = (size * 1.5 / along.min(across)).ceil() as i64 + 1;
    let mid = size / 2.0;
    let mut pts = Vec::new();
    for j in -reach..=reach {
        for i in -reach..=reach {
            // brick offset on alternate rows
            let u = i as f64 * along + if j % 2 == 0 { 0.0 } else { along / 2.0 } + ox;
            let v = j as f64 * across + oy;
            let x = mid + c * u - s * v + rng.gen_range(-jitter..=jitter) * along;
            let y = mid + s * u + c * v + rng.gen_range(-jitter..=jitter) * across;
            if x > -along && x < size + along && y > -along && y < size + along {
                pts.push((x, y));
            }
        }
    }
    pts
}

fn render_height(spec: &PhantomSpec, size: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let px = size as f64 / REFERENCE_SIZE / MICRONS_PER_PIXEL;
    let um = |microns: f64| microns * px;
    let sz = size as f64;
    let mut canvas = Canvas::new(size);
    let theta0 = rng.gen_range(0.0..std::f64::consts::PI);
    match spec.class {
        PitClass::Round => {
            let d_mean = um(rng.gen_range(300.0..=450.0));
            let spacing = um(600.0) * rng.gen_range(0.9..1.1);
            for (x, y) in lattice(&mut rng, sz, spacing, spacing * 0.87, theta0, 0.12) {
                let d = d_mean * rng.gen_range(0.85..1.15);
                if rng.gen_bool(0.95) {
                    canvas.disc(x, y, d / 2.0);
                }
            }
        }
        PitClass::Oval => {
            let major = um(rng.gen_range(500.0..=900.0));
            let minor = major * rng.gen_range(0.32..0.42);
            let period = um(2000.0);
            let psi = rng.gen_range(0.0..std::f64::consts::TAU);
            let wobble = rng.gen_range(0.2..0.45);
            for (x, y) in lattice(&mut rng, sz, major * 1.15, minor * 2.2, theta0, 0.08) {
                let phase = (x * psi.cos() + y * psi.sin()) / period * std::f64::consts::TAU;
                let theta = theta0 + wobble * phase.sin();
                let m = major * rng.gen_range(0.9..1.1);
                canvas.ellipse(x, y, m / 2.0, minor / 2.0, theta);
            }
        }
        PitClass::Asteroid => {
            let r_mean = um(rng.gen_range(400.0..=800.0)) / 2.0;
            let spacing = um(600.0).max(2.2 * r_mean);
            for (x, y) in lattice(&mut rng, sz, spacing, spacing * 0.87, theta0, 0.12) {
                let points = rng.gen_range(4..=6);
                let rot = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = r_mean * rng.gen_range(0.85..1.15);
                canvas.star(x, y, r, points, rot);
            }
        }
        PitClass::Gyrus => {
            let width = um(rng.gen_range(100.0..=140.0));
            let step = 1.5 * sz / REFERENCE_SIZE;
            let mean_len = um(1700.0);
            let ridges = (0.6 * sz * sz / (mean_len * width)).round() as usize;
            for _ in 0..ridges {
                let len = mean_len * rng.gen_range(0.7..1.3);
                let (mut x, mut y) = (rng.gen_range(0.0..sz), rng.gen_range(0.0..sz));
                let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut turn = 0.0f64;
                let mut walked = 0.0;
                while walked < len {
                    canvas.disc(x, y, width / 2.0);
                    turn = (0.9 * turn + rng.gen_range(-0.04..0.04)).clamp(-0.12, 0.12);
                    heading += turn;
                    x += step * heading.cos();
                    y += step * heading.sin();
                    // turn back into the canvas rather than wander off it
                    if !(0.0..sz).contains(&x) {
                        heading = std::f64::consts::PI - heading;
                        x = x.clamp(0.0, sz);
                    }
                    if !(0.0..sz).contains(&y) {
                        heading = -heading;
                        y = y.clamp(0.0, sz);
                    }
                    walked += step;
                }
            }
        }
    }
    canvas.height
}

/// Renders one phantom as a `size x size` texture image.
pub fn render_phantom(spec: &PhantomSpec, size: usize) -> Result<ImageBuffer> {
    spec.validate()?;
    if size < 8 {
        return Err(Error::InvalidInput(format!("phantom size {size} is too small")));
    }
    let height = render_height(spec, size);
    let detail = RngStream::new(spec.seed, mix64(u64::from(spec.material_level) << 8 | u64::from(spec.contact_angle.degrees())));
    let mut rng = detail.rng();
    let amplitude = material_amplitude(spec.material_level);
    let fade_dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let (fs, fc) = fade_dir.sin_cos();
    let grain = Normal::new(0.0, GRAIN_SIGMA).expect("positive sigma");
    let sz = size as f64;
    let mut values = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let ramp = match spec.contact_angle {
                ContactAngle::Deg0 => 1.0,
                ContactAngle::Deg45 => {
                    let u = ((x as f64 - sz / 2.0) * fc + (y as f64 - sz / 2.0) * fs) / sz + 0.5;
                    if u <= 0.5 {
                        1.0
                    } else {
                        (1.0 - 1.7 * (u - 0.5)).max(0.15)
                    }
                }
            };
            let v = BACKGROUND + amplitude * height[y * size + x] * ramp + grain.sample(&mut rng);
            values.push(v);
        }
    }
    ImageBuffer::new(size, size, values.iter().map(|&v| quantize(v)).collect())
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub class: PitClass,
    pub geometry_variant: u8,
    pub material_level: u8,
    pub contact_angle: ContactAngle,
    pub split: Option<Split>,
    pub fold: Option<usize>,
    pub group: Option<TestGroup>,
    pub blur_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
    /// Image path relative to the dataset directory, `/`-separated.
    pub path: String,
}

impl ManifestRecord {
    pub fn label(&self) -> usize {
        self.class.label()
    }

    /// Identifier that stays unique across the expanded test groups.
    pub fn record_id(&self) -> String {
        match self.group {
            Some(g) => format!("{}-{}", self.sample_id, g.code()),
            None => self.sample_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn train(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.split == Some(Split::Train))
    }

    pub fn expanded_test(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.group.is_some())
    }

    pub fn test_group(&self, group: TestGroup) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.group == Some(group))
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut s = DatasetSummary::default();
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.records {
            if seen.insert(r.sample_id.clone()) {
                s.total += 1;
                *s.per_class.entry(r.class.code()).or_default() += 1;
                match r.split {
                    Some(Split::Train) => s.train += 1,
                    Some(Split::Test) => s.test += 1,
                    None => {}
                }
            }
            if let Some(f) = r.fold {
                if s.fold_sizes.len() <= f {
                    s.fold_sizes.resize(f + 1, 0);
                }
                s.fold_sizes[f] += 1;
            }
            if let Some(g) = r.group {
                s.expanded_test += 1;
                *s.per_group.entry(g.code()).or_default() += 1;
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub per_class: BTreeMap<char, usize>,
    pub train: usize,
    pub test: usize,
    pub fold_sizes: Vec<usize>,
    pub expanded_test: usize,
    pub per_group: BTreeMap<char, usize>,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |m: &BTreeMap<char, usize>| m.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(" ");
        writeln!(f, "samples        {}  ({})", self.total, join(&self.per_class))?;
        writeln!(f, "train / test   {} / {}", self.train, self.test)?;
        writeln!(f, "fold sizes     {:?}", self.fold_sizes)?;
        write!(f, "expanded test  {}  ({})", self.expanded_test, join(&self.per_group))
    }
}

const ANGLED_KEY: u64 = 0x616e_676c_6564;
const SPLIT_KEY: u64 = 0x0073_706c_6974;
const FOLD_KEY: u64 = 0x666f_6c64;
const GROUP_KEY: u64 = 0x0067_726f_7570;

fn layout_seed(root_seed: u64, class: PitClass, variant: u8) -> u64 {
    mix64(root_seed ^ mix64((class.label() as u64) << 8 | u64::from(variant)))
}

fn class_rng(seed: u64, key: u64, class: PitClass) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(key ^ class.label() as u64)))
}

/// The 229 phantom specs: every (class, variant, material) at 0 degrees, then
/// per class the first few 45 degree candidates (5 random variants x 4
/// materials) needed to reach the class total.
pub fn dataset_specs(root_seed: u64) -> Vec<(String, PhantomSpec)> {
    let mut specs = Vec::new();
    for class in PitClass::ALL {
        let spec = |j: u8, k: u8, angle| PhantomSpec {
            class,
            geometry_variant: j,
            material_level: k,
            contact_angle: angle,
            seed: layout_seed(root_seed, class, j),
        };
        let mut class_specs = Vec::new();
        for j in 1..=10 {
            for k in 1..=4 {
                class_specs.push(spec(j, k, ContactAngle::Deg0));
            }
        }
        let mut variants: Vec<u8> = (1..=10).collect();
        variants.shuffle(&mut class_rng(root_seed, ANGLED_KEY, class));
        let mut chosen = variants[..5].to_vec();
        chosen.sort_unstable();
        let angled = class.sample_count() - class_specs.len();
        let candidates = chosen.iter().flat_map(|&j| (1..=4).map(move |k| (j, k)));
        class_specs.extend(candidates.take(angled).map(|(j, k)| spec(j, k, ContactAngle::Deg45)));
        specs.extend(class_specs);
    }
    specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("s{i:03}"), s))
        .collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Renders every phantom into `output_dir/images/` and writes an unsplit
/// manifest to `output_dir/manifest.csv`.
pub fn build_dataset(root_seed: u64, output_dir: &Path, image_size: usize, exec: Exec) -> Result<DatasetManifest> {
    let specs = dataset_specs(root_seed);
    create_dir(&output_dir.join("images"))?;
    let records = exec.try_map(&specs, |(id, spec)| {
        let img = render_phantom(spec, image_size)?;
        let path = format!("images/{id}.pgm");
        write_pgm(&img, &output_dir.join(&path))?;
        Ok::<_, Error>(ManifestRecord {
            sample_id: id.clone(),
            class: spec.class,
            geometry_variant: spec.geometry_variant,
            material_level: spec.material_level,
            contact_angle: spec.contact_angle,
            split: None,
            fold: None,
            group: None,
            blur_sigma: None,
            noise_sigma: None,
            path,
        })
    })?;
    let manifest = DatasetManifest { records };
    write_manifest(&manifest, &output_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Per-class test counts: `ceil(test_fraction * class_count)`.
pub fn test_counts(class_counts: &[usize], test_fraction: f64) -> Vec<usize> {
    class_counts
        .iter()
        .map(|&c| ((test_fraction * c as f64) - 1e-9).ceil().max(0.0) as usize)
        .collect()
}

/// Assigns train/test by a seeded shuffle within each class.
pub fn stratified_split(manifest: &DatasetManifest, test_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidInput(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut out = manifest.clone();
    for class in PitClass::ALL {
        let mut idx: Vec<usize> = (0..out.records.len()).filter(|&i| out.records[i].class == class).collect();
        let n_test = test_counts(&[idx.len()], test_fraction)[0];
        idx.shuffle(&mut class_rng(seed, SPLIT_KEY, class));
        for (rank, &i) in idx.iter().enumerate() {
            out.records[i].split = Some(if rank < n_test { Split::Test } else { Split::Train });
        }
    }
    Ok(out)
}

/// Stratified k-fold assignment of the training split: within-class
/// shuffles concatenated in class order, dealt round-robin.
pub fn kfold(manifest: &DatasetManifest, folds: usize, seed: u64) -> Result<DatasetManifest> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    let mut out = manifest.clone();
    let mut order = Vec::new();
    for class in PitClass::ALL {
        let mut idx: Vec<usize> = (0..out.records.len())
            .filter(|&i| out.records[i].class == class && out.records[i].split == Some(Split::Train))
            .collect();
        idx.shuffle(&mut class_rng(seed, FOLD_KEY, class));
        order.extend(idx);
    }
    if order.len() < folds {
        return Err(Error::InvalidInput(format!("{} training samples cannot fill {folds} folds", order.len())));
    }
    for (pos, &i) in order.iter().enumerate() {
        out.records[i].fold = Some(pos % folds);
    }
    Ok(out)
}

/// FNV-1a of a sample id, stable across platforms and runs.
pub fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

type GroupSigmas = (Option<f64>, Option<f64>);

/// Blur and noise sigmas for groups A to D of one sample, each drawn
/// uniformly from `[1, cap]`.
pub fn group_sigmas(sample_id: &str, blur_cap: f64, noise_cap: f64, seed: u64) -> [GroupSigmas; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ GROUP_KEY ^ mix64(id_hash(sample_id))));
    let mut draw = |cap: f64| rng.gen_range(1.0..=cap);
    let b = draw(blur_cap);
    let c = draw(noise_cap);
    let (db, dn) = (draw(blur_cap), draw(noise_cap));
    [(None, None), (Some(b), None), (None, Some(c)), (Some(db), Some(dn))]
}

fn check_caps(blur_cap: f64, noise_cap: f64) -> Result<()> {
    if !(blur_cap >= 1.0 && noise_cap >= 1.0) {
        return Err(Error::InvalidInput("test-group sigma caps must be at least 1".into()));
    }
    Ok(())
}

/// Expands each test sample into groups A (clean), B (blur), C (noise) and
/// D (both).
pub fn build_test_groups(manifest: &DatasetManifest, blur_cap: f64, noise_cap: f64, seed: u64) -> Result<DatasetManifest> {
    check_caps(blur_cap, noise_cap)?;
    let mut records = Vec::with_capacity(manifest.records.len() * 2);
    let mut tests = 0;
    for r in &manifest.records {
        if r.split != Some(Split::Test) || r.group.is_some() {
            records.push(r.clone());
            continue;
        }
        tests += 1;
        let sigmas = group_sigmas(&r.sample_id, blur_cap, noise_cap, seed);
        for (g, (blur, noise)) in TestGroup::ALL.into_iter().zip(sigmas) {
            let path = match g {
                TestGroup::A => r.path.clone(),
                _ => format!("test/{}_{}.pgm", r.sample_id, g.code()),
            };
            records.push(ManifestRecord {
                group: Some(g),
                blur_sigma: blur,
                noise_sigma: noise,
                path,
                ..r.clone()
            });
        }
    }
    if tests == 0 {
        return Err(Error::InvalidInput("manifest has no test split; run stratified_split first".into()));
    }
    Ok(DatasetManifest { records })
}

/// Blurs (first) and then adds noise; the noise stream is keyed by sample
/// and group.
pub fn perturb(clean: &ImageBuffer, sample_id: &str, group: TestGroup, sigmas: GroupSigmas, seed: u64) -> Result<ImageBuffer> {
    let mut img = clean.clone();
    if let Some(s) = sigmas.0 {
        img = gaussian_blur(&img, s)?;
    }
    if let Some(s) = sigmas.1 {
        let stream = RngStream::new(seed, mix64(id_hash(sample_id) ^ ((group as u64) << 56)));
        img = gaussian_noise(&img, s, &stream)?;
    }
    Ok(img)
}

/// Applies a test record's perturbation to its clean image.
pub fn perturb_for_group(clean: &ImageBuffer, record: &ManifestRecord, seed: u64) -> Result<ImageBuffer> {
    let group = record.group.unwrap_or(TestGroup::A);
    perturb(clean, &record.sample_id, group, (record.blur_sigma, record.noise_sigma), seed)
}

/// The four group views of a training sample, built exactly like the
/// expanded test set. Used as the validation images of cross-validation.
pub fn group_views(sample_id: &str, clean: &ImageBuffer, blur_cap: f64, noise_cap: f64, seed: u64) -> Result<Vec<(String, ImageBuffer)>> {
    check_caps(blur_cap, noise_cap)?;
    let sigmas = group_sigmas(sample_id, blur_cap, noise_cap, seed);
    TestGroup::ALL
        .into_iter()
        .zip(sigmas)
        .map(|(g, sg)| Ok((format!("{sample_id}-{}", g.code()), perturb(clean, sample_id, g, sg, seed)?)))
        .collect()
}

/// Writes the perturbed images of groups B to D under `dir/test/`.
pub fn materialize_test_groups(manifest: &DatasetManifest, dir: &Path, seed: u64, exec: Exec) -> Result<()> {
    create_dir(&dir.join("test"))?;
    let perturbed: Vec<&ManifestRecord> = manifest
        .expanded_test()
        .filter(|r| r.group != Some(TestGroup::A))
        .collect();
    exec.try_map(&perturbed, |r| {
        let clean = read_pgm(&dir.join("images").join(format!("{}.pgm", r.sample_id)))?;
        write_pgm(&perturb_for_group(&clean, r, seed)?, &dir.join(&r.path))
    })?;
    Ok(())
}

/// Full dataset: render, split, fold, expand the test set, write the manifest.
pub fn generate_dataset(cfg: &DatasetConfig, root_seed: u64, dir: &Path, exec: Exec) -> Result<DatasetManifest> {
    let base = build_dataset(root_seed, dir, cfg.image_size, exec)?;
    let split = stratified_split(&base, cfg.test_fraction, root_seed)?;
    let folded = kfold(&split, cfg.folds, root_seed)?;
    let mut full = build_test_groups(&folded, cfg.blur_cap, cfg.noise_cap, root_seed)?;
    full.records.sort_by(|a, b| (&a.sample_id, a.group).cmp(&(&b.sample_id, b.group)));
    materialize_test_groups(&full, dir, root_seed, exec)?;
    write_manifest(&full, &dir.join("manifest.csv"))?;
    Ok(full)
}
