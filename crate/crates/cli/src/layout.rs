//! File names under the output directory.
//!
//! ```text
//! <out>/config.effective.toml     run_info.json
//! <out>/data/manifest.csv         data/images/sNNN.pgm   data/test/sNNN_<G>.pgm
//! <out>/model_<V>.ckpt            holdout_<V>.csv        train_report_<V>.json
//! <out>/temperature_<V>.txt       temperature_<V>.json   test_logits_<V>.csv
//! <out>/report_<V>_<tag>.json     reliability_<V>_<tag>.{csv,svg}
//! <out>/sweep_<V>_<tag>.csv       sweep_<V>_<tag>_{blur,noise}.svg
//! <out>/summary.csv               summary.md
//! ```
//!
//! `<tag>` is `uncalibrated` or `calibrated`.

use std::path::PathBuf;

use texcal_core::augment::Variant;

pub struct Layout {
    pub root: PathBuf,
}

pub fn tag(calibrated: bool) -> &'static str {
    if calibrated {
        "calibrated"
    } else {
        "uncalibrated"
    }
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn file(&self, name: String) -> PathBuf {
        self.root.join(name)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.csv")
    }

    pub fn run_info(&self) -> PathBuf {
        self.root.join("run_info.json")
    }

    pub fn checkpoint(&self, v: Variant) -> PathBuf {
        self.file(format!("model_{v}.ckpt"))
    }

    pub fn holdout(&self, v: Variant) -> PathBuf {
        self.file(format!("holdout_{v}.csv"))
    }

    pub fn train_report(&self, v: Variant) -> PathBuf {
        self.file(format!("train_report_{v}.json"))
    }

    pub fn temperature(&self, v: Variant) -> PathBuf {
        self.file(format!("temperature_{v}.txt"))
    }

    pub fn temperature_diagnostics(&self, v: Variant) -> PathBuf {
        self.file(format!("temperature_{v}.json"))
    }

    pub fn test_logits(&self, v: Variant) -> PathBuf {
        self.file(format!("test_logits_{v}.csv"))
    }

    pub fn report(&self, v: Variant, calibrated: bool) -> PathBuf {
        self.file(format!("report_{v}_{}.json", tag(calibrated)))
    }

    pub fn reliability_csv(&self, v: Variant, calibrated: bool) -> PathBuf {
        self.file(format!("reliability_{v}_{}.csv", tag(calibrated)))
    }

    pub fn reliability_svg(&self, v: Variant, calibrated: bool) -> PathBuf {
        self.file(format!("reliability_{v}_{}.svg", tag(calibrated)))
    }

    pub fn sweep_csv(&self, v: Variant, calibrated: bool) -> PathBuf {
        self.file(format!("sweep_{v}_{}.csv", tag(calibrated)))
    }

    pub fn sweep_svg(&self, v: Variant, calibrated: bool, perturbation: &str) -> PathBuf {
        self.file(format!("sweep_{v}_{}_{perturbation}.svg", tag(calibrated)))
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn summary_md(&self) -> PathBuf {
        self.root.join("summary.md")
    }
}
