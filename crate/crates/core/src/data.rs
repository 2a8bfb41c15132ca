//! Dataset loading, the 3-class label scheme, and stratified k-fold
//! splitting.
//!
//! Two layouts are accepted: a directory tree
//! `root/{covid19,no_finding,other_pneumonia[/<subdiagnosis>]}/*.{png,jpg}`,
//! or a CSV manifest (`path,label[,subdiagnosis]`, paths relative to the
//! manifest's directory). `other_pneumonia` aggregates the named
//! sub-diagnoses (SARS, streptococcus, klebsiella, legionellosis,
//! pneumocystis, non-COVID ARDS, chlamydia), which are kept on each item
//! for reporting.
//!
//! Splitting stratifies at the image level, not the patient level; with
//! real clinical data that is a known leakage risk when one patient
//! contributes several films.

use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Covid19,
    NoFinding,
    OtherPneumonia,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::Covid19,
        ClassLabel::NoFinding,
        ClassLabel::OtherPneumonia,
    ];

    /// Index used for one-hot label rows and probability columns.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Covid19 => 0,
            ClassLabel::NoFinding => 1,
            ClassLabel::OtherPneumonia => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            ClassLabel::Covid19 => "covid19",
            ClassLabel::NoFinding => "no_finding",
            ClassLabel::OtherPneumonia => "other_pneumonia",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassLabel::Covid19 => "COVID-19",
            ClassLabel::NoFinding => "No Finding",
            ClassLabel::OtherPneumonia => "Other Pneumonia",
        }
    }

    /// Parses a class or sub-diagnosis name. Sub-diagnoses map to
    /// `OtherPneumonia` with the name retained.
    pub fn parse(s: &str) -> Option<(ClassLabel, Option<String>)> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "covid19" | "covid_19" | "covid" => Some((ClassLabel::Covid19, None)),
            "no_finding" | "nofinding" | "normal" | "healthy" => {
                Some((ClassLabel::NoFinding, None))
            }
            "other_pneumonia" | "other" => Some((ClassLabel::OtherPneumonia, None)),
            "sars" | "streptococcus" | "klebsiella" | "legionellosis" | "pneumocystis"
            | "ards" | "chlamydia" => Some((ClassLabel::OtherPneumonia, Some(key))),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub label: ClassLabel,
    pub subdiagnosis: Option<String>,
}

/// An indexed, class-aware image collection. Items keep a stable order
/// (sorted by path within each loading step), which the fold splitter
/// depends on for determinism.
#[derive(Clone, Debug)]
pub struct Dataset {
    items: Vec<DatasetItem>,
    counts: BTreeMap<ClassLabel, usize>,
}

impl Dataset {
    pub fn from_items(items: Vec<DatasetItem>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut counts = BTreeMap::new();
        for item in &items {
            if !seen.insert(item.path.clone()) {
                return Err(Error::Dataset(format!(
                    "duplicate path {}",
                    item.path.display()
                )));
            }
            *counts.entry(item.label).or_insert(0) += 1;
        }
        Ok(Dataset { items, counts })
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<ClassLabel, usize> {
        &self.counts
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Loads a dataset from a class-directory tree, or from a CSV manifest when
/// `root` is a file. Images are decoded lazily at training time; loading
/// only checks existence.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if root.is_file() {
        load_manifest(root)
    } else if root.is_dir() {
        load_directory(root)
    } else {
        Err(Error::Dataset(format!(
            "dataset root {} does not exist",
            root.display()
        )))
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

fn load_directory(root: &Path) -> Result<Dataset> {
    let mut items = Vec::new();
    for label in ClassLabel::ALL {
        let dir = root.join(label.dir_name());
        if !dir.is_dir() {
            return Err(Error::Dataset(format!(
                "missing class directory '{}' under {}",
                label.dir_name(),
                root.display()
            )));
        }
        let before = items.len();
        for entry in sorted_entries(&dir)? {
            if entry.is_dir() {
                // A nested directory names a sub-diagnosis.
                let sub = entry
                    .file_name()
                    .and_then(|n| n.to_str())
                    .map(|s| s.to_ascii_lowercase());
                for nested in sorted_entries(&entry)? {
                    if is_image(&nested) {
                        items.push(DatasetItem {
                            path: nested,
                            label,
                            subdiagnosis: sub.clone(),
                        });
                    }
                }
            } else if is_image(&entry) {
                items.push(DatasetItem {
                    path: entry,
                    label,
                    subdiagnosis: None,
                });
            }
        }
        if items.len() == before {
            return Err(Error::Dataset(format!(
                "class '{}' has no images under {}",
                label.dir_name(),
                root.display()
            )));
        }
    }
    Dataset::from_items(items)
}

fn load_manifest(manifest: &Path) -> Result<Dataset> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::Input {
        path: manifest.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.to_ascii_lowercase().starts_with("path,") {
            continue; // header row
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Dataset(format!(
                "manifest line {} needs at least 'path,label': {line}",
                lineno + 1
            )));
        }
        let (label, parsed_sub) = ClassLabel::parse(fields[1]).ok_or_else(|| {
            Error::Dataset(format!(
                "manifest line {} has unknown label '{}'",
                lineno + 1,
                fields[1]
            ))
        })?;
        let sub = fields
            .get(2)
            .filter(|s| !s.is_empty())
            .map(|s| s.to_ascii_lowercase())
            .or(parsed_sub);
        let path = base.join(fields[0]);
        if !path.is_file() {
            return Err(Error::Input {
                path,
                reason: "listed in manifest but not found".into(),
            });
        }
        items.push(DatasetItem {
            path,
            label,
            subdiagnosis: sub,
        });
    }
    let ds = Dataset::from_items(items)?;
    for label in ClassLabel::ALL {
        if ds.count(label) == 0 {
            return Err(Error::Dataset(format!(
                "manifest lists no items for class '{}'",
                label.dir_name()
            )));
        }
    }
    Ok(ds)
}

/// Fold assignment for every dataset item: `assignments[i]` is the fold in
/// `[0, k)` where item `i` is held out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratified assignment: per class, items are shuffled on a class-specific
/// stream of `seed` and dealt round-robin over the `k` folds, so per-class
/// fold counts never differ by more than one.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Domain(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut per_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, item) in ds.items().iter().enumerate() {
        per_class.entry(item.label).or_default().push(i);
    }
    let mut assignments = vec![usize::MAX; ds.len()];
    for (label, mut indices) in per_class {
        if indices.len() < k {
            return Err(Error::Domain(format!(
                "class '{}' has {} items, fewer than k={k}",
                label.dir_name(),
                indices.len()
            )));
        }
        let mut rng = Rng::new(seed, &format!("kfold/{}", label.dir_name()));
        rng.shuffle(&mut indices);
        for (j, idx) in indices.into_iter().enumerate() {
            assignments[idx] = j % k;
        }
    }
    Ok(FoldPlan { k, assignments })
}

/// `(train, test)` index sets for one fold: test = fold `i`, train = the
/// rest. Disjoint and exhaustive by construction.
pub fn fold_split(ds: &Dataset, plan: &FoldPlan, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if plan.assignments.len() != ds.len() {
        return Err(Error::Domain(format!(
            "fold plan covers {} items, dataset has {}",
            plan.assignments.len(),
            ds.len()
        )));
    }
    if fold >= plan.k {
        return Err(Error::Domain(format!(
            "fold index {fold} out of range for k={}",
            plan.k
        )));
    }
    Ok((plan.train_indices(fold), plan.test_indices(fold)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn touch_png(path: &Path) {
        // 1x1 white PNG
        let img = image::RgbImage::from_pixel(1, 1, image::Rgb([255, 255, 255]));
        img.save(path).unwrap();
    }

    fn fake_dataset(class_sizes: [usize; 3]) -> Dataset {
        let mut items = Vec::new();
        for (label, &n) in ClassLabel::ALL.iter().zip(&class_sizes) {
            for i in 0..n {
                items.push(DatasetItem {
                    path: PathBuf::from(format!("{}/{}.png", label.dir_name(), i)),
                    label: *label,
                    subdiagnosis: None,
                });
            }
        }
        Dataset::from_items(items).unwrap()
    }

    #[test]
    fn directory_layout_loads_with_counts() {
        let dir = tempfile::tempdir().unwrap();
        for label in ClassLabel::ALL {
            let d = dir.path().join(label.dir_name());
            fs::create_dir_all(&d).unwrap();
            touch_png(&d.join("a.png"));
            touch_png(&d.join("b.png"));
        }
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 6);
        for label in ClassLabel::ALL {
            assert_eq!(ds.count(label), 2);
        }
    }

    #[test]
    fn subdiagnosis_directories_map_to_other_pneumonia() {
        let dir = tempfile::tempdir().unwrap();
        for label in [ClassLabel::Covid19, ClassLabel::NoFinding] {
            let d = dir.path().join(label.dir_name());
            fs::create_dir_all(&d).unwrap();
            touch_png(&d.join("a.png"));
        }
        let sars = dir.path().join("other_pneumonia/sars");
        fs::create_dir_all(&sars).unwrap();
        touch_png(&sars.join("x.png"));
        let ds = load_dataset(dir.path()).unwrap();
        let other: Vec<_> = ds
            .items()
            .iter()
            .filter(|i| i.label == ClassLabel::OtherPneumonia)
            .collect();
        assert_eq!(other.len(), 1);
        assert_eq!(other[0].subdiagnosis.as_deref(), Some("sars"));
    }

    #[test]
    fn manifest_maps_sars_label_to_other_pneumonia() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "b.png", "c.png"] {
            touch_png(&dir.path().join(name));
        }
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            "a.png,covid19\nb.png,no_finding\nc.png,sars\n",
        )
        .unwrap();
        let ds = load_dataset(&manifest).unwrap();
        let c = &ds.items()[2];
        assert_eq!(c.label, ClassLabel::OtherPneumonia);
        assert_eq!(c.subdiagnosis.as_deref(), Some("sars"));
    }

    #[test]
    fn missing_class_directory_names_the_class() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("covid19");
        fs::create_dir_all(&d).unwrap();
        touch_png(&d.join("a.png"));
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("no_finding"), "{err}");
    }

    #[test]
    fn duplicate_paths_are_rejected() {
        let item = DatasetItem {
            path: PathBuf::from("x.png"),
            label: ClassLabel::Covid19,
            subdiagnosis: None,
        };
        let err = Dataset::from_items(vec![item.clone(), item]).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
    }

    #[test]
    fn ten_items_one_class_split_evenly_over_five_folds() {
        let mut items = Vec::new();
        for i in 0..10 {
            items.push(DatasetItem {
                path: PathBuf::from(format!("{i}.png")),
                label: ClassLabel::Covid19,
                subdiagnosis: None,
            });
        }
        let ds = Dataset::from_items(items).unwrap();
        let plan = stratified_kfold(&ds, 5, 1).unwrap();
        for fold in 0..5 {
            assert_eq!(plan.test_indices(fold).len(), 2);
        }
    }

    #[test]
    fn paper_sized_classes_stratify_within_one() {
        // 152 healthy, 125 covid, 48 other: fold counts land in
        // {31,30} x {25} x {10,9}.
        let ds = fake_dataset([125, 152, 48]);
        let plan = stratified_kfold(&ds, 5, 7).unwrap();
        for fold in 0..5 {
            let test = plan.test_indices(fold);
            let count = |l: ClassLabel| {
                test.iter()
                    .filter(|&&i| ds.items()[i].label == l)
                    .count()
            };
            assert!([31, 30].contains(&count(ClassLabel::NoFinding)));
            assert_eq!(count(ClassLabel::Covid19), 25);
            assert!([10, 9].contains(&count(ClassLabel::OtherPneumonia)));
        }
    }

    #[test]
    fn class_smaller_than_k_errors_with_class_name() {
        let ds = fake_dataset([10, 10, 3]);
        let err = stratified_kfold(&ds, 5, 0).unwrap_err().to_string();
        assert!(err.contains("other_pneumonia"), "{err}");
    }

    #[test]
    fn folds_partition_the_dataset() {
        let ds = fake_dataset([20, 17, 13]);
        let plan = stratified_kfold(&ds, 5, 3).unwrap();
        let mut seen = vec![0usize; ds.len()];
        for fold in 0..5 {
            let (train, test) = fold_split(&ds, &plan, fold).unwrap();
            assert_eq!(train.len() + test.len(), ds.len());
            let train_set: BTreeSet<_> = train.iter().collect();
            assert!(test.iter().all(|i| !train_set.contains(i)));
            for i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn per_class_train_test_ratio_is_four_to_one_within_one() {
        let ds = fake_dataset([25, 30, 15]);
        let plan = stratified_kfold(&ds, 5, 11).unwrap();
        for fold in 0..5 {
            let (train, test) = fold_split(&ds, &plan, fold).unwrap();
            for label in ClassLabel::ALL {
                let tr = train
                    .iter()
                    .filter(|&&i| ds.items()[i].label == label)
                    .count() as f64;
                let te = test
                    .iter()
                    .filter(|&&i| ds.items()[i].label == label)
                    .count() as f64;
                // 4:1 within the ±1 stratification slack
                assert!((tr - 4.0 * te).abs() <= 4.0, "{label:?}: {tr} vs {te}");
            }
        }
    }

    #[test]
    fn plan_is_deterministic_per_seed() {
        let ds = fake_dataset([12, 9, 6]);
        assert_eq!(
            stratified_kfold(&ds, 3, 42).unwrap(),
            stratified_kfold(&ds, 3, 42).unwrap()
        );
        assert_ne!(
            stratified_kfold(&ds, 3, 42).unwrap(),
            stratified_kfold(&ds, 3, 43).unwrap()
        );
    }

    #[test]
    fn fold_index_out_of_range_errors() {
        let ds = fake_dataset([5, 5, 5]);
        let plan = stratified_kfold(&ds, 5, 0).unwrap();
        assert!(fold_split(&ds, &plan, 5).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Stratification invariant: per class and fold pair, counts
            // differ by at most 1.
            #[test]
            fn per_class_fold_counts_differ_by_at_most_one(
                n0 in 5usize..40, n1 in 5usize..40, n2 in 5usize..40, seed in 0u64..100
            ) {
                let ds = fake_dataset([n0, n1, n2]);
                let plan = stratified_kfold(&ds, 5, seed).unwrap();
                for label in ClassLabel::ALL {
                    let counts: Vec<usize> = (0..5)
                        .map(|f| {
                            plan.test_indices(f)
                                .iter()
                                .filter(|&&i| ds.items()[i].label == label)
                                .count()
                        })
                        .collect();
                    let min = counts.iter().min().unwrap();
                    let max = counts.iter().max().unwrap();
                    prop_assert!(max - min <= 1, "{label:?}: {counts:?}");
                }
            }
        }
    }
}
