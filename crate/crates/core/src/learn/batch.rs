//! Training batches extracted from solved hierarchical plans and their
//! on-disk archive (JSON lines, append-only).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::Sample;
use super::LearnError;
use crate::hier::{HierPlan, Hierarchy};

pub const SCHEMA_VERSION: u32 = 1;

/// One `(features, chosen slot)` pair from a generalized action's plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub family: String,
    pub ga: String,
    pub level: usize,
    pub run: u64,
    pub features: Vec<f64>,
    pub target: usize,
}

/// Records of one generalized-action family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanBatch {
    pub family: String,
    pub width: usize,
    pub records: Vec<BatchRecord>,
}

impl PlanBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.records.iter().map(|r| Sample { features: r.features.clone(), target: r.target, weight: 1.0 }).collect()
    }

    pub fn merge(&mut self, other: PlanBatch) -> Result<(), LearnError> {
        if !self.records.is_empty() && !other.records.is_empty() && self.width != other.width {
            return Err(LearnError::WidthMismatch { expected: self.width, got: other.width });
        }
        if self.records.is_empty() {
            self.width = other.width;
            self.family = other.family;
        }
        self.records.extend(other.records);
        Ok(())
    }
}

/// Walk solved plans and collect one record per step of every nested
/// generalized action that has a feature function, grouped by family.
pub fn extract_batches<S: Clone>(
    hierarchy: &Hierarchy<S>,
    plans: &[(u64, &HierPlan<S>)],
) -> Result<BTreeMap<String, PlanBatch>, LearnError> {
    let mut out: BTreeMap<String, PlanBatch> = BTreeMap::new();
    let mut error = None;
    for &(run, plan) in plans {
        plan.visit(0, &mut |level, p| {
            let ga = &hierarchy.gas[p.ga];
            let Some(features) = &ga.features else { return };
            let mut state = &p.start;
            for step in &p.steps {
                let x = features(&p.start, state);
                let batch = out.entry(ga.family.clone()).or_insert_with(|| PlanBatch {
                    family: ga.family.clone(),
                    width: x.len(),
                    records: Vec::new(),
                });
                if batch.width != x.len() {
                    error.get_or_insert(LearnError::WidthMismatch { expected: batch.width, got: x.len() });
                }
                batch.records.push(BatchRecord {
                    family: ga.family.clone(),
                    ga: ga.id.clone(),
                    level,
                    run,
                    features: x,
                    target: step.slot,
                });
                state = &step.to;
            }
        });
    }
    match error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header { schema: u32, family: String, width: usize },
    Record(BatchRecord),
}

/// Append-only JSON-lines archive of batch records. A header line fixes
/// each family's feature width before its first record.
#[derive(Debug)]
pub struct BatchArchive {
    path: PathBuf,
    widths: BTreeMap<String, usize>,
}

impl BatchArchive {
    /// Open or create; existing contents are validated.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        let path = path.as_ref().to_path_buf();
        let widths = if path.exists() { Self::scan(&path)?.0 } else { BTreeMap::new() };
        Ok(Self { path, widths })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, batch: &PlanBatch) -> Result<(), LearnError> {
        if batch.records.is_empty() {
            return Ok(());
        }
        let mut lines = Vec::new();
        match self.widths.get(&batch.family) {
            Some(&w) if w != batch.width => return Err(LearnError::WidthMismatch { expected: w, got: batch.width }),
            Some(_) => {}
            None => lines.push(Line::Header { schema: SCHEMA_VERSION, family: batch.family.clone(), width: batch.width }),
        }
        lines.extend(batch.records.iter().cloned().map(Line::Record));
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut buf = String::new();
        for line in &lines {
            buf.push_str(&serde_json::to_string(line).map_err(|e| LearnError::Format(e.to_string()))?);
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        self.widths.insert(batch.family.clone(), batch.width);
        Ok(())
    }

    /// Every family's accumulated batch.
    pub fn load(&self) -> Result<BTreeMap<String, PlanBatch>, LearnError> {
        if !self.path.exists() {
            return Ok(BTreeMap::new());
        }
        Ok(Self::scan(&self.path)?.1)
    }

    #[allow(clippy::type_complexity)]
    fn scan(path: &Path) -> Result<(BTreeMap<String, usize>, BTreeMap<String, PlanBatch>), LearnError> {
        let mut widths = BTreeMap::new();
        let mut batches: BTreeMap<String, PlanBatch> = BTreeMap::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| LearnError::Format(format!("line {}: {e}", i + 1)))?;
            match parsed {
                Line::Header { schema, family, width } => {
                    if schema != SCHEMA_VERSION {
                        return Err(LearnError::Format(format!("line {}: schema {schema}", i + 1)));
                    }
                    widths.insert(family, width);
                }
                Line::Record(r) => {
                    let Some(&w) = widths.get(&r.family) else {
                        return Err(LearnError::Format(format!("line {}: record before header of {}", i + 1, r.family)));
                    };
                    if r.features.len() != w {
                        return Err(LearnError::WidthMismatch { expected: w, got: r.features.len() });
                    }
                    let b = batches.entry(r.family.clone()).or_insert_with(|| PlanBatch { family: r.family.clone(), width: w, records: Vec::new() });
                    b.records.push(r);
                }
            }
        }
        Ok((widths, batches))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(family: &str, width: usize, n: usize) -> PlanBatch {
        PlanBatch {
            family: family.into(),
            width,
            records: (0..n)
                .map(|i| BatchRecord { family: family.into(), ga: format!("{family}(0)"), level: 1, run: 0, features: vec![i as f64; width], target: i % 3 })
                .collect(),
        }
    }

    #[test]
    fn archive_appends_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batches.jsonl");
        let mut a = BatchArchive::open(&path).unwrap();
        a.append(&batch("reach1", 4, 3)).unwrap();
        a.append(&batch("reach2", 6, 2)).unwrap();
        drop(a);
        let mut a = BatchArchive::open(&path).unwrap();
        a.append(&batch("reach1", 4, 2)).unwrap();
        let all = a.load().unwrap();
        assert_eq!(all["reach1"].len(), 5);
        assert_eq!(all["reach2"].len(), 2);
        assert_eq!(all["reach2"].width, 6);
        assert!(matches!(a.append(&batch("reach1", 5, 1)), Err(LearnError::WidthMismatch { expected: 4, got: 5 })));
    }

    #[test]
    fn archive_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        std::fs::write(&path, "{\"record\":{\"family\":\"x\",\"ga\":\"x\",\"level\":0,\"run\":0,\"features\":[],\"target\":0}}\n").unwrap();
        assert!(matches!(BatchArchive::open(&path), Err(LearnError::Format(_))));
        std::fs::write(&path, "not json\n").unwrap();
        assert!(BatchArchive::open(&path).is_err());
    }

    #[test]
    fn merge_checks_width() {
        let mut a = PlanBatch::default();
        a.merge(batch("f", 2, 2)).unwrap();
        a.merge(batch("f", 2, 1)).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.merge(batch("f", 3, 1)).is_err());
    }
}
