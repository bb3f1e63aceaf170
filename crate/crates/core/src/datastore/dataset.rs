use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::emb1::{read_embeddings, Labels};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One teacher's precomputed embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherView {
    pub name: String,
    pub embeddings: Matrix,
}

/// Base features aligned row-for-row with every teacher's embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDataset {
    pub base: Matrix,
    pub teachers: Vec<TeacherView>,
    pub labels: Option<Labels>,
}

/// Class ids must cover `[0, C)` without gaps.
pub fn check_dense_classes(ids: &[u32]) -> Result<()> {
    let present: BTreeSet<u32> = ids.iter().copied().collect();
    if let Some(&max) = present.iter().next_back() {
        if present.len() != max as usize + 1 {
            let missing: Vec<u32> = (0..=max).filter(|i| !present.contains(i)).collect();
            return Err(Error::Usage(format!("class ids are not dense; missing {missing:?}")));
        }
    }
    Ok(())
}

impl EmbeddingDataset {
    pub fn new(base: Matrix, teachers: Vec<TeacherView>, labels: Option<Labels>) -> Result<Self> {
        let n = base.rows();
        let mut names = HashSet::new();
        for t in &teachers {
            if t.embeddings.rows() != n {
                return Err(Error::shape(
                    "teacher rows",
                    format!("{n} (base rows)"),
                    format!("{} in teacher '{}'", t.embeddings.rows(), t.name),
                ));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::Usage(format!("duplicate teacher name '{}'", t.name)));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape("label count", n, l.len()));
            }
            if let Labels::Classes(ids) = l {
                check_dense_classes(ids)?;
            }
        }
        Ok(Self {
            base,
            teachers,
            labels,
        })
    }

    /// Load base features and teachers from EMB1 files. Teachers are named by
    /// file stem; labels, if any, are taken from the base file.
    pub fn load(base: &Path, teachers: &[impl AsRef<Path>]) -> Result<Self> {
        let (base_m, labels) = read_embeddings(base)?;
        let views = teachers
            .iter()
            .map(|p| {
                let p = p.as_ref();
                let (m, _) = read_embeddings(p)?;
                let name = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok(TeacherView {
                    name,
                    embeddings: m,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(base_m, views, labels)
    }

    pub fn n(&self) -> usize {
        self.base.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.base.cols()
    }

    pub fn num_teachers(&self) -> usize {
        self.teachers.len()
    }

    pub fn teacher_dims(&self) -> Vec<usize> {
        self.teachers.iter().map(|t| t.embeddings.cols()).collect()
    }

    /// Dataset restricted to the given teachers, in the given order.
    pub fn with_teachers(&self, which: &[usize]) -> Result<Self> {
        let teachers = which
            .iter()
            .map(|&k| {
                self.teachers.get(k).cloned().ok_or_else(|| {
                    Error::Usage(format!("teacher index {k} out of range ({})", self.teachers.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.base.clone(), teachers, self.labels.clone())
    }

    /// Rows `indices` of the base features and of every teacher.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<Matrix>) {
        (
            self.base.select_rows(indices),
            self.teachers.iter().map(|t| t.embeddings.select_rows(indices)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(name: &str, rows: usize) -> TeacherView {
        TeacherView {
            name: name.into(),
            embeddings: Matrix::zeros(rows, 2),
        }
    }

    #[test]
    fn validates_alignment_names_and_labels() {
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![view("a", 3), view("b", 3)], None).is_ok());
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![view("a", 4)], None).is_err());
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![view("a", 3), view("a", 3)], None).is_err());
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![], Some(Labels::Classes(vec![0, 2, 2]))).is_err());
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![], Some(Labels::Classes(vec![0, 1, 1]))).is_ok());
        assert!(EmbeddingDataset::new(Matrix::zeros(3, 1), vec![], Some(Labels::Regression(vec![0.0]))).is_err());
    }
}
