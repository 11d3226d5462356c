use serde::{Deserialize, Serialize};

use super::{QError, Result};

/// A named tensor factor with a labeled computational basis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    name: String,
    dim: usize,
    labels: Vec<String>,
}

impl Subsystem {
    /// Subsystem whose basis labels are the indices `"0"`, `"1"`, ...
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        let labels = (0..dim).map(|i| i.to_string()).collect::<Vec<_>>();
        Self::build(name.into(), labels)
    }

    pub fn labeled(name: impl Into<String>, labels: &[&str]) -> Result<Self> {
        Self::build(name.into(), labels.iter().map(|s| s.to_string()).collect())
    }

    fn build(name: String, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(QError::EmptySubsystem(name));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(QError::DuplicateLabel {
                    subsystem: name,
                    label: l.clone(),
                });
            }
        }
        Ok(Self {
            dim: labels.len(),
            name,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Ordered list of subsystems. Flattened indices are row-major in declaration
/// order, so the last subsystem varies fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    subsystems: Vec<Subsystem>,
}

impl SpaceLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(QError::EmptyLayout);
        }
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|t| t.name == s.name) {
                return Err(QError::NameCollision(s.name.clone()));
            }
        }
        Ok(Self { subsystems })
    }

    pub fn single(subsystem: Subsystem) -> Self {
        Self {
            subsystems: vec![subsystem],
        }
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn names(&self) -> Vec<&str> {
        self.subsystems.iter().map(|s| s.name()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).product()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.name == name)
    }

    pub fn subsystem(&self, name: &str) -> Result<&Subsystem> {
        self.subsystems
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| QError::UnknownSubsystem(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &SpaceLayout) -> Result<SpaceLayout> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        SpaceLayout::new(subsystems)
    }

    /// Sub-layout holding exactly `names`, in this layout's order.
    pub fn select(&self, names: &[&str]) -> Result<SpaceLayout> {
        for n in names {
            self.subsystem(n)?;
        }
        let kept = self
            .subsystems
            .iter()
            .filter(|s| names.contains(&s.name.as_str()))
            .cloned()
            .collect::<Vec<_>>();
        SpaceLayout::new(kept)
    }

    /// Sub-layout holding `names` in the order given.
    pub fn ordered(&self, names: &[&str]) -> Result<SpaceLayout> {
        let subs = names
            .iter()
            .map(|n| self.subsystem(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        SpaceLayout::new(subs)
    }

    /// Subsystems not named in `other`, in this layout's order. `None` when
    /// nothing remains.
    pub fn complement(&self, other: &SpaceLayout) -> Option<SpaceLayout> {
        let rest = self
            .subsystems
            .iter()
            .filter(|s| !other.contains(&s.name))
            .cloned()
            .collect::<Vec<_>>();
        if rest.is_empty() {
            None
        } else {
            Some(Self { subsystems: rest })
        }
    }

    /// Per-subsystem basis indices of a flattened index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.subsystems.len()];
        for (slot, s) in out.iter_mut().zip(&self.subsystems).rev() {
            *slot = index % s.dim;
            index /= s.dim;
        }
        out
    }

    pub fn index_of_digits(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.subsystems)
            .fold(0, |acc, (d, s)| acc * s.dim + d)
    }

    /// Flattened index of the product basis ket named by one label per
    /// subsystem.
    pub fn index_of_labels(&self, labels: &[&str]) -> Result<usize> {
        if labels.len() != self.subsystems.len() {
            return Err(QError::LabelCount {
                expected: self.subsystems.len(),
                got: labels.len(),
            });
        }
        let digits = labels
            .iter()
            .zip(&self.subsystems)
            .map(|(l, s)| {
                s.label_index(l).ok_or_else(|| QError::UnknownLabel {
                    subsystem: s.name.clone(),
                    label: l.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.index_of_digits(&digits))
    }

    pub fn basis_label(&self, index: usize) -> String {
        self.digits(index)
            .iter()
            .zip(&self.subsystems)
            .map(|(d, s)| s.labels[*d].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Index bookkeeping for acting on `target` (a sub-layout, in any order)
    /// while leaving the remaining subsystems alone.
    pub fn split(&self, target: &SpaceLayout) -> Result<Split> {
        let mut target_pos = Vec::with_capacity(target.subsystems.len());
        for s in &target.subsystems {
            let pos = self
                .position(&s.name)
                .ok_or_else(|| QError::UnknownSubsystem(s.name.clone()))?;
            if self.subsystems[pos].dim != s.dim {
                return Err(QError::DimMismatch {
                    subsystem: s.name.clone(),
                    expected: self.subsystems[pos].dim,
                    got: s.dim,
                });
            }
            target_pos.push(pos);
        }
        let rest_pos = (0..self.subsystems.len())
            .filter(|p| !target_pos.contains(p))
            .collect::<Vec<_>>();
        let target_dim = target.total_dim();
        let rest_dim = rest_pos
            .iter()
            .map(|&p| self.subsystems[p].dim)
            .product::<usize>();
        let total = self.total_dim();
        let mut full_index = vec![0; total];
        let mut target_of = vec![0; total];
        let mut rest_of = vec![0; total];
        let mut d = vec![0; self.subsystems.len()];
        for i in 0..total {
            let mut rem = i;
            for (slot, s) in d.iter_mut().zip(&self.subsystems).rev() {
                *slot = rem % s.dim;
                rem /= s.dim;
            }
            let t = target_pos
                .iter()
                .fold(0, |acc, &p| acc * self.subsystems[p].dim + d[p]);
            let r = rest_pos
                .iter()
                .fold(0, |acc, &p| acc * self.subsystems[p].dim + d[p]);
            full_index[t * rest_dim + r] = i;
            target_of[i] = t;
            rest_of[i] = r;
        }
        Ok(Split {
            target_dim,
            rest_dim,
            full_index,
            target_of,
            rest_of,
        })
    }
}

/// Factorization of a flattened index into (target, rest) parts.
#[derive(Clone, Debug)]
pub struct Split {
    target_dim: usize,
    rest_dim: usize,
    full_index: Vec<usize>,
    target_of: Vec<usize>,
    rest_of: Vec<usize>,
}

impl Split {
    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn rest_dim(&self) -> usize {
        self.rest_dim
    }

    pub fn full(&self, target: usize, rest: usize) -> usize {
        self.full_index[target * self.rest_dim + rest]
    }

    pub fn target_of(&self, full: usize) -> usize {
        self.target_of[full]
    }

    pub fn rest_of(&self, full: usize) -> usize {
        self.rest_of[full]
    }
}
