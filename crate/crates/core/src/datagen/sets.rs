use std::sync::atomic::{AtomicUsize, Ordering};

use crate::datagen::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub domain_ids: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>, domain_ids: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || domain_ids.len() != n {
            return Err(Error::dims(
                "LabeledSet",
                format!("{n} rows, {} labels, {} domain ids", labels.len(), domain_ids.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            domain_ids,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            domain_ids: idx.iter().map(|&i| self.domain_ids[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn concat(parts: &[&LabeledSet]) -> Result<LabeledSet> {
        let first = parts.first().ok_or(Error::EmptyInput("LabeledSet::concat"))?;
        let feats: Vec<&Matrix> = parts.iter().map(|p| &p.features).collect();
        Ok(LabeledSet {
            features: Matrix::vstack(&feats)?,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            domain_ids: parts.iter().flat_map(|p| p.domain_ids.iter().copied()).collect(),
            num_classes: parts.iter().map(|p| p.num_classes).max().unwrap_or(first.num_classes),
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Strips the labels behind a read-counting accessor.
    pub fn into_unlabeled(self) -> UnlabeledSet {
        UnlabeledSet {
            features: self.features,
            domain_ids: self.domain_ids,
            hidden_labels: self.labels,
            num_classes: self.num_classes,
            label_reads: AtomicUsize::new(0),
            feature_reads: AtomicUsize::new(0),
        }
    }
}

/// Server-side data whose labels exist only for diagnostics.
///
/// Every call to [`UnlabeledSet::reveal_labels`] is counted, so training paths
/// can be checked to never look at them.
#[derive(Debug)]
pub struct UnlabeledSet {
    features: Matrix,
    domain_ids: Vec<usize>,
    hidden_labels: Vec<usize>,
    num_classes: usize,
    label_reads: AtomicUsize,
    feature_reads: AtomicUsize,
}

impl Clone for UnlabeledSet {
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            domain_ids: self.domain_ids.clone(),
            hidden_labels: self.hidden_labels.clone(),
            num_classes: self.num_classes,
            label_reads: AtomicUsize::new(self.label_reads()),
            feature_reads: AtomicUsize::new(self.feature_reads()),
        }
    }
}

impl UnlabeledSet {
    /// The inputs; counted separately from label reads.
    pub fn features(&self) -> &Matrix {
        self.feature_reads.fetch_add(1, Ordering::Relaxed);
        &self.features
    }

    pub fn domain_ids(&self) -> &[usize] {
        &self.domain_ids
    }

    pub fn len(&self) -> usize {
        self.domain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Diagnostic access to the withheld labels; increments the read counter.
    pub fn reveal_labels(&self) -> &[usize] {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        &self.hidden_labels
    }

    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }

    pub fn feature_reads(&self) -> usize {
        self.feature_reads.load(Ordering::Relaxed)
    }
}

/// `n` samples from `spec`, classes balanced to within one sample.
pub fn sample_domain(spec: &DomainSpec, n: usize, rng: &mut Rng) -> Result<LabeledSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample_domain needs n > 0".into()));
    }
    let (c, d) = (spec.num_classes, spec.input_dim);
    let order = rng.permutation(n);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut base = vec![0.0; d];
    for &slot in &order {
        let y = slot % c;
        base.copy_from_slice(spec.class_means.row(y));
        if spec.noise_std > 0.0 {
            for b in base.iter_mut() {
                *b += spec.noise_std * rng.standard_normal();
            }
        }
        if let Some(basis) = spec.class_bases.get(y) {
            for k in 0..basis.rows() {
                let g = spec.class_spread * rng.standard_normal();
                for (b, v) in base.iter_mut().zip(basis.row(k)) {
                    *b += g * v;
                }
            }
        }
        data.extend(spec.transform.apply(&base));
        let label = if spec.label_flip_prob > 0.0 && rng.uniform() < spec.label_flip_prob {
            (y + 1 + rng.index(c - 1)) % c
        } else {
            y
        };
        labels.push(label);
    }
    LabeledSet::new(Matrix::from_vec(n, d, data)?, labels, vec![spec.domain_id; n], c)
}

/// Label-skewed split: per class `c`, `p_c ~ Dir(β·1_k)` and client `j`
/// receives `round(p_{c,j}·n_c)` of that class (the last client takes the
/// remainder).
pub fn dirichlet_partition(set: &LabeledSet, k: usize, beta: f64, rng: &mut Rng) -> Result<Vec<LabeledSet>> {
    if k == 0 {
        return Err(Error::InvalidArgument("dirichlet_partition needs k >= 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); set.num_classes];
    for (i, &y) in set.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some(class) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::EmptyClass { class });
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for mut idx in by_class {
        rng.shuffle(&mut idx);
        let n_c = idx.len();
        let p = rng.dirichlet(k, beta)?;
        let mut start = 0;
        for (j, pj) in p.iter().enumerate() {
            let take = if j + 1 == k {
                n_c - start
            } else {
                ((pj * n_c as f64).round() as usize).min(n_c - start)
            };
            assigned[j].extend_from_slice(&idx[start..start + take]);
            start += take;
        }
    }
    Ok(assigned
        .into_iter()
        .map(|mut idx| {
            rng.shuffle(&mut idx);
            set.subset(&idx)
        })
        .collect())
}

/// One set per class (the "one class per client" layout).
pub fn split_by_class(set: &LabeledSet) -> Vec<LabeledSet> {
    (0..set.num_classes)
        .map(|c| {
            let idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == c).collect();
            set.subset(&idx)
        })
        .collect()
}
