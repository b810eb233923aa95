use crate::{GnnError, Result, Scalar};

/// A rover's local observation padded to a fixed number of rows.
///
/// Row `self_index` is the deciding rover. Rows with `valid[k] == false` are
/// padding (or masked neighbours) and never influence any valid output.
/// Self-loops are implicit: every valid row attends to itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedGraph<T> {
    pub max_nodes: usize,
    pub feature_dim: usize,
    /// `max_nodes x feature_dim`, row-major.
    pub features: Vec<T>,
    /// `max_nodes x max_nodes`, row-major.
    pub adjacency: Vec<bool>,
    pub valid: Vec<bool>,
    pub self_index: usize,
}

impl<T: Scalar> PaddedGraph<T> {
    /// A graph with only the self row valid and all features zero.
    pub fn new(max_nodes: usize, feature_dim: usize) -> Self {
        let mut valid = vec![false; max_nodes];
        if max_nodes > 0 {
            valid[0] = true;
        }
        Self {
            max_nodes,
            feature_dim,
            features: vec![T::zero(); max_nodes * feature_dim],
            adjacency: vec![false; max_nodes * max_nodes],
            valid,
            self_index: 0,
        }
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.features[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        let d = self.feature_dim;
        &mut self.features[k * d..(k + 1) * d]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.max_nodes + j]
    }

    /// Sets a symmetric edge.
    pub fn connect(&mut self, i: usize, j: usize) {
        self.adjacency[i * self.max_nodes + j] = true;
        self.adjacency[j * self.max_nodes + i] = true;
    }

    /// Invalidates row `k` and drops all of its edges.
    pub fn mask(&mut self, k: usize) {
        self.valid[k] = false;
        for j in 0..self.max_nodes {
            self.adjacency[k * self.max_nodes + j] = false;
            self.adjacency[j * self.max_nodes + k] = false;
        }
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.max_nodes).filter(|&k| self.valid[k]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> PaddedGraph<U> {
        PaddedGraph {
            max_nodes: self.max_nodes,
            feature_dim: self.feature_dim,
            features: self
                .features
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero))
                .collect(),
            adjacency: self.adjacency.clone(),
            valid: self.valid.clone(),
            self_index: self.self_index,
        }
    }

    pub fn check(&self, max_nodes: usize, feature_dim: usize) -> Result<()> {
        if self.max_nodes != max_nodes || self.feature_dim != feature_dim {
            return Err(GnnError::Shape(format!(
                "graph is {}x{}, model expects {}x{}",
                self.max_nodes, self.feature_dim, max_nodes, feature_dim
            )));
        }
        if self.features.len() != max_nodes * feature_dim
            || self.adjacency.len() != max_nodes * max_nodes
            || self.valid.len() != max_nodes
        {
            return Err(GnnError::Shape("inconsistent buffer lengths".into()));
        }
        if self.self_index >= max_nodes || !self.valid[self.self_index] {
            return Err(GnnError::Shape(format!("self row {} is not valid", self.self_index)));
        }
        for i in 0..max_nodes {
            for j in 0..max_nodes {
                if self.valid[i] && self.valid[j] && self.adjacent(i, j) != self.adjacent(j, i) {
                    return Err(GnnError::Shape(format!("adjacency not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// Q-values for every padded slot plus the action mask.
#[derive(Debug, Clone, PartialEq)]
pub struct QValues<T> {
    /// Invalid slots hold `-inf`.
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Scalar> QValues<T> {
    /// Highest-valued valid slot; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (k, (&v, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if !ok {
                continue;
            }
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((k, v)),
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}
