use crate::error::{Error, Result};

/// Dense row-major matrix; rows are units, columns are covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl RowMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(RowMatrix { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Argument(format!(
                    "row length {} does not match column count {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix { data, rows: rows.len(), cols })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// One cluster: aligned per-unit outcome, binary treatment, and unit
/// covariates, plus covariates and an estimand weight shared by the whole
/// cluster. Cluster size always appears among the cluster covariates as
/// `c__n` (appended by [`ClusterData::new`] when absent upstream).
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterData {
    id: String,
    y: Vec<f64>,
    a: Vec<u8>,
    w_unit: RowMatrix,
    c_cluster: Vec<f64>,
    weight: f64,
}

impl ClusterData {
    /// Build a cluster from raw parts, appending cluster size as the trailing
    /// `c__n` covariate. `c_cluster` here excludes `c__n`.
    pub fn new(
        id: impl Into<String>,
        y: Vec<f64>,
        a: Vec<u8>,
        w_unit: RowMatrix,
        mut c_cluster: Vec<f64>,
        weight: f64,
    ) -> Result<Self> {
        c_cluster.push(y.len() as f64);
        Self::from_parts(id, y, a, w_unit, c_cluster, weight)
    }

    /// Build a cluster whose `c_cluster` already carries every cluster
    /// covariate, `c__n` included. Used by ingestion and undersampling, where
    /// the stored `c__n` may legitimately differ from the current unit count.
    pub fn from_parts(
        id: impl Into<String>,
        y: Vec<f64>,
        a: Vec<u8>,
        w_unit: RowMatrix,
        c_cluster: Vec<f64>,
        weight: f64,
    ) -> Result<Self> {
        let id = id.into();
        let n = y.len();
        if n == 0 {
            return Err(Error::Argument(format!("cluster '{id}' has no units")));
        }
        if a.len() != n || w_unit.rows() != n {
            return Err(Error::Argument(format!(
                "cluster '{id}': y/a/w_unit lengths disagree ({n}, {}, {})",
                a.len(),
                w_unit.rows()
            )));
        }
        if let Some(bad) = a.iter().find(|&&v| v > 1) {
            return Err(Error::Value(format!(
                "cluster '{id}': treatment must be 0 or 1, got {bad}"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value(format!("cluster '{id}': non-finite outcome")));
        }
        if c_cluster.iter().any(|v| !v.is_finite())
            || (0..n).any(|j| w_unit.row(j).iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Value(format!("cluster '{id}': non-finite covariate")));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Value(format!(
                "cluster '{id}': weight must be finite and >= 0, got {weight}"
            )));
        }
        Ok(ClusterData { id, y, a, w_unit, c_cluster, weight })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    #[inline]
    pub fn a_f64(&self, j: usize) -> f64 {
        self.a[j] as f64
    }

    pub fn w_unit(&self) -> &RowMatrix {
        &self.w_unit
    }

    pub fn c_cluster(&self) -> &[f64] {
        &self.c_cluster
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn treated_count(&self) -> usize {
        self.a.iter().map(|&v| v as usize).sum()
    }

    /// Same cluster with a replaced estimand weight (subgroup reweighting).
    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::from_parts(
            self.id.clone(),
            self.y.clone(),
            self.a.clone(),
            self.w_unit.clone(),
            self.c_cluster.clone(),
            weight,
        )
    }

    /// Same cluster restricted to the given unit indices (ascending).
    pub(crate) fn subset(&self, keep: &[usize]) -> Result<Self> {
        let y = keep.iter().map(|&j| self.y[j]).collect();
        let a = keep.iter().map(|&j| self.a[j]).collect();
        let rows: Vec<Vec<f64>> = keep.iter().map(|&j| self.w_unit.row(j).to_vec()).collect();
        let w_unit = RowMatrix::from_rows(&rows, self.w_unit.cols())?;
        Self::from_parts(self.id.clone(), y, a, w_unit, self.c_cluster.clone(), self.weight)
    }
}

/// A collection of clusters plus covariate names. `w_names` name the columns
/// of each cluster's `w_unit`; `c_names` name `c_cluster` entries and always
/// end with `c__n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    clusters: Vec<ClusterData>,
    w_names: Vec<String>,
    c_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        clusters: Vec<ClusterData>,
        w_names: Vec<String>,
        c_names: Vec<String>,
    ) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Argument("dataset has no clusters".into()));
        }
        if c_names.last().map(String::as_str) != Some("c__n") {
            return Err(Error::Argument(
                "cluster covariate names must end with the size covariate c__n".into(),
            ));
        }
        for c in &clusters {
            if c.w_unit().cols() != w_names.len() {
                return Err(Error::Consistency(format!(
                    "cluster '{}' has {} unit covariates, expected {}",
                    c.id(),
                    c.w_unit().cols(),
                    w_names.len()
                )));
            }
            if c.c_cluster().len() != c_names.len() {
                return Err(Error::Consistency(format!(
                    "cluster '{}' has {} cluster covariates, expected {}",
                    c.id(),
                    c.c_cluster().len(),
                    c_names.len()
                )));
            }
        }
        let mut ids: Vec<&str> = clusters.iter().map(|c| c.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Consistency(format!("duplicate cluster id '{}'", w[0])));
        }
        Ok(Dataset { clusters, w_names, c_names })
    }

    pub fn clusters(&self) -> &[ClusterData] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_units(&self) -> usize {
        self.clusters.iter().map(ClusterData::n).sum()
    }

    pub fn w_names(&self) -> &[String] {
        &self.w_names
    }

    pub fn c_names(&self) -> &[String] {
        &self.c_names
    }

    /// Cluster indices sorted by id. Every seeded or order-sensitive reduction
    /// walks clusters in this order so results do not depend on row order in
    /// the input file.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.clusters.len()).collect();
        idx.sort_by(|&i, &j| self.clusters[i].id().cmp(self.clusters[j].id()));
        idx
    }

    /// Position of a cluster covariate by name.
    pub fn c_index(&self, name: &str) -> Result<usize> {
        self.c_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no cluster covariate named '{name}'")))
    }

    /// Position of a unit covariate by name.
    pub fn w_index(&self, name: &str) -> Result<usize> {
        self.w_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no unit covariate named '{name}'")))
    }

    /// Replace every cluster's weight by the value of a binary cluster
    /// covariate, for subgroup analyses.
    pub fn reweight_by_indicator(&self, column: &str) -> Result<Dataset> {
        let ci = self.c_index(column)?;
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                let v = c.c_cluster()[ci];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Value(format!(
                        "column '{column}' is not a 0/1 indicator (cluster '{}' has {v})",
                        c.id()
                    )));
                }
                c.with_weight(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(clusters, self.w_names.clone(), self.c_names.clone())
    }
}
