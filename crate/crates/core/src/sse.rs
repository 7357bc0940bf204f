//! Adaptive stochastic spectral embedding.
//!
//! A binary tree of residual expansions over boxes of the unit hypercube.
//! The surrogate value at `ζ` is the sum of the expansions of every node
//! whose box contains `ζ`, i.e. the nodes on the path from the root to the
//! terminal box holding `ζ`.
//!
//! Refinement proceeds greedily: the splittable terminal box with the
//! largest score `ρ = e_loo · ℙ` is halved along the input with the largest
//! first-order Sobol' index of its residual expansion, and each half fits
//! the residual left by its ancestors when it holds at least `n_ref_min`
//! training points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Subdomain;
use crate::error::{Error, Result};
use crate::sparse_pce::{adaptive_fit, sobol_first_order, FitOptions, PceModel};
use crate::uncertainty::{to_unit, RandomVector, SampleMatrix, Space};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseConfig {
    /// Minimum number of training points for a box to carry an expansion.
    pub n_ref_min: usize,
    /// Maximum refinement level.
    pub k_max: usize,
    pub fit: FitOptions,
}

impl Default for SseConfig {
    fn default() -> Self {
        Self {
            n_ref_min: 10,
            k_max: 1000,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseNode {
    pub level: usize,
    /// 1-based position among the nodes created at this level.
    pub index: usize,
    pub domain: Subdomain,
    pub expansion: Option<PceModel>,
    /// LOO error entering the refinement score: the node's own when it has
    /// an expansion, otherwise its parent's.
    pub e_loo: f64,
    pub score: f64,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub split_dim: Option<usize>,
    pub n_points: usize,
}

impl SseNode {
    pub fn is_terminal(&self) -> bool {
        self.children.is_none()
    }

    pub fn mass(&self) -> f64 {
        self.domain.mass()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseTree {
    pub dim: usize,
    pub config: SseConfig,
    pub nodes: Vec<SseNode>,
    /// Input distribution used to map physical points into the cube.
    pub random_vector: Option<RandomVector>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalDiagnostics {
    /// Coordinates that fell outside `[0,1]` and were clamped.
    pub clamped: usize,
}

impl SseTree {
    pub fn root(&self) -> &SseNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &SseNode {
        &self.nodes[id]
    }

    pub fn terminals(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_terminal())
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn with_random_vector(mut self, rv: RandomVector) -> Result<Self> {
        if rv.dim() != self.dim {
            return Err(Error::shape(format!(
                "random vector has {} inputs, tree has {}",
                rv.dim(),
                self.dim
            )));
        }
        self.random_vector = Some(rv);
        Ok(self)
    }

    /// Node ids from the root down to the terminal box containing `point`.
    pub fn path_to(&self, point: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut id = 0;
        while let (Some([lo, hi]), Some(j)) = (self.nodes[id].children, self.nodes[id].split_dim) {
            id = if point[j] < self.nodes[lo].domain.upper()[j] {
                lo
            } else {
                hi
            };
            path.push(id);
        }
        path
    }

    pub fn terminal_for(&self, point: &[f64]) -> usize {
        *self.path_to(point).last().expect("nonempty path")
    }

    fn eval_unit_point(&self, point: &[f64]) -> Result<f64> {
        let mut value = 0.0;
        for id in self.path_to(point) {
            if let Some(pce) = &self.nodes[id].expansion {
                value += pce.evaluate(point)?;
            }
        }
        Ok(value)
    }

    /// `z − Σ_{strict ancestors a} R̂_a(ζ)` for points inside node `id`.
    pub fn compute_residuals(&self, id: usize, points: &SampleMatrix, z_raw: &[f64]) -> Result<Vec<f64>> {
        if points.nrows() != z_raw.len() {
            return Err(Error::shape("points and responses differ in length"));
        }
        let node = self.nodes.get(id).ok_or_else(|| Error::shape(format!("no node {id}")))?;
        let mut ancestors = Vec::new();
        let mut cur = node.parent;
        while let Some(a) = cur {
            ancestors.push(a);
            cur = self.nodes[a].parent;
        }
        points
            .rows()
            .zip(z_raw)
            .map(|(p, &z)| {
                if !node.domain.contains(p) {
                    return Err(Error::domain(format!("point {p:?} outside node {id}")));
                }
                let mut r = z;
                for &a in &ancestors {
                    if let Some(pce) = &self.nodes[a].expansion {
                        r -= pce.evaluate(p)?;
                    }
                }
                Ok(r)
            })
            .collect()
    }

    /// `ρ = e_loo · ℙ` with the parent's error when the node has no
    /// expansion of its own.
    pub fn refinement_score(&self, id: usize) -> Result<f64> {
        let node = &self.nodes[id];
        if let Some(pce) = &node.expansion {
            return Ok(pce.e_loo * node.mass());
        }
        match node.parent {
            Some(p) => {
                let parent = self.nodes[p].expansion.as_ref().ok_or_else(|| {
                    Error::Initialization(format!("parent {p} of node {id} has no expansion"))
                })?;
                Ok(parent.e_loo * node.mass())
            }
            None => Err(Error::Initialization("root has no expansion".into())),
        }
    }

    fn split_dimension(&self, id: usize) -> Option<usize> {
        let node = &self.nodes[id];
        let pce = node.expansion.as_ref()?;
        let sobol = sobol_first_order(pce);
        let weights: Vec<f64> = if sobol.degenerate {
            (0..self.dim).map(|j| node.domain.width(j)).collect()
        } else {
            sobol.first_order
        };
        let mut best: Option<usize> = None;
        for j in 0..self.dim {
            if node.domain.can_split(j) && best.is_none_or(|b| weights[j] > weights[b]) {
                best = Some(j);
            }
        }
        best
    }

    fn is_splittable(&self, id: usize) -> bool {
        let node = &self.nodes[id];
        node.is_terminal()
            && node.expansion.is_some()
            && node.n_points >= 2 * self.config.n_ref_min
            && node.level < self.config.k_max
            && self.split_dimension(id).is_some()
    }

    /// Splittable terminal node with the largest score; ties go to the lower
    /// level, then the lower index. `None` once no node is splittable.
    pub fn select_refinement_domain(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for id in 0..self.nodes.len() {
            if !self.is_splittable(id) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (n, m) = (&self.nodes[id], &self.nodes[b]);
                    n.score > m.score
                        || (n.score == m.score && (n.level, n.index) < (m.level, m.index))
                }
            };
            if better {
                best = Some(id);
            }
        }
        best
    }

    /// Evaluates the embedding at unit-space or physical points. Physical
    /// points are mapped through the stored random vector first.
    pub fn evaluate(&self, points: &SampleMatrix) -> Result<(Vec<f64>, EvalDiagnostics)> {
        if points.dim() != self.dim {
            return Err(Error::shape(format!(
                "points have {} columns, tree has {}",
                points.dim(),
                self.dim
            )));
        }
        let unit;
        let points = match points.space() {
            Space::Unit => points,
            Space::Physical => {
                let rv = self.random_vector.as_ref().ok_or_else(|| {
                    Error::domain("physical points need the tree's random vector")
                })?;
                unit = to_unit(points, rv)?;
                &unit
            }
        };
        let dim = self.dim;
        let results: Vec<(f64, usize)> = points
            .as_slice()
            .par_chunks(dim)
            .map(|row| {
                let mut p = row.to_vec();
                let mut clamped = 0;
                for x in &mut p {
                    if !(0.0..=1.0).contains(x) {
                        *x = x.clamp(0.0, 1.0);
                        clamped += 1;
                    }
                }
                self.eval_unit_point(&p).map(|v| (v, clamped))
            })
            .collect::<Result<_>>()?;
        let clamped = results.iter().map(|r| r.1).sum();
        if clamped > 0 {
            log::warn!("{clamped} coordinates clamped into the unit cube");
        }
        Ok((
            results.into_iter().map(|r| r.0).collect(),
            EvalDiagnostics { clamped },
        ))
    }
}

pub fn evaluate_sse(tree: &SseTree, points: &SampleMatrix) -> Result<Vec<f64>> {
    tree.evaluate(points).map(|(v, _)| v)
}

/// Incremental construction of an [`SseTree`] from a fixed training set.
pub struct SseBuilder {
    tree: SseTree,
    points: SampleMatrix,
    /// Training point ids per node.
    members: Vec<Vec<usize>>,
    /// Residual of every training point after all expansions fitted so far
    /// on its path.
    residual: Vec<f64>,
    /// Per-level counters for the `d` index.
    level_counts: Vec<usize>,
}

impl SseBuilder {
    /// Fits the root expansion on all training points.
    pub fn new(points: &SampleMatrix, z: &[f64], config: SseConfig) -> Result<Self> {
        config.fit.validate()?;
        if points.nrows() == 0 || z.is_empty() {
            return Err(Error::EmptyData("embedding needs at least one training point".into()));
        }
        if points.nrows() != z.len() {
            return Err(Error::shape(format!(
                "{} points but {} responses",
                points.nrows(),
                z.len()
            )));
        }
        if points.space() != Space::Unit {
            return Err(Error::domain("training points must be in unit space"));
        }
        let dim = points.dim();
        let domain = Subdomain::unit(dim);
        let all: Vec<usize> = (0..points.nrows()).collect();
        let fit = adaptive_fit(points, z, &domain.legendre_families(), &config.fit)?;
        let mut residual = z.to_vec();
        for (r, p) in residual.iter_mut().zip(points.rows()) {
            *r -= fit.model.evaluate(p)?;
        }
        let e_loo = fit.model.e_loo;
        let root = SseNode {
            level: 0,
            index: 1,
            score: e_loo * domain.mass(),
            domain,
            expansion: Some(fit.model),
            e_loo,
            parent: None,
            children: None,
            split_dim: None,
            n_points: all.len(),
        };
        Ok(Self {
            tree: SseTree {
                dim,
                config,
                nodes: vec![root],
                random_vector: None,
            },
            points: points.clone(),
            members: vec![all],
            residual,
            level_counts: vec![1],
        })
    }

    pub fn tree(&self) -> &SseTree {
        &self.tree
    }

    /// Training residuals after every expansion fitted so far.
    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    pub fn members(&self, id: usize) -> &[usize] {
        &self.members[id]
    }

    pub fn select_refinement_domain(&self) -> Option<usize> {
        self.tree.select_refinement_domain()
    }

    fn fit_child(&self, domain: &Subdomain, ids: &[usize]) -> Result<Option<PceModel>> {
        if ids.len() < self.tree.config.n_ref_min || ids.is_empty() {
            return Ok(None);
        }
        let pts = self.points.select(ids);
        let z: Vec<f64> = ids.iter().map(|&i| self.residual[i]).collect();
        let fit = adaptive_fit(&pts, &z, &domain.legendre_families(), &self.tree.config.fit)?;
        Ok(Some(fit.model))
    }

    /// Halves node `id` along its dominant Sobol' direction and fits the
    /// residual expansions of both halves. Returns the child ids.
    pub fn split_node(&mut self, id: usize) -> Result<(usize, usize)> {
        if !self.tree.is_splittable(id) {
            return Err(Error::domain(format!("node {id} is not splittable")));
        }
        let j = self.tree.split_dimension(id).expect("splittable node has a direction");
        let parent = &self.tree.nodes[id];
        let (low_dom, high_dom) = parent.domain.split(j)?;
        let mid = low_dom.upper()[j];
        let (low_ids, high_ids): (Vec<usize>, Vec<usize>) = self.members[id]
            .iter()
            .partition(|&&i| self.points.row(i)[j] < mid);

        let (low_fit, high_fit) = rayon::join(
            || self.fit_child(&low_dom, &low_ids),
            || self.fit_child(&high_dom, &high_ids),
        );
        let (low_fit, high_fit) = (low_fit?, high_fit?);

        let parent_e_loo = parent
            .expansion
            .as_ref()
            .map(|p| p.e_loo)
            .expect("splittable node has an expansion");
        let level = parent.level + 1;
        if self.level_counts.len() <= level {
            self.level_counts.push(0);
        }

        let mut child_ids = [0usize; 2];
        for (slot, (domain, ids, fit)) in [(low_dom, low_ids, low_fit), (high_dom, high_ids, high_fit)]
            .into_iter()
            .enumerate()
        {
            if let Some(pce) = &fit {
                for &i in &ids {
                    self.residual[i] -= pce.evaluate(self.points.row(i))?;
                }
            }
            self.level_counts[level] += 1;
            let e_loo = fit.as_ref().map_or(parent_e_loo, |p| p.e_loo);
            let node_id = self.tree.nodes.len();
            self.tree.nodes.push(SseNode {
                level,
                index: self.level_counts[level],
                score: e_loo * domain.mass(),
                domain,
                expansion: fit,
                e_loo,
                parent: Some(id),
                children: None,
                split_dim: None,
                n_points: ids.len(),
            });
            self.members.push(ids);
            child_ids[slot] = node_id;
        }
        let parent = &mut self.tree.nodes[id];
        parent.children = Some(child_ids);
        parent.split_dim = Some(j);
        Ok((child_ids[0], child_ids[1]))
    }

    /// Refines until no terminal box is splittable.
    pub fn run(&mut self) -> Result<()> {
        while let Some(id) = self.select_refinement_domain() {
            self.split_node(id)?;
        }
        Ok(())
    }

    pub fn finish(self) -> SseTree {
        self.tree
    }
}

/// Builds the full adaptive embedding.
pub fn fit_asse(points: &SampleMatrix, z: &[f64], config: &SseConfig) -> Result<SseTree> {
    let mut builder = SseBuilder::new(points, z, config.clone())?;
    builder.run()?;
    Ok(builder.finish())
}

/// Single global sparse PCE wrapped as a one-node embedding.
pub fn fit_global_pce(points: &SampleMatrix, z: &[f64], fit: &FitOptions) -> Result<SseTree> {
    let config = SseConfig {
        n_ref_min: 1,
        k_max: 0,
        fit: fit.clone(),
    };
    fit_asse(points, z, &config)
}
