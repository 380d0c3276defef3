use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial feature map over affinely rescaled inputs.
///
/// Each feature is a product of rescaled components `(x_k - offset_k) / scale_k`,
/// listed by index (with repetition for powers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    offset: Vec<f64>,
    scale: Vec<f64>,
    terms: Vec<Vec<usize>>,
}

impl Basis {
    pub fn new(offset: Vec<f64>, scale: Vec<f64>, terms: Vec<Vec<usize>>) -> Result<Self> {
        if offset.len() != scale.len() {
            return Err(Error::InvalidArgument("offset and scale lengths differ".into()));
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("basis scales must be positive".into()));
        }
        if terms.iter().flatten().any(|&k| k >= scale.len()) {
            return Err(Error::InvalidArgument("basis term index out of range".into()));
        }
        if terms.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidArgument("constant basis terms are not allowed".into()));
        }
        Ok(Self { offset, scale, terms })
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.scale.len()
    }

    /// Number of features.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    fn rescale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.offset).zip(&self.scale).map(|((v, o), s)| (v - o) / s).collect()
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let z = self.rescale(x);
        DVector::from_iterator(self.len(), self.terms.iter().map(|t| t.iter().map(|&k| z[k]).product::<f64>()))
    }

    /// Jacobian `∂φ/∂x`, one row per feature.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let z = self.rescale(x);
        let mut j = DMatrix::zeros(self.len(), self.input_dim());
        for (r, t) in self.terms.iter().enumerate() {
            for p in 0..t.len() {
                let rest: f64 = t.iter().enumerate().filter(|&(q, _)| q != p).map(|(_, &k)| z[k]).product();
                j[(r, t[p])] += rest / self.scale[t[p]];
            }
        }
        j
    }
}

/// Monomials of degree `deg` over the index set, as sorted multisets.
fn monomials(indices: &[usize], deg: usize) -> Vec<Vec<usize>> {
    fn rec(indices: &[usize], deg: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == deg {
            out.push(cur.clone());
            return;
        }
        for i in from..indices.len() {
            cur.push(indices[i]);
            rec(indices, deg, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(indices, deg, 0, &mut Vec::new(), &mut out);
    out
}

/// Feature family for the 8-dimensional augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Critic `e_i e_j`; actor `e_i`, `e_i r_k`, `e_i e_j`.
    ErrorQuadratic,
    /// Critic `e_i e_j` and `e_i e_j r_k`; actor `e_i`, `e_i r_k`, `e_i e_j`.
    /// Every feature vanishes at zero tracking error.
    ErrorAnchored,
    /// All degree-2 monomials of the 8 components for the critic (36) and all
    /// degree-1 and degree-2 monomials for the actor (44).
    FullQuadratic,
}

/// Basis descriptor stored with trained weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Characteristic magnitude of the tracking error (veh).
    pub error_scale: f64,
    /// Centre of the reference coordinates (veh); unused by `FullQuadratic`.
    pub reference_center: f64,
    /// Characteristic magnitude of the reference coordinates (veh).
    pub reference_scale: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { kind: BasisKind::ErrorQuadratic, error_scale: 100.0, reference_center: 1200.0, reference_scale: 500.0 }
    }
}

impl BasisSpec {
    fn transform(&self) -> (Vec<f64>, Vec<f64>) {
        let center = match self.kind {
            BasisKind::ErrorQuadratic | BasisKind::ErrorAnchored => self.reference_center,
            BasisKind::FullQuadratic => 0.0,
        };
        let mut offset = vec![0.0; 8];
        let mut scale = vec![self.error_scale; 8];
        for k in 4..8 {
            offset[k] = center;
            scale[k] = self.reference_scale;
        }
        (offset, scale)
    }

    pub fn critic(&self) -> Result<Basis> {
        let (offset, scale) = self.transform();
        let e: Vec<usize> = (0..4).collect();
        let terms = match self.kind {
            BasisKind::ErrorQuadratic => monomials(&e, 2),
            BasisKind::ErrorAnchored => {
                let quad = monomials(&e, 2);
                let mut t = quad.clone();
                for q in &quad {
                    for k in 4..8 {
                        let mut m = q.clone();
                        m.push(k);
                        t.push(m);
                    }
                }
                t
            }
            BasisKind::FullQuadratic => monomials(&(0..8).collect::<Vec<_>>(), 2),
        };
        Basis::new(offset, scale, terms)
    }

    pub fn actor(&self) -> Result<Basis> {
        let (offset, scale) = self.transform();
        let e: Vec<usize> = (0..4).collect();
        let terms = match self.kind {
            BasisKind::ErrorQuadratic | BasisKind::ErrorAnchored => {
                let mut t: Vec<Vec<usize>> = e.iter().map(|&i| vec![i]).collect();
                for i in 0..4 {
                    for k in 4..8 {
                        t.push(vec![i, k]);
                    }
                }
                t.extend(monomials(&e, 2));
                t
            }
            BasisKind::FullQuadratic => {
                let all: Vec<usize> = (0..8).collect();
                let mut t = monomials(&all, 1);
                t.extend(monomials(&all, 2));
                t
            }
        };
        Basis::new(offset, scale, terms)
    }
}
