//! Node-indexed scalar and vector fields.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{CylGrid, CylPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<CylGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<CylGrid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn constant(grid: &Arc<CylGrid>, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Arc<CylGrid>, f: impl Fn(CylPoint) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|n| f(grid.point(n))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<CylGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Quadrature-weighted mean over the cylinder.
    pub fn mean(&self) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.n_z() {
            for j in 0..g.n_theta() {
                for i in 0..g.n_r() {
                    acc += g.volume_weight(i, k) * self.at(i, j, k);
                }
            }
        }
        acc / g.volume()
    }
}

/// Basis in which the three components of a [`VectorField`] are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// `(u_r, u_theta, u_z)` in the local frame of each node.
    Cylindrical,
    /// `(u_x, u_y, u_z)`.
    Cartesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<CylGrid>,
    frame: Frame,
    comps: [Vec<f64>; 3],
}

#[inline]
pub(crate) fn cyl_to_cart(theta: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c, v[2]]
}

#[inline]
pub(crate) fn cart_to_cyl(theta: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [v[0] * c + v[1] * s, -v[0] * s + v[1] * c, v[2]]
}

impl VectorField {
    pub fn zeros(grid: &Arc<CylGrid>, frame: Frame) -> Self {
        let n = grid.node_count();
        Self {
            grid: grid.clone(),
            frame,
            comps: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn from_fn(grid: &Arc<CylGrid>, frame: Frame, f: impl Fn(CylPoint) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid, frame);
        for n in 0..grid.node_count() {
            out.set(n, f(grid.point(n)));
        }
        out
    }

    pub fn from_components(a: ScalarField, b: ScalarField, c: ScalarField, frame: Frame) -> Result<Self> {
        a.same_grid(&b)?;
        a.same_grid(&c)?;
        let grid = a.grid.clone();
        Ok(Self {
            grid,
            frame,
            comps: [a.values, b.values, c.values],
        })
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn component_field(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.comps[c].clone(),
        }
    }

    #[inline]
    pub fn get(&self, n: usize) -> [f64; 3] {
        [self.comps[0][n], self.comps[1][n], self.comps[2][n]]
    }

    #[inline]
    pub fn set(&mut self, n: usize, v: [f64; 3]) {
        self.comps[0][n] = v[0];
        self.comps[1][n] = v[1];
        self.comps[2][n] = v[2];
    }

    pub fn same_grid(&self, other: &VectorField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn to_cartesian(&self) -> Self {
        match self.frame {
            Frame::Cartesian => self.clone(),
            Frame::Cylindrical => self.rotated(Frame::Cartesian, cyl_to_cart),
        }
    }

    pub fn to_cylindrical(&self) -> Self {
        match self.frame {
            Frame::Cylindrical => self.clone(),
            Frame::Cartesian => self.rotated(Frame::Cylindrical, cart_to_cyl),
        }
    }

    pub fn in_frame(&self, frame: Frame) -> Self {
        match frame {
            Frame::Cartesian => self.to_cartesian(),
            Frame::Cylindrical => self.to_cylindrical(),
        }
    }

    fn rotated(&self, frame: Frame, rot: fn(f64, [f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(&self.grid, frame);
        for n in 0..self.grid.node_count() {
            let theta = self.grid.point(n).theta;
            out.set(n, rot(theta, self.get(n)));
        }
        out
    }

    /// `alpha * self + beta * other`, computed in the frame of `self`.
    pub fn lincomb(&self, alpha: f64, other: &VectorField, beta: f64) -> Result<Self> {
        self.same_grid(other)?;
        let other = other.in_frame(self.frame);
        let mut out = self.clone();
        for c in 0..3 {
            for (o, b) in out.comps[c].iter_mut().zip(&other.comps[c]) {
                *o = alpha * *o + beta * b;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            c.iter_mut().for_each(|v| *v *= alpha);
        }
        out
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.node_count())
            .map(|n| {
                let v = self.get(n);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}
