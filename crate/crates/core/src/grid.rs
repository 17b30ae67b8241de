//! Structured grids and complex vector-valued fields on them.
//!
//! Three families of geometry are supported: fully periodic boxes,
//! half-space slabs (periodic tangential axes times a cell-centered normal
//! axis with the boundary face at depth 0), and bounded domains (interval,
//! disk in polar coordinates). Bounded axes are cell-centered: points sit at
//! `start + (i + 1/2) h`, so reflections about faces are pure index mirrors
//! and midpoint quadrature is exact for constants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub start: f64,
    pub len: f64,
    pub m: usize,
    pub periodic: bool,
}

impl AxisSpec {
    pub fn periodic(len: f64, m: usize) -> Self {
        Self { start: 0.0, len, m, periodic: true }
    }
    pub fn cell_centered(start: f64, len: f64, m: usize) -> Self {
        Self { start, len, m, periodic: false }
    }
    pub fn h(&self) -> f64 {
        self.len / self.m as f64
    }
    /// Coordinate of the i-th point.
    pub fn coord(&self, i: usize) -> f64 {
        if self.periodic {
            self.start + i as f64 * self.h()
        } else {
            self.start + (i as f64 + 0.5) * self.h()
        }
    }
}

/// Geometry of a structured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Fully periodic box in N dimensions.
    PeriodicBox { axes: Vec<AxisSpec> },
    /// Tangentially periodic slab; the last axis is the cell-centered normal
    /// direction with the physical boundary at depth 0.
    HalfSpace { tangential: Vec<AxisSpec>, depth: f64, m_normal: usize },
    /// Bounded interval `[a, a+len]`, cell-centered.
    Interval { axis: AxisSpec },
    /// Disk of given radius in polar coordinates: cell-centered radial axis
    /// times a periodic angular axis.
    Disk { radius: f64, m_r: usize, m_theta: usize },
}

impl Geometry {
    pub fn periodic_box(lens: &[f64], ms: &[usize]) -> Self {
        assert_eq!(lens.len(), ms.len());
        Geometry::PeriodicBox {
            axes: lens
                .iter()
                .zip(ms)
                .map(|(&l, &m)| AxisSpec::periodic(l, m))
                .collect(),
        }
    }

    pub fn interval(a: f64, b: f64, m: usize) -> Self {
        Geometry::Interval { axis: AxisSpec::cell_centered(a, b - a, m) }
    }

    /// Grid axes in storage order (axis 0 outermost).
    pub fn axes(&self) -> Vec<AxisSpec> {
        match self {
            Geometry::PeriodicBox { axes } => axes.clone(),
            Geometry::HalfSpace { tangential, depth, m_normal } => {
                let mut v = tangential.clone();
                v.push(AxisSpec::cell_centered(0.0, *depth, *m_normal));
                v
            }
            Geometry::Interval { axis } => vec![*axis],
            Geometry::Disk { radius, m_r, m_theta } => vec![
                AxisSpec::cell_centered(0.0, *radius, *m_r),
                AxisSpec::periodic(2.0 * std::f64::consts::PI, *m_theta),
            ],
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes().iter().map(|a| a.m).collect()
    }

    pub fn npoints(&self) -> usize {
        self.shape().iter().product()
    }

    /// Spatial dimension of the physical domain.
    pub fn dim(&self) -> usize {
        match self {
            Geometry::PeriodicBox { axes } => axes.len(),
            Geometry::HalfSpace { tangential, .. } => tangential.len() + 1,
            Geometry::Interval { .. } => 1,
            Geometry::Disk { .. } => 2,
        }
    }

    /// Quadrature weight of grid point `idx` (midpoint rule on bounded axes,
    /// exact mean times length on periodic axes; polar measure on the disk).
    pub fn weight(&self, idx: &[usize]) -> f64 {
        let axes = self.axes();
        let base: f64 = axes.iter().map(|a| a.h()).product();
        match self {
            Geometry::Disk { .. } => base * axes[0].coord(idx[0]),
            _ => base,
        }
    }

    /// Physical coordinates of a grid point. For the disk these are the
    /// polar coordinates `(r, theta)`.
    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        self.axes()
            .iter()
            .zip(idx)
            .map(|(a, &i)| a.coord(i))
            .collect()
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        match self {
            Geometry::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            _ => self.axes().iter().map(|a| a.len).product(),
        }
    }

    /// Row-major linear index from a multi-index.
    pub fn linear(&self, idx: &[usize]) -> usize {
        let shape = self.shape();
        let mut lin = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < shape[d]);
            lin = lin * shape[d] + i;
        }
        lin
    }

    /// Multi-index from a row-major linear index.
    pub fn multi(&self, mut lin: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0usize; shape.len()];
        for d in (0..shape.len()).rev() {
            idx[d] = lin % shape[d];
            lin /= shape[d];
        }
        idx
    }
}

/// A complex `n`-vector valued function sampled on a structured grid.
/// Storage is component-major: component `c` occupies
/// `data[c * npoints .. (c+1) * npoints]` in row-major point order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub geom: Geometry,
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(geom: Geometry, n: usize) -> Self {
        let len = geom.npoints() * n;
        Self { geom, n, data: vec![Complex64::default(); len] }
    }

    /// Build a field by evaluating `f(component, coords)` at every point.
    pub fn from_fn(geom: Geometry, n: usize, mut f: impl FnMut(usize, &[f64]) -> Complex64) -> Self {
        let npts = geom.npoints();
        let mut data = Vec::with_capacity(npts * n);
        for c in 0..n {
            for p in 0..npts {
                let idx = geom.multi(p);
                let x = geom.coords(&idx);
                data.push(f(c, &x));
            }
        }
        Self { geom, n, data }
    }

    pub fn npoints(&self) -> usize {
        self.geom.npoints()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let npts = self.npoints();
        &self.data[c * npts..(c + 1) * npts]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let npts = self.npoints();
        &mut self.data[c * npts..(c + 1) * npts]
    }

    pub fn at(&self, c: usize, lin: usize) -> Complex64 {
        self.data[c * self.npoints() + lin]
    }

    pub fn set(&mut self, c: usize, lin: usize, v: Complex64) {
        let npts = self.npoints();
        self.data[c * npts + lin] = v;
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, a: Complex64, x: &GridField) {
        assert_eq!(self.data.len(), x.data.len());
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &GridField) -> GridField {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    pub fn scaled(&self, s: Complex64) -> GridField {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// Pointwise multiply every component by a scalar function of position.
    pub fn mul_scalar_field(&mut self, w: &[f64]) {
        let npts = self.npoints();
        assert_eq!(w.len(), npts);
        for c in 0..self.n {
            let comp = self.component_mut(c);
            for (v, &s) in comp.iter_mut().zip(w) {
                *v *= s;
            }
        }
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Weighted L2 inner product `<self, other>` over the grid measure.
    pub fn inner(&self, other: &GridField) -> Complex64 {
        assert_eq!(self.data.len(), other.data.len());
        let npts = self.npoints();
        let mut acc = Complex64::default();
        for c in 0..self.n {
            let a = self.component(c);
            let b = other.component(c);
            for p in 0..npts {
                let w = self.geom.weight(&self.geom.multi(p));
                acc += a[p] * b[p].conj() * w;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_array_length_matches_geometry() {
        let g = Geometry::periodic_box(&[2.0 * std::f64::consts::PI, 1.0], &[8, 4]);
        let f = GridField::zeros(g.clone(), 3);
        assert_eq!(f.data.len(), g.npoints() * 3);
        assert_eq!(g.npoints(), 32);
    }

    #[test]
    fn periodic_axis_has_no_duplicate_endpoint() {
        let g = Geometry::periodic_box(&[1.0], &[4]);
        let ax = g.axes()[0];
        assert!((ax.coord(0) - 0.0).abs() < 1e-15);
        // last stored point is one mesh cell short of the wrap
        assert!((ax.coord(3) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn linear_multi_roundtrip() {
        let g = Geometry::Disk { radius: 1.0, m_r: 5, m_theta: 7 };
        for lin in 0..g.npoints() {
            assert_eq!(g.linear(&g.multi(lin)), lin);
        }
    }

    #[test]
    fn disk_weights_sum_to_area() {
        let g = Geometry::Disk { radius: 2.0, m_r: 16, m_theta: 9 };
        let total: f64 = (0..g.npoints()).map(|p| g.weight(&g.multi(p))).sum();
        assert!((total - g.measure()).abs() < 1e-12 * g.measure());
    }

    #[test]
    fn interval_weights_sum_to_length() {
        let g = Geometry::interval(-1.0, 3.0, 11);
        let total: f64 = (0..g.npoints()).map(|p| g.weight(&g.multi(p))).sum();
        assert!((total - 4.0).abs() < 1e-13);
    }
}
