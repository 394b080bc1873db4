use crate::error::{CoreError, Result};

/// Uniform lattice over the box `[-L, L]^n`, n in {2, 3}, with a flat collar
/// of width `collar_width` along the boundary on which glued metrics are
/// required to equal the Euclidean metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub collar_width: f64,
}

impl GridSpec {
    pub fn new(
        dim: usize,
        half_width: f64,
        points_per_axis: usize,
        collar_width: f64,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CoreError::InvalidParameter(format!(
                "dim must be 2 or 3, got {dim}"
            )));
        }
        if !(half_width > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if points_per_axis < 16 {
            return Err(CoreError::InvalidParameter(format!(
                "points_per_axis must be >= 16, got {points_per_axis}"
            )));
        }
        let h = 2.0 * half_width / (points_per_axis as f64 - 1.0);
        if !(collar_width >= 4.0 * h) {
            return Err(CoreError::InvalidParameter(format!(
                "collar_width must be >= 4h = {:.6e}, got {collar_width}",
                4.0 * h
            )));
        }
        Ok(Self {
            dim,
            half_width,
            points_per_axis,
            collar_width,
        })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis as f64 - 1.0)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Number of independent components of a symmetric 2-tensor.
    #[inline]
    pub fn sym_comps(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Number of unordered axis pairs (a <= b), used for Hessian storage.
    #[inline]
    pub fn axis_pairs(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Flat-index stride of a unit step along `axis` (row-major ordering,
    /// axis 0 outermost).
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> f64 {
        -self.half_width + self.spacing() * index as f64
    }

    /// Multi-index of a flat node index; unused axes report 0.
    #[inline]
    pub fn decompose(&self, node: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        match self.dim {
            2 => [node / n, node % n, 0],
            _ => [node / (n * n), (node / n) % n, node % n],
        }
    }

    #[inline]
    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        let n = self.points_per_axis;
        match self.dim {
            2 => idx[0] * n + idx[1],
            _ => (idx[0] * n + idx[1]) * n + idx[2],
        }
    }

    /// Coordinates of a node; unused axes report 0.
    #[inline]
    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let idx = self.decompose(node);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(idx[a]);
        }
        x
    }

    /// Euclidean distance from a node to the box boundary.
    pub fn boundary_distance(&self, node: usize) -> f64 {
        let idx = self.decompose(node);
        let h = self.spacing();
        let n = self.points_per_axis;
        let mut d = f64::INFINITY;
        for a in 0..self.dim {
            let lo = idx[a] as f64 * h;
            let hi = (n - 1 - idx[a]) as f64 * h;
            d = d.min(lo).min(hi);
        }
        d
    }

    #[inline]
    pub fn in_collar(&self, node: usize) -> bool {
        self.boundary_distance(node) <= self.collar_width
    }

    /// Node nearest to the given coordinates.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let n = self.points_per_axis;
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            let t = ((x[a] + self.half_width) / h).round();
            idx[a] = (t.max(0.0) as usize).min(n - 1);
        }
        self.flatten(idx)
    }

    pub fn same_grid(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(CoreError::GridMismatch)
        }
    }
}

/// Map (i, j) -> index into symmetric storage, i, j < dim.
#[inline]
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match dim {
        2 => i + j, // (0,0)=0 (0,1)=1 (1,1)=2
        _ => match (i, j) {
            (0, 0) => 0,
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 1) => 3,
            (1, 2) => 4,
            _ => 5,
        },
    }
}

/// Map (a, b) axis pair, a <= b, -> index into Hessian pair storage.
#[inline]
pub fn pair_index(dim: usize, a: usize, b: usize) -> usize {
    sym_index(dim, a, b)
}
