use rand::Rng;

use crate::Vector;

/// An axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    /// Panics if the bounds have different lengths or are not ordered.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "region bounds differ in length");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l <= u),
            "region lower bound exceeds upper bound"
        );
        Self { lower, upper }
    }

    /// Box of half-width `half` around `center`.
    pub fn around(center: &Vector, half: f64) -> Self {
        Self::new(
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| if l < u { rng.random_range(*l..*u) } else { *l }),
        )
    }

    pub fn area(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }
}

/// A regular tensor grid with `counts[i]` nodes along axis `i`, spanning a
/// [`Region`] (both ends included).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    region: Region,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(region: Region, counts: Vec<usize>) -> Self {
        assert_eq!(region.dim(), counts.len());
        assert!(counts.iter().all(|&c| c >= 1));
        Self { region, counts }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_value(&self, axis: usize, k: usize) -> f64 {
        let (l, u) = (self.region.lower[axis], self.region.upper[axis]);
        if self.counts[axis] == 1 {
            0.5 * (l + u)
        } else {
            l + (u - l) * k as f64 / (self.counts[axis] - 1) as f64
        }
    }

    /// Multi-index of flat index `idx`; axis 0 varies fastest.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let k = idx % c;
                idx /= c;
                k
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.counts)
            .rev()
            .fold(0, |acc, (k, c)| acc * c + k)
    }

    pub fn point(&self, idx: usize) -> Vector {
        let multi = self.multi_index(idx);
        Vector::from_iterator(
            self.counts.len(),
            multi.iter().enumerate().map(|(a, &k)| self.axis_value(a, k)),
        )
    }

    pub fn points(&self) -> impl Iterator<Item = Vector> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Flat indices of the corners of the grid cell containing `x` (clamped
    /// to the grid).
    pub fn cell_corners(&self, x: &Vector) -> Vec<usize> {
        let mut lows = Vec::with_capacity(self.counts.len());
        for (a, &c) in self.counts.iter().enumerate() {
            if c == 1 {
                lows.push((0, 0));
                continue;
            }
            let (l, u) = (self.region.lower[a], self.region.upper[a]);
            let t = ((x[a] - l) / (u - l) * (c - 1) as f64).clamp(0.0, (c - 1) as f64);
            let k = (t.floor() as usize).min(c - 2);
            let hi = if t > k as f64 { k + 1 } else { k };
            lows.push((k, hi));
        }
        let mut corners = Vec::with_capacity(1 << lows.len());
        for mask in 0..(1usize << lows.len()) {
            let multi: Vec<usize> = lows
                .iter()
                .enumerate()
                .map(|(a, (lo, hi))| if mask >> a & 1 == 1 { *hi } else { *lo })
                .collect();
            corners.push(self.flat_index(&multi));
        }
        corners.sort_unstable();
        corners.dedup();
        corners
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(Region::new(vec![0.0, -1.0], vec![1.0, 1.0]), vec![3, 5]);
        assert_eq!(g.len(), 15);
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.point(0), Vector::from_vec(vec![0.0, -1.0]));
        assert_eq!(g.point(14), Vector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn cell_corners_on_node_and_inside() {
        let g = Grid::new(Region::new(vec![0.0, 0.0], vec![2.0, 2.0]), vec![3, 3]);
        // exactly on a node: one corner
        assert_eq!(g.cell_corners(&Vector::from_vec(vec![1.0, 1.0])), vec![4]);
        let c = g.cell_corners(&Vector::from_vec(vec![0.5, 1.5]));
        assert_eq!(c, vec![3, 4, 6, 7]);
    }
}
