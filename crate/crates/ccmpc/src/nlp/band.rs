//! Symmetric-indefinite banded linear algebra for the condensed KKT
//! system: reverse Cuthill-McKee reordering to compress the bandwidth
//! (multiple-shooting KKT systems become narrow-banded under it), then
//! an LDL^T profile factorization without pivoting. Stability comes from
//! the interior-point regularization loop, which retries with a shifted
//! diagonal until the factorization reports the expected inertia.

/// Inertia of the factored matrix: counts of positive, negative and
/// (numerically) zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
}

#[derive(Debug)]
pub enum FactorError {
    /// A pivot fell below the zero threshold.
    ZeroPivot { index: usize },
}

/// Reverse Cuthill-McKee ordering of an undirected graph given by
/// adjacency lists. Returns `perm` with `perm[old] = new`.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| adj[v].len());

    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| adj[u].len());
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    let mut perm = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}

/// A reusable banded symmetric system `A x = b`, assembled in original
/// indices and factored in RCM-permuted indices.
pub struct BandSystem {
    dim: usize,
    band: usize,
    perm: Vec<usize>,
    /// Assembled matrix (lower band, column-major, permuted indices).
    data: Vec<f64>,
    /// Factor workspace; holds L (off-diagonal) and D (diagonal) after
    /// a successful factorization.
    fac: Vec<f64>,
    /// Diagonal shift applied at the last factorization (permuted).
    shift: Vec<f64>,
    factored: bool,
}

impl BandSystem {
    /// Build the reordering and storage from the set of structurally
    /// nonzero positions (any order, self-edges allowed and ignored).
    pub fn new(dim: usize, edges: impl Iterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for (i, j) in edges {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut band = 0;
        for (i, list) in adj.iter().enumerate() {
            for &j in list {
                band = band.max(perm[i].abs_diff(perm[j]));
            }
        }
        let data = vec![0.0; dim * (band + 1)];
        let fac = vec![0.0; dim * (band + 1)];
        Self { dim, band, perm, data, fac, shift: vec![0.0; dim], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.band
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
        self.factored = false;
    }

    /// Accumulate `v` at original-index position `(i, j)`. Symmetric:
    /// only one of `(i, j)`/`(j, i)` should be added per logical entry.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (pi, pj) = (self.perm[i], self.perm[j]);
        let (hi, lo) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        debug_assert!(hi - lo <= self.band, "entry outside declared structure");
        self.data[lo * (self.band + 1) + (hi - lo)] += v;
    }

    /// Factor `A + shift` where `shift[p]` is added to the diagonal of
    /// original index `p`. Returns the inertia on success.
    pub fn factor_shifted(&mut self, shift: &dyn Fn(usize) -> f64) -> Result<Inertia, FactorError> {
        let bw = self.band;
        let stride = bw + 1;
        self.fac.copy_from_slice(&self.data);
        for p in 0..self.dim {
            let pp = self.perm[p];
            let s = shift(p);
            self.fac[pp * stride] += s;
            self.shift[pp] = s;
        }
        // Per-column pivot floor: a tiny pivot in a small-magnitude
        // column is legitimate, one in a large column is not.
        let mut col_scale = vec![0.0f64; self.dim];
        for j in 0..self.dim {
            let imax = (j + bw).min(self.dim - 1);
            for i in j..=imax {
                let v = self.fac[j * stride + (i - j)].abs();
                col_scale[j] = col_scale[j].max(v);
                col_scale[i] = col_scale[i].max(v);
            }
        }

        let mut inertia = Inertia { pos: 0, neg: 0, zero: 0 };
        for j in 0..self.dim {
            let kmin = j.saturating_sub(bw);
            let mut d = self.fac[j * stride];
            for k in kmin..j {
                let ljk = self.fac[k * stride + (j - k)];
                d -= ljk * ljk * self.fac[k * stride];
            }
            if d.abs() <= 1e-14 * col_scale[j].max(1e-8) {
                self.factored = false;
                return Err(FactorError::ZeroPivot { index: j });
            }
            if d > 0.0 {
                inertia.pos += 1;
            } else {
                inertia.neg += 1;
            }
            self.fac[j * stride] = d;
            let imax = (j + bw).min(self.dim - 1);
            for i in j + 1..=imax {
                let mut a = self.fac[j * stride + (i - j)];
                let klo = kmin.max(i.saturating_sub(bw));
                for k in klo..j {
                    a -= self.fac[k * stride + (i - k)]
                        * self.fac[k * stride + (j - k)]
                        * self.fac[k * stride];
                }
                self.fac[j * stride + (i - j)] = a / d;
            }
        }
        self.factored = true;
        Ok(inertia)
    }

    /// Solve `(A + shift) x = b` using the last successful factorization,
    /// with iterative refinement to absorb element growth from the
    /// pivot-free factorization. `b` and the result are in original
    /// indices.
    pub fn solve(&self, b: &[f64], refine: bool) -> Vec<f64> {
        assert!(self.factored, "solve called before a successful factor");
        let pb = self.permute(b);
        let mut x = self.solve_permuted(&pb);
        if refine {
            for _ in 0..2 {
                let r = self.residual_permuted(&x, &pb);
                let dx = self.solve_permuted(&r);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
            }
        }
        self.unpermute(&x)
    }

    fn permute(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (old, &new) in self.perm.iter().enumerate() {
            out[new] = b[old];
        }
        out
    }

    fn unpermute(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (old, &new) in self.perm.iter().enumerate() {
            out[old] = b[new];
        }
        out
    }

    /// `b - (A + shift) x` in permuted indices.
    fn residual_permuted(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let stride = self.band + 1;
        let mut r = b.to_vec();
        for j in 0..self.dim {
            r[j] -= (self.data[j * stride] + self.shift[j]) * x[j];
            let imax = (j + self.band).min(self.dim - 1);
            for i in j + 1..=imax {
                let v = self.data[j * stride + (i - j)];
                r[i] -= v * x[j];
                r[j] -= v * x[i];
            }
        }
        r
    }

    fn solve_permuted(&self, b: &[f64]) -> Vec<f64> {
        let bw = self.band;
        let stride = bw + 1;
        let mut x = b.to_vec();
        // Forward: L y = b (unit diagonal).
        for j in 0..self.dim {
            let imax = (j + bw).min(self.dim - 1);
            let xj = x[j];
            for i in j + 1..=imax {
                x[i] -= self.fac[j * stride + (i - j)] * xj;
            }
        }
        // Diagonal.
        for j in 0..self.dim {
            x[j] /= self.fac[j * stride];
        }
        // Backward: L^T x = z.
        for j in (0..self.dim).rev() {
            let imax = (j + bw).min(self.dim - 1);
            let mut acc = x[j];
            for i in j + 1..=imax {
                acc -= self.fac[j * stride + (i - j)] * x[i];
            }
            x[j] = acc;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg64;

    #[test]
    fn factor_and_solve_spd_tridiagonal() {
        let n = 50;
        let edges = (0..n - 1).map(|i| (i, i + 1));
        let mut sys = BandSystem::new(n, edges);
        sys.clear();
        for i in 0..n {
            sys.add(i, i, 4.0);
            if i + 1 < n {
                sys.add(i, i + 1, -1.0);
            }
        }
        let inertia = sys.factor_shifted(&|_| 0.0).unwrap();
        assert_eq!(inertia, Inertia { pos: n, neg: 0, zero: 0 });
        let b: Vec<f64> = (0..n).map(|i| (i % 5) as f64 - 2.0).collect();
        let x = sys.solve(&b, true);
        // Verify A x = b.
        for i in 0..n {
            let mut ax = 4.0 * x[i];
            if i > 0 {
                ax -= x[i - 1];
            }
            if i + 1 < n {
                ax -= x[i + 1];
            }
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn saddle_system_inertia() {
        // [[I, a], [a^T, 0]] with a = e_1: inertia (n, 1, 0) after a
        // small negative shift on the constraint row.
        let n = 4;
        let edges = vec![(0, n), (1, n), (2, n), (3, n)];
        let mut sys = BandSystem::new(n + 1, edges.into_iter());
        sys.clear();
        for i in 0..n {
            sys.add(i, i, 1.0);
            sys.add(i, n, 1.0);
        }
        let inertia = sys.factor_shifted(&|p| if p == n { -1e-8 } else { 0.0 }).unwrap();
        assert_eq!(inertia.pos, n);
        assert_eq!(inertia.neg, 1);
    }

    #[test]
    fn rcm_compresses_arrowhead() {
        // Arrowhead matrix (dense first row) has bandwidth n-1 naively;
        // RCM moves the hub to the end, but the hub still touches all,
        // so the band stays n-1. A chain shuffled randomly, however,
        // must come back to bandwidth 1.
        let n = 64;
        let mut rng = Pcg64::seeded(2);
        let mut label: Vec<usize> = (0..n).collect();
        // Fisher-Yates with our portable generator.
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            label.swap(i, j);
        }
        let edges = (0..n - 1).map(|i| (label[i], label[i + 1]));
        let sys = BandSystem::new(n, edges);
        assert_eq!(sys.bandwidth(), 1);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut sys = BandSystem::new(2, std::iter::once((0, 1)));
        sys.clear();
        sys.add(0, 1, 1.0); // zero diagonal throughout
        assert!(matches!(sys.factor_shifted(&|_| 0.0), Err(FactorError::ZeroPivot { .. })));
    }

    #[test]
    fn random_indefinite_solves_accurately() {
        let n = 40;
        let mut rng = Pcg64::seeded(8);
        // Random band-3 symmetric matrix with strong diagonal, random signs.
        let mut edges = Vec::new();
        for i in 0..n {
            for d in 1..=3usize {
                if i + d < n {
                    edges.push((i, i + d));
                }
            }
        }
        let mut sys = BandSystem::new(n, edges.iter().copied());
        sys.clear();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            let sign = if rng.uniform() < 0.3 { -1.0 } else { 1.0 };
            let d = sign * rng.uniform_in(2.0, 4.0);
            sys.add(i, i, d);
            dense[i][i] = d;
            for off in 1..=3usize {
                if i + off < n {
                    let v = rng.uniform_in(-0.5, 0.5);
                    sys.add(i, i + off, v);
                    dense[i][i + off] = v;
                    dense[i + off][i] = v;
                }
            }
        }
        sys.factor_shifted(&|_| 0.0).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let x = sys.solve(&b, true);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-9, "row {i}: {ax} vs {}", b[i]);
        }
    }
}
