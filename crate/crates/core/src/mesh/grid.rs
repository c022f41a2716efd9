use std::collections::HashMap;

use super::domain::{DomainKind, DomainSpec};
use super::DampingProfile;
use crate::linalg::{Ordering, SparseOperator};
use crate::{Error, Result};

/// Smallest cut fraction kept at the curved boundary; nodes closer to the
/// boundary than this are treated as sitting at this distance.
pub const MIN_CUT: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub lattice: [i64; 3],
    pub x: [f64; 3],
}

/// Link between two neighbouring nodes along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: usize,
    /// Face measure over (length * reference cell volume).
    pub weight: f64,
    pub mid: [f64; 3],
}

/// Link from a node to the Dirichlet boundary, of length `theta * h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub node: usize,
    pub axis: usize,
    pub theta: f64,
    pub weight: f64,
    pub mid: [f64; 3],
}

enum Side {
    Node(usize),
    Wall(f64),
}

/// Uniform lattice restricted to the domain, with the finite-volume
/// geometry (dual cells, faces, boundary cuts) needed by the stencils.
///
/// Grid functions are stored in symmetrised form `m^{1/2} u`, where `m` is
/// the dual-cell volume relative to `h^d`; on boxes and tori `m = 1`.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: DomainSpec,
    h: Vec<f64>,
    intervals: Vec<usize>,
    nodes: Vec<Node>,
    lookup: HashMap<[i64; 3], usize>,
    mass: Vec<f64>,
    edges: Vec<Edge>,
    arms: Vec<Arm>,
}

impl Grid {
    /// `resolution` is the number of lattice intervals per unit length.
    pub fn build(spec: &DomainSpec, resolution: f64) -> Result<Grid> {
        spec.validate()?;
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::TooCoarse(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let dim = spec.dim();
        let periodic = spec.is_periodic();
        let (h, intervals, ranges): (Vec<f64>, Vec<usize>, Vec<(i64, i64)>) = match spec.kind {
            DomainKind::Ellipse => {
                let h = 1.0 / resolution;
                let (sa, sb) = spec.semi_axes().unwrap_or((1.0, 1.0));
                let ri = (sa / h).ceil() as i64;
                let rj = (sb / h).ceil() as i64;
                (
                    vec![h, h],
                    vec![2 * ri as usize, 2 * rj as usize],
                    vec![(-ri, ri), (-rj, rj)],
                )
            }
            _ => {
                let mut hs = Vec::new();
                let mut ns = Vec::new();
                let mut rs = Vec::new();
                for &l in &spec.extents {
                    let n = (l * resolution).round().max(1.0) as usize;
                    hs.push(l / n as f64);
                    ns.push(n);
                    if periodic {
                        if n < 3 {
                            return Err(Error::TooCoarse(format!(
                                "periodic side {l} needs at least 3 intervals, got {n}"
                            )));
                        }
                        rs.push((0, n as i64 - 1));
                    } else {
                        rs.push((1, n as i64 - 1));
                    }
                }
                (hs, ns, rs)
            }
        };
        let shortest = intervals.iter().copied().min().unwrap_or(0);
        if shortest < 4 {
            log::warn!("grid has only {shortest} intervals across its shortest extent");
        }

        let inside = |x: &[f64; 3]| match spec.kind {
            DomainKind::Ellipse => spec.extents[0] * x[0] * x[0] + spec.extents[1] * x[1] * x[1] < 1.0,
            _ => true,
        };
        let coord = |l: &[i64; 3]| {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = l[a] as f64 * h[a];
            }
            x
        };

        let mut nodes = Vec::new();
        let mut lookup = HashMap::new();
        let mut lat = [0i64; 3];
        enumerate(&ranges, 0, &mut lat, &mut |l| {
            let x = coord(l);
            if inside(&x) && ranges.iter().enumerate().all(|(a, r)| r.0 <= l[a] && l[a] <= r.1) {
                lookup.insert(*l, nodes.len());
                nodes.push(Node { lattice: *l, x });
            }
        });
        if nodes.is_empty() {
            return Err(Error::TooCoarse("no interior node at this resolution".into()));
        }

        let side = |k: usize, axis: usize, dir: i64| -> Side {
            let mut l = nodes[k].lattice;
            l[axis] += dir;
            if periodic {
                let n = intervals[axis] as i64;
                l[axis] = l[axis].rem_euclid(n);
            }
            if let Some(&j) = lookup.get(&l) {
                return Side::Node(j);
            }
            let theta = match spec.kind {
                DomainKind::Ellipse => {
                    let x = &nodes[k].x;
                    let (a, b) = (spec.extents[0], spec.extents[1]);
                    let reach = if axis == 0 {
                        ((1.0 - b * x[1] * x[1]) / a).max(0.0).sqrt()
                    } else {
                        ((1.0 - a * x[0] * x[0]) / b).max(0.0).sqrt()
                    };
                    ((reach - dir as f64 * x[axis]) / h[axis]).clamp(MIN_CUT, 1.0)
                }
                _ => 1.0,
            };
            Side::Wall(theta)
        };

        let n = nodes.len();
        let mu_ref: f64 = h.iter().product();
        let mut dual = vec![[1.0f64; 3]; n];
        let mut sides = Vec::with_capacity(n);
        for k in 0..n {
            let mut s = Vec::with_capacity(dim);
            for axis in 0..dim {
                let lo = side(k, axis, -1);
                let hi = side(k, axis, 1);
                let len = |s: &Side| match s {
                    Side::Node(_) => h[axis],
                    Side::Wall(t) => t * h[axis],
                };
                dual[k][axis] = 0.5 * (len(&lo) + len(&hi));
                s.push((lo, hi));
            }
            sides.push(s);
        }
        let face = |k: usize, axis: usize| (0..dim).filter(|&b| b != axis).map(|b| dual[k][b]).product::<f64>();

        let mut edges = Vec::new();
        let mut arms = Vec::new();
        for k in 0..n {
            for axis in 0..dim {
                let (lo, hi) = &sides[k][axis];
                for (dir, s) in [(-1.0, lo), (1.0, hi)] {
                    let mut mid = nodes[k].x;
                    match *s {
                        Side::Node(j) => {
                            if dir < 0.0 {
                                continue;
                            }
                            mid[axis] += 0.5 * h[axis];
                            let weight = 0.5 * (face(k, axis) + face(j, axis)) / (h[axis] * mu_ref);
                            edges.push(Edge {
                                a: k,
                                b: j,
                                axis,
                                weight,
                                mid,
                            });
                        }
                        Side::Wall(theta) => {
                            mid[axis] += dir * 0.5 * theta * h[axis];
                            let weight = face(k, axis) / (theta * h[axis] * mu_ref);
                            arms.push(Arm {
                                node: k,
                                axis,
                                theta,
                                weight,
                                mid,
                            });
                        }
                    }
                }
            }
        }
        let mass = dual.iter().map(|d| d[..dim].iter().product::<f64>() / mu_ref).collect();

        Ok(Grid {
            spec: spec.clone(),
            h,
            intervals,
            nodes,
            lookup,
            mass,
            edges,
            arms,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// Lattice intervals per axis (across the bounding box for the ellipse).
    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    /// Reference cell volume `prod h`.
    pub fn mu_ref(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn is_periodic(&self) -> bool {
        self.spec.is_periodic()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn coords(&self, k: usize) -> &[f64] {
        &self.nodes[k].x[..self.dim()]
    }

    pub fn index_of(&self, lattice: [i64; 3]) -> Option<usize> {
        self.lookup.get(&lattice).copied()
    }

    /// Dual-cell volumes relative to `h^d`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    /// Midpoints of all edges and arms: where damping is sampled.
    pub fn midpoints(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.edges
            .iter()
            .map(move |e| &e.mid[..d])
            .chain(self.arms.iter().map(move |a| &a.mid[..d]))
    }

    /// Symmetrised values `m^{1/2} u` from nodal values `u`, and back.
    pub fn to_symmetric(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.mass).map(|(v, m)| v * m.sqrt()).collect()
    }

    pub fn to_nodal(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.mass).map(|(v, m)| v / m.sqrt()).collect()
    }

    /// Discrete Laplacian (symmetrised, negative semidefinite).
    pub fn laplacian(&self) -> SparseOperator {
        self.assemble(|_| 1.0)
    }

    /// Flux-form `div a grad` with `a` sampled at link midpoints.
    pub fn kv_damping(&self, a: &DampingProfile) -> Result<SparseOperator> {
        a.validate_samples(self.midpoints()).map_err(Error::InvalidDamping)?;
        let d = self.dim();
        Ok(self.assemble(|mid| a.eval(&mid[..d])))
    }

    fn assemble(&self, coef: impl Fn(&[f64; 3]) -> f64) -> SparseOperator {
        let n = self.len();
        let mut diag = vec![0.0; n];
        let mut trip = Vec::with_capacity(2 * self.edges.len() + n);
        let sq: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        for e in &self.edges {
            let c = coef(&e.mid) * e.weight;
            if c == 0.0 {
                continue;
            }
            let off = c / (sq[e.a] * sq[e.b]);
            trip.push((e.a, e.b, off));
            trip.push((e.b, e.a, off));
            diag[e.a] -= c / self.mass[e.a];
            diag[e.b] -= c / self.mass[e.b];
        }
        for arm in &self.arms {
            let c = coef(&arm.mid) * arm.weight;
            diag[arm.node] -= c / self.mass[arm.node];
        }
        trip.extend(
            diag.into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .map(|(i, v)| (i, i, v)),
        );
        SparseOperator::from_triplets(n, trip)
    }

    /// Lexicographic ordering with the axis of fewest lattice positions
    /// fastest and periodic axes folded, so wrap-around links stay local.
    pub fn lattice_ordering(&self) -> Ordering {
        let d = self.dim();
        let mut axes: Vec<usize> = (0..d).collect();
        axes.sort_by_key(|&a| std::cmp::Reverse(self.intervals[a]));
        let periodic = self.is_periodic();
        let key = |k: usize| -> [i64; 3] {
            let mut out = [0i64; 3];
            for (slot, &a) in axes.iter().enumerate() {
                let i = self.nodes[k].lattice[a];
                let n = self.intervals[a] as i64;
                out[slot] = if periodic {
                    if i < (n + 1) / 2 {
                        2 * i
                    } else {
                        2 * (n - 1 - i) + 1
                    }
                } else {
                    i
                };
            }
            out
        };
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.sort_by_key(|&k| key(k));
        Ordering::from_permutation(perm)
    }

    /// Narrowest of the lattice and reverse Cuthill-McKee orderings for `op`.
    pub fn ordering_for(&self, op: &SparseOperator) -> Ordering {
        Ordering::narrowest(op, [self.lattice_ordering(), Ordering::reverse_cuthill_mckee(op)])
    }
}

fn enumerate(ranges: &[(i64, i64)], axis: usize, cur: &mut [i64; 3], f: &mut impl FnMut(&[i64; 3])) {
    if axis == ranges.len() {
        f(cur);
        return;
    }
    for i in ranges[axis].0..=ranges[axis].1 {
        cur[axis] = i;
        enumerate(ranges, axis + 1, cur, f);
    }
    cur[axis] = 0;
}
