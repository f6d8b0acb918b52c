//! The fixed five-link network, its three origin-destination paths and the
//! link-path incidence matrix.
//!
//! Topology: links `e1 = (o, v1)`, `e2 = (o, v2)`, `e3 = (v1, v2)`,
//! `e4 = (v1, d)`, `e5 = (v2, d)`; paths `p1 = (e1, e4)`, `p2 = (e2, e5)`,
//! `p3 = (e1, e3, e5)`.

use crate::error::{Error, Result};

pub const NUM_LINKS: usize = 5;
pub const NUM_PATHS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Origin,
    V1,
    V2,
    Destination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl Link {
    pub const ALL: [Link; NUM_LINKS] = [Link::E1, Link::E2, Link::E3, Link::E4, Link::E5];

    pub fn index(self) -> usize {
        match self {
            Link::E1 => 0,
            Link::E2 => 1,
            Link::E3 => 2,
            Link::E4 => 3,
            Link::E5 => 4,
        }
    }

    pub fn from_index(i: usize) -> Link {
        Link::ALL[i]
    }

    pub fn tail(self) -> Node {
        match self {
            Link::E1 | Link::E2 => Node::Origin,
            Link::E3 | Link::E4 => Node::V1,
            Link::E5 => Node::V2,
        }
    }

    pub fn head(self) -> Node {
        match self {
            Link::E1 => Node::V1,
            Link::E2 | Link::E3 => Node::V2,
            Link::E4 | Link::E5 => Node::Destination,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Path {
    P1,
    P2,
    P3,
}

impl Path {
    pub const ALL: [Path; NUM_PATHS] = [Path::P1, Path::P2, Path::P3];

    pub fn index(self) -> usize {
        match self {
            Path::P1 => 0,
            Path::P2 => 1,
            Path::P3 => 2,
        }
    }

    pub fn links(self) -> &'static [Link] {
        match self {
            Path::P1 => &[Link::E1, Link::E4],
            Path::P2 => &[Link::E2, Link::E5],
            Path::P3 => &[Link::E1, Link::E3, Link::E5],
        }
    }
}

/// Link-path incidence matrix `A`, `A[e][p] = 1` iff `e` is on `p`.
pub const INCIDENCE: [[f64; NUM_PATHS]; NUM_LINKS] = [
    [1.0, 0.0, 1.0], // e1: p1, p3
    [0.0, 1.0, 0.0], // e2: p2
    [0.0, 0.0, 1.0], // e3: p3
    [1.0, 0.0, 0.0], // e4: p1
    [0.0, 1.0, 1.0], // e5: p2, p3
];

/// The fixed network with per-link lengths and flow capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    lengths: [f64; NUM_LINKS],
    capacities: [f64; NUM_LINKS],
}

impl Network {
    pub fn new(lengths: [f64; NUM_LINKS], capacities: [f64; NUM_LINKS]) -> Result<Self> {
        for (i, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::NonPositiveGeometry {
                    link: i + 1,
                    what: "length",
                    value: l,
                });
            }
        }
        for (i, &c) in capacities.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::NonPositiveGeometry {
                    link: i + 1,
                    what: "capacity",
                    value: c,
                });
            }
        }
        let network = Self {
            lengths,
            capacities,
        };
        network.check_topology();
        Ok(network)
    }

    /// Re-checks the structural assumptions: every path runs from the origin
    /// to the destination along adjacent links, and the incidence matrix
    /// matches path membership.
    fn check_topology(&self) {
        for p in Path::ALL {
            let links = p.links();
            assert_eq!(links[0].tail(), Node::Origin);
            assert_eq!(links[links.len() - 1].head(), Node::Destination);
            for pair in links.windows(2) {
                assert_eq!(pair[0].head(), pair[1].tail());
            }
            for e in Link::ALL {
                let member = links.contains(&e) as u8 as f64;
                assert_eq!(INCIDENCE[e.index()][p.index()], member);
            }
        }
        // No oriented cycles: tails strictly precede heads in the order
        // o < v1 < v2 < d.
        let rank = |n: Node| match n {
            Node::Origin => 0,
            Node::V1 => 1,
            Node::V2 => 2,
            Node::Destination => 3,
        };
        for e in Link::ALL {
            assert!(rank(e.tail()) < rank(e.head()));
        }
    }

    pub fn length(&self, e: Link) -> f64 {
        self.lengths[e.index()]
    }

    pub fn capacity(&self, e: Link) -> f64 {
        self.capacities[e.index()]
    }

    pub fn lengths(&self) -> [f64; NUM_LINKS] {
        self.lengths
    }

    pub fn capacities(&self) -> [f64; NUM_LINKS] {
        self.capacities
    }

    pub fn path_length(&self, p: Path) -> f64 {
        p.links().iter().map(|&e| self.length(e)).sum()
    }

    /// Links leaving a node, in index order.
    pub fn out_links(node: Node) -> &'static [Link] {
        match node {
            Node::Origin => &[Link::E1, Link::E2],
            Node::V1 => &[Link::E3, Link::E4],
            Node::V2 => &[Link::E5],
            Node::Destination => &[],
        }
    }

    /// Links entering a node, in index order.
    pub fn in_links(node: Node) -> &'static [Link] {
        match node {
            Node::Origin => &[],
            Node::V1 => &[Link::E1],
            Node::V2 => &[Link::E2, Link::E3],
            Node::Destination => &[Link::E4, Link::E5],
        }
    }

    /// Flow vector `y = A z` induced by a path preference `z >= 0`.
    pub fn path_flow(&self, z: [f64; NUM_PATHS]) -> Result<[f64; NUM_LINKS]> {
        for (p, &zp) in z.iter().enumerate() {
            if zp < 0.0 {
                return Err(Error::NegativePreference {
                    path: p + 1,
                    value: zp,
                });
            }
        }
        let mut y = [0.0; NUM_LINKS];
        for e in 0..NUM_LINKS {
            for p in 0..NUM_PATHS {
                y[e] += INCIDENCE[e][p] * z[p];
            }
        }
        Ok(y)
    }

    /// Length of the residual route charged when an agent gives up at the
    /// tail of `e`: the concrete stay-branch constants of the value-function
    /// recursion.
    pub fn penalty_length(&self, e: Link) -> f64 {
        let l = &self.lengths;
        match e {
            Link::E1 => (l[0] + l[3]).min(l[0] + l[2] + l[4]),
            Link::E2 => l[1] + l[4],
            Link::E3 => l[2] + l[4],
            Link::E4 => l[3],
            Link::E5 => l[4],
        }
    }
}
