//! Lattice geometry: the box D_N, site indexing, l1 balls, boundaries and
//! distances shared by every solver and sampler.
//!
//! Sites are ordered row-major by (x, y); the index map is a bijection onto
//! 0..(2N+1)^2. Boundary classification follows the inner vertex boundary
//! convention: a site of a set is boundary iff one of its four neighbors is
//! not in the set.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest supported box half-width. 2048 is required by callers; 4096 keeps
/// a full field under ~550 MB.
pub const MAX_HALF_WIDTH: i32 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

/// Shorthand constructor.
pub fn site(x: i32, y: i32) -> Site {
    Site { x, y }
}

impl Site {
    pub fn l1_dist(self, other: Site) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// The four lattice neighbors, in a fixed (+x, -x, +y, -y) order.
    pub fn neighbors(self) -> [Site; 4] {
        [
            site(self.x + 1, self.y),
            site(self.x - 1, self.y),
            site(self.x, self.y + 1),
            site(self.x, self.y - 1),
        ]
    }
}

/// The box [-N, N]^2 of Z^2 with its dense row-major site indexing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeDomain {
    half_width: i32,
}

impl LatticeDomain {
    pub fn build_box(half_width: i32) -> Result<Self> {
        if half_width < 1 || half_width > MAX_HALF_WIDTH {
            return Err(Error::Size(format!(
                "box half-width must be in 1..={MAX_HALF_WIDTH}, got {half_width}"
            )));
        }
        Ok(LatticeDomain { half_width })
    }

    pub fn half_width(&self) -> i32 {
        self.half_width
    }

    /// Side length 2N+1.
    pub fn side(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    pub fn num_sites(&self) -> usize {
        self.side() * self.side()
    }

    pub fn contains(&self, s: Site) -> bool {
        s.x.abs() <= self.half_width && s.y.abs() <= self.half_width
    }

    /// Sites of D_N connected by an edge to the complement: the outermost ring.
    pub fn is_boundary(&self, s: Site) -> bool {
        debug_assert!(self.contains(s));
        s.x.abs() == self.half_width || s.y.abs() == self.half_width
    }

    pub fn is_interior(&self, s: Site) -> bool {
        self.contains(s) && !self.is_boundary(s)
    }

    pub fn index(&self, s: Site) -> usize {
        debug_assert!(self.contains(s));
        let n = self.half_width;
        (s.x + n) as usize * self.side() + (s.y + n) as usize
    }

    pub fn site_at(&self, idx: usize) -> Site {
        let side = self.side();
        debug_assert!(idx < side * side);
        let n = self.half_width;
        site((idx / side) as i32 - n, (idx % side) as i32 - n)
    }

    /// l-infinity distance to the boundary ring: N - max(|x|, |y|).
    pub fn dist_to_boundary(&self, s: Site) -> u32 {
        debug_assert!(self.contains(s));
        (self.half_width - s.x.abs().max(s.y.abs())) as u32
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let n = self.half_width;
        (-n..=n).flat_map(move |x| (-n..=n).map(move |y| site(x, y)))
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.sites().filter(move |&s| self.is_interior(s))
    }

    pub fn boundary_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.sites().filter(move |&s| self.is_boundary(s))
    }

    pub fn num_interior(&self) -> usize {
        let m = self.side() - 2;
        m * m
    }

    pub fn num_boundary(&self) -> usize {
        self.num_sites() - self.num_interior()
    }
}

/// An ordered subset of domain sites with interior/boundary classification
/// relative to the set itself.
#[derive(Clone, Debug)]
pub struct SiteSet {
    domain: LatticeDomain,
    sites: Vec<Site>,
    // Dense bounding-box lookup: local index or -1.
    min_x: i32,
    min_y: i32,
    bbox_w: usize,
    bbox_h: usize,
    lookup: Vec<i32>,
    interior: Vec<u32>,
    boundary: Vec<u32>,
    interior_mask: Vec<bool>,
}

impl SiteSet {
    /// Builds a set from arbitrary sites. Sites are sorted row-major;
    /// duplicates or sites outside the domain are rejected.
    pub fn new(domain: LatticeDomain, mut sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Input("empty site set".into()));
        }
        for &s in &sites {
            if !domain.contains(s) {
                return Err(Error::Geometry(format!(
                    "site ({},{}) outside domain of half-width {}",
                    s.x,
                    s.y,
                    domain.half_width()
                )));
            }
        }
        sites.sort();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("duplicate sites in set".into()));
        }
        Ok(Self::from_sorted(domain, sites))
    }

    fn from_sorted(domain: LatticeDomain, sites: Vec<Site>) -> Self {
        let min_x = sites.iter().map(|s| s.x).min().unwrap();
        let max_x = sites.iter().map(|s| s.x).max().unwrap();
        let min_y = sites.iter().map(|s| s.y).min().unwrap();
        let max_y = sites.iter().map(|s| s.y).max().unwrap();
        let bbox_w = (max_x - min_x + 1) as usize;
        let bbox_h = (max_y - min_y + 1) as usize;
        let mut lookup = vec![-1i32; bbox_w * bbox_h];
        for (i, &s) in sites.iter().enumerate() {
            lookup[(s.x - min_x) as usize * bbox_h + (s.y - min_y) as usize] = i as i32;
        }
        let mut set = SiteSet {
            domain,
            sites,
            min_x,
            min_y,
            bbox_w,
            bbox_h,
            lookup,
            interior: Vec::new(),
            boundary: Vec::new(),
            interior_mask: Vec::new(),
        };
        set.classify();
        set
    }

    fn classify(&mut self) {
        let n = self.sites.len();
        self.interior_mask = vec![false; n];
        for i in 0..n {
            let all_in = self.sites[i]
                .neighbors()
                .iter()
                .all(|&nb| self.local_index(nb).is_some());
            self.interior_mask[i] = all_in;
            if all_in {
                self.interior.push(i as u32);
            } else {
                self.boundary.push(i as u32);
            }
        }
    }

    pub fn full_box(domain: LatticeDomain) -> Self {
        let sites: Vec<Site> = domain.sites().collect();
        Self::from_sorted(domain, sites)
    }

    /// The open l1 ball B_R(v) = {x : |x1-v1| + |x2-v2| < R}.
    pub fn l1_ball(domain: LatticeDomain, center: Site, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::Parameter(format!("l1 ball radius must be positive, got {radius}")));
        }
        if !domain.contains(center) {
            return Err(Error::Geometry("l1 ball center outside domain".into()));
        }
        // Integer norms q satisfy q < R  <=>  q <= ceil(R) - 1.
        let q = radius.ceil() as i64 - 1;
        let q = i32::try_from(q).map_err(|_| Error::Parameter("l1 ball radius too large".into()))?;
        let mut sites = Vec::with_capacity((2 * q as usize + 1).pow(2) / 2 + 1);
        for dx in -q..=q {
            let rem = q - dx.abs();
            for dy in -rem..=rem {
                let s = site(center.x + dx, center.y + dy);
                if !domain.contains(s) {
                    return Err(Error::Geometry(format!(
                        "l1 ball of radius {radius} at ({},{}) exits the domain",
                        center.x, center.y
                    )));
                }
                sites.push(s);
            }
        }
        sites.sort();
        Ok(Self::from_sorted(domain, sites))
    }

    pub fn domain(&self) -> LatticeDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, local: usize) -> Site {
        self.sites[local]
    }

    pub fn local_index(&self, s: Site) -> Option<usize> {
        let ix = s.x - self.min_x;
        let iy = s.y - self.min_y;
        if ix < 0 || iy < 0 || ix as usize >= self.bbox_w || iy as usize >= self.bbox_h {
            return None;
        }
        let v = self.lookup[ix as usize * self.bbox_h + iy as usize];
        (v >= 0).then_some(v as usize)
    }

    pub fn contains(&self, s: Site) -> bool {
        self.local_index(s).is_some()
    }

    /// Local indices of sites whose four neighbors all lie in the set.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    /// Local indices of the inner vertex boundary.
    pub fn boundary(&self) -> &[u32] {
        &self.boundary
    }

    pub fn is_interior_local(&self, local: usize) -> bool {
        self.interior_mask[local]
    }
}
