//! 8-way spatial subdivision over integer points.

/// A cube `[lo, lo + size)^3` in index space.
#[derive(Debug, Clone, Copy)]
struct Octant {
    lo: [i32; 3],
    size: i32,
}

impl Octant {
    fn overlaps(&self, min: [i32; 3], max: [i32; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= max[a] && min[a] < self.lo[a] + self.size)
    }

    fn inside(&self, min: [i32; 3], max: [i32; 3]) -> bool {
        (0..3).all(|a| min[a] <= self.lo[a] && self.lo[a] + self.size - 1 <= max[a])
    }

    fn child_of(&self, p: [i32; 3]) -> usize {
        let h = self.size / 2;
        (0..3).map(|a| (((p[a] - self.lo[a]) >= h) as usize) << a).sum()
    }

    fn child(&self, k: usize) -> Octant {
        let h = self.size / 2;
        let mut lo = self.lo;
        for (a, l) in lo.iter_mut().enumerate() {
            if k >> a & 1 == 1 {
                *l += h;
            }
        }
        Octant { lo, size: h }
    }
}

#[derive(Debug, Clone)]
struct Node {
    cube: Octant,
    /// `start..end` into `order`: the points stored under this node.
    start: u32,
    end: u32,
    /// First of eight consecutive children, or 0 for a leaf.
    children: u32,
}

/// Static octree over a point set, answering inclusive box queries.
#[derive(Debug, Clone)]
pub struct OctreeIndex {
    points: Vec<[i32; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

const LEAF: usize = 8;

impl OctreeIndex {
    pub fn build(points: &[[i32; 3]]) -> Self {
        let mut tree = Self { points: points.to_vec(), order: (0..points.len() as u32).collect(), nodes: Vec::new() };
        if points.is_empty() {
            return tree;
        }
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let span = (0..3).map(|a| hi[a] - lo[a] + 1).max().unwrap();
        let size = (span as u32).next_power_of_two() as i32;
        tree.nodes.push(Node { cube: Octant { lo, size }, start: 0, end: points.len() as u32, children: 0 });
        tree.split(0);
        tree
    }

    fn split(&mut self, id: usize) {
        let Node { cube, start, end, .. } = self.nodes[id].clone();
        if (end - start) as usize <= LEAF || cube.size == 1 {
            return;
        }
        let slice = &mut self.order[start as usize..end as usize];
        let pts = &self.points;
        slice.sort_by_key(|&k| cube.child_of(pts[k as usize]));
        let first = self.nodes.len();
        self.nodes[id].children = first as u32;
        let mut s = start;
        for k in 0..8 {
            let e = s + slice[(s - start) as usize..].iter().take_while(|&&p| cube.child_of(pts[p as usize]) == k).count() as u32;
            self.nodes.push(Node { cube: cube.child(k), start: s, end: e, children: 0 });
            s = e;
        }
        for k in 0..8 {
            if self.nodes[first + k].end > self.nodes[first + k].start {
                self.split(first + k);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the points in the inclusive box `[min, max]`, ascending.
    pub fn range(&self, min: [i32; 3], max: [i32; 3]) -> Vec<usize> {
        let mut out = Vec::new();
        self.range_into(min, max, &mut out);
        out.sort_unstable();
        out
    }

    /// Append matches in tree order to `out`.
    pub fn range_into(&self, min: [i32; 3], max: [i32; 3], out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.start == n.end || !n.cube.overlaps(min, max) {
                continue;
            }
            let members = &self.order[n.start as usize..n.end as usize];
            if n.cube.inside(min, max) {
                out.extend(members.iter().map(|&k| k as usize));
            } else if n.children == 0 {
                out.extend(
                    members
                        .iter()
                        .filter(|&&k| {
                            let p = self.points[k as usize];
                            (0..3).all(|a| min[a] <= p[a] && p[a] <= max[a])
                        })
                        .map(|&k| k as usize),
                );
            } else {
                stack.extend(n.children as usize..n.children as usize + 8);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan(points: &[[i32; 3]], min: [i32; 3], max: [i32; 3]) -> Vec<usize> {
        (0..points.len()).filter(|&k| (0..3).all(|a| min[a] <= points[k][a] && points[k][a] <= max[a])).collect()
    }

    #[test]
    fn empty_and_single() {
        let t = OctreeIndex::build(&[]);
        assert!(t.range([0; 3], [10; 3]).is_empty());
        let t = OctreeIndex::build(&[[3, 4, 5]]);
        assert_eq!(t.range([3, 4, 5], [3, 4, 5]), vec![0]);
        assert!(t.range([4, 4, 5], [9, 9, 9]).is_empty());
    }

    #[test]
    fn duplicates_and_negative_coordinates() {
        let pts = vec![[-5, 0, 0]; 20].into_iter().chain([[7, -3, 2], [0, 0, 0]]).collect::<Vec<_>>();
        let t = OctreeIndex::build(&pts);
        assert_eq!(t.range([-5, 0, 0], [-5, 0, 0]).len(), 20);
        assert_eq!(t.range([-10, -10, -10], [10, 10, 10]).len(), 22);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn range_equals_scan(
            points in prop::collection::vec(prop::array::uniform3(0i32..40), 0..120),
            a in prop::array::uniform3(-2i32..42),
            b in prop::array::uniform3(-2i32..42),
        ) {
            let min = [0, 1, 2].map(|k| a[k].min(b[k]));
            let max = [0, 1, 2].map(|k| a[k].max(b[k]));
            let t = OctreeIndex::build(&points);
            prop_assert_eq!(t.range(min, max), scan(&points, min, max));
        }
    }
}
