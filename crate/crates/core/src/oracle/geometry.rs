/// Simple (non-self-intersecting) polygon given by its vertices in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

const EDGE_TOL: f64 = 1e-12;

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Self {
        Self { vertices }
    }

    /// Edges as consecutive vertex pairs, closing back to the first vertex.
    pub fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    /// Even-odd point-in-polygon test; points on an edge count as inside.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        if self.edges().any(|(a, b)| distance_to_segment(p, a, b) <= EDGE_TOL) {
            return true;
        }
        self.contains_strictly(p)
    }

    /// Interior test that excludes the boundary.
    pub fn contains_strictly(&self, (x, y): (f64, f64)) -> bool {
        if self.edges().any(|(a, b)| distance_to_segment((x, y), a, b) <= EDGE_TOL) {
            return false;
        }
        let mut inside = false;
        for ((x1, y1), (x2, y2)) in self.edges() {
            if (y1 > y) != (y2 > y) {
                let cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
                if x < cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.0 * b.1 - b.0 * a.1).sum::<f64>()
    }

    /// Area centroid.
    pub fn centroid(&self) -> (f64, f64) {
        let area = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (a, b) in self.edges() {
            let w = a.0 * b.1 - b.0 * a.1;
            cx += (a.0 + b.0) * w;
            cy += (a.1 + b.1) * w;
        }
        (cx / (6.0 * area), cy / (6.0 * area))
    }
}

/// Mirror image of `p` across the infinite line through `a` and `b`.
pub fn mirror_point(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy);
    let foot = (a.0 + t * dx, a.1 + t * dy);
    (2.0 * foot.0 - p.0, 2.0 * foot.1 - p.1)
}

/// Distance from `p` to the infinite line through `a` and `b`.
pub fn distance_to_line(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / dx.hypot(dy)
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}
