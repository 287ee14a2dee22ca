//! A canonical 478-point frontal face layout in unit coordinates.
//!
//! The geometric reference landmarker warps this layout into a face box. The
//! last ten points are the two irises (center plus four rim points each),
//! matching the index convention of common face-mesh models.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::raster::LANDMARK_COUNT;

const FACE_CENTER: (f64, f64) = (0.5, 0.52);
const FACE_AXES: (f64, f64) = (0.34, 0.42);
pub const LEFT_EYE: (f64, f64) = (0.35, 0.42);
pub const RIGHT_EYE: (f64, f64) = (0.65, 0.42);
pub const NOSE_TIP: (f64, f64) = (0.5, 0.6);
pub const MOUTH_LEFT: (f64, f64) = (0.38, 0.75);
pub const MOUTH_RIGHT: (f64, f64) = (0.62, 0.75);

fn ellipse(out: &mut Vec<[f32; 3]>, center: (f64, f64), axes: (f64, f64), n: usize, depth: f64) {
    for i in 0..n {
        let t = 2.0 * PI * i as f64 / n as f64;
        out.push([
            (center.0 + axes.0 * t.cos()) as f32,
            (center.1 + axes.1 * t.sin()) as f32,
            depth as f32,
        ]);
    }
}

fn arc(out: &mut Vec<[f32; 3]>, from: (f64, f64), to: (f64, f64), lift: f64, n: usize) {
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let x = from.0 + (to.0 - from.0) * t;
        let y = from.1 + (to.1 - from.1) * t - lift * (PI * t).sin();
        out.push([x as f32, y as f32, -0.02]);
    }
}

fn build() -> Vec<[f32; 3]> {
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);
    ellipse(&mut pts, FACE_CENTER, FACE_AXES, 36, 0.05);
    arc(&mut pts, (0.25, 0.36), (0.44, 0.35), 0.03, 10);
    arc(&mut pts, (0.56, 0.35), (0.75, 0.36), 0.03, 10);
    ellipse(&mut pts, LEFT_EYE, (0.07, 0.03), 16, -0.01);
    ellipse(&mut pts, RIGHT_EYE, (0.07, 0.03), 16, -0.01);
    arc(&mut pts, (0.5, 0.42), NOSE_TIP, 0.0, 8);
    arc(&mut pts, (0.44, 0.62), (0.56, 0.62), -0.02, 9);
    ellipse(&mut pts, (0.5, 0.75), (0.12, 0.05), 20, -0.03);
    ellipse(&mut pts, (0.5, 0.75), (0.09, 0.015), 20, -0.02);

    let structured = pts.len();
    let fill = LANDMARK_COUNT - structured - 10;
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..fill {
        let r = ((i as f64 + 0.5) / fill as f64).sqrt() * 0.92;
        let t = i as f64 * golden;
        pts.push([
            (FACE_CENTER.0 + FACE_AXES.0 * r * t.cos()) as f32,
            (FACE_CENTER.1 + FACE_AXES.1 * r * t.sin()) as f32,
            (-0.05 * (1.0 - r * r)) as f32,
        ]);
    }

    for eye in [LEFT_EYE, RIGHT_EYE] {
        pts.push([eye.0 as f32, eye.1 as f32, -0.015]);
        ellipse(&mut pts, eye, (0.02, 0.02), 4, -0.015);
    }
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    pts
}

/// The canonical layout, computed once.
pub fn canonical_face() -> &'static [[f32; 3]] {
    static TEMPLATE: OnceLock<Vec<[f32; 3]>> = OnceLock::new();
    TEMPLATE.get_or_init(build)
}
