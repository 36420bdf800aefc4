//! Plain-text dumps: OBJ quad mesh and CSV optimizer trace.

use std::fmt::Write as _;

use crate::lbfgs::TraceRow;
use crate::topology::QuadMesh;

/// Wavefront OBJ of the quad mesh (z = 0, 1-based face indices).
pub fn quad_mesh_obj(mesh: &QuadMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {} vertices, {} quads",
        mesh.vertices.len(),
        mesh.quads.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.17e} {:.17e} 0", v.x, v.y);
    }
    for q in &mesh.quads {
        let _ = writeln!(s, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
    s
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("iteration,value,grad_inf\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.17e},{:.17e}", r.iteration, r.value, r.grad_inf);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    #[test]
    fn obj_counts() {
        let mesh = QuadMesh {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            boundary: vec![true; 4],
            quads: vec![[0, 1, 2, 3]],
            edges: Vec::new(),
            fallback_pieces: 0,
        };
        let obj = quad_mesh_obj(&mesh);
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert!(obj.contains("f 1 2 3 4"));
    }

    #[test]
    fn csv_rows() {
        let rows = [
            TraceRow {
                iteration: 0,
                value: 2.0,
                grad_inf: 1.0,
            },
            TraceRow {
                iteration: 1,
                value: 1.0,
                grad_inf: 0.5,
            },
        ];
        let csv = trace_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("iteration,value,grad_inf"));
    }
}
