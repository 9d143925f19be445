use std::io::{self, Write};

use super::{CartesianMesh, ElementClassification};

/// Edge flag bits in the mesh dump.
pub const FLAG_BOUNDARY: u32 = 1;
pub const FLAG_INTERFACE: u32 = 2;

/// Writes the mesh as plain text: `n x y` per node, `e kind level v1 ..` per
/// element and `b k1 k2 x0 y0 x1 y1 flags` per edge, with `k2 = -1` on the
/// boundary.
pub fn write_mesh<W: Write>(
    mesh: &CartesianMesh,
    classification: Option<&ElementClassification>,
    mut out: W,
) -> io::Result<()> {
    for p in mesh.nodes() {
        writeln!(out, "n {:.17e} {:.17e}", p.x, p.y)?;
    }
    for e in mesh.elements() {
        write!(out, "e {} {}", e.kind.name(), e.level)?;
        for v in &e.vertices {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    for (i, b) in mesh.edges().iter().enumerate() {
        let mut flags = 0;
        if b.is_boundary() {
            flags |= FLAG_BOUNDARY;
        }
        if classification.is_some_and(|c| c.is_interface_edge(i)) {
            flags |= FLAG_INTERFACE;
        }
        let k2 = b.k2.map_or(-1, |k| k as i64);
        writeln!(
            out,
            "b {} {} {:.17e} {:.17e} {:.17e} {:.17e} {}",
            b.k1, k2, b.p0.x, b.p0.y, b.p1.x, b.p1.y, flags
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Domain, ElementKind};

    #[test]
    fn line_counts() {
        let m = CartesianMesh::build_uniform(2, ElementKind::Triangle, Domain::unit_square()).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let count = |tag: &str| text.lines().filter(|l| l.starts_with(tag)).count();
        assert_eq!(count("n "), 9);
        assert_eq!(count("e "), 8);
        assert_eq!(count("b "), m.edges().len());
        let first_edge = text.lines().find(|l| l.starts_with("b ")).unwrap();
        assert_eq!(first_edge.split_whitespace().count(), 8);
    }
}
