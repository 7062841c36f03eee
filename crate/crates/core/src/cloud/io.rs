//! Point cloud files: plain `x y z` text, ASCII PLY and OFF.
//!
//! Coordinates are written with Rust's shortest round-trip float formatting,
//! so write → read is lossless. OFF files carrying faces are treated as
//! meshes and converted to clouds by area-weighted uniform triangle sampling;
//! an OFF file with zero faces is read as a plain vertex list.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geom3::Vector3;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    Off,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        ext.parse()
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" | "txt" => Ok(CloudFormat::Xyz),
            "ply" | "ply_ascii" => Ok(CloudFormat::PlyAscii),
            "off" => Ok(CloudFormat::Off),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Options for mesh formats.
#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Surface samples drawn from a mesh.
    pub mesh_samples: usize,
    pub seed: u64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            mesh_samples: 2048,
            seed: 1234,
        }
    }
}

pub fn read_cloud(path: &Path, format: CloudFormat, opts: &ReadOptions) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    match format {
        CloudFormat::Xyz => parse_xyz(&text, path),
        CloudFormat::PlyAscii => parse_ply(&text, path),
        CloudFormat::Off => {
            let mesh = TriangleMesh::parse_off(&text, path)?;
            if mesh.triangles.is_empty() {
                PointCloud::new(mesh.vertices)
            } else {
                mesh.sample_surface(opts.mesh_samples, &mut rng::seeded(opts.seed))
            }
        }
    }
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 48);
    match format {
        CloudFormat::Xyz => {}
        CloudFormat::PlyAscii => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
                cloud.len()
            );
        }
        CloudFormat::Off => {
            let _ = write!(out, "OFF\n{} 0 0\n", cloud.len());
        }
    }
    for p in cloud.iter() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_point(fields: &[&str], path: &Path, line: usize) -> Result<Vector3> {
    if fields.len() < 3 {
        return Err(parse_err(path, line, "expected three coordinates"));
    }
    let mut v = [0.0; 3];
    for (slot, f) in v.iter_mut().zip(fields) {
        *slot = f
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("invalid number `{f}`")))?;
        if !slot.is_finite() {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
    }
    Ok(Vector3::from(v))
}

fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split([' ', '\t', ','])
            .filter(|s| !s.is_empty())
            .collect();
        points.push(parse_point(&fields, path, i + 1)?);
    }
    if points.is_empty() {
        return Err(parse_err(path, 1, "no points found"));
    }
    PointCloud::new(points)
}

fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("unsupported PLY encoding `{other}`"),
                ))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| parse_err(path, i + 1, "invalid vertex count"))?,
                    );
                }
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("unexpected header line `{line}`"),
                ))
            }
        }
    }
    if !header_done {
        return Err(parse_err(
            path,
            text.lines().count().max(1),
            "missing end_header",
        ));
    }
    let n = vertex_count.ok_or_else(|| parse_err(path, 1, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse_err(path, 1, format!("vertex property `{name}` missing")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, line) = lines.next().ok_or_else(|| {
            parse_err(path, text.lines().count(), "file ends before all vertices")
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < props.len() {
            return Err(parse_err(path, i + 1, "too few vertex properties"));
        }
        points.push(parse_point(
            &[fields[ix], fields[iy], fields[iz]],
            path,
            i + 1,
        )?);
    }
    PointCloud::new(points).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Triangle mesh used to sample surface clouds.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn read_off(path: &Path) -> Result<Self> {
        Self::parse_off(&fs::read_to_string(path)?, path)
    }

    fn parse_off(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, first) = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "empty file"))?;
        if !first.starts_with("OFF") {
            return Err(parse_err(path, ln, "missing `OFF` header"));
        }
        // some ModelNet files glue the counts to the magic: "OFF1234 5678 0"
        let rest = first[3..].trim();
        let (ln, counts) = if rest.is_empty() {
            lines
                .next()
                .ok_or_else(|| parse_err(path, ln, "missing counts line"))?
        } else {
            (ln, rest)
        };
        let counts: Vec<usize> = counts
            .split_whitespace()
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, ln, "invalid counts line"))?;
        if counts.len() < 2 {
            return Err(parse_err(
                path,
                ln,
                "counts line needs vertex and face counts",
            ));
        }
        let (nv, nf) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, ln, "file ends before all vertices"))?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            vertices.push(parse_point(&fields, path, ln)?);
        }
        let mut triangles = Vec::new();
        for _ in 0..nf {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, ln, "file ends before all faces"))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(path, ln, "invalid face line"))?;
            let k = *idx
                .first()
                .ok_or_else(|| parse_err(path, ln, "empty face line"))?;
            if idx.len() < k + 1 || k < 3 {
                return Err(parse_err(path, ln, "face has fewer indices than declared"));
            }
            let face = &idx[1..=k];
            if face.iter().any(|&v| v >= nv) {
                return Err(parse_err(path, ln, "face index out of range"));
            }
            for j in 1..k - 1 {
                triangles.push([face[0], face[j], face[j + 1]]);
            }
        }
        if vertices.is_empty() {
            return Err(parse_err(path, ln, "mesh has no vertices"));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    /// `n` points, uniform over the surface area.
    pub fn sample_surface(&self, n: usize, rng: &mut Rng) -> Result<PointCloud> {
        if n == 0 {
            return Err(Error::validation("sample count must be positive"));
        }
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            total += 0.5 * (b - a).cross(&(c - a)).norm();
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::Degenerate("mesh has zero surface area".into()));
        }
        let points = (0..n)
            .map(|_| {
                let x = rng.random::<f64>() * total;
                let ti = cumulative
                    .partition_point(|&c| c <= x)
                    .min(cumulative.len() - 1);
                let [a, b, c] = self.triangles[ti].map(|i| self.vertices[i]);
                let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                a + (b - a) * u + (c - a) * v
            })
            .collect();
        PointCloud::new(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_cloud(n: usize) -> PointCloud {
        let mut rng = rng::seeded(21);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() * 1e-3,
                        rng.random::<f64>() * 1e5,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn xyz_and_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = random_cloud(200);
        for (name, fmt) in [
            ("a.xyz", CloudFormat::Xyz),
            ("a.ply", CloudFormat::PlyAscii),
            ("a.off", CloudFormat::Off),
        ] {
            let path = dir.path().join(name);
            write_cloud(&path, &c, fmt).unwrap();
            assert_eq!(CloudFormat::from_path(&path).unwrap(), fmt);
            let back = read_cloud(&path, fmt, &ReadOptions::default()).unwrap();
            assert_eq!(back.len(), c.len());
            for (a, b) in back.iter().zip(c.iter()) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn off_square_sampling_centroid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("square.off");
        fs::write(
            &path,
            "OFF\n# unit square\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n",
        )
        .unwrap();
        let opts = ReadOptions {
            mesh_samples: 10_000,
            seed: 5,
        };
        let c = read_cloud(&path, CloudFormat::Off, &opts).unwrap();
        assert_eq!(c.len(), 10_000);
        let m = c.centroid();
        assert!((m - Vector3::new(0.5, 0.5, 0.0)).norm() < 0.02, "{m:?}");
        assert!(c
            .iter()
            .all(|p| p.z == 0.0 && (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
    }

    #[test]
    fn off_quads_are_fanned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.off");
        fs::write(&path, "OFF 4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        let mesh = TriangleMesh::read_off(&path).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed_files_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.off");
        fs::write(&path, "OFX\n4 2 0\n").unwrap();
        match read_cloud(&path, CloudFormat::Off, &ReadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let path = dir.path().join("bad.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nbogus line\nend_header\n",
        )
        .unwrap();
        match read_cloud(&path, CloudFormat::PlyAscii, &ReadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let path = dir.path().join("bad.xyz");
        fs::write(&path, "0 0 0\n1 two 3\n").unwrap();
        match read_cloud(&path, CloudFormat::Xyz, &ReadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            "obj".parse::<CloudFormat>(),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
