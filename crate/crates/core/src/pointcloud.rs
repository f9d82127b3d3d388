//! Point clouds: Chamfer distance, farthest-point subsampling and CSV / ASCII PLY I/O.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Result<Vec3> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(self.points.iter().fold(Vec3::zeros(), |a, p| a + p) / self.points.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Result<(Vec3, Vec3)> {
        let first = *self.points.first().ok_or(Error::EmptyCloud)?;
        Ok(self.points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        Self::new(self.points.iter().map(|p| p + t).collect())
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Self {
        Self::new(self.points.iter().map(|p| tf.transform_point(p)).collect())
    }
}

/// Average of the two directed mean nearest-neighbour distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(0.5 * (directed_mean(&a.points, &b.points) + directed_mean(&b.points, &a.points)))
}

fn directed_mean(from: &[Vec3], to: &[Vec3]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|x| {
            to.iter()
                .map(|y| (x - y).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / from.len() as f64
}

/// Farthest-point sampling of `n` points; the seed picks the first point and
/// distance ties go to the lowest index.
pub fn downsample_farthest(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    let idx = farthest_point_indices(&cloud.points, n, seed)?;
    Ok(PointCloud::new(idx.into_iter().map(|i| cloud.points[i]).collect()))
}

pub fn farthest_point_indices(points: &[Vec3], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > points.len() {
        return Err(Error::BadCount {
            requested: n,
            available: points.len(),
        });
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..points.len());
    let mut chosen = Vec::with_capacity(n);
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut current = start;
    for _ in 0..n {
        chosen.push(current);
        let anchor = points[current];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, p) in points.iter().enumerate() {
            let d = (p - anchor).norm_squared();
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        current = best.1;
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFormat {
    Csv,
    PlyAscii,
}

impl CloudFormat {
    /// `.csv` or `.ply`.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CloudFormat::Csv),
            "ply" => Some(CloudFormat::PlyAscii),
            _ => None,
        }
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    std::fs::write(path, format_cloud(cloud, format))?;
    Ok(())
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    let mut out = String::new();
    match format {
        CloudFormat::Csv => out.push_str("x,y,z\n"),
        CloudFormat::PlyAscii => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
                cloud.len()
            );
        }
    }
    let sep = if format == CloudFormat::Csv { "," } else { " " };
    for p in &cloud.points {
        // shortest round-trip representation
        let _ = writeln!(out, "{}{sep}{}{sep}{}", p.x, p.y, p.z);
    }
    out
}

pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    parse_cloud(&text, format, path)
}

pub fn parse_cloud(text: &str, format: CloudFormat, path: &Path) -> Result<PointCloud> {
    match format {
        CloudFormat::Csv => parse_csv(text, path),
        CloudFormat::PlyAscii => parse_ply(text, path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_point(fields: &[&str], line: usize, path: &Path) -> Result<Vec3> {
    if fields.len() != 3 {
        return Err(parse_err(path, line, format!("expected 3 coordinates, found {}", fields.len())));
    }
    let mut xyz = [0.0; 3];
    for (slot, f) in xyz.iter_mut().zip(fields) {
        *slot = f
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("invalid coordinate {f:?}")))?;
    }
    Ok(Vec3::new(xyz[0], xyz[1], xyz[2]))
}

fn parse_csv(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "x,y,z" => {}
        _ => return Err(parse_err(path, 1, "expected header x,y,z")),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        points.push(parse_point(&fields, idx + 1, path)?);
    }
    Ok(PointCloud::new(points))
}

fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(parse_err(path, 1, "missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut header_done = false;
    for (idx, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => {
                return Err(parse_err(path, idx + 1, format!("unsupported format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                let n = n
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, idx + 1, format!("invalid vertex count {n:?}")))?;
                vertex_count = Some(n);
                in_vertex = true;
            }
            ["element", name, ..] => {
                return Err(parse_err(path, idx + 1, format!("unsupported element {name:?}")))
            }
            ["property", "list", ..] => {
                return Err(parse_err(path, idx + 1, "list properties are not supported"))
            }
            ["property", _ty, name] if in_vertex => properties.push(name.to_string()),
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(path, idx + 1, format!("unexpected header line {line:?}"))),
        }
    }
    if !header_done {
        return Err(parse_err(path, text.lines().count(), "missing end_header"));
    }
    let n = vertex_count.ok_or_else(|| parse_err(path, 1, "missing 'element vertex'"))?;
    if properties != ["x", "y", "z"] {
        return Err(parse_err(path, 1, format!("expected properties x y z, found {properties:?}")));
    }
    let mut points = Vec::with_capacity(n);
    let mut last_line = 0;
    for (idx, line) in lines {
        last_line = idx + 1;
        if points.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(path, idx + 1, "more vertices than declared"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        points.push(parse_point(&fields, idx + 1, path)?);
    }
    if points.len() != n {
        return Err(parse_err(
            path,
            last_line,
            format!("declared {n} vertices, found {}", points.len()),
        ));
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let p = cloud(&[[0.0, 0.0, 0.0]]);
        let q = cloud(&[[1.0, 0.0, 0.0]]);
        assert_abs_diff_eq!(chamfer(&p, &q).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(chamfer(&p, &PointCloud::default()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn fps_collinear_trace() {
        let line = PointCloud::new((0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        // find a seed whose start is point 0, then the farthest point must be 9
        let seed = (0..1000u64)
            .find(|&s| farthest_point_indices(&line.points, 1, s).unwrap()[0] == 0)
            .unwrap();
        assert_eq!(farthest_point_indices(&line.points, 2, seed).unwrap(), vec![0, 9]);
    }

    #[test]
    fn fps_counts() {
        let pts = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.0, 3.0, 3.0]]);
        let all = farthest_point_indices(&pts.points, 4, 7).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        let one = downsample_farthest(&pts, 1, 7).unwrap();
        assert_eq!(one.points[0], pts.points[all[0]]);
        assert!(matches!(downsample_farthest(&pts, 0, 1), Err(Error::BadCount { .. })));
        assert!(matches!(downsample_farthest(&pts, 5, 1), Err(Error::BadCount { .. })));
    }

    #[test]
    fn csv_missing_coordinate_reports_line() {
        let text = "x,y,z\n1,2,3\n4,5\n";
        match parse_cloud(text, CloudFormat::Csv, Path::new("c.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_ply_fixture() {
        let text = "ply\nformat ascii 1.0\ncomment hand written\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0.5\n";
        let c = parse_cloud(text, CloudFormat::PlyAscii, Path::new("m.ply")).unwrap();
        assert_eq!(c, cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]]));

        let short = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(parse_cloud(short, CloudFormat::PlyAscii, Path::new("m.ply")).is_err());
        let binary = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(parse_cloud(binary, CloudFormat::PlyAscii, Path::new("m.ply")).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = cloud(&[[0.1, -0.2, 1.0 / 3.0], [1e-7, 2.5, -3.75]]);
        for (name, fmt) in [("a.csv", CloudFormat::Csv), ("a.ply", CloudFormat::PlyAscii)] {
            let path = dir.path().join(name);
            assert_eq!(CloudFormat::from_path(&path), Some(fmt));
            write_cloud(&c, &path, fmt).unwrap();
            assert_eq!(read_cloud(&path, fmt).unwrap(), c);
        }
        assert!(matches!(
            read_cloud(&dir.path().join("missing.csv"), CloudFormat::Csv),
            Err(Error::Io(_))
        ));
    }
}
