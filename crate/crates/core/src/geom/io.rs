use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point, PointCloud};
use crate::util::write_atomic;
use crate::{Error, Result};

/// Parses XYZ text: one `x y z` triple per line, `#` comments and blank lines skipped.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 coordinates, found {}",
                fields.len()
            )));
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{field:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(parse_err(format!("non-finite coordinate {field:?}")));
            }
        }
        points.push(Point::new(xyz[0], xyz[1], xyz[2]));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::new(points)
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text, path)
}

/// Shortest round-trip decimal representation, one point per line.
pub fn to_xyz_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn save_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), to_xyz_string(cloud).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_points() {
        let c = parse_xyz("0 0 0\n1 0 0", Path::new("t")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn malformed_line_names_line_number() {
        match parse_xyz("a b c\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_xyz("# header\n0 0 0\n1 2\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_comment_only_files_are_rejected() {
        assert!(matches!(parse_xyz("", Path::new("t")), Err(Error::EmptyCloud)));
        assert!(matches!(
            parse_xyz("# nothing\n\n", Path::new("t")),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn save_then_load_is_bitwise_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let cloud = PointCloud::new(vec![
            Point::new(0.1, -2.0 / 3.0, 1e-17),
            Point::new(std::f64::consts::PI, 12345.678, -0.0),
        ])
        .unwrap();
        save_xyz(&cloud, &path).unwrap();
        let back = load_xyz(&path).unwrap();
        for (a, b) in cloud.points().iter().zip(back.points()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn single_point_writes_single_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.xyz");
        save_xyz(&PointCloud::new(vec![Point::new(1.0, 2.0, 3.0)]).unwrap(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1 2 3\n");
    }

    #[test]
    fn unwritable_directory_errors() {
        let cloud = PointCloud::new(vec![Point::zeros()]).unwrap();
        let err = save_xyz(&cloud, "/nonexistent-dir/sub/c.xyz").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_xyz("/nonexistent-dir/c.xyz"),
            Err(Error::Io { .. })
        ));
    }
}
