use std::path::Path;

use super::{Point, PointCloud};
use crate::{Error, Result};

/// Load `x,y,z[,intensity[,class_id,instance_id]]` rows.
///
/// A first row whose first field is `x` is taken as a header. Empty optional
/// fields are read as absent.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub(crate) fn read_csv<R: std::io::Read>(input: R) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut points = Vec::new();
    let mut width: Option<usize> = None;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if row == 1 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("x")) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let bad = |message: String| Error::Csv { row, message };
        if !matches!(rec.len(), 3 | 4 | 6) {
            return Err(bad(format!("expected 3, 4 or 6 columns, found {}", rec.len())));
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(bad(format!("inconsistent column count: {} (earlier rows have {w})", rec.len())))
            }
            _ => {}
        }
        let coord = |k: usize, name: &str| -> Result<f64> {
            let s = &rec[k];
            let v: f64 = s
                .parse()
                .map_err(|_| bad(format!("{name}: not a number: {s:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("{name}: non-finite coordinate {s:?}")));
            }
            Ok(v)
        };
        let opt_f64 = |k: usize| -> Result<Option<f64>> {
            match rec.get(k) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(format!("intensity: not a number: {s:?}"))),
            }
        };
        let opt_i32 = |k: usize, name: &str| -> Result<Option<i32>> {
            match rec.get(k) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(format!("{name}: not an integer: {s:?}"))),
            }
        };
        let p = Point {
            x: coord(0, "x")?,
            y: coord(1, "y")?,
            z: coord(2, "z")?,
            intensity: opt_f64(3)?,
            class_id: opt_i32(4, "class_id")?,
            instance_id: opt_i32(5, "instance_id")?,
        };
        p.validate().map_err(bad)?;
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PointCloud> {
        read_csv(s.as_bytes())
    }

    #[test]
    fn plain_and_labeled_rows() {
        let c = parse("0,0,1.5\n").unwrap();
        assert_eq!(c.points, vec![Point::new(0.0, 0.0, 1.5)]);

        let c = parse("1,2,3,0.5,0,7\n").unwrap();
        let p = c.points[0];
        assert_eq!(p.xyz(), [1.0, 2.0, 3.0]);
        assert_eq!(p.intensity, Some(0.5));
        assert_eq!(p.class_id, Some(0));
        assert_eq!(p.instance_id, Some(7));
    }

    #[test]
    fn header_is_optional() {
        let c = parse("x,y,z\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points[1].x, 4.0);
    }

    #[test]
    fn errors_cite_row() {
        let e = parse("a,b,c\n").unwrap_err();
        assert!(matches!(e, Error::Csv { row: 1, .. }), "{e}");
        let e = parse("0,0,0\n1,1\n").unwrap_err();
        assert!(matches!(e, Error::Csv { row: 2, .. }), "{e}");
        let e = parse("0,0,0\n1,1,1,0.2\n").unwrap_err();
        assert!(e.to_string().contains("inconsistent column count"), "{e}");
        let e = parse("0,0,0\n0,0,inf\n").unwrap_err();
        assert!(matches!(e, Error::Csv { row: 2, .. }), "{e}");
    }
}
