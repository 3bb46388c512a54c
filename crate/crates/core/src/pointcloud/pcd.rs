//! PCD v0.7 subset: uncompressed ASCII or little-endian binary bodies.
//!
//! Recognized fields are `x y z` (F4), `intensity` (F4), and `class_id`,
//! `instance_id` (I4, `-1` meaning unlabeled). Other fields are skipped as
//! long as their type is one of the standard F/I/U widths.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Point, PointCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    F,
    I,
    U,
}

#[derive(Debug, Clone)]
struct Field {
    name: String,
    count: usize,
    offset: usize,
}

#[derive(Debug)]
struct Header {
    fields: Vec<Field>,
    points: usize,
    encoding: PcdEncoding,
    stride: usize,
    /// byte offset of the body
    body_start: usize,
    /// 1-based line number of the first body line
    body_line: usize,
}

fn err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Pcd {
        location: location.into(),
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut line_no = 0usize;

    let mut names: Option<Vec<String>> = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut types: Option<Vec<Kind>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut points: Option<usize> = None;

    loop {
        if pos >= bytes.len() {
            return Err(err(
                format!("line {}", line_no + 1),
                "end of file before DATA line",
            ));
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i);
        line_no += 1;
        let loc = format!("line {line_no}");
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| err(&loc, "header is not valid UTF-8"))?
            .trim();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap_or_default().to_ascii_uppercase();
        let vals: Vec<&str> = toks.collect();
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| err(&loc, format!("{key}: expected a non-negative integer, got {s:?}")))
        };
        match key.as_str() {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => names = Some(vals.iter().map(|s| s.to_string()).collect()),
            "SIZE" => sizes = Some(vals.iter().map(|s| parse_usize(s)).collect::<Result<_>>()?),
            "TYPE" => {
                types = Some(
                    vals.iter()
                        .map(|s| match *s {
                            "F" => Ok(Kind::F),
                            "I" => Ok(Kind::I),
                            "U" => Ok(Kind::U),
                            other => Err(err(&loc, format!("unsupported field type {other:?}"))),
                        })
                        .collect::<Result<_>>()?,
                )
            }
            "COUNT" => counts = Some(vals.iter().map(|s| parse_usize(s)).collect::<Result<_>>()?),
            "WIDTH" | "HEIGHT" | "POINTS" => {
                let [v] = vals.as_slice() else {
                    return Err(err(&loc, format!("{key} takes exactly one value")));
                };
                let v = parse_usize(v)?;
                match key.as_str() {
                    "WIDTH" => width = Some(v),
                    "HEIGHT" => height = Some(v),
                    _ => points = Some(v),
                }
            }
            "DATA" => {
                let encoding = match vals.first().map(|s| s.to_ascii_lowercase()).as_deref() {
                    Some("ascii") => PcdEncoding::Ascii,
                    Some("binary") => PcdEncoding::Binary,
                    Some(other) => {
                        return Err(err(&loc, format!("unsupported DATA encoding {other:?}")))
                    }
                    None => return Err(err(&loc, "DATA line without encoding")),
                };
                let names = names.ok_or_else(|| err(&loc, "missing FIELDS"))?;
                let sizes = sizes.ok_or_else(|| err(&loc, "missing SIZE"))?;
                let types = types.ok_or_else(|| err(&loc, "missing TYPE"))?;
                let counts = counts.unwrap_or_else(|| vec![1; names.len()]);
                if sizes.len() != names.len() || types.len() != names.len() || counts.len() != names.len() {
                    return Err(err(
                        &loc,
                        format!(
                            "FIELDS/SIZE/TYPE/COUNT lengths differ ({}/{}/{}/{})",
                            names.len(),
                            sizes.len(),
                            types.len(),
                            counts.len()
                        ),
                    ));
                }
                let mut fields = Vec::with_capacity(names.len());
                let mut offset = 0;
                for (((name, size), kind), count) in names.into_iter().zip(sizes).zip(types).zip(counts) {
                    let width_ok = match kind {
                        Kind::F => matches!(size, 4 | 8),
                        Kind::I | Kind::U => matches!(size, 1 | 2 | 4 | 8),
                    };
                    if !width_ok || count == 0 {
                        return Err(err(
                            &loc,
                            format!("unsupported field type for {name:?}: {kind:?}{size} x{count}"),
                        ));
                    }
                    let required = match name.as_str() {
                        "x" | "y" | "z" | "intensity" => Some((Kind::F, 4)),
                        "class_id" | "instance_id" => Some((Kind::I, 4)),
                        _ => None,
                    };
                    if let Some((k, s)) = required {
                        if k != kind || s != size || count != 1 {
                            return Err(err(
                                &loc,
                                format!(
                                    "unsupported field type for {name:?}: expected {k:?}{s} x1, got {kind:?}{size} x{count}"
                                ),
                            ));
                        }
                    }
                    fields.push(Field { name, count, offset });
                    offset += size * count;
                }
                for axis in ["x", "y", "z"] {
                    if !fields.iter().any(|f| f.name == axis) {
                        return Err(err(&loc, format!("FIELDS lacks {axis:?}")));
                    }
                }
                let n = match (points, width, height) {
                    (Some(p), Some(w), Some(h)) if p != w * h => {
                        return Err(err(&loc, format!("POINTS {p} != WIDTH*HEIGHT {}", w * h)))
                    }
                    (Some(p), _, _) => p,
                    (None, Some(w), Some(h)) => w * h,
                    _ => return Err(err(&loc, "missing POINTS")),
                };
                return Ok(Header {
                    fields,
                    points: n,
                    encoding,
                    stride: offset,
                    body_start: pos,
                    body_line: line_no + 1,
                });
            }
            other => return Err(err(&loc, format!("unknown header key {other:?}"))),
        }
    }
}

#[derive(Default)]
struct Slots {
    x: usize,
    y: usize,
    z: usize,
    intensity: Option<usize>,
    class_id: Option<usize>,
    instance_id: Option<usize>,
}

impl Slots {
    /// Index of each recognized field among `fields`.
    fn locate(fields: &[Field]) -> Slots {
        let find = |n: &str| fields.iter().position(|f| f.name == n);
        Slots {
            x: find("x").unwrap(),
            y: find("y").unwrap(),
            z: find("z").unwrap(),
            intensity: find("intensity"),
            class_id: find("class_id"),
            instance_id: find("instance_id"),
        }
    }
}

fn label(v: i32) -> Option<i32> {
    (v >= 0).then_some(v)
}

fn finish_point(p: Point, location: impl FnOnce() -> String) -> Result<Point> {
    p.validate().map_err(|m| err(location(), m))?;
    Ok(p)
}

/// Parse a PCD document held in memory.
pub fn read_pcd(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let slots = Slots::locate(&header.fields);
    let body = &bytes[header.body_start..];
    let mut points = Vec::with_capacity(header.points);

    match header.encoding {
        PcdEncoding::Binary => {
            let need = header.points * header.stride;
            if body.len() < need {
                let whole = body.len() / header.stride.max(1);
                return Err(err(
                    format!("byte {}", header.body_start + body.len()),
                    format!(
                        "truncated binary body: header declares {} points ({need} bytes) but body holds {whole} complete points ({} bytes), {} short",
                        header.points,
                        body.len(),
                        header.points - whole
                    ),
                ));
            }
            let f32_at = |rec: &[u8], f: &Field| {
                f32::from_le_bytes(rec[f.offset..f.offset + 4].try_into().unwrap()) as f64
            };
            let i32_at = |rec: &[u8], f: &Field| {
                i32::from_le_bytes(rec[f.offset..f.offset + 4].try_into().unwrap())
            };
            for (i, rec) in body[..need].chunks_exact(header.stride).enumerate() {
                let fs = &header.fields;
                let p = Point {
                    x: f32_at(rec, &fs[slots.x]),
                    y: f32_at(rec, &fs[slots.y]),
                    z: f32_at(rec, &fs[slots.z]),
                    intensity: slots.intensity.map(|s| f32_at(rec, &fs[s])),
                    class_id: slots.class_id.and_then(|s| label(i32_at(rec, &fs[s]))),
                    instance_id: slots.instance_id.and_then(|s| label(i32_at(rec, &fs[s]))),
                };
                points.push(finish_point(p, || {
                    format!("byte {}", header.body_start + i * header.stride)
                })?);
            }
        }
        PcdEncoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|e| err(format!("byte {}", header.body_start + e.valid_up_to()), "body is not valid UTF-8"))?;
            // token index of each field's first element
            let mut starts = Vec::with_capacity(header.fields.len());
            let mut ntok = 0;
            for f in &header.fields {
                starts.push(ntok);
                ntok += f.count;
            }
            let mut line_no = header.body_line - 1;
            for line in text.lines() {
                line_no += 1;
                if points.len() == header.points {
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Err(err(
                        format!("line {line_no}"),
                        format!("body holds more than the declared {} points", header.points),
                    ));
                }
                if line.trim().is_empty() {
                    continue;
                }
                let toks: Vec<&str> = line.split_whitespace().collect();
                let loc = || format!("line {line_no}");
                if toks.len() != ntok {
                    return Err(err(loc(), format!("expected {ntok} values, found {}", toks.len())));
                }
                let float = |slot: usize| -> Result<f64> {
                    let t = toks[starts[slot]];
                    t.parse::<f32>()
                        .map(f64::from)
                        .map_err(|_| err(loc(), format!("field {:?}: bad float {t:?}", header.fields[slot].name)))
                };
                let int = |slot: usize| -> Result<i32> {
                    let t = toks[starts[slot]];
                    t.parse::<i32>()
                        .map_err(|_| err(loc(), format!("field {:?}: bad integer {t:?}", header.fields[slot].name)))
                };
                let p = Point {
                    x: float(slots.x)?,
                    y: float(slots.y)?,
                    z: float(slots.z)?,
                    intensity: slots.intensity.map(float).transpose()?,
                    class_id: slots.class_id.map(int).transpose()?.and_then(label),
                    instance_id: slots.instance_id.map(int).transpose()?.and_then(label),
                };
                points.push(finish_point(p, loc)?);
            }
            if points.len() < header.points {
                return Err(err(
                    format!("line {}", line_no + 1),
                    format!(
                        "truncated body: header declares {} points but body holds {}, {} short",
                        header.points,
                        points.len(),
                        header.points - points.len()
                    ),
                ));
            }
        }
    }
    Ok(PointCloud::new(points))
}

pub fn load_pcd(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pcd(&bytes).map_err(|e| match e {
        Error::Pcd { location, message } => Error::Pcd {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

/// Serialize a cloud. Coordinates and intensity are stored as float32.
///
/// `intensity` is written when every point has one; the label fields are
/// written when any point carries a class.
pub fn write_pcd<W: Write>(cloud: &PointCloud, encoding: PcdEncoding, mut out: W) -> std::io::Result<()> {
    let with_intensity = !cloud.is_empty() && cloud.iter().all(|p| p.intensity.is_some());
    let with_labels = cloud.iter().any(|p| p.class_id.is_some());

    let mut fields = vec!["x", "y", "z"];
    let mut sizes = vec!["4"; 3];
    let mut types = vec!["F"; 3];
    if with_intensity {
        fields.push("intensity");
        sizes.push("4");
        types.push("F");
    }
    if with_labels {
        fields.extend(["class_id", "instance_id"]);
        sizes.extend(["4", "4"]);
        types.extend(["I", "I"]);
    }
    let n = cloud.len();
    writeln!(out, "# .PCD v0.7 - Point Cloud Data file format")?;
    writeln!(out, "VERSION 0.7")?;
    writeln!(out, "FIELDS {}", fields.join(" "))?;
    writeln!(out, "SIZE {}", sizes.join(" "))?;
    writeln!(out, "TYPE {}", types.join(" "))?;
    writeln!(out, "COUNT {}", vec!["1"; fields.len()].join(" "))?;
    writeln!(out, "WIDTH {n}")?;
    writeln!(out, "HEIGHT 1")?;
    writeln!(out, "VIEWPOINT 0 0 0 1 0 0 0")?;
    writeln!(out, "POINTS {n}")?;
    match encoding {
        PcdEncoding::Ascii => {
            writeln!(out, "DATA ascii")?;
            for p in cloud.iter() {
                write!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
                if with_intensity {
                    write!(out, " {}", p.intensity.unwrap() as f32)?;
                }
                if with_labels {
                    write!(out, " {} {}", p.class_id.unwrap_or(-1), p.instance_id.unwrap_or(-1))?;
                }
                writeln!(out)?;
            }
        }
        PcdEncoding::Binary => {
            writeln!(out, "DATA binary")?;
            let mut buf = Vec::with_capacity(n * 4 * fields.len());
            for p in cloud.iter() {
                for v in [p.x, p.y, p.z] {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
                if with_intensity {
                    buf.extend_from_slice(&(p.intensity.unwrap() as f32).to_le_bytes());
                }
                if with_labels {
                    buf.extend_from_slice(&p.class_id.unwrap_or(-1).to_le_bytes());
                    buf.extend_from_slice(&p.instance_id.unwrap_or(-1).to_le_bytes());
                }
            }
            out.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn save_pcd(cloud: &PointCloud, encoding: PcdEncoding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_pcd(cloud, encoding, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ASCII3: &str = "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 3\nHEIGHT 1\nPOINTS 3\nDATA ascii\n0 0 0\n1 0 0\n0 1 0\n";

    #[test]
    fn ascii_three_points_in_order() {
        let c = read_pcd(ASCII3.as_bytes()).unwrap();
        let xyz: Vec<_> = c.iter().map(|p| p.xyz()).collect();
        assert_eq!(xyz, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(c.points[0].intensity.is_none());
    }

    #[test]
    fn binary_matches_ascii_bit_exact() {
        let pts = [
            [0.1f32, -2.5, 3.25, 0.7],
            [1e-7, 12345.678, -0.0, 255.0],
            [-3.3, 0.2, 1.0e6, 0.0],
        ];
        let cloud: PointCloud = pts
            .iter()
            .map(|q| Point::new(q[0] as f64, q[1] as f64, q[2] as f64).with_intensity(q[3] as f64))
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_pcd(&cloud, PcdEncoding::Ascii, &mut a).unwrap();
        write_pcd(&cloud, PcdEncoding::Binary, &mut b).unwrap();
        let ca = read_pcd(&a).unwrap();
        let cb = read_pcd(&b).unwrap();
        for ((pa, pb), q) in ca.iter().zip(cb.iter()).zip(pts.iter()) {
            for (v, w) in [pa.x, pa.y, pa.z, pa.intensity.unwrap()]
                .iter()
                .zip([pb.x, pb.y, pb.z, pb.intensity.unwrap()])
            {
                assert_eq!((*v as f32).to_bits(), (w as f32).to_bits());
            }
            assert_eq!((pb.x as f32).to_bits(), q[0].to_bits());
            assert_eq!((pb.intensity.unwrap() as f32).to_bits(), q[3].to_bits());
        }
    }

    #[test]
    fn ascii_truncation_names_shortfall() {
        let mut s = String::from("VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 10\nHEIGHT 1\nPOINTS 10\nDATA ascii\n");
        for i in 0..9 {
            s.push_str(&format!("{i} 0 0\n"));
        }
        let e = read_pcd(s.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("declares 10 points but body holds 9"), "{e}");
    }

    #[test]
    fn binary_truncation_names_shortfall() {
        let cloud = PointCloud::from_xyz((0..10).map(|i| [i as f64, 0.0, 0.0]));
        let mut b = Vec::new();
        write_pcd(&cloud, PcdEncoding::Binary, &mut b).unwrap();
        b.truncate(b.len() - 12);
        let e = read_pcd(&b).unwrap_err().to_string();
        assert!(e.contains("holds 9 complete points"), "{e}");
        assert!(e.contains("1 short"), "{e}");
    }

    #[test]
    fn rejects_bad_headers_and_values() {
        let bad_type = ASCII3.replace("TYPE F F F", "TYPE F F Q");
        assert!(read_pcd(bad_type.as_bytes()).unwrap_err().to_string().contains("unsupported field type"));

        let double_x = ASCII3.replace("SIZE 4 4 4", "SIZE 8 4 4");
        assert!(read_pcd(double_x.as_bytes()).unwrap_err().to_string().contains("unsupported field type"));

        let no_z = ASCII3.replace("FIELDS x y z", "FIELDS x y w");
        assert!(read_pcd(no_z.as_bytes()).unwrap_err().to_string().contains("lacks \"z\""));

        let compressed = ASCII3.replace("DATA ascii", "DATA binary_compressed");
        assert!(read_pcd(compressed.as_bytes()).is_err());

        let nan = ASCII3.replace("1 0 0", "nan 0 0");
        let e = read_pcd(nan.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 11") && e.contains("non-finite"), "{e}");
    }

    #[test]
    fn skips_unknown_fields_and_reads_labels() {
        let s = "FIELDS x y z ring class_id instance_id\nSIZE 4 4 4 2 4 4\nTYPE F F F U I I\nCOUNT 1 1 1 1 1 1\nWIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n1 2 3 7 0 5\n4 5 6 8 -1 -1\n";
        let c = read_pcd(s.as_bytes()).unwrap();
        assert_eq!(c.points[0].class_id, Some(0));
        assert_eq!(c.points[0].instance_id, Some(5));
        assert_eq!(c.points[1].class_id, None);
        assert_eq!(c.points[1].xyz(), [4.0, 5.0, 6.0]);
    }
}
