use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::geodesy::{enu_to_wgs84, wgs84_to_enu, EnuFrame, GeoPoint, Quaternion};
use crate::io::log::LocationFix;
use crate::metrics::{Trajectory, TrajectorySample};

const ORIGIN_TAG: &str = "# origin:";

/// Track in a local ENU frame, optionally tagged with the frame's anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrack {
    pub origin: Option<GeoPoint>,
    pub trajectory: Trajectory,
}

impl ReferenceTrack {
    /// The track expressed in `frame`. Untagged tracks are assumed to
    /// already be in it.
    pub fn in_frame(&self, frame: &EnuFrame) -> Result<Trajectory> {
        let Some(origin) = self.origin else {
            return Ok(self.trajectory.clone());
        };
        if origin == frame.origin {
            return Ok(self.trajectory.clone());
        }
        let own = EnuFrame::new(origin)?;
        // A rigid rotation between the two tangent planes; orientations are
        // carried along by the same rotation.
        let rot = Quaternion::from_rotation_matrix(&frame_rotation(&own, frame)?);
        let samples = self
            .trajectory
            .samples
            .iter()
            .map(|s| {
                let p = wgs84_to_enu(&enu_to_wgs84(&s.position, &own)?, frame)?;
                Ok(TrajectorySample {
                    t: s.t,
                    position: p,
                    orientation: s.orientation.map(|q| rot * q),
                    position_cov: s.position_cov,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(samples)
    }
}

/// Rotation taking ENU axes of `from` into ENU axes of `to`.
fn frame_rotation(from: &EnuFrame, to: &EnuFrame) -> Result<Matrix3<f64>> {
    let o = wgs84_to_enu(&enu_to_wgs84(&Vector3::zeros(), from)?, to)?;
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = 1000.0;
        let p = wgs84_to_enu(&enu_to_wgs84(&e, from)?, to)?;
        m.set_column(i, &((p - o) / 1000.0));
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(u * vt)
}

fn origin_line(origin: &GeoPoint) -> String {
    format!("{ORIGIN_TAG} {},{},{}\n", origin.latitude, origin.longitude, origin.altitude)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `t,x,y,z,qw,qx,qy,qz,var_x,var_y,var_z` with an `# origin:` line when
/// the frame anchor is known. Missing orientation or covariance leaves the
/// columns empty.
pub fn trajectory_csv(tr: &Trajectory, origin: Option<&GeoPoint>) -> String {
    let mut out = String::with_capacity(tr.len() * 160);
    if let Some(o) = origin {
        out.push_str(&origin_line(o));
    }
    out.push_str("t,x,y,z,qw,qx,qy,qz,var_x,var_y,var_z\n");
    for s in &tr.samples {
        let p = s.position;
        let _ = write!(out, "{},{},{},{}", s.t, p.x, p.y, p.z);
        match s.orientation {
            Some(q) => {
                let _ = write!(out, ",{},{},{},{}", q.w, q.x, q.y, q.z);
            }
            None => out.push_str(",,,,"),
        }
        let d = s.position_cov.map(|c| c.diagonal());
        let _ = writeln!(
            out,
            ",{},{},{}",
            fmt_opt(d.map(|d| d.x)),
            fmt_opt(d.map(|d| d.y)),
            fmt_opt(d.map(|d| d.z))
        );
    }
    out
}

pub fn write_trajectory(path: &Path, tr: &Trajectory, origin: Option<&GeoPoint>) -> Result<()> {
    write_text(path, &trajectory_csv(tr, origin))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_origin(line: &str) -> Result<GeoPoint> {
    let v: Vec<f64> = line
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse { line: 1, message: format!("bad origin `{line}`") })?;
    if v.len() != 3 {
        return Err(Error::Parse { line: 1, message: "origin needs lat,lon,alt".into() });
    }
    GeoPoint::new(v[0], v[1], v[2])
}

/// Reads a reference or trajectory CSV: `t,x,y,z` with optional
/// `qw,qx,qy,qz` and `var_x,var_y,var_z` columns, and an optional
/// `# origin: lat,lon,alt` comment.
pub fn parse_track(text: &str) -> Result<ReferenceTrack> {
    let mut origin = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(rest) = line.strip_prefix(ORIGIN_TAG) {
            origin = Some(parse_origin(rest.trim())?);
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| invalid(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let [Some(ti), Some(xi), Some(yi), Some(zi)] = [col("t"), col("x"), col("y"), col("z")] else {
        return Err(Error::Parse { line: 1, message: "track needs t,x,y,z columns".into() });
    };
    let quat = [col("qw"), col("qx"), col("qy"), col("qz")];
    let var = [col("var_x"), col("var_y"), col("var_z")];
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(s) => s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                    line,
                    message: format!("column `{}`: `{s}` is not a number", &headers[i]),
                }),
            }
        };
        let req = |i: usize| -> Result<f64> {
            num(i)?.ok_or_else(|| Error::Parse { line, message: format!("missing `{}`", &headers[i]) })
        };
        let opt_all = |cols: &[Option<usize>]| -> Result<Option<Vec<f64>>> {
            let mut v = Vec::with_capacity(cols.len());
            for c in cols {
                match c.map(num).transpose()?.flatten() {
                    Some(x) => v.push(x),
                    None => return Ok(None),
                }
            }
            Ok(Some(v))
        };
        samples.push(TrajectorySample {
            t: req(ti)?,
            position: Vector3::new(req(xi)?, req(yi)?, req(zi)?),
            orientation: opt_all(&quat)?.map(|q| Quaternion::new(q[0], q[1], q[2], q[3])),
            position_cov: opt_all(&var)?.map(|d| Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2]))),
        });
    }
    Ok(ReferenceTrack {
        origin,
        trajectory: Trajectory::new(samples)?,
    })
}

pub fn read_track(path: &Path) -> Result<ReferenceTrack> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_track(&text)
}

/// FeatureCollection with the track as a LineString (lon, lat, alt) followed
/// by one Point per location fix with its accuracy radius.
pub fn geojson(tr: &Trajectory, frame: &EnuFrame, fixes: &[LocationFix], name: &str) -> Result<Value> {
    let coords = tr
        .samples
        .iter()
        .map(|s| {
            let g = enu_to_wgs84(&s.position, frame)?;
            Ok(json!([g.longitude, g.latitude, g.altitude]))
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = tr.times();
    let mut features = vec![json!({
        "type": "Feature",
        "properties": { "name": name, "times": times },
        "geometry": { "type": "LineString", "coordinates": coords },
    })];
    for f in fixes {
        features.push(json!({
            "type": "Feature",
            "properties": { "t": f.t, "accuracy_m": f.accuracy },
            "geometry": {
                "type": "Point",
                "coordinates": [f.point.longitude, f.point.latitude, f.point.altitude],
            },
        }));
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

/// LineString coordinates of a [`geojson`] document back in `frame`.
pub fn geojson_positions(doc: &Value, frame: &EnuFrame) -> Result<Vec<Vector3<f64>>> {
    let coords = doc["features"][0]["geometry"]["coordinates"]
        .as_array()
        .ok_or_else(|| invalid("GeoJSON without a LineString"))?;
    coords
        .iter()
        .map(|c| {
            let v = |i: usize| c[i].as_f64().ok_or_else(|| invalid("bad GeoJSON coordinate"));
            wgs84_to_enu(&GeoPoint::new(v(1)?, v(0)?, v(2)?)?, frame)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track() -> Trajectory {
        let samples = (0..20)
            .map(|k| {
                let t = k as f64 * 0.5;
                TrajectorySample {
                    t,
                    position: Vector3::new(3.0 * t, (0.3 * t).sin() * 40.0, 0.1 * t),
                    orientation: Some(Quaternion::from_yaw(0.1 * t)),
                    position_cov: (k % 2 == 0).then(|| Matrix3::identity() * 0.25),
                }
            })
            .collect();
        Trajectory::new(samples).unwrap()
    }

    fn origin() -> GeoPoint {
        GeoPoint { latitude: 60.1699, longitude: 24.9384, altitude: 20.0 }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let tr = track();
        let back = parse_track(&trajectory_csv(&tr, Some(&origin()))).unwrap();
        assert_eq!(back.origin, Some(origin()));
        assert_eq!(back.trajectory, tr);
    }

    #[test]
    fn plain_reference_without_orientation() {
        let r = parse_track("t,x,y,z\n0,1,2,3\n1,2,3,4\n").unwrap();
        assert_eq!(r.origin, None);
        assert_eq!(r.trajectory.len(), 2);
        assert!(r.trajectory.samples[0].orientation.is_none());
        assert!(parse_track("t,x,y\n0,1,2\n").is_err());
        let e = parse_track("t,x,y,z\n0,1,2,3\n1,2,zz,4\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn geojson_matches_trajectory() {
        let tr = track();
        let frame = EnuFrame::new(origin()).unwrap();
        let doc = geojson(&tr, &frame, &[], "GIEKF-20").unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        let p = geojson_positions(&back, &frame).unwrap();
        for (a, b) in p.iter().zip(tr.positions()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn reframing_preserves_geometry() {
        let tr = track();
        let own = origin();
        let other = GeoPoint { latitude: 60.1702, longitude: 24.9391, altitude: 25.0 };
        let frame = EnuFrame::new(other).unwrap();
        let r = ReferenceTrack { origin: Some(own), trajectory: tr.clone() };
        let moved = r.in_frame(&frame).unwrap();
        let own_frame = EnuFrame::new(own).unwrap();
        for (a, b) in moved.samples.iter().zip(&tr.samples) {
            let g = enu_to_wgs84(&a.position, &frame).unwrap();
            assert!((wgs84_to_enu(&g, &own_frame).unwrap() - b.position).norm() < 1e-6);
        }
        let d0 = (moved.samples[5].position - moved.samples[0].position).norm();
        let d1 = (tr.samples[5].position - tr.samples[0].position).norm();
        assert!((d0 - d1).abs() < 1e-6);
    }
}
