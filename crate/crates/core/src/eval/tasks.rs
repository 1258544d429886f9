use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::EvalError;
use crate::geometry::BBox;

pub const NWPU_TAG: &str = "nwpu-vhr-10";
pub const VRSBENCH_TAG: &str = "vrsbench";

/// The ten NWPU-VHR-10 categories, indexed by class id - 1.
pub const NWPU_CLASSES: [&str; 10] = [
    "airplane",
    "ship",
    "storage tank",
    "baseball diamond",
    "tennis court",
    "basketball court",
    "ground track field",
    "harbor",
    "bridge",
    "vehicle",
];

/// One referring expression with its ground truth, as stored in the
/// canonical JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub task_id: String,
    /// Relative to the directory holding the tasks file.
    #[serde(rename = "image")]
    pub image_path: PathBuf,
    pub query: String,
    #[serde(rename = "bbox")]
    pub truth_box: BBox,
    #[serde(rename = "dataset")]
    pub dataset_tag: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub obb_converted: bool,
}

impl TaskRecord {
    pub fn resolve_image(&self, base: &Path) -> PathBuf {
        base.join(&self.image_path)
    }
}

/// Records from an adapter plus the per-item problems it skipped over.
#[derive(Debug, Default)]
pub struct Adapted {
    pub records: Vec<TaskRecord>,
    pub errors: Vec<EvalError>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses canonical task JSONL. Blank lines are skipped; any malformed line
/// fails the load with its line number. Missing image files only warn.
pub fn load_canonical(path: &Path) -> Result<Vec<TaskRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let records = parse_canonical(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &records {
        if !r.resolve_image(base).is_file() {
            log::warn!("task {}: image {} not found", r.task_id, r.image_path.display());
        }
    }
    Ok(records)
}

pub fn parse_canonical(text: &str, path: &Path) -> Result<Vec<TaskRecord>, EvalError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: TaskRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.query.trim().is_empty() {
            return Err(parse_err("empty query".into()));
        }
        if !seen.insert(rec.task_id.clone()) {
            return Err(parse_err(format!("duplicate task_id `{}`", rec.task_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_canonical(records: &[TaskRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

fn parse_nwpu_line(line: &str) -> Result<(BBox, usize), String> {
    let nums: Vec<&str> = line
        .split(|c: char| c == ',' || c == '(' || c == ')' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if nums.len() != 5 {
        return Err(format!("expected `(x1,y1),(x2,y2),class`, got `{line}`"));
    }
    let v: Vec<i64> = nums
        .iter()
        .map(|s| {
            s.parse::<i64>()
                .or_else(|_| s.parse::<f64>().map(|f| f.round() as i64))
                .map_err(|_| format!("`{s}` is not a number"))
        })
        .collect::<Result<_, _>>()?;
    let class = v[4];
    if !(1..=10).contains(&class) {
        return Err(format!("class id {class} outside 1..10"));
    }
    let b = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?;
    if b.x_min() < 0 || b.y_min() < 0 {
        return Err(format!("negative coordinate in {b}"));
    }
    Ok((b, class as usize))
}

/// Reads the NWPU-VHR-10 release layout: `ground truth/NNN.txt` next to
/// `positive image set/NNN.jpg`. A directory holding the `.txt` files
/// directly also works. Queries are synthesized from class names.
pub fn adapt_nwpu(dir: &Path) -> Result<Adapted, EvalError> {
    let gt_dir = if dir.join("ground truth").is_dir() {
        dir.join("ground truth")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&gt_dir)
        .map_err(io_err(&gt_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("txt")))
        .collect();
    files.sort();

    let mut out = Adapted::default();
    for file in files {
        let text = match fs::read(&file) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(source) => {
                out.errors.push(EvalError::Io { path: file, source });
                continue;
            }
        };
        let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let image_path = PathBuf::from("positive image set").join(format!("{stem}.jpg"));
        let mut k = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_nwpu_line(line) {
                Ok((truth_box, class)) => {
                    out.records.push(TaskRecord {
                        task_id: format!("nwpu-{stem}-{k}"),
                        image_path: image_path.clone(),
                        query: format!("the {}", NWPU_CLASSES[class - 1]),
                        truth_box,
                        dataset_tag: NWPU_TAG.to_string(),
                        obb_converted: false,
                    });
                    k += 1;
                }
                Err(message) => out.errors.push(EvalError::Parse {
                    path: file.clone(),
                    line: i + 1,
                    message,
                }),
            }
        }
    }
    Ok(out)
}

fn number(v: &Value) -> Option<f64> {
    v.as_f64().filter(|f| f.is_finite())
}

/// Enclosing half-open box of inclusive corner points, and whether the
/// points described a rotated box.
pub fn corners_to_bbox(points: &[(f64, f64)]) -> Option<(BBox, bool)> {
    if points.is_empty() {
        return None;
    }
    let xs = points.iter().map(|p| p.0);
    let ys = points.iter().map(|p| p.1);
    let x0 = xs.clone().fold(f64::INFINITY, f64::min).floor();
    let x1 = xs.fold(f64::NEG_INFINITY, f64::max).floor();
    let y0 = ys.clone().fold(f64::INFINITY, f64::min).floor();
    let y1 = ys.fold(f64::NEG_INFINITY, f64::max).floor();
    let b = BBox::new(x0 as i64, y0 as i64, x1 as i64 + 1, y1 as i64 + 1).ok()?;
    let rotated = points.iter().any(|&(x, y)| {
        let on_x = x.floor() == x0 || x.floor() == x1;
        let on_y = y.floor() == y0 || y.floor() == y1;
        !(on_x && on_y)
    });
    Some((b, rotated))
}

fn vrs_object(
    image: &str,
    obj: &Value,
    path: &Path,
) -> Result<TaskRecord, EvalError> {
    let missing = |field: &str| EvalError::MissingField {
        path: path.to_path_buf(),
        field: field.to_string(),
    };
    let invalid = |message: String| EvalError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let obj_id = match obj.get("obj_id").ok_or_else(|| missing("obj_id"))? {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    };
    let sentence = obj
        .get("referring_sentence")
        .and_then(Value::as_str)
        .ok_or_else(|| missing("referring_sentence"))?;
    if sentence.trim().is_empty() {
        return Err(invalid(format!("{image} object {obj_id}: empty referring sentence")));
    }
    let bad_geom = || invalid(format!("{image} object {obj_id}: malformed box"));
    let (truth_box, rotated) = if let Some(corners) = obj.get("obj_corner") {
        let pts = corners
            .as_array()
            .ok_or_else(bad_geom)?
            .iter()
            .map(|p| {
                let a = p.as_array()?;
                Some((number(a.first()?)?, number(a.get(1)?)?))
            })
            .collect::<Option<Vec<_>>>()
            .filter(|p| p.len() == 4)
            .ok_or_else(bad_geom)?;
        corners_to_bbox(&pts).ok_or_else(bad_geom)?
    } else if let Some(coord) = obj.get("obj_coord") {
        let c = coord
            .as_array()
            .filter(|a| a.len() == 4)
            .and_then(|a| a.iter().map(number).collect::<Option<Vec<_>>>())
            .ok_or_else(bad_geom)?;
        let (b, _) = corners_to_bbox(&[(c[0], c[1]), (c[2], c[3])]).ok_or_else(bad_geom)?;
        (b, false)
    } else {
        return Err(missing("obj_corner"));
    };
    if truth_box.x_min() < 0 || truth_box.y_min() < 0 {
        return Err(invalid(format!("{image} object {obj_id}: negative coordinate")));
    }
    let stem = Path::new(image).file_stem().unwrap_or_default().to_string_lossy();
    Ok(TaskRecord {
        task_id: format!("vrsbench-{stem}-{obj_id}"),
        image_path: PathBuf::from(image),
        query: sentence.trim().to_string(),
        truth_box,
        dataset_tag: VRSBENCH_TAG.to_string(),
        obb_converted: rotated,
    })
}

/// Reads VRSBench-style annotations: one image record, a JSON array of
/// them, or JSONL. Each record carries `image` and `objects`, where every
/// object has `obj_id`, `referring_sentence` and either four `obj_corner`
/// points or an `obj_coord` corner pair (inclusive pixel corners).
pub fn adapt_vrsbench(path: &Path) -> Result<Adapted, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let images: Vec<Value> = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items,
        Ok(v @ Value::Object(_)) => vec![v],
        Ok(_) => {
            return Err(EvalError::Invalid {
                path: path.to_path_buf(),
                message: "expected an object or an array of objects".into(),
            })
        }
        Err(_) => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| EvalError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?,
    };

    let mut out = Adapted::default();
    for rec in &images {
        let image = rec
            .get("image")
            .and_then(Value::as_str)
            .ok_or_else(|| EvalError::MissingField {
                path: path.to_path_buf(),
                field: "image".into(),
            })?;
        let objects = rec
            .get("objects")
            .and_then(Value::as_array)
            .ok_or_else(|| EvalError::MissingField {
                path: path.to_path_buf(),
                field: "objects".into(),
            })?;
        for obj in objects {
            match vrs_object(image, obj, path) {
                Ok(r) => out.records.push(r),
                Err(e @ EvalError::MissingField { .. }) => return Err(e),
                Err(e) => out.errors.push(e),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn bx(a: i64, b: i64, c: i64, d: i64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn canonical_parsing() {
        let p = Path::new("t.jsonl");
        assert!(parse_canonical("", p).unwrap().is_empty());
        let line = r#"{"task_id":"a","image":"img/a.png","query":"the ship","bbox":[1,2,30,40],"dataset":"x"}"#;
        let recs = parse_canonical(line, p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].task_id, "a");
        assert_eq!(recs[0].image_path, PathBuf::from("img/a.png"));
        assert_eq!(recs[0].truth_box, bx(1, 2, 30, 40));
        assert!(!recs[0].obb_converted);
        assert_eq!(parse_canonical(&write_canonical(&recs), p).unwrap(), recs);

        let bad = format!("{line}\n\n{}", line.replace("[1,2,30,40]", "[30,2,30,40]").replace("\"a\"", "\"b\""));
        match parse_canonical(&bad, p) {
            Err(EvalError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let dup = format!("{line}\n{line}");
        assert!(matches!(parse_canonical(&dup, p), Err(EvalError::Parse { line: 2, .. })));
    }

    #[test]
    fn nwpu_lines() {
        assert_eq!(parse_nwpu_line("(10,20),(110,220),2").unwrap(), (bx(10, 20, 110, 220), 2));
        assert_eq!(parse_nwpu_line(" (563, 478), (630, 573), 1 ").unwrap().0, bx(563, 478, 630, 573));
        assert!(parse_nwpu_line("(10,20),(110,220),11").unwrap_err().contains("class id 11"));
        assert!(parse_nwpu_line("(10,20),(110,220),0").is_err());
        assert!(parse_nwpu_line("(10,20),(10,220),1").is_err());
        assert!(parse_nwpu_line("garbage").is_err());
    }

    #[test]
    fn nwpu_directory() {
        let dir = tempfile::tempdir().unwrap();
        let gt = dir.path().join("ground truth");
        fs::create_dir(&gt).unwrap();
        fs::write(gt.join("001.txt"), "(10,20),(110,220),2\n(5,5),(50,60),5\n").unwrap();
        fs::write(gt.join("002.txt"), "").unwrap();
        fs::write(gt.join("003.txt"), "(1,1),(9,9),12\n(1,1),(9,9),10\n").unwrap();
        let out = adapt_nwpu(dir.path()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[0].task_id, "nwpu-001-0");
        assert_eq!(out.records[0].query, "the ship");
        assert_eq!(out.records[0].truth_box, bx(10, 20, 110, 220));
        assert_eq!(out.records[0].image_path, PathBuf::from("positive image set/001.jpg"));
        assert_eq!(out.records[1].query, "the tennis court");
        assert_eq!(out.records[2].query, "the vehicle");
        assert!(out.records.iter().all(|r| r.dataset_tag == NWPU_TAG));
        assert_eq!(out.errors.len(), 1);
        assert!(matches!(out.errors[0], EvalError::Parse { line: 1, .. }));
    }

    #[test]
    fn corner_hull() {
        let (b, rotated) = corners_to_bbox(&[(10.0, 5.0), (20.0, 8.0), (17.0, 15.0), (7.0, 12.0)]).unwrap();
        assert_eq!(b, bx(7, 5, 21, 16));
        assert!(rotated);
        let (b, rotated) = corners_to_bbox(&[(3.0, 4.0), (9.0, 4.0), (9.0, 10.0), (3.0, 10.0)]).unwrap();
        assert_eq!(b, bx(3, 4, 10, 11));
        assert!(!rotated);
    }

    #[test]
    fn vrsbench_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            r#"[{{"image":"P0001_0000.png","objects":[
                {{"obj_id":3,"referring_sentence":"The small white ship near the dock.","obj_corner":[[10,5],[20,8],[17,15],[7,12]]}},
                {{"obj_id":4,"referring_sentence":"  ","obj_corner":[[1,1],[2,1],[2,2],[1,2]]}},
                {{"obj_id":"5","referring_sentence":"The tank.","obj_coord":[3,4,9,10]}}
            ]}}]"#
        )
        .unwrap();
        let out = adapt_vrsbench(f.path()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].task_id, "vrsbench-P0001_0000-3");
        assert_eq!(out.records[0].truth_box, bx(7, 5, 21, 16));
        assert!(out.records[0].obb_converted);
        assert_eq!(out.records[1].truth_box, bx(3, 4, 10, 11));
        assert!(!out.records[1].obb_converted);
        assert_eq!(out.errors.len(), 1);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        write!(g, r#"{{"image":"a.png","objects":[{{"obj_id":1,"obj_corner":[[0,0],[1,0],[1,1],[0,1]]}}]}}"#).unwrap();
        match adapt_vrsbench(g.path()) {
            Err(EvalError::MissingField { field, .. }) => assert_eq!(field, "referring_sentence"),
            other => panic!("expected missing field, got {other:?}"),
        }
    }
}
