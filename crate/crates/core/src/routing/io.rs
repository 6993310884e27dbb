//! Line-oriented instance and solution files.
//!
//! Each non-blank line is one self-describing JSON record carrying a
//! `schema_version`. Coordinates are written with the shortest decimal that
//! parses back to the same IEEE-754 double, so files round-trip bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::instance::{Instance, Point, ProblemKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    schema_version: u32,
    kind: ProblemKind,
    n: usize,
    depot: Option<usize>,
    capacity: Option<u32>,
    num_routes: Option<usize>,
    coords: Vec<Point>,
    demands: Vec<u32>,
    seed: u64,
}

/// One solved instance as stored in a solution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub schema_version: u32,
    pub instance_id: usize,
    pub actions: Vec<usize>,
    pub length: f64,
}

impl SolutionRecord {
    pub fn new(instance_id: usize, actions: Vec<usize>, length: f64) -> Self {
        SolutionRecord {
            schema_version: SCHEMA_VERSION,
            instance_id,
            actions,
            length,
        }
    }
}

impl From<&Instance> for InstanceRecord {
    fn from(inst: &Instance) -> Self {
        InstanceRecord {
            schema_version: SCHEMA_VERSION,
            kind: inst.kind(),
            n: inst.len(),
            depot: inst.depot(),
            capacity: inst.capacity(),
            num_routes: inst.num_routes(),
            coords: inst.nodes().to_vec(),
            demands: inst.demands().to_vec(),
            seed: inst.seed(),
        }
    }
}

impl InstanceRecord {
    fn into_instance(self, line: usize) -> Result<Instance> {
        let fail = |message: String| Error::Parse { line, message };
        if self.coords.len() != self.n {
            return Err(fail(format!(
                "n = {} but {} coordinates",
                self.n,
                self.coords.len()
            )));
        }
        if self.depot != self.kind.has_depot().then_some(0) {
            return Err(fail(format!("depot {:?} invalid for {}", self.depot, self.kind)));
        }
        Instance::new(
            self.kind,
            self.coords,
            self.demands,
            self.capacity,
            self.num_routes,
            self.seed,
        )
        .map_err(|e| fail(e.to_string()))
    }
}

fn parse_lines<T, R>(reader: R, version_of: impl Fn(&T) -> u32) -> Result<Vec<(usize, T)>>
where
    T: DeserializeOwned,
    R: Read,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let found = version_of(&rec);
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found,
            });
        }
        out.push((line_no, rec));
    }
    Ok(out)
}

pub fn parse_instances<R: Read>(reader: R) -> Result<Vec<Instance>> {
    parse_lines::<InstanceRecord, _>(reader, |r| r.schema_version)?
        .into_iter()
        .map(|(line, rec)| rec.into_instance(line))
        .collect()
}

pub fn format_instances<W: Write>(mut writer: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut writer, &InstanceRecord::from(inst))?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn parse_solutions<R: Read>(reader: R) -> Result<Vec<SolutionRecord>> {
    Ok(parse_lines::<SolutionRecord, _>(reader, |r| r.schema_version)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn format_solutions<W: Write>(mut writer: W, records: &[SolutionRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_instances(file)
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    format_instances(&mut w, instances)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_solutions(path: impl AsRef<Path>) -> Result<Vec<SolutionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_solutions(file)
}

pub fn write_solutions(path: impl AsRef<Path>, records: &[SolutionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    format_solutions(&mut w, records)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::generate_instances;
    use proptest::prelude::*;

    fn to_string(instances: &[Instance]) -> String {
        let mut buf = Vec::new();
        format_instances(&mut buf, instances).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_instances("".as_bytes()).unwrap().is_empty());
        assert!(parse_solutions("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip() {
        let mut all = generate_instances(ProblemKind::Cvrp, 10, 3, 1).unwrap();
        all.extend(generate_instances(ProblemKind::Tsp, 5, 2, 9).unwrap());
        all.extend(generate_instances(ProblemKind::Mrpff, 6, 2, 4).unwrap());
        let text = to_string(&all);
        let back = parse_instances(text.as_bytes()).unwrap();
        assert_eq!(back, all);
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn thousand_records_keep_order() {
        let all = generate_instances(ProblemKind::Tsp, 4, 1000, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tsp.jsonl");
        write_instances(&path, &all).unwrap();
        let back = read_instances(&path).unwrap();
        assert_eq!(back.len(), 1000);
        assert!(back.iter().zip(77u64..).all(|(i, s)| i.seed() == s));
    }

    #[test]
    fn parse_error_reports_line() {
        let good = to_string(&generate_instances(ProblemKind::Tsp, 3, 1, 0).unwrap());
        let text = format!("{good}\n{{not json\n");
        match parse_instances(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_version_mismatch() {
        let good = to_string(&generate_instances(ProblemKind::Tsp, 3, 1, 0).unwrap());
        let bumped = good.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            parse_instances(bumped.as_bytes()),
            Err(Error::SchemaVersion { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn invalid_instance_reports_line() {
        let text = r#"{"schema_version":1,"kind":"tsp","n":3,"depot":null,"capacity":null,"num_routes":null,"coords":[[0.1,0.2],[0.3,0.4]],"demands":[],"seed":0}"#;
        assert!(matches!(
            parse_instances(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn solution_round_trip() {
        let recs = vec![
            SolutionRecord::new(0, vec![0, 2, 1], 2.5),
            SolutionRecord::new(1, vec![3, 0, 1, 2], 0.1 + 0.2),
        ];
        let mut buf = Vec::new();
        format_solutions(&mut buf, &recs).unwrap();
        assert_eq!(parse_solutions(buf.as_slice()).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn coordinates_round_trip_bitwise(xs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..12)) {
            let nodes: Vec<Point> = xs.iter().map(|&(x, y)| [x, y]).collect();
            let inst = Instance::tsp(nodes.clone()).unwrap();
            let back = parse_instances(to_string(&[inst]).as_bytes()).unwrap();
            let bits = |p: &[Point]| p.iter().flat_map(|q| q.map(f64::to_bits)).collect::<Vec<_>>();
            prop_assert_eq!(bits(back[0].nodes()), bits(&nodes));
        }
    }
}
