//! Dataset CSV: header `person_id,sample_id,x1,...,xd`, one row per sample.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use dpmean_core::{DpError, PersonDataset, Result};

fn bad(line: u64, msg: impl std::fmt::Display) -> DpError {
    DpError::Config(format!("dataset line {line}: {msg}"))
}

/// Parses a dataset. Rows may come in any order, but every person must have
/// the same number of samples with distinct sample ids; people are ordered
/// by id and samples by sample id.
pub fn read_dataset<R: Read>(reader: R) -> Result<PersonDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| bad(1, e))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "person_id" || cols[1] != "sample_id" {
        return Err(bad(1, "header must be person_id,sample_id,x1,...,xd"));
    }
    for (c, name) in cols[2..].iter().enumerate() {
        if *name != format!("x{}", c + 1) {
            return Err(bad(1, format!("column {} should be x{}, found {name:?}", c + 3, c + 1)));
        }
    }
    let d = cols.len() - 2;
    let mut people: BTreeMap<u64, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 2 {
            return Err(bad(line, format!("expected {} fields, found {}", d + 2, record.len())));
        }
        let int = |i: usize, name: &str| {
            record[i].trim().parse::<u64>().map_err(|_| bad(line, format!("{name} {:?} is not a non-negative integer", &record[i])))
        };
        let (pid, sid) = (int(0, "person_id")?, int(1, "sample_id")?);
        let mut x = Vec::with_capacity(d);
        for c in 0..d {
            let v: f64 = record[c + 2].trim().parse().map_err(|_| bad(line, format!("x{} {:?} is not a number", c + 1, &record[c + 2])))?;
            if !v.is_finite() {
                return Err(bad(line, format!("x{} is not finite", c + 1)));
            }
            x.push(v);
        }
        if people.entry(pid).or_default().insert(sid, x).is_some() {
            return Err(bad(line, format!("duplicate sample {sid} for person {pid}")));
        }
    }
    let m = people.values().next().map_or(0, BTreeMap::len);
    if m == 0 {
        return Err(DpError::EmptyInput("dataset has no rows".into()));
    }
    if let Some((pid, s)) = people.iter().find(|(_, s)| s.len() != m) {
        return Err(DpError::Config(format!("person {pid} has {} samples, expected {m}", s.len())));
    }
    let n = people.len();
    let values = people.into_values().flat_map(|s| s.into_values().flatten()).collect();
    PersonDataset::new(n, m, d, values)
}

pub fn read_dataset_file(path: &Path) -> Result<PersonDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file)).map_err(|e| match e {
        DpError::Config(msg) => DpError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_dataset<W: Write>(data: &PersonDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["person_id".to_string(), "sample_id".to_string()];
    header.extend((1..=data.d()).map(|c| format!("x{c}")));
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        for j in 0..data.m() {
            let mut row = vec![i.to_string(), j.to_string()];
            row.extend(data.sample(i, j).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = PersonDataset::new(2, 2, 2, vec![0.1, 0.2, 0.3, 0.4, -1.0, 2.5, 1e-300, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("person_id,sample_id,x1,x2\n0,0,0.1,0.2\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn rows_in_any_order() {
        let text = "person_id,sample_id,x1\n1,1,4\n0,1,2\n1,0,3\n0,0,1\n";
        let data = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(data.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let missing = "person_id,sample_id,x1,x2\n0,0,1,2\n0,1,3\n";
        let err = read_dataset(missing.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("expected 4 fields"), "{err}");
        let nan = "person_id,sample_id,x1\n0,0,abc\n";
        assert!(read_dataset(nan.as_bytes()).unwrap_err().to_string().contains("line 2"));
        let dup = "person_id,sample_id,x1\n0,0,1\n0,0,2\n";
        assert!(read_dataset(dup.as_bytes()).unwrap_err().to_string().contains("duplicate"));
        let header = "person,sample,x1\n0,0,1\n";
        assert!(read_dataset(header.as_bytes()).unwrap_err().to_string().contains("line 1"));
        let ragged = "person_id,sample_id,x1\n0,0,1\n0,1,1\n1,0,2\n";
        assert!(matches!(read_dataset(ragged.as_bytes()), Err(DpError::Config(_))));
        assert!(matches!(read_dataset("person_id,sample_id,x1\n".as_bytes()), Err(DpError::EmptyInput(_))));
    }
}
