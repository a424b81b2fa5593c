//! Point-cloud CSV files: `x,y,u,v,p,k,eps[,tag][,Re]`, header required,
//! columns in any order. Values in the file are dimensional; samples are
//! normalized through [`RefScales`] on load and denormalized on write.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{BoundaryTag, DataError, FieldSample};
use crate::physics::{FlowState, RefScales};

const REQUIRED: [&str; 7] = ["x", "y", "u", "v", "p", "k", "eps"];

/// Samples of one case file. `re` is set when the file has an `Re` column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub samples: Vec<FieldSample>,
    pub re: Option<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_csv(path: &Path, scales: &RefScales) -> Result<PointCloud, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_samples(std::io::BufReader::new(file), scales)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_samples<R: Read>(reader: R, scales: &RefScales) -> Result<PointCloud, DataError> {
    scales.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or(DataError::MissingColumn(name))?;
    }
    let tag_col = find("tag");
    let re_col = find("re");

    let mut cloud = PointCloud::default();
    let mut record = csv::StringRecord::new();
    loop {
        if !rdr.read_record(&mut record).map_err(csv_error)? {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let number = |col: usize, name: &str| -> Result<f64, DataError> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("column `{name}`: cannot parse `{raw}` as a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::NonFinite {
                    line,
                    column: name.to_string(),
                })
            }
        };
        let mut vals = [0.0; 7];
        for ((v, &c), name) in vals.iter_mut().zip(&cols).zip(REQUIRED) {
            *v = number(c, name)?;
        }
        let tag = match tag_col {
            Some(c) => {
                let raw = record.get(c).unwrap_or("");
                BoundaryTag::parse(raw).ok_or_else(|| DataError::UnknownTag {
                    line,
                    tag: raw.to_string(),
                })?
            }
            None => BoundaryTag::Interior,
        };
        let [x, y, u, v, p, k, eps] = vals;
        if k < 0.0 {
            return Err(DataError::NegativeK { line, value: k });
        }
        if tag == BoundaryTag::Interior && eps <= 0.0 {
            return Err(DataError::NonPositiveEps { line, value: eps });
        }
        if let Some(c) = re_col {
            let re = number(c, "Re")?;
            match cloud.re {
                None => cloud.re = Some(re),
                Some(expected) if expected != re => {
                    return Err(DataError::MixedRe {
                        line,
                        value: re,
                        expected,
                    })
                }
                Some(_) => {}
            }
        }
        let raw = FlowState { x, y, u, v, p, k, eps };
        cloud
            .samples
            .push(FieldSample::from_state(scales.nondimensionalize(&raw), tag));
    }
    Ok(cloud)
}

/// Writes samples in dimensional units, with a tag column and, if given,
/// a constant `Re` column.
pub fn write_csv(path: &Path, samples: &[FieldSample], scales: &RefScales, re: Option<f64>) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_to(&mut w, samples, scales, re).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_to<W: Write>(w: &mut W, samples: &[FieldSample], scales: &RefScales, re: Option<f64>) -> std::io::Result<()> {
    write!(w, "x,y,u,v,p,k,eps,tag")?;
    if re.is_some() {
        write!(w, ",Re")?;
    }
    writeln!(w)?;
    for s in samples {
        let d = scales.denormalize(&s.state());
        write!(
            w,
            "{},{},{},{},{},{},{},{}",
            d.x,
            d.y,
            d.u,
            d.v,
            d.p,
            d.k,
            d.eps,
            s.tag.name()
        )?;
        if let Some(re) = re {
            write!(w, ",{re}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIVE: &str = "x,y,u,v,p,k,eps\n\
        0,0,1,0,0.5,0.01,0.1\n\
        0.1,0,1,0,0.5,0.01,0.1\n\
        0.2,0.3,0.9,0.1,0.4,0.02,0.2\n\
        0.3,0.5,0.8,-0.1,0.3,0.03,0.3\n\
        0.4,0.9,0.7,0,0.2,0.04,0.4\n";

    fn read(s: &str) -> Result<PointCloud, DataError> {
        read_samples(s.as_bytes(), &RefScales::default())
    }

    #[test]
    fn five_rows() {
        let c = read(FIVE).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.re, None);
        assert_eq!(c.samples[2].u, 0.9);
        assert!(c.samples.iter().all(|s| s.tag == BoundaryTag::Interior));
    }

    #[test]
    fn zero_eps_rejected_with_line() {
        let bad = FIVE.replace("0.2,0.3,0.9,0.1,0.4,0.02,0.2", "0.2,0.3,0.9,0.1,0.4,0.02,0");
        assert!(matches!(read(&bad), Err(DataError::NonPositiveEps { line: 4, .. })));
    }

    #[test]
    fn negative_k_rejected() {
        let bad = FIVE.replace("0.04,0.4", "-0.04,0.4");
        assert!(matches!(read(&bad), Err(DataError::NegativeK { line: 6, .. })));
    }

    #[test]
    fn non_finite_reports_row_and_column() {
        let bad = FIVE.replace("0.3,0.5,0.8", "0.3,NaN,0.8");
        match read(&bad) {
            Err(DataError::NonFinite { line, column }) => {
                assert_eq!(line, 5);
                assert_eq!(column, "y");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        assert!(matches!(
            read("x,y,u,v,p,k\n0,0,0,0,0,0\n"),
            Err(DataError::MissingColumn("eps"))
        ));
    }

    #[test]
    fn tags_and_reynolds() {
        let s = "y,x,u,v,p,k,eps,tag,Re\n0,0,1,0,0,0,0,inlet,5600\n0.5,0.5,1,0,0,0.1,0.1,,5600\n";
        let c = read(s).unwrap();
        assert_eq!(c.re, Some(5600.0));
        assert_eq!(c.samples[0].tag, BoundaryTag::Inlet);
        assert_eq!(c.samples[1].tag, BoundaryTag::Interior);
        let mixed = s.replacen(",,5600", ",,2800", 1);
        assert!(matches!(read(&mixed), Err(DataError::MixedRe { line: 3, .. })));
        let bad_tag = s.replace("inlet", "farfield");
        assert!(matches!(read(&bad_tag), Err(DataError::UnknownTag { line: 2, .. })));
    }

    #[test]
    fn unparsable_number() {
        let bad = FIVE.replace("0.4,0.9", "0.4,abc");
        assert!(matches!(read(&bad), Err(DataError::Parse { line: 6, .. })));
    }

    proptest! {
        #[test]
        fn load_then_denormalize_reproduces_raw(
            rows in proptest::collection::vec(
                (-10.0f64..10.0, -10.0f64..10.0, -50.0f64..50.0, -50.0f64..50.0,
                 -1e3f64..1e3, 0.0f64..10.0, 1e-6f64..100.0), 1..20),
            length in 0.01f64..10.0, velocity in 0.1f64..100.0, density in 0.5f64..1000.0,
        ) {
            let scales = RefScales::new(length, velocity, density).unwrap();
            let mut text = String::from("x,y,u,v,p,k,eps\n");
            for r in &rows {
                text += &format!("{},{},{},{},{},{},{}\n", r.0, r.1, r.2, r.3, r.4, r.5, r.6);
            }
            let cloud = read_samples(text.as_bytes(), &scales).unwrap();
            for (s, r) in cloud.samples.iter().zip(&rows) {
                let d = scales.denormalize(&s.state());
                for (a, b) in [(d.x, r.0), (d.y, r.1), (d.u, r.2), (d.v, r.3), (d.p, r.4), (d.k, r.5), (d.eps, r.6)] {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE));
                }
            }
        }

        #[test]
        fn write_read_round_trip(seed: u64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<FieldSample> = (0..10).map(|_| FieldSample {
                x: rng.random(), y: rng.random(), u: rng.random(), v: rng.random(),
                p: rng.random(), k: rng.random(), eps: rng.random::<f64>() + 0.1,
                tag: BoundaryTag::Interior,
            }).collect();
            let mut buf = Vec::new();
            write_to(&mut buf, &samples, &RefScales::default(), Some(42.0)).unwrap();
            let back = read_samples(buf.as_slice(), &RefScales::default()).unwrap();
            prop_assert_eq!(back.samples, samples);
            prop_assert_eq!(back.re, Some(42.0));
        }
    }
}
