//! Text file formats.
//!
//! Every file starts with a `MAGIC,version[,fields...]` line, followed by
//! `# key=value` lines echoing the effective configuration, a column-name
//! line, then comma-separated records. Floats are written as `{:.16e}`
//! (17 significant digits), which parses back to the identical `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::embedding::{Flags, Group, SegmentRecord};
use crate::encoder::StepLog;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::scoring::{Decision, Statistic};

use super::experiment::{AblationTable, SweepAxis, SweepRow};

pub const FORMAT_VERSION: u32 = 1;

pub type Echo = [(&'static str, String)];
/// Echo lines as read back from a file.
pub type ParsedEcho = Vec<(String, String)>;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header line plus configuration echo and column names.
pub fn header(magic: &str, fields: &[String], echo: &Echo, columns: &[String]) -> String {
    let mut out = String::new();
    out.push_str(magic);
    write!(out, ",{FORMAT_VERSION}").unwrap();
    for f in fields {
        write!(out, ",{f}").unwrap();
    }
    out.push('\n');
    for (k, v) in echo {
        writeln!(out, "# {k}={v}").unwrap();
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    out
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains([',', '\n', '\r']) || value.starts_with('#') {
        return Err(Error::data(format!("{name} `{value}` is empty or contains a separator")));
    }
    Ok(())
}

/// Line-oriented reader that reports errors with the file position.
pub struct Reader<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(path: &'a Path, text: &'a str) -> Self {
        Reader { path, lines: text.lines().collect(), pos: 0 }
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.display().to_string(), line: self.pos, msg: msg.into() }
    }

    fn next(&mut self) -> Option<&'a str> {
        let line = self.lines.get(self.pos).copied();
        if line.is_some() {
            self.pos += 1;
        }
        line
    }

    /// Reads the magic line, the echo and the column line. Returns the extra
    /// magic-line fields and the echoed pairs.
    pub fn header(&mut self, magic: &str, columns: &[String]) -> Result<(Vec<String>, ParsedEcho)> {
        let first = self.next().ok_or_else(|| self.error("empty file"))?;
        let mut fields = first.split(',');
        if fields.next() != Some(magic) {
            return Err(self.error(format!("expected {magic} header")));
        }
        let version: u32 = self.parse(fields.next().unwrap_or(""), "version")?;
        if version != FORMAT_VERSION {
            return Err(self.error(format!("unsupported version {version}")));
        }
        let fields = fields.map(str::to_string).collect();
        let mut echo = Vec::new();
        loop {
            let line = self.next().ok_or_else(|| self.error("missing column line"))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    echo.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.split(',').ne(columns.iter().map(String::as_str)) {
                return Err(self.error("unexpected column names"));
            }
            return Ok((fields, echo));
        }
    }

    /// Next non-empty record split into fields.
    pub fn record(&mut self) -> Option<Vec<&'a str>> {
        loop {
            let line = self.next()?;
            if !line.trim().is_empty() {
                return Some(line.split(',').collect());
            }
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, value: &str, what: &str) -> Result<T> {
        value.trim().parse().map_err(|_| self.error(format!("bad {what} `{value}`")))
    }

    pub fn expect_len(&self, record: &[&str], n: usize) -> Result<()> {
        if record.len() != n {
            return Err(self.error(format!("expected {n} fields, found {}", record.len())));
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------- features

pub const FEATURES_MAGIC: &str = "POIF-FEAT";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim_audio: usize,
    pub dim_video: usize,
    pub echo: Vec<(String, String)>,
    pub segments: Vec<SegmentRecord>,
}

fn feature_columns(da: usize, dv: usize) -> Vec<String> {
    let mut cols: Vec<String> =
        ["identity_id", "video_id", "segment", "fake", "v", "a", "ai"].iter().map(|s| s.to_string()).collect();
    cols.extend((0..da).map(|i| format!("a{i}")));
    cols.extend((0..dv).map(|i| format!("v{i}")));
    cols
}

pub fn features_to_string(da: usize, dv: usize, segments: &[SegmentRecord], echo: &Echo) -> Result<String> {
    let fields = [da.to_string(), dv.to_string(), segments.len().to_string()];
    let mut out = header(FEATURES_MAGIC, &fields, echo, &feature_columns(da, dv));
    for s in segments {
        check_field("identity id", &s.identity_id)?;
        check_field("video id", &s.video_id)?;
        if s.audio.len() != da || s.video.len() != dv {
            return Err(Error::DimensionMismatch { left: da + dv, right: s.audio.len() + s.video.len() });
        }
        let f = s.flags;
        write!(
            out,
            "{},{},{},{},{},{},{}",
            s.identity_id, s.video_id, s.segment_index, f.is_fake as u8, f.v as u8, f.a as u8, f.ai as u8
        )
        .unwrap();
        for x in s.audio.iter().chain(&s.video) {
            write!(out, ",{}", fmt_f64(*x)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_features(path: &Path, da: usize, dv: usize, segments: &[SegmentRecord], echo: &Echo) -> Result<()> {
    write_text(path, &features_to_string(da, dv, segments, echo)?)
}

pub fn parse_features(path: &Path, text: &str) -> Result<FeatureFile> {
    let mut r = Reader::new(path, text);
    // the column line depends on the dims, so peek at the magic line first
    let first = text.lines().next().unwrap_or("");
    let dims: Vec<&str> = first.split(',').collect();
    if dims.len() != 5 {
        return Err(r.error(format!("expected {FEATURES_MAGIC},version,dim_audio,dim_video,count")));
    }
    let da: usize = r.parse(dims[2], "audio dimension")?;
    let dv: usize = r.parse(dims[3], "video dimension")?;
    let count: usize = r.parse(dims[4], "record count")?;
    let (_, echo) = r.header(FEATURES_MAGIC, &feature_columns(da, dv))?;
    let mut segments = Vec::with_capacity(count);
    let bit = |r: &Reader, v: &str, what: &str| match v {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(r.error(format!("bad {what} flag `{v}`"))),
    };
    while let Some(rec) = r.record() {
        r.expect_len(&rec, 7 + da + dv)?;
        let flags = Flags {
            is_fake: bit(&r, rec[3], "fake")?,
            v: bit(&r, rec[4], "v")?,
            a: bit(&r, rec[5], "a")?,
            ai: bit(&r, rec[6], "ai")?,
        };
        flags.group().map_err(|e| r.error(e.to_string()))?;
        let values = rec[7..].iter().map(|v| r.parse::<f64>(v, "feature")).collect::<Result<Vec<_>>>()?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(r.error("empty identifier"));
        }
        segments.push(SegmentRecord {
            identity_id: rec[0].to_string(),
            video_id: rec[1].to_string(),
            segment_index: r.parse(rec[2], "segment index")?,
            audio: values[..da].to_vec(),
            video: values[da..].to_vec(),
            flags,
        });
    }
    if segments.len() != count {
        return Err(r.error(format!("header declares {count} records, found {}", segments.len())));
    }
    Ok(FeatureFile { dim_audio: da, dim_video: dv, echo, segments })
}

pub fn read_features(path: &Path) -> Result<FeatureFile> {
    parse_features(path, &read_text(path)?)
}

/// Groups segments by video id, in order of first appearance.
pub fn group_by_video(segments: &[SegmentRecord]) -> Vec<(String, Vec<&SegmentRecord>)> {
    let mut order: Vec<(String, Vec<&SegmentRecord>)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for s in segments {
        match index.get(s.video_id.as_str()) {
            Some(&i) => order[i].1.push(s),
            None => {
                index.insert(&s.video_id, order.len());
                order.push((s.video_id.clone(), vec![s]));
            }
        }
    }
    order
}

// ------------------------------------------------------------------ scores

pub const SCORES_MAGIC: &str = "POIF-SCORES";

/// One scored video; indices are segment means of the normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub video_id: String,
    pub n_segments: usize,
    pub video: f64,
    pub audio: f64,
    pub av: f64,
    pub fused: f64,
    pub decision: Decision,
}

impl ScoreRow {
    pub fn statistic(&self, s: Statistic) -> f64 {
        match s {
            Statistic::Modality(crate::Modality::Video) => self.video,
            Statistic::Modality(crate::Modality::Audio) => self.audio,
            Statistic::Modality(crate::Modality::AudioVideo) => self.av,
            Statistic::Fusion => self.fused,
        }
    }
}

fn score_columns() -> Vec<String> {
    ["video_id", "n_segments", "video", "audio", "av", "fused", "decision"].iter().map(|s| s.to_string()).collect()
}

pub fn scores_to_string(rows: &[ScoreRow], echo: &Echo) -> String {
    let mut out = header(SCORES_MAGIC, &[rows.len().to_string()], echo, &score_columns());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.video_id,
            r.n_segments,
            fmt_f64(r.video),
            fmt_f64(r.audio),
            fmt_f64(r.av),
            fmt_f64(r.fused),
            r.decision.name()
        )
        .unwrap();
    }
    out
}

pub fn parse_scores(path: &Path, text: &str) -> Result<Vec<ScoreRow>> {
    let mut r = Reader::new(path, text);
    let (fields, _) = r.header(SCORES_MAGIC, &score_columns())?;
    let count: usize = r.parse(fields.first().map_or("", String::as_str), "row count")?;
    let mut rows = Vec::with_capacity(count);
    while let Some(rec) = r.record() {
        r.expect_len(&rec, 7)?;
        let decision = match rec[6] {
            "real" => Decision::Real,
            "fake" => Decision::Fake,
            other => return Err(r.error(format!("bad decision `{other}`"))),
        };
        rows.push(ScoreRow {
            video_id: rec[0].to_string(),
            n_segments: r.parse(rec[1], "segment count")?,
            video: r.parse(rec[2], "score")?,
            audio: r.parse(rec[3], "score")?,
            av: r.parse(rec[4], "score")?,
            fused: r.parse(rec[5], "score")?,
            decision,
        });
    }
    if rows.len() != count {
        return Err(r.error(format!("header declares {count} rows, found {}", rows.len())));
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    parse_scores(path, &read_text(path)?)
}

// ------------------------------------------------------------------ report

pub const REPORT_MAGIC: &str = "POIF-EVAL";
pub const UNDEFINED: &str = "undefined";

fn report_columns() -> Vec<String> {
    let mut cols = vec!["group".to_string(), "n_real".into(), "n_fake".into()];
    for metric in ["auc", "acc", "pd"] {
        for s in Statistic::ALL {
            cols.push(format!("{metric}_{}", s.name()));
        }
    }
    cols
}

/// Per-group rows in [`Group::ALL`] order, then the macro-average row.
pub fn report_to_string(table: &AblationTable, echo: &Echo) -> String {
    use super::experiment::Metric;
    let mut out = header(REPORT_MAGIC, &[], echo, &report_columns());
    let cell = |v: Option<f64>| v.map_or(UNDEFINED.to_string(), fmt_f64);
    let (mut n_real, mut n_fake) = (0usize, 0usize);
    for g in Group::ALL {
        let counts = (0..Statistic::ALL.len()).find_map(|c| table.cells.get(&(g, c)).copied().flatten());
        let (real, fake) = counts.map_or((0, 0), |r: MetricsReport| (r.n_real, r.n_fake));
        n_real = n_real.max(real);
        n_fake += fake;
        let mut row = vec![g.code().to_string(), real.to_string(), fake.to_string()];
        for metric in Metric::ALL {
            row.extend(Statistic::ALL.iter().map(|&s| cell(table.get(g, s, metric))));
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    let mut row = vec!["AVG".to_string(), n_real.to_string(), n_fake.to_string()];
    for metric in Metric::ALL {
        row.extend(Statistic::ALL.iter().map(|&s| cell(table.average(s, metric))));
    }
    writeln!(out, "{}", row.join(",")).unwrap();
    out
}

/// Report cells keyed by row label and column name; undefined cells are `None`.
pub fn parse_report(path: &Path, text: &str) -> Result<BTreeMap<(String, String), Option<f64>>> {
    let mut r = Reader::new(path, text);
    let columns = report_columns();
    r.header(REPORT_MAGIC, &columns)?;
    let mut cells = BTreeMap::new();
    while let Some(rec) = r.record() {
        r.expect_len(&rec, columns.len())?;
        for (col, v) in columns.iter().zip(&rec).skip(3) {
            let value = if *v == UNDEFINED { None } else { Some(r.parse::<f64>(v, "metric")?) };
            cells.insert((rec[0].to_string(), col.clone()), value);
        }
    }
    Ok(cells)
}

// ------------------------------------------------------------ sweep and log

pub const SWEEP_MAGIC: &str = "POIF-SWEEP";
pub const LOG_MAGIC: &str = "POIF-LOG";

pub fn sweep_to_string(axis: SweepAxis, rows: &[SweepRow], echo: &Echo) -> String {
    let columns = ["x", "class", "auc"].map(String::from);
    let mut out = header(SWEEP_MAGIC, &[axis.name().to_string()], echo, &columns);
    for r in rows {
        writeln!(out, "{},{},{}", r.x, r.class, fmt_f64(r.auc)).unwrap();
    }
    out
}

pub fn parse_sweep(path: &Path, text: &str) -> Result<(SweepAxis, Vec<SweepRow>)> {
    let mut r = Reader::new(path, text);
    let (fields, _) = r.header(SWEEP_MAGIC, &["x", "class", "auc"].map(String::from))?;
    let axis: SweepAxis = fields.first().map_or("", String::as_str).parse().map_err(|_| r.error("bad sweep axis"))?;
    let mut rows = Vec::new();
    while let Some(rec) = r.record() {
        r.expect_len(&rec, 3)?;
        rows.push(SweepRow { x: r.parse(rec[0], "x")?, class: rec[1].to_string(), auc: r.parse(rec[2], "auc")? });
    }
    Ok((axis, rows))
}

pub fn log_to_string(log: &[StepLog], echo: &Echo) -> String {
    let columns = ["step", "loss", "loss_audio", "loss_video", "loss_av"].map(String::from);
    let mut out = header(LOG_MAGIC, &[log.len().to_string()], echo, &columns);
    for s in log {
        let l = &s.loss;
        writeln!(out, "{},{},{},{},{}", s.step, fmt_f64(l.l_tot), fmt_f64(l.l_a), fmt_f64(l.l_v), fmt_f64(l.l_av))
            .unwrap();
    }
    out
}
