//! Statement viewer CSV export: `Actor,Verb,Object,Timestamp`, newest first.

use std::cmp::Reverse;

use crate::xapi::{format_timestamp, Statement};

pub const EXPORT_FILE_NAME: &str = "statementViewerExport.csv";
pub const EXPORT_HEADER: [&str; 4] = ["Actor", "Verb", "Object", "Timestamp"];

/// Sorts newest first; equal timestamps order by id descending.
pub fn sort_newest_first(stmts: &mut [&Statement]) {
    stmts.sort_by_key(|s| Reverse((s.timestamp, s.id)));
}

/// Writes rows in the given order. Fields are quoted only when needed
/// (RFC 4180), records end with CRLF.
pub fn write_csv<'a>(stmts: impl IntoIterator<Item = &'a Statement>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    w.write_record(EXPORT_HEADER).expect("writing to a Vec cannot fail");
    for s in stmts {
        w.write_record([
            s.actor.display_name.as_str(),
            s.verb.display.as_str(),
            s.object.name.as_str(),
            format_timestamp(&s.timestamp).as_str(),
        ])
        .expect("writing to a Vec cannot fail");
    }
    w.into_inner().expect("flushing a Vec cannot fail")
}

/// Sorts newest first and writes the export.
pub fn export_csv(stmts: &[Statement]) -> Vec<u8> {
    let mut refs: Vec<&Statement> = stmts.iter().collect();
    sort_newest_first(&mut refs);
    write_csv(refs)
}
