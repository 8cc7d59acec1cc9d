//! Single-pass, error-recovering parser for grounding tokens.

use serde::Serialize;

use super::{
    DiagnosticCode, GroundingElement, ParseDiagnostic, BOX_END, BOX_START, DEFAULT_BINS, LINE_END,
    LINE_START, POINT_END, POINT_START, REF_END, REF_START, SEG_MASK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    BoxStart,
    BoxEnd,
    PointStart,
    PointEnd,
    LineStart,
    LineEnd,
    SegMask,
    RefStart,
    RefEnd,
}

const MARKERS: [(&str, Marker); 9] = [
    (BOX_START, Marker::BoxStart),
    (BOX_END, Marker::BoxEnd),
    (POINT_START, Marker::PointStart),
    (POINT_END, Marker::PointEnd),
    (LINE_START, Marker::LineStart),
    (LINE_END, Marker::LineEnd),
    (SEG_MASK, Marker::SegMask),
    (REF_START, Marker::RefStart),
    (REF_END, Marker::RefEnd),
];

impl Marker {
    fn text(self) -> &'static str {
        MARKERS
            .iter()
            .find(|(_, m)| *m == self)
            .map(|(t, _)| *t)
            .expect("listed")
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    offset: usize,
    marker: Marker,
}

impl Token {
    fn end(self) -> usize {
        self.offset + self.marker.text().len()
    }
}

/// Next known marker at or after `from`. Unknown `<|...` text is prose.
fn next_marker(src: &str, mut from: usize) -> Option<Token> {
    while let Some(rel) = src.get(from..)?.find("<|") {
        let offset = from + rel;
        let rest = &src[offset..];
        if let Some(&(_, marker)) = MARKERS.iter().find(|(t, _)| rest.starts_with(t)) {
            return Some(Token { offset, marker });
        }
        from = offset + 2;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseOutput {
    pub elements: Vec<GroundingElement>,
    /// Byte offset of each top-level element's opening marker.
    pub offsets: Vec<usize>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseOutput {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(ParseDiagnostic::is_error)
    }
}

struct OpenRef {
    offset: usize,
    label: String,
    body: Vec<GroundingElement>,
}

struct Parser<'a> {
    src: &'a str,
    bins: u32,
    elements: Vec<GroundingElement>,
    offsets: Vec<usize>,
    diagnostics: Vec<ParseDiagnostic>,
    open_ref: Option<OpenRef>,
}

pub fn parse(text: &str) -> ParseOutput {
    parse_with_bins(text, DEFAULT_BINS)
}

/// Parses every grounding primitive in `text`; never fails.
pub fn parse_with_bins(text: &str, bins: u32) -> ParseOutput {
    let mut p = Parser {
        src: text,
        bins,
        elements: Vec::new(),
        offsets: Vec::new(),
        diagnostics: Vec::new(),
        open_ref: None,
    };
    p.run();
    p.close_ref();
    ParseOutput {
        elements: p.elements,
        offsets: p.offsets,
        diagnostics: p.diagnostics,
    }
}

impl<'a> Parser<'a> {
    fn run(&mut self) {
        let mut pos = 0;
        while let Some(tok) = next_marker(self.src, pos) {
            pos = match tok.marker {
                Marker::BoxStart => self.primitive(tok, Marker::BoxEnd, 2),
                Marker::PointStart => self.primitive(tok, Marker::PointEnd, 1),
                Marker::LineStart => self.primitive(tok, Marker::LineEnd, 2),
                Marker::SegMask => self.seg_run(tok),
                Marker::RefStart => self.object_ref(tok),
                Marker::BoxEnd | Marker::PointEnd | Marker::LineEnd | Marker::RefEnd => {
                    self.diagnostics.push(ParseDiagnostic::error(
                        tok.offset,
                        DiagnosticCode::UnexpectedToken,
                        format!("{} without a matching opening marker", tok.marker.text()),
                    ));
                    tok.end()
                }
            };
        }
    }

    fn emit(&mut self, offset: usize, el: GroundingElement) {
        match &mut self.open_ref {
            Some(r) => r.body.push(el),
            None => {
                self.elements.push(el);
                self.offsets.push(offset);
            }
        }
    }

    fn close_ref(&mut self) {
        if let Some(r) = self.open_ref.take() {
            self.elements.push(GroundingElement::ObjectRef {
                label: r.label,
                body: r.body,
            });
            self.offsets.push(r.offset);
        }
    }

    fn unclosed(&mut self, open: Token, found: Option<Token>) -> usize {
        let what = match found {
            Some(t) => format!("found {} first", t.marker.text()),
            None => "reached end of input".to_string(),
        };
        self.diagnostics.push(ParseDiagnostic::error(
            open.offset,
            DiagnosticCode::UnclosedMarker,
            format!("{} is never closed ({what})", open.marker.text()),
        ));
        found.map_or(self.src.len(), |t| t.offset)
    }

    fn primitive(&mut self, open: Token, close: Marker, groups: usize) -> usize {
        let next = next_marker(self.src, open.end());
        let end = match next {
            Some(t) if t.marker == close => t,
            other => return self.unclosed(open, other),
        };
        let body_start = open.end();
        match parse_coords(self.src, body_start, end.offset, groups, self.bins) {
            Ok(c) => {
                let el = match open.marker {
                    Marker::BoxStart => GroundingElement::Box {
                        x1: c[0].min(c[2]),
                        y1: c[1].min(c[3]),
                        x2: c[0].max(c[2]),
                        y2: c[1].max(c[3]),
                    },
                    Marker::PointStart => GroundingElement::Point { x: c[0], y: c[1] },
                    _ => GroundingElement::Line {
                        x1: c[0],
                        y1: c[1],
                        x2: c[2],
                        y2: c[3],
                    },
                };
                self.emit(open.offset, el);
            }
            Err(diag) => self.diagnostics.push(diag),
        }
        end.end()
    }

    /// Consecutive seg tokens, optionally separated by whitespace.
    fn seg_run(&mut self, first: Token) -> usize {
        let mut count = 1;
        let mut pos = first.end();
        loop {
            let rest = &self.src[pos..];
            let trimmed = rest.trim_start();
            if trimmed.starts_with(SEG_MASK) {
                pos += rest.len() - trimmed.len() + SEG_MASK.len();
                count += 1;
            } else {
                break;
            }
        }
        self.emit(
            first.offset,
            GroundingElement::MaskQuery { token_count: count },
        );
        pos
    }

    fn object_ref(&mut self, open: Token) -> usize {
        let next = next_marker(self.src, open.end());
        match next {
            Some(t) if t.marker == Marker::RefEnd => {
                self.close_ref();
                self.open_ref = Some(OpenRef {
                    offset: open.offset,
                    label: self.src[open.end()..t.offset].to_string(),
                    body: Vec::new(),
                });
                t.end()
            }
            Some(t) if t.marker == Marker::RefStart => {
                self.diagnostics.push(ParseDiagnostic::warning(
                    t.offset,
                    DiagnosticCode::NestedRef,
                    "object reference opened inside another reference label; flattened",
                ));
                self.close_ref();
                self.open_ref = Some(OpenRef {
                    offset: open.offset,
                    label: self.src[open.end()..t.offset].to_string(),
                    body: Vec::new(),
                });
                t.offset
            }
            other => self.unclosed(open, other),
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.end && self.src.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        (self.pos < self.end).then(|| self.src.as_bytes()[self.pos])
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> ParseDiagnostic {
        let found = match self.src[self.pos..self.end].chars().next() {
            Some(c) => format!("{c:?}"),
            None => "end of coordinates".to_string(),
        };
        ParseDiagnostic::error(
            self.pos,
            DiagnosticCode::UnexpectedToken,
            format!("expected {expected}, found {found}"),
        )
    }

    fn number(&mut self, bins: u32) -> Result<u32, ParseDiagnostic> {
        let start = self.pos;
        let negative = self.eat(b'-');
        let digits_start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            self.pos = start;
            return Err(self.unexpected("an integer coordinate"));
        }
        let digits = &self.src[digits_start..self.pos];
        let out_of_range = || {
            ParseDiagnostic::error(
                start,
                DiagnosticCode::CoordOutOfRange,
                format!(
                    "coordinate {}{digits} outside [0, {}]",
                    if negative { "-" } else { "" },
                    bins - 1
                ),
            )
        };
        if negative {
            return Err(out_of_range());
        }
        match digits.parse::<u32>() {
            Ok(v) if v < bins => Ok(v),
            _ => Err(out_of_range()),
        }
    }
}

/// Parses `(a,b),(c,d),...` in `src[start..end]`, requiring exactly
/// `groups` pairs. Returns the flattened coordinates.
fn parse_coords(
    src: &str,
    start: usize,
    end: usize,
    groups: usize,
    bins: u32,
) -> Result<Vec<u32>, ParseDiagnostic> {
    let mut cur = Cursor {
        src,
        pos: start,
        end,
    };
    let mut coords = Vec::with_capacity(groups * 2);
    let mut n_groups = 0;
    cur.skip_ws();
    if cur.peek().is_none() {
        return Err(ParseDiagnostic::error(
            end,
            DiagnosticCode::BadCoordArity,
            format!("expected {groups} coordinate pair(s), found none"),
        ));
    }
    loop {
        let group_start = cur.pos;
        if !cur.eat(b'(') {
            return Err(cur.unexpected("'('"));
        }
        if n_groups == groups {
            return Err(ParseDiagnostic::error(
                group_start,
                DiagnosticCode::BadCoordArity,
                format!("expected {groups} coordinate pair(s), found more"),
            ));
        }
        let mut values = Vec::with_capacity(2);
        loop {
            cur.skip_ws();
            values.push(cur.number(bins)?);
            cur.skip_ws();
            if cur.eat(b')') {
                break;
            }
            if !cur.eat(b',') {
                return Err(cur.unexpected("',' or ')'"));
            }
        }
        if values.len() != 2 {
            return Err(ParseDiagnostic::error(
                group_start,
                DiagnosticCode::BadCoordArity,
                format!("coordinate group has {} value(s), expected 2", values.len()),
            ));
        }
        coords.extend(values);
        n_groups += 1;
        cur.skip_ws();
        if cur.peek().is_none() {
            break;
        }
        if !cur.eat(b',') {
            return Err(cur.unexpected("',' between coordinate pairs"));
        }
        cur.skip_ws();
    }
    if n_groups != groups {
        return Err(ParseDiagnostic::error(
            end,
            DiagnosticCode::BadCoordArity,
            format!("expected {groups} coordinate pair(s), found {n_groups}"),
        ));
    }
    Ok(coords)
}
