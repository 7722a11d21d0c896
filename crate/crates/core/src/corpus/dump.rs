use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use flate2::bufread::MultiGzDecoder;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostType {
    Question,
    Other,
}

/// One question row of a posts dump.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPost {
    pub post_id: u64,
    pub post_type: PostType,
    pub score: i64,
    pub title: String,
    pub body_html: String,
    pub tags: Vec<String>,
}

/// Opens a dump file, transparently gunzipping when the file starts with the
/// gzip magic bytes.
pub fn open_dump(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let head = reader.fill_buf().map_err(|e| Error::from(e).at(path))?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Lazily yields question rows from a `<posts><row …/>…</posts>` document.
///
/// Rows with missing or unparsable attributes are skipped and counted in
/// [`PostStream::warnings`]. A stream that ends before the root element is
/// closed yields every complete row and then one error.
pub fn parse_posts_stream<R: BufRead>(input: R) -> PostStream<R> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    PostStream {
        reader,
        buf: Vec::new(),
        depth: 0,
        seen_root: false,
        warnings: 0,
        done: false,
    }
}

pub struct PostStream<R> {
    reader: Reader<R>,
    buf: Vec<u8>,
    depth: usize,
    seen_root: bool,
    warnings: usize,
    done: bool,
}

impl<R: BufRead> PostStream<R> {
    pub fn warnings(&self) -> usize {
        self.warnings
    }
}

enum RowOutcome {
    Question(RawPost),
    Skip,
    Malformed,
}

fn parse_row(e: &BytesStart<'_>) -> RowOutcome {
    let mut id = None;
    let mut post_type = None;
    let mut score = None;
    let mut title = None;
    let mut body = None;
    let mut tags = None;
    for attr in e.attributes() {
        let Ok(attr) = attr else {
            return RowOutcome::Malformed;
        };
        let Ok(value) = attr.unescape_value() else {
            return RowOutcome::Malformed;
        };
        match attr.key.as_ref() {
            b"Id" => id = Some(value.into_owned()),
            b"PostTypeId" => post_type = Some(value.into_owned()),
            b"Score" => score = Some(value.into_owned()),
            b"Title" => title = Some(value.into_owned()),
            b"Body" => body = Some(value.into_owned()),
            b"Tags" => tags = Some(value.into_owned()),
            _ => {}
        }
    }
    let Some(post_type) = post_type else {
        return RowOutcome::Malformed;
    };
    if post_type.trim() != "1" {
        return RowOutcome::Skip;
    }
    let (Some(id), Some(score), Some(body)) = (id, score, body) else {
        return RowOutcome::Malformed;
    };
    let (Ok(post_id), Ok(score)) = (id.trim().parse::<u64>(), score.trim().parse::<i64>()) else {
        return RowOutcome::Malformed;
    };
    RowOutcome::Question(RawPost {
        post_id,
        post_type: PostType::Question,
        score,
        title: title.unwrap_or_default(),
        body_html: body,
        tags: tags.as_deref().map(parse_tags).unwrap_or_default(),
    })
}

/// Accepts both `<a><b>` and `|a|b|` tag encodings.
fn parse_tags(raw: &str) -> Vec<String> {
    raw.split(['<', '>', '|'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl<R: BufRead> Iterator for PostStream<R> {
    type Item = Result<RawPost>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev,
                Err(e) => {
                    self.done = true;
                    let pos = self.reader.buffer_position();
                    return Some(Err(Error::Dump(format!("at byte {pos}: {e}"))));
                }
            };
            match event {
                Event::Start(e) => {
                    if self.depth == 1 && e.name().as_ref() == b"row" {
                        match parse_row(&e) {
                            RowOutcome::Question(p) => {
                                self.depth += 1;
                                return Some(Ok(p));
                            }
                            RowOutcome::Skip => {}
                            RowOutcome::Malformed => self.warnings += 1,
                        }
                    }
                    self.depth += 1;
                    self.seen_root = true;
                }
                Event::End(_) => {
                    self.depth = self.depth.saturating_sub(1);
                }
                Event::Empty(e) => {
                    if self.depth == 1 && e.name().as_ref() == b"row" {
                        match parse_row(&e) {
                            RowOutcome::Question(p) => return Some(Ok(p)),
                            RowOutcome::Skip => {}
                            RowOutcome::Malformed => self.warnings += 1,
                        }
                    }
                }
                Event::Eof => {
                    self.done = true;
                    if self.depth > 0 {
                        return Some(Err(Error::Dump(
                            "stream ended before the root element was closed".into(),
                        )));
                    }
                    return None;
                }
                _ => {}
            }
        }
    }
}
