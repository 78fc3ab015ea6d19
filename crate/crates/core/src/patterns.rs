//! Neighbourhood shapes and extraction of per-cell training examples.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Action, GameState, Tile};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Horizontal and vertical arms through the centre.
    Cross,
    /// The full box around the centre.
    Square,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Cross => "cross",
            Shape::Square => "square",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cross" => Ok(Shape::Cross),
            "square" => Ok(Shape::Square),
            _ => Err(Error::InvalidArgument(format!("unknown shape {s:?}"))),
        }
    }
}

/// A neighbourhood shape and its radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternSpec {
    pub shape: Shape,
    pub span: u32,
}

impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.shape, self.span)
    }
}

impl PatternSpec {
    pub fn new(shape: Shape, span: u32) -> Result<Self> {
        if span == 0 {
            return Err(Error::InvalidArgument("pattern span must be positive".into()));
        }
        if span > 7 {
            // keys hold at most 15x15 cells
            return Err(Error::InvalidArgument(format!("pattern span {span} is too large")));
        }
        Ok(PatternSpec { shape, span })
    }

    pub fn cross(span: u32) -> Self {
        PatternSpec::new(Shape::Cross, span).expect("valid span")
    }

    pub fn square(span: u32) -> Self {
        PatternSpec::new(Shape::Square, span).expect("valid span")
    }

    pub fn cell_count(&self) -> usize {
        let s = self.span as usize;
        match self.shape {
            Shape::Cross => 4 * s + 1,
            Shape::Square => (2 * s + 1) * (2 * s + 1),
        }
    }

    /// Position of the `(0, 0)` offset within [`offsets`].
    pub fn centre_index(&self) -> usize {
        let s = self.span as usize;
        match self.shape {
            // the upper vertical arm precedes the centre row
            Shape::Cross => 2 * s,
            Shape::Square => (self.cell_count() - 1) / 2,
        }
    }

    pub fn offsets(&self) -> Vec<(i32, i32)> {
        offsets(*self)
    }
}

/// Cell offsets `(dx, dy)` of a neighbourhood, sorted by `dy` then `dx`.
pub fn offsets(spec: PatternSpec) -> Vec<(i32, i32)> {
    let s = spec.span as i32;
    let mut out = Vec::with_capacity(spec.cell_count());
    for dy in -s..=s {
        for dx in -s..=s {
            let keep = match spec.shape {
                Shape::Cross => dx == 0 || dy == 0,
                Shape::Square => true,
            };
            if keep {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// The observation a local predictor sees: the action and the neighbourhood
/// tiles in canonical offset order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternKey {
    pub action: Action,
    pub cells: Vec<Tile>,
}

impl PatternKey {
    /// Centre tile, given the spec the key was extracted with.
    pub fn centre(&self, spec: PatternSpec) -> Tile {
        self.cells[spec.centre_index()]
    }

    /// Compact form used by the learners: the action byte followed by one
    /// byte per cell. Attribute `0` is the action, attribute `i > 0` cell `i - 1`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.cells.len() + 1);
        out.push(self.action.index());
        out.extend(self.cells.iter().map(|t| t.index()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let (&a, cells) = bytes.split_first()?;
        Some(PatternKey {
            action: Action::from_index(a)?,
            cells: cells
                .iter()
                .map(|&c| Tile::from_index(c))
                .collect::<Option<_>>()?,
        })
    }
}

/// Reads the `spec` neighbourhood of `(x, y)`; cells outside the grid read as walls.
pub fn extract(state: &GameState, x: usize, y: usize, action: Action, spec: PatternSpec) -> PatternKey {
    PatternKey {
        action,
        cells: spec
            .offsets()
            .into_iter()
            .map(|(dx, dy)| state.get_or_wall(x as i64 + dx as i64, y as i64 + dy as i64))
            .collect(),
    }
}

/// One observed cell transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub key: PatternKey,
    /// The centre cell one step later.
    pub label: Tile,
}

/// One example per grid cell, in row-major order.
pub fn extract_training(
    prev: &GameState,
    action: Action,
    next: &GameState,
    spec: PatternSpec,
) -> Result<Vec<TrainingExample>> {
    check_dims(prev, next)?;
    let extractor = KeyExtractor::new(spec);
    let mut buf = Vec::with_capacity(spec.cell_count() + 1);
    Ok((0..prev.area())
        .map(|i| {
            extractor.extract_into(prev, i, action, &mut buf);
            TrainingExample {
                key: PatternKey::from_bytes(&buf).expect("extracted bytes are valid"),
                label: next.tiles()[i],
            }
        })
        .collect())
}

pub(crate) fn check_dims(a: &GameState, b: &GameState) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Allocation-free key extraction into a reusable byte buffer.
#[derive(Clone, Debug)]
pub(crate) struct KeyExtractor {
    spec: PatternSpec,
    offsets: Vec<(i32, i32)>,
}

impl KeyExtractor {
    pub(crate) fn new(spec: PatternSpec) -> Self {
        KeyExtractor {
            spec,
            offsets: spec.offsets(),
        }
    }

    pub(crate) fn spec(&self) -> PatternSpec {
        self.spec
    }

    pub(crate) fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Writes `[action, cells...]` for the cell at `index` into `buf`.
    #[inline]
    pub(crate) fn extract_into(&self, state: &GameState, index: usize, action: Action, buf: &mut Vec<u8>) {
        buf.clear();
        buf.push(action.index());
        let (x, y) = state.coords_of(index);
        let s = self.spec.span as usize;
        let (w, h) = (state.width(), state.height());
        let tiles = state.tiles();
        if x >= s && y >= s && x + s < w && y + s < h {
            for &(dx, dy) in &self.offsets {
                let j = (y as i64 + dy as i64) as usize * w + (x as i64 + dx as i64) as usize;
                buf.push(tiles[j].index());
            }
        } else {
            for &(dx, dy) in &self.offsets {
                buf.push(state.get_or_wall(x as i64 + dx as i64, y as i64 + dy as i64).index());
            }
        }
    }
}

const EXAMPLES_MAGIC: &str = "lfm-examples";
const EXAMPLES_VERSION: u32 = 1;

/// Writes examples as text: a header line
/// `lfm-examples v1 <shape> <span> <cells>` then one line per example,
/// `<action letter> <cell digits> <label digit>`, digits being tile indices.
pub fn write_examples<W: Write>(mut out: W, spec: PatternSpec, examples: &[TrainingExample]) -> std::io::Result<()> {
    writeln!(
        out,
        "{EXAMPLES_MAGIC} v{EXAMPLES_VERSION} {} {} {}",
        spec.shape,
        spec.span,
        spec.cell_count()
    )?;
    let mut line = String::new();
    for ex in examples {
        line.clear();
        line.push(ex.key.action.letter());
        line.push(' ');
        line.extend(ex.key.cells.iter().map(|t| char::from(b'0' + t.index())));
        line.push(' ');
        line.push(char::from(b'0' + ex.label.index()));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads the format produced by [`write_examples`]. `source` names the input
/// in error messages.
pub fn read_examples<R: BufRead>(input: R, source: &str) -> Result<(PatternSpec, Vec<TrainingExample>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(source, "missing header"))?
        .map_err(|e| Error::io(source, e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != EXAMPLES_MAGIC {
        return Err(Error::format(source, format!("not an examples file (header {header:?})")));
    }
    if fields[1] != format!("v{EXAMPLES_VERSION}") {
        return Err(Error::format(source, format!("unsupported examples format version {}", fields[1])));
    }
    let shape: Shape = fields[2].parse()?;
    let span: u32 = fields[3]
        .parse()
        .map_err(|_| Error::format(source, format!("bad span {:?}", fields[3])))?;
    let spec = PatternSpec::new(shape, span)?;
    if fields[4] != spec.cell_count().to_string() {
        return Err(Error::format(source, "cell count does not match shape and span"));
    }
    let digit = |c: char| c.to_digit(10).and_then(|d| Tile::from_index(d as u8));
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::format(source, format!("line {}: malformed example", n + 2));
        let mut parts = line.split(' ');
        let (Some(a), Some(cells), Some(label), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let mut a = a.chars();
        let action = a.next().and_then(Action::from_letter).ok_or_else(bad)?;
        if a.next().is_some() || cells.len() != spec.cell_count() || label.len() != 1 {
            return Err(bad());
        }
        let cells = cells.chars().map(digit).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
        let label = label.chars().next().and_then(digit).ok_or_else(bad)?;
        out.push(TrainingExample {
            key: PatternKey { action, cells },
            label,
        });
    }
    Ok((spec, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::parse_level;

    #[test]
    fn offset_counts() {
        assert_eq!(offsets(PatternSpec::cross(1)).len(), 5);
        assert_eq!(offsets(PatternSpec::square(2)).len(), 25);
        assert_eq!(offsets(PatternSpec::cross(3)).len(), 13);
        for span in 1..=4 {
            for spec in [PatternSpec::cross(span), PatternSpec::square(span)] {
                let o = spec.offsets();
                assert_eq!(o.len(), spec.cell_count());
                assert_eq!(o[spec.centre_index()], (0, 0));
                let mut sorted = o.clone();
                sorted.sort_by_key(|&(dx, dy)| (dy, dx));
                sorted.dedup();
                assert_eq!(sorted, o);
            }
        }
    }

    #[test]
    fn cross_one_order() {
        assert_eq!(
            offsets(PatternSpec::cross(1)),
            vec![(0, -1), (-1, 0), (0, 0), (1, 0), (0, 1)]
        );
    }

    #[test]
    fn zero_span_rejected() {
        assert!(PatternSpec::new(Shape::Cross, 0).is_err());
    }

    #[test]
    fn open_floor_centre() {
        let s = parse_level("#######\n#     #\n#     #\n#  @  #\n#     #\n#     #\n#######").unwrap();
        let key = extract(&s, 2, 2, Action::Up, PatternSpec::cross(1));
        assert_eq!(key.action, Action::Up);
        assert_eq!(key.cells, vec![Tile::Floor; 5]);
    }

    #[test]
    fn out_of_grid_reads_wall() {
        let s = parse_level("#####\n#@$.#\n#####").unwrap();
        let spec = PatternSpec::square(2);
        // (1,1) sits next to the wall ring; its span-2 box leaves the grid
        let key = extract(&s, 1, 1, Action::Left, spec);
        let offs = spec.offsets();
        for (i, &(dx, dy)) in offs.iter().enumerate() {
            let (x, y) = (1 + dx, 1 + dy);
            let expected = if (0..5).contains(&x) && (0..3).contains(&y) {
                s.tiles()[(y * 5 + x) as usize]
            } else {
                Tile::Wall
            };
            assert_eq!(key.cells[i], expected);
        }
    }

    #[test]
    fn blocked_move_labels_equal_centres() {
        let s = parse_level("#####\n#@$.#\n#####").unwrap();
        let next = s.step(Action::Up);
        let spec = PatternSpec::cross(2);
        let ex = extract_training(&s, Action::Up, &next, spec).unwrap();
        assert_eq!(ex.len(), s.area());
        assert!(ex.iter().all(|e| e.label == e.key.centre(spec)));
    }

    #[test]
    fn push_changes_three_cells() {
        let s = parse_level("######\n#@$ .#\n######").unwrap();
        let next = s.step(Action::Right);
        let spec = PatternSpec::cross(2);
        let ex = extract_training(&s, Action::Right, &next, spec).unwrap();
        let changed: Vec<usize> = ex
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label != e.key.centre(spec))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(changed, vec![7, 8, 9]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = parse_level("#####\n#@$.#\n#####").unwrap();
        let b = parse_level("######\n#@$ .#\n######").unwrap();
        assert!(matches!(
            extract_training(&a, Action::Up, &b, PatternSpec::cross(1)),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn examples_file_round_trip_and_errors() {
        let s = parse_level("######\n#@$ .#\n######").unwrap();
        let spec = PatternSpec::square(1);
        let ex = extract_training(&s, Action::Right, &s.step(Action::Right), spec).unwrap();
        let mut buf = Vec::new();
        write_examples(&mut buf, spec, &ex).unwrap();
        let (spec2, ex2) = read_examples(&buf[..], "mem").unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(ex2, ex);

        let err = read_examples(&b"lfm-examples v9 cross 1 5\n"[..], "mem").unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        assert!(read_examples(&b"garbage\n"[..], "mem").is_err());
        assert!(read_examples(&b"lfm-examples v1 cross 1 5\nU 0000 1\n"[..], "mem").is_err());
    }

    #[test]
    fn key_bytes_round_trip() {
        let key = PatternKey {
            action: Action::Left,
            cells: vec![Tile::Wall, Tile::AvatarOnTarget, Tile::BoxOnFloor],
        };
        assert_eq!(PatternKey::from_bytes(&key.to_bytes()), Some(key));
        assert_eq!(PatternKey::from_bytes(&[9, 0]), None);
    }
}
