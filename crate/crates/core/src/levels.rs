//! XSB level files, validation, and the bundled level corpus.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{GameState, Tile};
use crate::{Error, Result};

/// XSB character for a tile.
pub fn tile_char(tile: Tile) -> char {
    match tile {
        Tile::Wall => '#',
        Tile::Floor => ' ',
        Tile::Target => '.',
        Tile::BoxOnFloor => '$',
        Tile::BoxOnTarget => '*',
        Tile::AvatarOnFloor => '@',
        Tile::AvatarOnTarget => '+',
    }
}

/// Tile for an XSB character.
pub fn char_tile(c: char) -> Option<Tile> {
    Some(match c {
        '#' => Tile::Wall,
        ' ' => Tile::Floor,
        '.' => Tile::Target,
        '$' => Tile::BoxOnFloor,
        '*' => Tile::BoxOnTarget,
        '@' => Tile::AvatarOnFloor,
        '+' => Tile::AvatarOnTarget,
        _ => return None,
    })
}

/// A broken level invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoAvatar,
    MultipleAvatars(usize),
    BoxTargetMismatch { boxes: usize, targets: usize },
    OpenBoundary { x: usize, y: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAvatar => write!(f, "no avatar"),
            Violation::MultipleAvatars(n) => write!(f, "{n} avatars"),
            Violation::BoxTargetMismatch { boxes, targets } => {
                write!(f, "{boxes} boxes but {targets} targets")
            }
            Violation::OpenBoundary { x, y } => write!(f, "boundary cell ({x},{y}) is not a wall"),
        }
    }
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        match v {
            Violation::NoAvatar => Error::NoAvatar,
            Violation::MultipleAvatars(n) => Error::MultipleAvatars(n),
            Violation::BoxTargetMismatch { boxes, targets } => {
                Error::BoxTargetMismatch { boxes, targets }
            }
            Violation::OpenBoundary { x, y } => {
                Error::InvalidArgument(format!("boundary cell ({x},{y}) is not a wall"))
            }
        }
    }
}

/// Lists every broken invariant; empty means the state is a playable level.
pub fn validate(state: &GameState) -> Vec<Violation> {
    let mut out = Vec::new();
    match state.avatar_count() {
        0 => out.push(Violation::NoAvatar),
        1 => {}
        n => out.push(Violation::MultipleAvatars(n)),
    }
    let (boxes, targets) = (state.box_count(), state.target_count());
    if boxes != targets {
        out.push(Violation::BoxTargetMismatch { boxes, targets });
    }
    let (w, h) = (state.width(), state.height());
    let boundary = (0..w)
        .flat_map(|x| [(x, 0), (x, h - 1)])
        .chain((0..h).flat_map(|y| [(0, y), (w - 1, y)]));
    for (x, y) in boundary {
        if state.tiles()[state.index_of(x, y)] != Tile::Wall {
            out.push(Violation::OpenBoundary { x, y });
            break;
        }
    }
    out
}

/// Parses one level in XSB notation.
///
/// Short rows are right-padded with walls; if any boundary cell is then not a
/// wall, the grid is wrapped in a one-cell wall ring. Blank lines at the start
/// or end are ignored.
pub fn parse_level(text: &str) -> Result<GameState> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptyLevel);
    };
    let mut rows: Vec<Vec<Tile>> = Vec::with_capacity(last - first + 1);
    for (i, line) in lines[first..=last].iter().enumerate() {
        let mut row = Vec::with_capacity(line.len());
        for (column, ch) in line.chars().enumerate() {
            let tile = char_tile(ch).ok_or(Error::UnknownCharacter {
                ch,
                line: first + i + 1,
                column: column + 1,
            })?;
            row.push(tile);
        }
        rows.push(row);
    }
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    if width == 0 {
        return Err(Error::EmptyLevel);
    }
    for row in &mut rows {
        row.resize(width, Tile::Wall);
    }
    let height = rows.len();
    let open = rows[0].iter().chain(&rows[height - 1]).any(|&t| t != Tile::Wall)
        || rows.iter().any(|r| r[0] != Tile::Wall || r[width - 1] != Tile::Wall);
    let (width, height, tiles) = if open {
        let w = width + 2;
        let mut tiles = vec![Tile::Wall; w];
        for row in &rows {
            tiles.push(Tile::Wall);
            tiles.extend_from_slice(row);
            tiles.push(Tile::Wall);
        }
        tiles.extend(std::iter::repeat_n(Tile::Wall, w));
        (w, height + 2, tiles)
    } else {
        (width, height, rows.concat())
    };
    let state = GameState::from_tiles(width, height, tiles)?;
    if let Some(v) = validate(&state).into_iter().next() {
        return Err(v.into());
    }
    Ok(state)
}

/// XSB text for a state, one newline-terminated line per row.
pub fn serialize_level(state: &GameState) -> String {
    let mut out = String::with_capacity((state.width() + 1) * state.height());
    for row in state.tiles().chunks(state.width()) {
        out.extend(row.iter().map(|&t| tile_char(t)));
        out.push('\n');
    }
    out
}

/// Reads and parses a single `.xsb` file.
pub fn load_level(path: &Path) -> Result<GameState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_level(&text).map_err(|e| Error::format(path.display(), e.to_string()))
}

/// A level paired with the name of the file it came from.
#[derive(Clone, Debug)]
pub struct Level {
    pub name: String,
    pub state: GameState,
}

/// An ordered, named collection of playable levels.
#[derive(Clone, Debug)]
pub struct LevelSet {
    pub name: String,
    pub levels: Vec<Level>,
}

impl LevelSet {
    /// Builds a set, rejecting levels that fail [`validate`] or hold no boxes.
    pub fn new(name: impl Into<String>, levels: Vec<Level>) -> Result<Self> {
        for level in &levels {
            if let Some(v) = validate(&level.state).into_iter().next() {
                return Err(Error::format(&level.name, v.to_string()));
            }
            if level.state.box_count() == 0 {
                return Err(Error::format(&level.name, "level has no boxes"));
            }
        }
        Ok(LevelSet {
            name: name.into(),
            levels,
        })
    }

    /// Loads a manifest: one level path per line, relative paths resolved
    /// against the manifest's directory, `#` lines ignored.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut levels = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let file = PathBuf::from(line);
            let file = if file.is_absolute() { file } else { base.join(file) };
            levels.push(Level {
                name: file
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| line.to_string()),
                state: load_level(&file)?,
            });
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        LevelSet::new(name, levels)
    }

    /// Resolves `bundled:<name>` to the built-in corpus, anything else to a
    /// manifest path.
    pub fn resolve(source: &str, base: &Path) -> Result<Self> {
        if let Some(name) = source.strip_prefix("bundled:") {
            return bundled(name);
        }
        let path = PathBuf::from(source);
        let path = if path.is_absolute() { path } else { base.join(path) };
        LevelSet::load_manifest(&path)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

macro_rules! bundled_files {
    ($dir:literal: $($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!("../levels/", $dir, "/", $file)))),*]
    };
}

const TRAIN: &[(&str, &str)] = bundled_files!("train":
    "train01.xsb", "train02.xsb", "train03.xsb", "train04.xsb", "train05.xsb",
    "train06.xsb", "train07.xsb", "train08.xsb", "train09.xsb", "train10.xsb",
);
const EASY: &[(&str, &str)] = bundled_files!("easy": "easy01.xsb");
const HARD: &[(&str, &str)] = bundled_files!("hard":
    "hard01.xsb", "hard02.xsb", "hard03.xsb", "hard04.xsb", "hard05.xsb",
    "hard06.xsb", "hard07.xsb", "hard08.xsb", "hard09.xsb", "hard10.xsb",
);

/// Names accepted by [`bundled`].
pub const BUNDLED_SETS: [&str; 3] = ["train", "easy", "hard"];

/// The built-in corpus: `train` (10 levels), `easy` (1), `hard` (10).
pub fn bundled(name: &str) -> Result<LevelSet> {
    let files = match name {
        "train" => TRAIN,
        "easy" => EASY,
        "hard" => HARD,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown bundled level set {other:?} (expected one of {BUNDLED_SETS:?})"
            )))
        }
    };
    let levels = files
        .iter()
        .map(|(file, text)| {
            Ok(Level {
                name: file.to_string(),
                state: parse_level(text).map_err(|e| Error::format(file, e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LevelSet::new(name, levels)
}

/// Raw text of a bundled level file, by set name and index.
pub fn bundled_text(set: &str, index: usize) -> Option<&'static str> {
    let files = match set {
        "train" => TRAIN,
        "easy" => EASY,
        "hard" => HARD,
        _ => return None,
    };
    files.get(index).map(|(_, text)| *text)
}
