//! Deterministic Sokoban rules over a seven-symbol tile grid.
//!
//! The avatar has two symbols (on floor, on target) so a single tile always
//! tells what terrain lies beneath it. Without that, a local observation of
//! the avatar would not determine what it leaves behind when it moves.

use std::fmt;

/// One grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Tile {
    Wall = 0,
    Floor = 1,
    Target = 2,
    BoxOnFloor = 3,
    BoxOnTarget = 4,
    AvatarOnFloor = 5,
    AvatarOnTarget = 6,
}

impl Tile {
    pub const ALL: [Tile; 7] = [
        Tile::Wall,
        Tile::Floor,
        Tile::Target,
        Tile::BoxOnFloor,
        Tile::BoxOnTarget,
        Tile::AvatarOnFloor,
        Tile::AvatarOnTarget,
    ];
    pub const COUNT: usize = 7;

    #[inline]
    pub fn index(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_index(i: u8) -> Option<Tile> {
        Tile::ALL.get(i as usize).copied()
    }

    /// Free for the avatar or a box to enter.
    #[inline]
    pub fn is_passable(self) -> bool {
        matches!(self, Tile::Floor | Tile::Target)
    }

    #[inline]
    pub fn has_box(self) -> bool {
        matches!(self, Tile::BoxOnFloor | Tile::BoxOnTarget)
    }

    #[inline]
    pub fn has_avatar(self) -> bool {
        matches!(self, Tile::AvatarOnFloor | Tile::AvatarOnTarget)
    }

    #[inline]
    pub fn is_target(self) -> bool {
        matches!(self, Tile::Target | Tile::BoxOnTarget | Tile::AvatarOnTarget)
    }

    /// The terrain left behind when whatever occupies this cell moves away.
    #[inline]
    fn vacated(self) -> Tile {
        if self.is_target() {
            Tile::Target
        } else {
            Tile::Floor
        }
    }

    #[inline]
    fn with_box(self) -> Tile {
        if self.is_target() {
            Tile::BoxOnTarget
        } else {
            Tile::BoxOnFloor
        }
    }

    #[inline]
    fn with_avatar(self) -> Tile {
        if self.is_target() {
            Tile::AvatarOnTarget
        } else {
            Tile::AvatarOnFloor
        }
    }
}

/// One of the four avatar moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_index(i: u8) -> Option<Action> {
        Action::ALL.get(i as usize).copied()
    }

    /// Unit offset `(dx, dy)`; `y` grows downwards.
    #[inline]
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
        }
    }

    pub fn from_letter(c: char) -> Option<Action> {
        match c.to_ascii_uppercase() {
            'U' => Some(Action::Up),
            'D' => Some(Action::Down),
            'L' => Some(Action::Left),
            'R' => Some(Action::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
        };
        f.write_str(name)
    }
}

/// An immutable tile grid. Equality ignores `tick`.
#[derive(Clone, Debug)]
pub struct GameState {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    tick: u64,
}

impl PartialEq for GameState {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.tiles == other.tiles
    }
}

impl Eq for GameState {}

impl GameState {
    /// Builds a grid from row-major tiles. No Sokoban invariants are checked
    /// here; see [`crate::levels::validate`].
    pub fn from_tiles(width: usize, height: usize, tiles: Vec<Tile>) -> crate::Result<Self> {
        if width == 0 || height == 0 {
            return Err(crate::Error::EmptyLevel);
        }
        if tiles.len() != width * height {
            return Err(crate::Error::InvalidArgument(format!(
                "{} tiles cannot fill a {width}x{height} grid",
                tiles.len()
            )));
        }
        Ok(GameState {
            width,
            height,
            tiles,
            tick: 0,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.tiles.len()
    }

    #[inline]
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn with_tick(mut self, tick: u64) -> Self {
        self.tick = tick;
        self
    }

    #[inline]
    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords_of(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    /// Tile at `(x, y)`, or `None` outside the grid.
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> Option<Tile> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.tiles[y as usize * self.width + x as usize])
        }
    }

    /// Tile at `(x, y)`, reading out-of-grid cells as walls.
    #[inline]
    pub fn get_or_wall(&self, x: i64, y: i64) -> Tile {
        self.get(x, y).unwrap_or(Tile::Wall)
    }

    /// Index of the first avatar tile in row-major order.
    pub fn avatar_index(&self) -> Option<usize> {
        self.tiles.iter().position(|t| t.has_avatar())
    }

    pub fn avatar_count(&self) -> usize {
        self.count(Tile::has_avatar)
    }

    pub fn box_count(&self) -> usize {
        self.count(Tile::has_box)
    }

    pub fn target_count(&self) -> usize {
        self.count(Tile::is_target)
    }

    fn count(&self, pred: impl Fn(Tile) -> bool) -> usize {
        self.tiles.iter().filter(|&&t| pred(t)).count()
    }

    /// Number of boxes resting on targets.
    pub fn score(&self) -> usize {
        self.tiles.iter().filter(|&&t| t == Tile::BoxOnTarget).count()
    }

    /// True when no box remains off target.
    pub fn is_win(&self) -> bool {
        !self.tiles.contains(&Tile::BoxOnFloor)
    }

    /// Successor state under the Sokoban push rules.
    ///
    /// Blocked moves leave the grid unchanged but still advance `tick`.
    /// A grid without an avatar never changes; with several avatars only the
    /// first in row-major order moves.
    pub fn step(&self, action: Action) -> GameState {
        let mut next = self.clone();
        next.apply(action);
        next
    }

    /// In-place [`GameState::step`]. Returns whether any tile changed.
    pub fn apply(&mut self, action: Action) -> bool {
        self.tick += 1;
        let Some(p) = self.avatar_index() else {
            return false;
        };
        let (x, y) = self.coords_of(p);
        let (dx, dy) = action.delta();
        let (qx, qy) = (x as i64 + dx as i64, y as i64 + dy as i64);
        let (rx, ry) = (qx + dx as i64, qy + dy as i64);
        let q_tile = self.get_or_wall(qx, qy);
        if q_tile.is_passable() {
            let q = self.index_of(qx as usize, qy as usize);
            self.tiles[q] = q_tile.with_avatar();
            self.tiles[p] = self.tiles[p].vacated();
            true
        } else if q_tile.has_box() && self.get_or_wall(rx, ry).is_passable() {
            let q = self.index_of(qx as usize, qy as usize);
            let r = self.index_of(rx as usize, ry as usize);
            self.tiles[r] = self.tiles[r].with_box();
            self.tiles[q] = q_tile.vacated().with_avatar();
            self.tiles[p] = self.tiles[p].vacated();
            true
        } else {
            false
        }
    }

    /// Overwrites one tile. Used by learned models whose predictions need not
    /// respect the push rules.
    pub(crate) fn set_index(&mut self, index: usize, tile: Tile) {
        self.tiles[index] = tile;
    }

    pub(crate) fn tiles_mut(&mut self) -> &mut [Tile] {
        &mut self.tiles
    }

    pub(crate) fn advance_tick(&mut self) {
        self.tick += 1;
    }

    /// Number of cells whose tiles differ; grids must have equal dimensions.
    pub fn tile_differences(&self, other: &GameState) -> usize {
        debug_assert_eq!(self.tiles.len(), other.tiles.len());
        self.tiles
            .iter()
            .zip(&other.tiles)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Free-function form of [`GameState::step`].
pub fn step(state: &GameState, action: Action) -> GameState {
    state.step(action)
}

/// Free-function form of [`GameState::score`].
pub fn score(state: &GameState) -> usize {
    state.score()
}

/// Free-function form of [`GameState::is_win`].
pub fn is_win(state: &GameState) -> bool {
    state.is_win()
}
