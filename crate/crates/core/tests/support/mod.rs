//! Test-only oracles, written without the crate's engine or parser.

#![allow(dead_code)]

use std::collections::VecDeque;

use rustc_hash::FxHashMap;

/// A level as the oracle sees it: walls, targets, avatar and boxes as cell
/// indices on a `width`-wide grid.
pub struct Puzzle {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub targets: Vec<bool>,
    pub avatar: usize,
    pub boxes: Vec<usize>,
}

/// Reads XSB text directly. Rows are padded with walls.
pub fn parse_puzzle(text: &str) -> Puzzle {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let width = rows.iter().map(|r| r.chars().count()).max().unwrap();
    let height = rows.len();
    let mut p = Puzzle {
        width,
        height,
        walls: vec![true; width * height],
        targets: vec![false; width * height],
        avatar: usize::MAX,
        boxes: vec![],
    };
    for (y, row) in rows.iter().enumerate() {
        for (x, c) in row.chars().enumerate() {
            let i = y * width + x;
            p.walls[i] = c == '#';
            p.targets[i] = matches!(c, '.' | '*' | '+');
            if matches!(c, '@' | '+') {
                p.avatar = i;
            }
            if matches!(c, '$' | '*') {
                p.boxes.push(i);
            }
        }
    }
    p
}

const MOVES: [(char, i64, i64); 4] = [('U', 0, -1), ('D', 0, 1), ('L', -1, 0), ('R', 1, 0)];

fn pack(avatar: usize, boxes: &[usize]) -> u64 {
    boxes.iter().fold(avatar as u64, |acc, &b| (acc << 8) | b as u64)
}

/// Breadth-first search over (avatar, box set). Returns a shortest solution
/// as action letters, or `None` when the level is unsolvable.
pub fn bfs_solve(p: &Puzzle) -> Option<String> {
    assert!(p.width * p.height < 256 && p.boxes.len() <= 7, "oracle packs states into one u64");
    let solved = |boxes: &[usize]| boxes.iter().all(|&b| p.targets[b]);
    let mut start_boxes = p.boxes.clone();
    start_boxes.sort_unstable();
    if solved(&start_boxes) {
        return Some(String::new());
    }
    let start = pack(p.avatar, &start_boxes);
    let mut parent: FxHashMap<u64, (u64, char)> = FxHashMap::default();
    parent.insert(start, (start, ' '));
    let mut queue = VecDeque::from([(p.avatar, start_boxes)]);
    let cell = |i: usize, dx: i64, dy: i64| -> Option<usize> {
        let x = (i % p.width) as i64 + dx;
        let y = (i / p.width) as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < p.width && (y as usize) < p.height).then(|| y as usize * p.width + x as usize)
    };
    while let Some((avatar, boxes)) = queue.pop_front() {
        let key = pack(avatar, &boxes);
        for (letter, dx, dy) in MOVES {
            let Some(next) = cell(avatar, dx, dy).filter(|&c| !p.walls[c]) else { continue };
            let mut nb = boxes.clone();
            if let Some(k) = nb.iter().position(|&b| b == next) {
                let Some(beyond) = cell(next, dx, dy).filter(|&c| !p.walls[c] && !boxes.contains(&c)) else {
                    continue;
                };
                nb[k] = beyond;
                nb.sort_unstable();
            }
            let nk = pack(next, &nb);
            if parent.contains_key(&nk) {
                continue;
            }
            parent.insert(nk, (key, letter));
            if solved(&nb) {
                let mut path = Vec::new();
                let mut cur = nk;
                while cur != start {
                    let (prev, a) = parent[&cur];
                    path.push(a);
                    cur = prev;
                }
                return Some(path.into_iter().rev().collect());
            }
            queue.push_back((next, nb));
        }
    }
    None
}

/// One move under the oracle's own rules.
pub fn puzzle_step(p: &Puzzle, letter: char) -> Puzzle {
    let (_, dx, dy) = MOVES.iter().copied().find(|m| m.0 == letter).expect("action letter");
    let cell = |i: usize| -> Option<usize> {
        let x = (i % p.width) as i64 + dx;
        let y = (i / p.width) as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < p.width && (y as usize) < p.height).then(|| y as usize * p.width + x as usize)
    };
    let mut next = Puzzle {
        width: p.width,
        height: p.height,
        walls: p.walls.clone(),
        targets: p.targets.clone(),
        avatar: p.avatar,
        boxes: p.boxes.clone(),
    };
    let Some(to) = cell(p.avatar).filter(|&c| !p.walls[c]) else { return next };
    if let Some(k) = p.boxes.iter().position(|&b| b == to) {
        match cell(to).filter(|&c| !p.walls[c] && !p.boxes.contains(&c)) {
            Some(beyond) => next.boxes[k] = beyond,
            None => return next,
        }
    }
    next.avatar = to;
    next
}

/// XSB text of a puzzle, one `\n`-terminated line per row.
pub fn render(p: &Puzzle) -> String {
    let mut s = String::new();
    for y in 0..p.height {
        for x in 0..p.width {
            let i = y * p.width + x;
            let b = p.boxes.contains(&i);
            s.push(match (p.walls[i], p.targets[i], b, p.avatar == i) {
                (true, ..) => '#',
                (_, false, true, _) => '$',
                (_, true, true, _) => '*',
                (_, false, _, true) => '@',
                (_, true, _, true) => '+',
                (_, true, ..) => '.',
                _ => ' ',
            });
        }
        s.push('\n');
    }
    s
}
