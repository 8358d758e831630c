//! Discrete gridworlds with shortest-path (Goal-MDP) rewards.
//!
//! Every layout is a fixed ASCII map so that the BFS and value-iteration
//! oracles used by the tests are reproducible. Coordinates are `(x, y)` with
//! `y = 0` the top row; `Up` decreases `y`.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("hallway length must be at least 1 (got {0})")]
    BadHallwayLength(usize),
    #[error("invalid layout `{name}`: {reason}")]
    InvalidLayout { name: String, reason: String },
    #[error("cannot step from the goal state {0}")]
    AlreadyDone(AgentState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Free,
    Wall,
    Slide,
    Key,
    LockedDoor,
}

impl CellKind {
    pub fn symbol(self) -> char {
        match self {
            CellKind::Free => '.',
            CellKind::Wall => '#',
            CellKind::Slide => '~',
            CellKind::Key => 'K',
            CellKind::LockedDoor => 'D',
        }
    }
}

/// Agent position plus key possession. Used both as state and as goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub x: u16,
    pub y: u16,
    pub has_key: bool,
}

impl AgentState {
    pub const fn new(x: u16, y: u16) -> Self {
        AgentState { x, y, has_key: false }
    }

    pub const fn with_key(x: u16, y: u16, has_key: bool) -> Self {
        AgentState { x, y, has_key }
    }

    /// Goals are matched on position only; key possession is ignored.
    pub fn same_position(&self, other: &AgentState) -> bool {
        self.x == other.x && self.y == other.y
    }
}

// Raster order: rows top to bottom, then columns, then key bit.
impl Ord for AgentState {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x, self.has_key).cmp(&(other.y, other.x, other.has_key))
    }
}

impl PartialOrd for AgentState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.has_key {
            write!(f, "({}, {}, key)", self.x, self.y)
        } else {
            write!(f, "({}, {})", self.x, self.y)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    /// Canonical order, also used for tie-breaking.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    /// The two actions perpendicular to `self`, in canonical order.
    pub fn laterals(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
        }
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: AgentState,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    cells: Vec<CellKind>,
    pub start: AgentState,
    pub main_goal: AgentState,
}

impl GridSpec {
    /// Parses an ASCII map (`#` wall, `.` free, `~` slide, `K` key,
    /// `D` locked door, `S` start, `G` goal) and validates it.
    pub fn from_ascii(name: &str, map: &str) -> Result<GridSpec, EnvError> {
        let invalid = |reason: String| EnvError::InvalidLayout { name: name.to_string(), reason };
        let rows: Vec<&str> = map.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(invalid("empty map".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goal = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(invalid(format!("row {y} has a different width")));
            }
            for (x, c) in row.chars().enumerate() {
                let kind = match c {
                    '#' => CellKind::Wall,
                    '.' => CellKind::Free,
                    '~' => CellKind::Slide,
                    'K' => CellKind::Key,
                    'D' => CellKind::LockedDoor,
                    'S' => {
                        start = Some(AgentState::new(x as u16, y as u16));
                        CellKind::Free
                    }
                    'G' => {
                        goal = Some(AgentState::new(x as u16, y as u16));
                        CellKind::Free
                    }
                    other => return Err(invalid(format!("unknown cell symbol `{other}`"))),
                };
                cells.push(kind);
            }
        }
        let start = start.ok_or_else(|| invalid("no start cell".into()))?;
        let main_goal = goal.ok_or_else(|| invalid("no goal cell".into()))?;
        let spec = GridSpec { name: name.to_string(), width, height, cells, start, main_goal };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), EnvError> {
        let invalid = |reason: &str| EnvError::InvalidLayout { name: self.name.clone(), reason: reason.into() };
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                if border && self.cell(x, y) != CellKind::Wall {
                    return Err(invalid("border cells must be walls"));
                }
            }
        }
        let keys = self.cells.iter().filter(|c| **c == CellKind::Key).count();
        let doors = self.cells.iter().filter(|c| **c == CellKind::LockedDoor).count();
        if keys > 1 {
            return Err(invalid("more than one key"));
        }
        if doors > 0 && keys == 0 {
            return Err(invalid("locked doors without a key"));
        }
        if self.kind_at(&self.start) != CellKind::Free || self.kind_at(&self.main_goal) != CellKind::Free {
            return Err(invalid("start and goal must be free cells"));
        }
        if self.start.same_position(&self.main_goal) {
            return Err(invalid("start and goal coincide"));
        }
        if bfs_distance(self, self.start, self.main_goal).is_none() {
            return Err(invalid("goal unreachable from start"));
        }
        Ok(())
    }

    pub fn cell(&self, x: usize, y: usize) -> CellKind {
        self.cells[y * self.width + x]
    }

    pub fn kind_at(&self, s: &AgentState) -> CellKind {
        self.cell(s.x as usize, s.y as usize)
    }

    pub fn has_key_cell(&self) -> bool {
        self.cells.contains(&CellKind::Key)
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Raster index of the state's position.
    pub fn cell_index(&self, s: &AgentState) -> usize {
        s.y as usize * self.width + s.x as usize
    }

    /// Deterministic dynamics: applies `a` without slipping.
    pub fn move_agent(&self, s: AgentState, a: Action) -> AgentState {
        let (dx, dy) = a.delta();
        let nx = s.x as i32 + dx;
        let ny = s.y as i32 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i32 || ny >= self.height as i32 {
            return s;
        }
        let (nx, ny) = (nx as u16, ny as u16);
        match self.cell(nx as usize, ny as usize) {
            CellKind::Wall => s,
            CellKind::LockedDoor if !s.has_key => s,
            CellKind::Slide => AgentState { x: self.start.x, y: self.start.y, has_key: s.has_key },
            CellKind::Key => AgentState { x: nx, y: ny, has_key: true },
            CellKind::Free | CellKind::LockedDoor => AgentState { x: nx, y: ny, has_key: s.has_key },
        }
    }

    /// Samples the executed action: the chosen one with probability
    /// `1 - slip_prob`, each lateral one with `slip_prob / 2`.
    pub fn slip_action<R: Rng + ?Sized>(a: Action, slip_prob: f64, rng: &mut R) -> Action {
        if slip_prob <= 0.0 {
            return a;
        }
        let u: f64 = rng.gen();
        let [first, second] = a.laterals();
        if u < 1.0 - slip_prob {
            a
        } else if u < 1.0 - slip_prob / 2.0 {
            first
        } else {
            second
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        s: AgentState,
        a: Action,
        slip_prob: f64,
        rng: &mut R,
    ) -> Result<StepResult, EnvError> {
        if s.same_position(&self.main_goal) {
            return Err(EnvError::AlreadyDone(s));
        }
        let executed = Self::slip_action(a, slip_prob, rng);
        let next_state = self.move_agent(s, executed);
        let done = next_state.same_position(&self.main_goal);
        Ok(StepResult { next_state, reward: if done { 0.0 } else { -1.0 }, done })
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let here = AgentState::new(x as u16, y as u16);
                let c = if here.same_position(&self.start) {
                    'S'
                } else if here.same_position(&self.main_goal) {
                    'G'
                } else {
                    self.cell(x, y).symbol()
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn empty_room(side: usize) -> Result<GridSpec, EnvError> {
        if side < 2 {
            return Err(EnvError::InvalidLayout { name: "empty".into(), reason: "side must be at least 2".into() });
        }
        let w = side + 2;
        let mut map = String::new();
        for y in 0..w {
            for x in 0..w {
                let c = if x == 0 || y == 0 || x + 1 == w || y + 1 == w {
                    '#'
                } else if x == 1 && y == 1 {
                    'S'
                } else if x == side && y == side {
                    'G'
                } else {
                    '.'
                };
                map.push(c);
            }
            map.push('\n');
        }
        GridSpec::from_ascii(&format!("empty{side}"), &map)
    }

    /// Corridor of `2k + 1` free cells flanked by slide rows that send the
    /// agent back to the start.
    pub fn hallway(k: usize) -> Result<GridSpec, EnvError> {
        if k < 1 {
            return Err(EnvError::BadHallwayLength(k));
        }
        let len = 2 * k + 1;
        let w = len + 2;
        let mut map = String::new();
        for y in 0..5 {
            for x in 0..w {
                let c = if x == 0 || x + 1 == w || y == 0 || y == 4 {
                    '#'
                } else if y != 2 {
                    '~'
                } else if x == 1 {
                    'S'
                } else if x == len {
                    'G'
                } else {
                    '.'
                };
                map.push(c);
            }
            map.push('\n');
        }
        GridSpec::from_ascii(&format!("hallway{k}"), &map)
    }
}

const FOUR_ROOMS: &str = "
#############
#S....#.....#
#.....#.....#
#...........#
#.....#.....#
#.....#.....#
##.####.....#
#.....###.###
#.....#.....#
#.....#.....#
#...........#
#.....#....G#
#############
";

const BUGTRAP: &str = "
#############
#...........#
#...........#
#..#######..#
#........#..#
#........#..#
#....S...#.G#
#........#..#
#........#..#
#..#######..#
#...........#
#...........#
#############
";

fn nine_rooms_map(locked: bool) -> String {
    const SIZE: usize = 19;
    let mut grid = vec![vec!['.'; SIZE]; SIZE];
    for (i, row) in grid.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            if i % 6 == 0 || j % 6 == 0 {
                *c = '#';
            }
        }
    }
    // One doorway in the middle of every shared wall segment.
    for wall in [6, 12] {
        for room in 0..3 {
            let mid = 3 + 6 * room;
            grid[mid][wall] = '.';
            grid[wall][mid] = '.';
        }
    }
    if locked {
        for (x, y) in [(9, 6), (6, 9), (12, 9), (9, 12)] {
            grid[y][x] = 'D';
        }
        grid[3][15] = 'K';
    }
    grid[1][1] = 'S';
    grid[9][9] = 'G';
    grid.into_iter().map(|r| r.into_iter().collect::<String>() + "\n").collect()
}

/// Builds one of the named layouts. `k` is the hallway half-length (or the
/// side of an `empty` room) and is ignored elsewhere.
pub fn make_env(name: &str, k: Option<usize>) -> Result<GridSpec, EnvError> {
    match name {
        "hallway" => GridSpec::hallway(k.ok_or(EnvError::BadHallwayLength(0))?),
        "empty" => GridSpec::empty_room(k.unwrap_or(5)),
        "four_rooms" => GridSpec::from_ascii("four_rooms", FOUR_ROOMS),
        "bugtrap" => GridSpec::from_ascii("bugtrap", BUGTRAP),
        "nine_rooms" => GridSpec::from_ascii("nine_rooms", &nine_rooms_map(false)),
        "nine_rooms_locked" => GridSpec::from_ascii("nine_rooms_locked", &nine_rooms_map(true)),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

/// Parses a CLI token such as `hallway4`, `four_rooms` or `empty5`.
pub fn env_from_token(token: &str) -> Result<GridSpec, EnvError> {
    for prefix in ["hallway", "empty"] {
        if let Some(rest) = token.strip_prefix(prefix) {
            if rest.is_empty() {
                return make_env(prefix, None);
            }
            let k = rest.parse::<usize>().map_err(|_| EnvError::UnknownEnv(token.to_string()))?;
            return make_env(prefix, Some(k));
        }
    }
    make_env(token, None)
}

/// Shortest deterministic path length from `s` to the position of `g`,
/// or `None` if no path exists.
pub fn bfs_distance(spec: &GridSpec, s: AgentState, g: AgentState) -> Option<usize> {
    if s.same_position(&g) {
        return Some(0);
    }
    let mut seen = vec![false; spec.n_cells() * 2];
    let key = |st: &AgentState| spec.cell_index(st) * 2 + st.has_key as usize;
    seen[key(&s)] = true;
    let mut queue = VecDeque::from([(s, 0usize)]);
    while let Some((cur, d)) = queue.pop_front() {
        for a in Action::ALL {
            let next = spec.move_agent(cur, a);
            if next.same_position(&g) {
                return Some(d + 1);
            }
            let k = key(&next);
            if !seen[k] {
                seen[k] = true;
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

/// All states reachable from the start, in raster order.
pub fn free_states(spec: &GridSpec) -> Vec<AgentState> {
    let mut seen = vec![false; spec.n_cells() * 2];
    let key = |st: &AgentState| spec.cell_index(st) * 2 + st.has_key as usize;
    let mut out = vec![spec.start];
    seen[key(&spec.start)] = true;
    let mut queue = VecDeque::from([spec.start]);
    while let Some(cur) = queue.pop_front() {
        for a in Action::ALL {
            let next = spec.move_agent(cur, a);
            let k = key(&next);
            if !seen[k] {
                seen[k] = true;
                out.push(next);
                queue.push_back(next);
            }
        }
    }
    out.sort();
    out
}

/// Dense lookup from states to indices into `free_states`, and from
/// positions to goal indices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndex {
    width: usize,
    states: Vec<AgentState>,
    state_slots: Vec<u32>,
    goal_slots: Vec<u32>,
    n_goals: usize,
}

const NO_SLOT: u32 = u32::MAX;

impl StateIndex {
    pub fn new(spec: &GridSpec) -> StateIndex {
        let states = free_states(spec);
        let mut state_slots = vec![NO_SLOT; spec.n_cells() * 2];
        let mut goal_slots = vec![NO_SLOT; spec.n_cells()];
        let mut n_goals = 0;
        for (i, s) in states.iter().enumerate() {
            let cell = spec.cell_index(s);
            state_slots[cell * 2 + s.has_key as usize] = i as u32;
            if goal_slots[cell] == NO_SLOT {
                goal_slots[cell] = n_goals as u32;
                n_goals += 1;
            }
        }
        StateIndex { width: spec.width, states, state_slots, goal_slots, n_goals }
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    pub fn state(&self, s: &AgentState) -> Option<usize> {
        let cell = s.y as usize * self.width + s.x as usize;
        match self.state_slots.get(cell * 2 + s.has_key as usize) {
            Some(&i) if i != NO_SLOT => Some(i as usize),
            _ => None,
        }
    }

    pub fn goal(&self, g: &AgentState) -> Option<usize> {
        let cell = g.y as usize * self.width + g.x as usize;
        match self.goal_slots.get(cell) {
            Some(&i) if i != NO_SLOT => Some(i as usize),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hallway2_layout() {
        let spec = make_env("hallway", Some(2)).unwrap();
        let expected = "\
#######
#~~~~~#
#S...G#
#~~~~~#
#######
";
        assert_eq!(spec.to_ascii(), expected);
        assert_eq!(bfs_distance(&spec, spec.start, spec.main_goal), Some(4));
        let free = free_states(&spec);
        assert_eq!(free.len(), 5);
        assert!(free.iter().all(|s| s.y == 2));
    }

    #[test]
    fn four_rooms_layout() {
        let spec = make_env("four_rooms", None).unwrap();
        assert_eq!((spec.width, spec.height), (13, 13));
        assert_eq!(spec.start, AgentState::new(1, 1));
        assert_eq!(spec.main_goal, AgentState::new(11, 11));
        assert_eq!(bfs_distance(&spec, spec.start, spec.main_goal), Some(20));
        assert_eq!(free_states(&spec).len(), 104);
    }

    #[test]
    fn bugtrap_forces_detour() {
        let spec = make_env("bugtrap", None).unwrap();
        let manhattan = spec.start.x.abs_diff(spec.main_goal.x) + spec.start.y.abs_diff(spec.main_goal.y);
        let d = bfs_distance(&spec, spec.start, spec.main_goal).unwrap();
        assert!(d > manhattan as usize, "{d} vs {manhattan}");
    }

    #[test]
    fn nine_rooms_variants() {
        let open = make_env("nine_rooms", None).unwrap();
        assert_eq!((open.width, open.height), (19, 19));
        assert_eq!(open.main_goal, AgentState::new(9, 9));
        assert_eq!(free_states(&open).len(), 9 * 25 + 12);

        let locked = make_env("nine_rooms_locked", None).unwrap();
        let ascii = locked.to_ascii();
        assert_eq!(ascii.matches('K').count(), 1);
        assert!(ascii.matches('D').count() >= 1);
        // The goal room is only reachable with the key.
        let d = bfs_distance(&locked, locked.start, locked.main_goal).unwrap();
        assert!(d > bfs_distance(&open, open.start, open.main_goal).unwrap());
        assert!(free_states(&locked).iter().any(|s| s.has_key));
    }

    #[test]
    fn env_tokens() {
        assert_eq!(env_from_token("hallway6").unwrap().name, "hallway6");
        assert_eq!(env_from_token("four_rooms").unwrap().name, "four_rooms");
        assert!(matches!(env_from_token("moon"), Err(EnvError::UnknownEnv(_))));
        assert!(matches!(make_env("hallway", Some(0)), Err(EnvError::BadHallwayLength(0))));
        assert!(matches!(make_env("hallway", None), Err(EnvError::BadHallwayLength(_))));
    }

    #[test]
    fn invalid_layouts_rejected() {
        assert!(GridSpec::from_ascii("x", "###\n#S.\n###\n").is_err());
        assert!(GridSpec::from_ascii("x", "#####\n#S#G#\n#####\n").is_err());
        assert!(GridSpec::from_ascii("x", "#####\n#SDG#\n#####\n").is_err());
        assert!(GridSpec::from_ascii("x", "#####\n#S.G#\n#####\n").is_ok());
    }

    #[test]
    fn wall_bump_and_goal_step() {
        let spec = make_env("four_rooms", None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = spec.step(spec.start, Action::Up, 0.0, &mut rng).unwrap();
        assert_eq!(r, StepResult { next_state: spec.start, reward: -1.0, done: false });
        let r = spec.step(AgentState::new(10, 11), Action::Right, 0.0, &mut rng).unwrap();
        assert_eq!(r, StepResult { next_state: spec.main_goal, reward: 0.0, done: true });
        assert_eq!(spec.step(spec.main_goal, Action::Left, 0.0, &mut rng), Err(EnvError::AlreadyDone(spec.main_goal)));
    }

    #[test]
    fn slide_returns_to_start_and_key_sets_bit() {
        let spec = make_env("hallway", Some(2)).unwrap();
        let s = AgentState::new(3, 2);
        assert_eq!(spec.move_agent(s, Action::Down), spec.start);

        let locked = make_env("nine_rooms_locked", None).unwrap();
        let next_to_key = AgentState::new(14, 3);
        let got = locked.move_agent(next_to_key, Action::Right);
        assert_eq!(got, AgentState::with_key(15, 3, true));
        let at_door = AgentState::new(9, 5);
        assert_eq!(locked.move_agent(at_door, Action::Down), at_door);
        assert_eq!(locked.move_agent(AgentState::with_key(9, 5, true), Action::Down), AgentState::with_key(9, 6, true));
    }

    #[test]
    fn state_index_covers_free_states() {
        let spec = make_env("nine_rooms_locked", None).unwrap();
        let idx = StateIndex::new(&spec);
        for (i, s) in idx.states().iter().enumerate() {
            assert_eq!(idx.state(s), Some(i));
            assert!(idx.goal(s).is_some());
        }
        assert!(idx.n_goals() < idx.n_states());
        assert_eq!(idx.state(&AgentState::new(0, 0)), None);
    }
}
