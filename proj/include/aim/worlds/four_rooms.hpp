#pragma once

#include <array>
#include <limits>
#include <queue>
#include <random>
#include <vector>

#include "aim/worlds/environment.hpp"

namespace aim::worlds {

enum class Cell : std::uint8_t { Empty, Wall, DoorClosed, DoorOpen, Goal };

/// Actions, in oracle tie-break order.
enum FourRoomsAction : int { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kOpenDoor = 3 };

struct FourRoomsParams {
  int size = 13;
  int max_steps = 100;
  /// Appends the goal offset in the agent frame to the view encoding.
  bool goal_compass = true;
  /// Appends the offset of the next doorway on a cheapest route (the goal once no door is left).
  bool door_compass = true;
};

struct GridPos {
  int row = 0;
  int col = 0;
  bool operator==(const GridPos&) const = default;
};

/// Directions: 0 = east, 1 = south, 2 = west, 3 = north.
inline constexpr std::array<GridPos, 4> kHeading{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};

/// Multi-room gridworld: a vertical wall and up to two horizontal walls split the grid
/// into 2-4 rooms joined by closed doors. The agent sees a 7x7 forward-facing patch.
class FourRooms final : public Environment {
 public:
  static constexpr int kView = 7;
  static constexpr int kChannels = 6;  // unknown, empty, wall, closed, open, goal

  explicit FourRooms(FourRoomsParams params = {})
      : params_(params), space_(ActionSpace::discrete(4)) {
    if (params_.size < 7) throw InvalidArgument("fourrooms grid must be at least 7x7");
    if (params_.max_steps <= 0) throw InvalidArgument("max_steps must be positive");
  }

  EnvKind kind() const override { return EnvKind::FourRooms; }
  const ActionSpace& action_space() const override { return space_; }
  int observation_size() const override {
    return kView * kView * kChannels + (params_.goal_compass ? 2 : 0) + (params_.door_compass ? 6 : 0);
  }
  const FourRoomsParams& params() const { return params_; }

  Observation reset(std::uint64_t seed) override {
    layout_seed_ = seed;
    generate(seed);
    step_count_ = 0;
    done_ = false;
    outcome_ = Outcome::None;
    return observe();
  }

  int size() const { return params_.size; }
  Cell at(GridPos p) const { return grid_[index(p)]; }
  Cell at(int r, int c) const { return at(GridPos{r, c}); }
  GridPos agent_pos() const { return agent_; }
  int agent_dir() const { return dir_; }
  GridPos goal_pos() const { return goal_; }
  int step_count() const { return step_count_; }
  int room_count() const { return rooms_; }
  std::uint64_t layout_seed() const { return layout_seed_; }
  bool done() const override { return done_; }
  Outcome outcome() const { return outcome_; }

  /// Test hook: place the agent explicitly.
  void place_agent(GridPos p, int dir) {
    if (!in_bounds(p) || at(p) == Cell::Wall || at(p) == Cell::DoorClosed || at(p) == Cell::Goal) {
      throw InvalidArgument("agent must stand on a free cell");
    }
    agent_ = p;
    dir_ = dir & 3;
  }
  /// Test hook: overwrite one cell.
  void set_cell(GridPos p, Cell c) { grid_[index(p)] = c; }

  Observation observe() const override {
    Observation obs(static_cast<std::size_t>(observation_size()), Real(0));
    const auto vis = visible_mask();
    for (int vr = 0; vr < kView; ++vr) {
      for (int vc = 0; vc < kView; ++vc) {
        int channel = 0;  // unknown
        if (vis[vr * kView + vc]) {
          const GridPos p = view_to_world(vr, vc);
          channel = in_bounds(p) ? 1 + static_cast<int>(at(p)) : 2;
        }
        obs[static_cast<std::size_t>((vr * kView + vc) * kChannels + channel)] = Real(1);
      }
    }
    std::size_t base = kView * kView * kChannels;
    if (params_.goal_compass) {
      write_offset(obs, base, goal_);
      base += 2;
    }
    if (params_.door_compass) write_direction(obs, base, next_doorway());
    return obs;
  }

  Transition step(const Action& a, Actor actor) override {
    if (done_) throw InvalidState("step after the episode ended");
    require_valid(a, space_);
    Transition t;
    t.s = observe();
    t.a = a;
    t.actor = actor;
    t.step_index = step_count_;
    const GridPos ahead = front();
    switch (a.index) {
      case kTurnLeft: dir_ = (dir_ + 3) & 3; break;
      case kTurnRight: dir_ = (dir_ + 1) & 3; break;
      case kForward:
        if (in_bounds(ahead) && passable(at(ahead))) agent_ = ahead;
        break;
      case kOpenDoor:
        if (in_bounds(ahead) && at(ahead) == Cell::DoorClosed) set_cell(ahead, Cell::DoorOpen);
        break;
      default: break;
    }
    ++step_count_;
    if (at(agent_) == Cell::Goal) {
      outcome_ = Outcome::Success;
      t.reward = 1.0;
    } else if (step_count_ >= params_.max_steps) {
      outcome_ = Outcome::Timeout;
    }
    done_ = outcome_ != Outcome::None;
    t.done = done_;
    t.outcome = outcome_;
    t.s_next = observe();
    return t;
  }

  /// Oracle: first primitive of a cheapest plan, ties broken left < right < forward < open.
  Action expert_action() const override {
    if (done_) throw InvalidState("expert queried after the episode ended");
    const auto dist = cost_to_goal();
    if (dist[state_index(agent_, dir_)] == kInf) throw NoPlan("goal unreachable from the agent position");
    return Action::of(best_action(dist, agent_, dir_));
  }

  /// First door cell (closed or open) that a cheapest route enters, or the goal.
  GridPos next_doorway() const {
    const auto dist = cost_to_goal();
    GridPos p = agent_;
    int d = dir_;
    if (dist[state_index(p, d)] == kInf) return goal_;
    for (int guard = 0; guard < 4 * params_.size * params_.size; ++guard) {
      const GridPos ahead{p.row + kHeading[d].row, p.col + kHeading[d].col};
      switch (best_action(dist, p, d)) {
        case kTurnLeft: d = (d + 3) & 3; break;
        case kTurnRight: d = (d + 1) & 3; break;
        case kOpenDoor: return ahead;
        default:
          if (at(ahead) == Cell::DoorOpen || at(ahead) == Cell::Goal) return ahead;
          p = ahead;
      }
    }
    return goal_;
  }

  /// Number of primitive actions on a cheapest plan from the current state.
  int plan_length() const {
    const double d = cost_to_goal()[state_index(agent_, dir_)];
    if (d == kInf) throw NoPlan("goal unreachable from the agent position");
    return static_cast<int>(d);
  }

  double route_completion() const override {
    return outcome_ == Outcome::Success ? 1.0 : 0.0;
  }

  nlohmann::json render_model() const override {
    nlohmann::json cells = nlohmann::json::array();
    for (Cell c : grid_) cells.push_back(cell_name(c));
    return {{"env", "fourrooms"},
            {"rows", params_.size},
            {"cols", params_.size},
            {"cells", cells},
            {"agent", {{"row", agent_.row}, {"col", agent_.col}, {"dir", dir_}}},
            {"goal", {{"row", goal_.row}, {"col", goal_.col}}},
            {"step", step_count_}};
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<FourRooms>(*this);
  }

  static std::string cell_name(Cell c) {
    switch (c) {
      case Cell::Empty: return "empty";
      case Cell::Wall: return "wall";
      case Cell::DoorClosed: return "door_closed";
      case Cell::DoorOpen: return "door_open";
      case Cell::Goal: return "goal";
    }
    return "empty";
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  /// Cheapest primitive from (p, d), ties broken left < right < forward < open.
  int best_action(const std::vector<double>& dist, GridPos p, int d) const {
    const GridPos ahead{p.row + kHeading[d].row, p.col + kHeading[d].col};
    std::array<double, 4> total;
    total.fill(kInf);
    total[kTurnLeft] = 1.0 + dist[state_index(p, (d + 3) & 3)];
    total[kTurnRight] = 1.0 + dist[state_index(p, (d + 1) & 3)];
    if (in_bounds(ahead) && passable(at(ahead))) {
      total[kForward] = 1.0 + (at(ahead) == Cell::Goal ? 0.0 : dist[state_index(ahead, d)]);
    }
    if (in_bounds(ahead) && at(ahead) == Cell::DoorClosed) {
      total[kOpenDoor] = 2.0 + dist[state_index(ahead, d)];
    }
    int best = 0;
    for (int a = 1; a < 4; ++a) {
      if (total[a] < total[best]) best = a;
    }
    return best;
  }

  /// Offset of `target` in the agent frame (ahead, right), each mapped from
  /// [-(size-1), size-1] onto [0, 1].
  void write_offset(Observation& obs, std::size_t at_index, GridPos target) const {
    const GridPos fwd = kHeading[dir_];
    const GridPos right = kHeading[(dir_ + 1) & 3];
    const int dr = target.row - agent_.row;
    const int dc = target.col - agent_.col;
    const double ahead = dr * fwd.row + dc * fwd.col;
    const double lateral = dr * right.row + dc * right.col;
    const double scale = params_.size - 1;
    obs[at_index] = static_cast<Real>((ahead / scale + 1.0) / 2.0);
    obs[at_index + 1] = static_cast<Real>((lateral / scale + 1.0) / 2.0);
  }

  /// Signs of the agent-frame offset of `target`: one-hot (behind, level, ahead) then
  /// one-hot (left, level, right).
  void write_direction(Observation& obs, std::size_t at_index, GridPos target) const {
    const GridPos fwd = kHeading[dir_];
    const GridPos right = kHeading[(dir_ + 1) & 3];
    const int dr = target.row - agent_.row;
    const int dc = target.col - agent_.col;
    const int ahead = dr * fwd.row + dc * fwd.col;
    const int lateral = dr * right.row + dc * right.col;
    obs[at_index + static_cast<std::size_t>(1 + (ahead > 0) - (ahead < 0))] = Real(1);
    obs[at_index + static_cast<std::size_t>(4 + (lateral > 0) - (lateral < 0))] = Real(1);
  }

  std::size_t index(GridPos p) const {
    return static_cast<std::size_t>(p.row * params_.size + p.col);
  }
  std::size_t state_index(GridPos p, int dir) const { return index(p) * 4 + dir; }
  bool in_bounds(GridPos p) const {
    return p.row >= 0 && p.col >= 0 && p.row < params_.size && p.col < params_.size;
  }
  static bool passable(Cell c) { return c == Cell::Empty || c == Cell::DoorOpen || c == Cell::Goal; }
  static bool opaque(Cell c) { return c == Cell::Wall || c == Cell::DoorClosed; }
  GridPos front() const { return {agent_.row + kHeading[dir_].row, agent_.col + kHeading[dir_].col}; }

  /// View row 0 is farthest ahead; the agent sits at row 6, column 3.
  GridPos view_to_world(int vr, int vc) const {
    const int ahead = kView - 1 - vr;
    const int lateral = vc - kView / 2;
    const GridPos f = kHeading[dir_];
    const GridPos r = kHeading[(dir_ + 1) & 3];
    return {agent_.row + ahead * f.row + lateral * r.row,
            agent_.col + ahead * f.col + lateral * r.col};
  }

  /// Row-by-row visibility sweep from the agent; opaque cells are seen but block sight.
  std::array<bool, kView * kView> visible_mask() const {
    std::array<bool, kView * kView> mask{};
    auto opaque_at = [&](int vr, int vc) {
      const GridPos p = view_to_world(vr, vc);
      return !in_bounds(p) || opaque(at(p));
    };
    mask[(kView - 1) * kView + kView / 2] = true;
    for (int vr = kView - 1; vr >= 0; --vr) {
      for (int vc = 0; vc < kView - 1; ++vc) {
        if (!mask[vr * kView + vc] || opaque_at(vr, vc)) continue;
        mask[vr * kView + vc + 1] = true;
        if (vr > 0) {
          mask[(vr - 1) * kView + vc + 1] = true;
          mask[(vr - 1) * kView + vc] = true;
        }
      }
      for (int vc = kView - 1; vc > 0; --vc) {
        if (!mask[vr * kView + vc] || opaque_at(vr, vc)) continue;
        mask[vr * kView + vc - 1] = true;
        if (vr > 0) {
          mask[(vr - 1) * kView + vc - 1] = true;
          mask[(vr - 1) * kView + vc] = true;
        }
      }
    }
    return mask;
  }

  /// Cheapest cost from every (cell, dir) to the goal. Entering a closed door costs two
  /// primitives (open, then forward).
  std::vector<double> cost_to_goal() const {
    const int n = params_.size;
    std::vector<double> dist(static_cast<std::size_t>(n * n * 4), kInf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    for (int d = 0; d < 4; ++d) {
      dist[state_index(goal_, d)] = 0.0;
      open.push({0.0, state_index(goal_, d)});
    }
    while (!open.empty()) {
      const auto [cost, s] = open.top();
      open.pop();
      if (cost > dist[s]) continue;
      const int d = static_cast<int>(s % 4);
      const int cell = static_cast<int>(s / 4);
      const GridPos p{cell / n, cell % n};
      auto relax = [&](std::size_t pred, double c) {
        if (c < dist[pred]) {
          dist[pred] = c;
          open.push({c, pred});
        }
      };
      // turning into heading d from the neighbouring headings
      relax(state_index(p, (d + 1) & 3), cost + 1.0);
      relax(state_index(p, (d + 3) & 3), cost + 1.0);
      // moving forward into p while facing d
      const GridPos from{p.row - kHeading[d].row, p.col - kHeading[d].col};
      if (in_bounds(from) && (at(from) == Cell::Empty || at(from) == Cell::DoorOpen ||
                              at(from) == Cell::DoorClosed)) {
        // a closed door at `from` is standable once it has been opened on the way
        relax(state_index(from, d), cost + (at(p) == Cell::DoorClosed ? 2.0 : 1.0));
      }
    }
    return dist;
  }

  void generate(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int n = params_.size;
    const int mid = n / 2;
    grid_.assign(static_cast<std::size_t>(n * n), Cell::Empty);
    for (int i = 0; i < n; ++i) {
      set_cell({0, i}, Cell::Wall);
      set_cell({n - 1, i}, Cell::Wall);
      set_cell({i, 0}, Cell::Wall);
      set_cell({i, n - 1}, Cell::Wall);
    }
    const int wall_col = uniform(mid - 1, mid + 1);
    for (int r = 1; r < n - 1; ++r) set_cell({r, wall_col}, Cell::Wall);

    rooms_ = uniform(2, 4);
    bool left = rooms_ == 4;
    bool right = rooms_ == 4;
    if (rooms_ == 3) (uniform(0, 1) == 0 ? left : right) = true;
    int left_row = -1;
    int right_row = -1;
    if (left) {
      left_row = uniform(mid - 1, mid + 1);
      for (int c = 1; c < wall_col; ++c) set_cell({left_row, c}, Cell::Wall);
      set_cell({left_row, uniform(1, wall_col - 1)}, Cell::DoorClosed);
    }
    if (right) {
      right_row = uniform(mid - 1, mid + 1);
      for (int c = wall_col + 1; c < n - 1; ++c) set_cell({right_row, c}, Cell::Wall);
      set_cell({right_row, uniform(wall_col + 1, n - 2)}, Cell::DoorClosed);
    }
    int door_row = 0;
    do {
      door_row = uniform(1, n - 2);
    } while (door_row == left_row || door_row == right_row);
    set_cell({door_row, wall_col}, Cell::DoorClosed);

    // Label rooms, then put start and goal in different rooms.
    std::vector<int> room(grid_.size(), -1);
    int rooms_found = 0;
    std::vector<std::vector<GridPos>> members;
    for (int r = 1; r < n - 1; ++r) {
      for (int c = 1; c < n - 1; ++c) {
        if (at(r, c) != Cell::Empty || room[index({r, c})] >= 0) continue;
        members.emplace_back();
        std::queue<GridPos> q;
        q.push({r, c});
        room[index({r, c})] = rooms_found;
        while (!q.empty()) {
          const GridPos p = q.front();
          q.pop();
          members.back().push_back(p);
          for (const auto& h : kHeading) {
            const GridPos nb{p.row + h.row, p.col + h.col};
            if (in_bounds(nb) && at(nb) == Cell::Empty && room[index(nb)] < 0) {
              room[index(nb)] = rooms_found;
              q.push(nb);
            }
          }
        }
        ++rooms_found;
      }
    }
    const int start_room = uniform(0, rooms_found - 1);
    int goal_room = uniform(0, rooms_found - 2);
    if (goal_room >= start_room) ++goal_room;
    const auto& sr = members[static_cast<std::size_t>(start_room)];
    const auto& gr = members[static_cast<std::size_t>(goal_room)];
    agent_ = sr[static_cast<std::size_t>(uniform(0, static_cast<int>(sr.size()) - 1))];
    goal_ = gr[static_cast<std::size_t>(uniform(0, static_cast<int>(gr.size()) - 1))];
    dir_ = uniform(0, 3);
    set_cell(goal_, Cell::Goal);
  }

  FourRoomsParams params_;
  ActionSpace space_;
  std::vector<Cell> grid_;
  GridPos agent_;
  GridPos goal_;
  int dir_ = 0;
  int rooms_ = 0;
  int step_count_ = 0;
  std::uint64_t layout_seed_ = 0;
  bool done_ = true;
  Outcome outcome_ = Outcome::None;
};

}  // namespace aim::worlds
