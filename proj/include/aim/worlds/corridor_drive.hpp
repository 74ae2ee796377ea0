#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "aim/worlds/environment.hpp"

namespace aim::worlds {

struct CorridorParams {
  double goal_x = 80.0;
  double lane_halfwidth = 4.0;
  int min_cones = 4;
  int max_cones = 8;
  double cone_zone_begin = 28.0;
  double cone_zone_end = 60.0;
  double roadblock_begin = 66.0;
  double roadblock_end = 70.0;
  double roadblock_gap = 3.5;
  double cone_radius = 0.6;       // physical size seen by the lidar
  double collision_radius = 1.0;  // centre distance that counts as contact
  double heading_rate = 0.2;      // rad per step at |a0| = 1
  double max_speed = 2.0;         // m per step
  double accel = 0.5;             // m per step^2 at |a1| = 1
  int lidar_rays = 24;
  double lidar_range = 10.0;
  double lidar_fov = 150.0 * std::numbers::pi / 180.0;
  double spawn_lateral = 2.0;
  double spawn_heading = 0.15;
  int max_steps = 200;
};

struct Obstacle {
  enum class Kind { Cone, Roadblock } kind = Kind::Cone;
  double x = 0.0;
  double y = 0.0;      // centre
  double width = 0.0;  // lateral extent of a roadblock
};

struct Waypoint {
  double x = 0.0;
  double y = 0.0;
};

/// Straight road with a cone slalom and a single roadblock. Kinematic car: steering
/// changes heading, throttle changes speed, then the car advances by `speed`.
class CorridorDrive final : public Environment {
 public:
  explicit CorridorDrive(CorridorParams params = {})
      : params_(params), space_(ActionSpace::continuous({-1.0, -1.0}, {1.0, 1.0})) {
    if (params_.max_steps <= 0) throw InvalidArgument("max_steps must be positive");
    if (params_.lidar_rays < 1) throw InvalidArgument("lidar needs at least one ray");
  }

  EnvKind kind() const override { return EnvKind::CorridorDrive; }
  const ActionSpace& action_space() const override { return space_; }
  int observation_size() const override { return 4 + params_.lidar_rays; }
  const CorridorParams& params() const { return params_; }

  Observation reset(std::uint64_t seed) override {
    layout_seed_ = seed;
    generate(seed);
    step_count_ = 0;
    done_ = false;
    outcome_ = Outcome::None;
    return observe();
  }

  double x() const { return x_; }
  double y() const { return y_; }
  double heading() const { return heading_; }
  double speed() const { return speed_; }
  int step_count() const { return step_count_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const std::vector<Waypoint>& reference_path() const { return path_; }
  bool done() const override { return done_; }
  Outcome outcome() const { return outcome_; }

  /// Test hook: set the ego pose.
  void set_pose(double x, double y, double heading, double speed) {
    x_ = x;
    y_ = y;
    heading_ = heading;
    speed_ = speed;
  }
  /// Test hook: replace the obstacle set.
  void set_obstacles(std::vector<Obstacle> obs) { obstacles_ = std::move(obs); }

  Observation observe() const override {
    Observation obs;
    obs.reserve(static_cast<std::size_t>(observation_size()));
    const double pi = std::numbers::pi;
    obs.push_back(unit(0.5 * (y_ / params_.lane_halfwidth + 1.0)));
    obs.push_back(unit(0.5 * (std::remainder(heading_, 2.0 * pi) / pi + 1.0)));
    obs.push_back(unit(speed_ / params_.max_speed));
    obs.push_back(unit((params_.goal_x - x_) / params_.goal_x));
    for (int k = 0; k < params_.lidar_rays; ++k) {
      obs.push_back(unit(ray_distance(ray_angle(k)) / params_.lidar_range));
    }
    return obs;
  }

  Transition step(const Action& a, Actor actor) override {
    if (done_) throw InvalidState("step after the episode ended");
    const Action act = clamp_to(a, space_);
    Transition t;
    t.s = observe();
    t.a = act;
    t.actor = actor;
    t.step_index = step_count_;
    const double x_before = x_;
    heading_ += act.vec[0] * params_.heading_rate;
    speed_ = std::clamp(speed_ + act.vec[1] * params_.accel, 0.0, params_.max_speed);
    x_ += speed_ * std::cos(heading_);
    y_ += speed_ * std::sin(heading_);
    ++step_count_;
    t.reward = x_ - x_before;
    if (in_collision()) {
      outcome_ = Outcome::Crash;
      t.reward -= 5.0;
    } else if (x_ >= params_.goal_x) {
      outcome_ = Outcome::Success;
      t.reward += 10.0;
    } else if (step_count_ >= params_.max_steps) {
      outcome_ = Outcome::Timeout;
    }
    done_ = outcome_ != Outcome::None;
    t.done = done_;
    t.outcome = outcome_;
    t.s_next = observe();
    return t;
  }

  bool in_collision() const {
    return std::abs(y_) > params_.lane_halfwidth ||
           distance_to_nearest_obstacle() < params_.collision_radius;
  }

  /// Pure-pursuit-style steering toward the reference path; throttle toward top speed on
  /// clear road and toward a crawl as the next obstacle approaches.
  Action expert_action() const override {
    if (done_) throw InvalidState("expert queried after the episode ended");
    const double lookahead = 3.0 + 2.0 * speed_;
    const double target_y = reference_y(x_ + lookahead);
    const double desired = std::atan2(target_y - y_, lookahead);
    const double steer =
        std::clamp(kSteerGain * (desired - heading_) / params_.heading_rate, -1.0, 1.0);

    double gap = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles_) {
      if (o.x >= x_ - 1.0) gap = std::min(gap, o.x - x_);
    }
    double target_speed = params_.max_speed;
    if (gap < kBrakeFar) {
      const double w = std::clamp((gap - kBrakeNear) / (kBrakeFar - kBrakeNear), 0.0, 1.0);
      target_speed = kCrawlSpeed + w * (params_.max_speed - kCrawlSpeed);
    }
    const double throttle = std::clamp((target_speed - speed_) / params_.accel, -1.0, 1.0);
    return Action::of({steer, throttle});
  }

  bool is_safety_critical() const override {
    const auto a = expert_action();
    return std::hypot(a.vec[0], a.vec[1]) > 0.5;
  }

  double distance_to_nearest_obstacle() const override {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles_) best = std::min(best, distance_to(o, x_, y_));
    return best;
  }

  double route_completion() const override { return unit(x_ / params_.goal_x); }

  /// Reference lateral offset at longitudinal position `x` (piecewise linear).
  double reference_y(double x) const {
    if (path_.empty()) return 0.0;
    if (x <= path_.front().x) return path_.front().y;
    for (std::size_t i = 1; i < path_.size(); ++i) {
      if (x <= path_[i].x) {
        const auto& a = path_[i - 1];
        const auto& b = path_[i];
        const double t = (x - a.x) / (b.x - a.x);
        return a.y + t * (b.y - a.y);
      }
    }
    return path_.back().y;
  }

  nlohmann::json render_model() const override {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : obstacles_) {
      obs.push_back({{"kind", o.kind == Obstacle::Kind::Cone ? "cone" : "roadblock"},
                     {"x", o.x},
                     {"y", o.y},
                     {"width", o.width}});
    }
    return {{"env", "corridor"},
            {"goal_x", params_.goal_x},
            {"lane_halfwidth", params_.lane_halfwidth},
            {"agent", {{"x", x_}, {"y", y_}, {"heading", heading_}, {"speed", speed_}}},
            {"obstacles", obs},
            {"step", step_count_}};
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<CorridorDrive>(*this);
  }

  double distance_to(const Obstacle& o, double px, double py) const {
    if (o.kind == Obstacle::Kind::Cone) return std::hypot(px - o.x, py - o.y);
    const double lo = o.y - 0.5 * o.width;
    const double hi = o.y + 0.5 * o.width;
    const double cy = std::clamp(py, lo, hi);
    return std::hypot(px - o.x, py - cy);
  }

 private:
  static constexpr double kSteerGain = 0.5;
  static constexpr double kBrakeFar = 10.0;
  static constexpr double kBrakeNear = 4.0;
  static constexpr double kCrawlSpeed = 1.0;
  static constexpr double kConeClearance = 2.2;

  static Real unit(double v) { return static_cast<Real>(std::clamp(v, 0.0, 1.0)); }

  double ray_angle(int k) const {
    if (params_.lidar_rays == 1) return heading_;
    const double t = static_cast<double>(k) / (params_.lidar_rays - 1);
    return heading_ - 0.5 * params_.lidar_fov + t * params_.lidar_fov;
  }

  /// First hit along a ray against cones (circles), roadblocks (segments) and road edges.
  double ray_distance(double angle) const {
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    double best = params_.lidar_range;
    for (const auto& o : obstacles_) {
      if (o.kind == Obstacle::Kind::Cone) {
        const double fx = x_ - o.x;
        const double fy = y_ - o.y;
        const double b = fx * dx + fy * dy;
        const double c = fx * fx + fy * fy - params_.cone_radius * params_.cone_radius;
        const double disc = b * b - c;
        if (disc < 0.0) continue;
        const double s = -b - std::sqrt(disc);
        if (s >= 0.0) best = std::min(best, s);
        else if (c < 0.0) best = 0.0;
      } else if (std::abs(dx) > 1e-12) {
        const double s = (o.x - x_) / dx;
        if (s < 0.0) continue;
        const double hy = y_ + s * dy;
        if (std::abs(hy - o.y) <= 0.5 * o.width) best = std::min(best, s);
      }
    }
    if (std::abs(dy) > 1e-12) {
      for (double edge : {params_.lane_halfwidth, -params_.lane_halfwidth}) {
        const double s = (edge - y_) / dy;
        if (s >= 0.0) best = std::min(best, s);
      }
    }
    return best;
  }

  /// Lays out a reference path first and then hangs obstacles beside it, so every layout
  /// has a collision-free route by construction.
  void generate(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) {
      return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    const double hw = params_.lane_halfwidth;
    const int cones = std::uniform_int_distribution<int>(params_.min_cones, params_.max_cones)(rng);
    const double zone = params_.cone_zone_end - params_.cone_zone_begin;
    const double spacing = zone / cones;
    const double max_shift = 0.35 * spacing;
    const double path_limit = hw - 2.0;

    obstacles_.clear();
    path_.clear();
    path_.push_back({params_.cone_zone_begin - 12.0, 0.0});
    double prev_y = 0.0;
    for (int i = 0; i < cones; ++i) {
      const double cx = params_.cone_zone_begin + (i + uniform(0.3, 0.7)) * spacing;
      const double py = std::clamp(prev_y + uniform(-1.0, 1.0) * max_shift, -path_limit, path_limit);
      double side = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      double cy = py + side * (kConeClearance + uniform(0.0, 0.4));
      if (std::abs(cy) > hw - 0.5) {
        side = -side;
        cy = py + side * (kConeClearance + uniform(0.0, 0.4));
      }
      obstacles_.push_back({Obstacle::Kind::Cone, cx, cy, 0.0});
      path_.push_back({cx - 1.2, py});
      path_.push_back({cx + 1.2, py});
      prev_y = py;
    }
    // Roadblock: blocks one side, leaving a gap centred on the path.
    const double bx = uniform(params_.roadblock_begin, params_.roadblock_end);
    const double gy =
        std::clamp(prev_y + uniform(-1.0, 1.0), -hw + 0.5 * params_.roadblock_gap,
                   hw - 0.5 * params_.roadblock_gap);
    const double gap_lo = gy - 0.5 * params_.roadblock_gap;
    const double gap_hi = gy + 0.5 * params_.roadblock_gap;
    const bool block_left = (gap_lo + hw) > (hw - gap_hi);
    if (block_left) {
      obstacles_.push_back({Obstacle::Kind::Roadblock, bx, 0.5 * (-hw + gap_lo), gap_lo + hw});
    } else {
      obstacles_.push_back({Obstacle::Kind::Roadblock, bx, 0.5 * (gap_hi + hw), hw - gap_hi});
    }
    path_.push_back({bx - 2.0, gy});
    path_.push_back({bx + 1.0, gy});
    path_.push_back({bx + 10.0, 0.0});

    x_ = 0.0;
    y_ = uniform(-params_.spawn_lateral, params_.spawn_lateral);
    heading_ = uniform(-params_.spawn_heading, params_.spawn_heading);
    speed_ = params_.max_speed;
  }

  CorridorParams params_;
  ActionSpace space_;
  std::vector<Obstacle> obstacles_;
  std::vector<Waypoint> path_;
  double x_ = 0.0;
  double y_ = 0.0;
  double heading_ = 0.0;
  double speed_ = 0.0;
  int step_count_ = 0;
  std::uint64_t layout_seed_ = 0;
  bool done_ = true;
  Outcome outcome_ = Outcome::None;
};

}  // namespace aim::worlds
