#include "crowdnav/crowd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crowdnav/rng.hpp"

namespace crowdnav {

Pedestrian Pedestrian::spawn(int id, Path2 route, double preferred_speed, double start_delay) {
  if (route.empty()) throw std::invalid_argument("Pedestrian: empty route");
  Pedestrian p;
  p.id = id;
  p.position = route.front();
  p.route = std::move(route);
  p.preferred_speed = preferred_speed;
  p.start_delay = start_delay;
  p.next_waypoint = 1;
  p.arrived = p.route.size() == 1;
  return p;
}

double max_step_displacement(const Pedestrian& ped, const CrowdParams& params, double dt) {
  return (ped.preferred_speed + params.max_repulsion_speed) * dt;
}

namespace {

Vec2 clip_norm(const Vec2& v, double limit) {
  const double n = v.norm();
  return n > limit ? Vec2(v * (limit / n)) : v;
}

// Desired velocity toward the current waypoint; advances the waypoint index
// and flags arrival as a side effect.
Vec2 desired_velocity(Pedestrian& ped, const CrowdParams& params, double dt) {
  const std::size_t last = ped.route.size() - 1;
  while (true) {
    const Vec2 to = ped.route[ped.next_waypoint] - ped.position;
    const double dist = to.norm();
    if (dist <= params.waypoint_tolerance) {
      if (ped.next_waypoint >= last) {
        ped.arrived = true;
        return Vec2::Zero();
      }
      ++ped.next_waypoint;
      continue;
    }
    const double speed = std::min(ped.preferred_speed, dist / dt);
    return to * (speed / dist);
  }
}

Vec2 repulsion_from(const Vec2& self, const Vec2& heading, const Vec2& other,
                    double contact_distance, const CrowdParams& params) {
  const Vec2 away = self - other;
  const double d = away.norm();
  if (d > params.repulsion_cutoff) return Vec2::Zero();
  const Vec2 n = d > 1e-9 ? Vec2(away / d) : Vec2(1.0, 0.0);
  const double magnitude =
      params.repulsion_strength * std::exp((contact_distance - d) / params.repulsion_range);
  Vec2 push = magnitude * n;
  // Agents ahead also produce a sideways push to the walker's right, which
  // breaks head-on symmetry.
  const double hn = heading.norm();
  if (hn > 1e-9) {
    const Vec2 h = heading / hn;
    if (h.dot(-n) > 0.0) push += params.tangential_bias * magnitude * Vec2(h.y(), -h.x());
  }
  return push;
}

}  // namespace

void step_pedestrians(std::vector<Pedestrian>& peds, std::optional<Vec2> robot, double time,
                      double dt, const CrowdParams& params) {
  std::vector<Vec2> velocities(peds.size(), Vec2::Zero());
  for (std::size_t i = 0; i < peds.size(); ++i) {
    Pedestrian& ped = peds[i];
    if (ped.arrived) {
      ped.velocity = Vec2::Zero();
      continue;
    }
    const bool starting = !ped.started && time + 1e-9 >= ped.start_delay;
    if (!ped.started && !starting) continue;

    const Vec2 desired = desired_velocity(ped, params, dt);
    if (ped.arrived) {
      ped.velocity = Vec2::Zero();
      continue;
    }
    if (starting) {
      ped.started = true;
      ped.velocity = desired;
    }

    Vec2 push = Vec2::Zero();
    if (params.repulsion) {
      const double contact_pp = 2.0 * params.pedestrian_radius;
      for (std::size_t j = 0; j < peds.size(); ++j) {
        if (j == i) continue;
        push += repulsion_from(ped.position, desired, peds[j].position, contact_pp, params);
      }
      if (robot) {
        push += repulsion_from(ped.position, desired, *robot,
                               params.pedestrian_radius + params.robot_radius, params);
      }
      push = clip_norm(push, params.max_repulsion_speed);
    }

    const Vec2 target = desired + push;
    const double alpha = std::min(1.0, dt / params.relaxation_time);
    Vec2 v = ped.velocity + alpha * (target - ped.velocity);
    velocities[i] = clip_norm(v, ped.preferred_speed + params.max_repulsion_speed);
  }

  for (std::size_t i = 0; i < peds.size(); ++i) {
    Pedestrian& ped = peds[i];
    if (!ped.started || ped.arrived) continue;
    ped.velocity = velocities[i];
    ped.position += ped.velocity * dt;
  }
}

namespace {

Vec2 point_on_edge(int edge, double along, const CrowdGeneratorConfig& c) {
  const double w = c.arena_half_width;
  const double h = c.arena_half_height;
  switch (edge) {
    case 0: return {-w, along * h};
    case 1: return {w, along * h};
    case 2: return {along * w, -h};
    default: return {along * w, h};
  }
}

}  // namespace

CrowdTracks simulate_crowd_tracks(const CrowdGeneratorConfig& config, std::uint64_t seed) {
  if (config.pedestrians_per_episode < 1 || config.episodes < 1) {
    throw std::invalid_argument("crowd generator: need at least one pedestrian and one episode");
  }
  if (!(config.sim_dt > 0.0) || !(config.dt_obs >= config.sim_dt) ||
      !(config.speed_min > 0.0 && config.speed_max >= config.speed_min)) {
    throw std::invalid_argument("crowd generator: invalid timing or speed range");
  }
  if (!(config.dwell_time >= 0.0)) throw std::invalid_argument("crowd generator: dwell_time < 0");
  const int obs_stride = static_cast<int>(std::lround(config.dt_obs / config.sim_dt));
  const int steps = static_cast<int>(std::lround(config.episode_duration / config.sim_dt));
  CrowdParams params = config.crowd;
  params.repulsion = config.repulsion;

  CrowdTracks out;
  for (int e = 0; e < config.episodes; ++e) {
    Rng rng(mix_seed({seed, label_key("episode"), static_cast<std::uint64_t>(e)}));
    Rng noise_rng(mix_seed({seed, label_key("obs-noise"), static_cast<std::uint64_t>(e)}));
    std::uniform_real_distribution<double> unit(-0.9, 0.9);
    std::uniform_real_distribution<double> speed(config.speed_min, config.speed_max);
    std::uniform_real_distribution<double> delay(0.0, config.max_start_delay);
    std::uniform_int_distribution<int> edge_pick(0, 3);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<Pedestrian> peds;
    for (int p = 0; p < config.pedestrians_per_episode; ++p) {
      const int edge = edge_pick(rng);
      const int opposite = edge ^ 1;
      Path2 route{point_on_edge(edge, unit(rng), config)};
      for (int k = 0; k < config.intermediate_waypoints; ++k) {
        route.emplace_back(unit(rng) * config.arena_half_width * 0.7,
                           unit(rng) * config.arena_half_height * 0.7);
      }
      route.push_back(point_on_edge(opposite, unit(rng), config));
      const double v = speed(rng);
      const double d = config.max_start_delay > 0.0 ? delay(rng) : 0.0;
      peds.push_back(Pedestrian::spawn(e * 1000 + p, std::move(route), v, d));
    }

    std::vector<Path2> current(peds.size());
    auto flush = [&](std::size_t i) {
      if (!current[i].empty()) {
        out.tracks.push_back(std::move(current[i]));
        out.ids.push_back(peds[i].id);
        current[i].clear();
      }
    };
    std::vector<bool> closed(peds.size(), false);
    std::vector<int> arrived_at(peds.size(), -1);
    const int dwell_steps = static_cast<int>(std::lround(config.dwell_time / config.sim_dt));
    for (int s = 0; s <= steps; ++s) {
      if (s % obs_stride == 0) {
        for (std::size_t i = 0; i < peds.size(); ++i) {
          if (closed[i]) continue;
          const auto& ped = peds[i];
          bool recording = false;
          if (dwell_steps > 0) {
            if (ped.arrived && arrived_at[i] < 0) arrived_at[i] = s;
            recording = ped.started && (!ped.arrived || s - arrived_at[i] <= dwell_steps);
          } else {
            recording = ped.started && !ped.arrived &&
                        (ped.route.back() - ped.position).norm() > config.arrival_margin;
          }
          if (recording) {
            Vec2 p = ped.position;
            if (config.observation_noise > 0.0) {
              const double nx = noise(noise_rng);
              const double ny = noise(noise_rng);
              p += config.observation_noise * Vec2(nx, ny);
            }
            current[i].push_back(p);
          } else if (!current[i].empty()) {
            flush(i);
            closed[i] = true;
          }
        }
      }
      if (s < steps) step_pedestrians(peds, std::nullopt, s * config.sim_dt, config.sim_dt, params);
    }
    for (std::size_t i = 0; i < peds.size(); ++i) flush(i);
  }
  return out;
}

std::vector<TrainingExample> windows_from_tracks(std::span<const Path2> tracks,
                                                 std::span<const int> ids, int history_length,
                                                 int horizon, double dt_obs, int stride) {
  if (history_length < 1 || horizon < 1 || stride < 1) {
    throw std::invalid_argument("windows_from_tracks: invalid window shape");
  }
  std::vector<TrainingExample> out;
  const auto span_len = static_cast<std::size_t>(history_length + horizon);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const Path2& track = tracks[k];
    for (std::size_t s = 0; s + span_len <= track.size(); s += stride) {
      TrainingExample ex;
      ex.history = pad_history(std::span(track).subspan(s, history_length), history_length,
                               k < ids.size() ? ids[k] : static_cast<int>(k), dt_obs);
      ex.future.assign(track.begin() + static_cast<std::ptrdiff_t>(s + history_length),
                       track.begin() + static_cast<std::ptrdiff_t>(s + span_len));
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<TrainingExample> generate_synthetic_crowd(const CrowdGeneratorConfig& config,
                                                      std::uint64_t seed) {
  const CrowdTracks tracks = simulate_crowd_tracks(config, seed);
  return windows_from_tracks(tracks.tracks, tracks.ids, config.history_length, config.horizon,
                             config.dt_obs, config.window_stride);
}

}  // namespace crowdnav
