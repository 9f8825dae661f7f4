#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crowdnav/learned_predictor.hpp"
#include "crowdnav/prediction.hpp"

namespace crowdnav {

inline constexpr double kDefaultPedestrianSpeed = 1.2;

/// Tuning of the waypoint-following / social-force pedestrian model.
///
/// The repulsion velocity is capped at `max_repulsion_speed`, so a single
/// step never moves a pedestrian further than
/// (preferred_speed + max_repulsion_speed) * dt.
struct CrowdParams {
  bool repulsion = true;
  double waypoint_tolerance = 0.1;       // [m] switch / arrival radius
  double relaxation_time = 0.5;          // [s]
  double repulsion_strength = 1.6;       // [m/s] at contact
  double repulsion_range = 0.5;          // [m] exponential decay length
  double repulsion_cutoff = 4.0;         // [m] agents further away are ignored
  double tangential_bias = 0.4;          // fraction of repulsion turned into a pass-on-the-right push
  double max_repulsion_speed = 0.8;      // [m/s]
  double pedestrian_radius = 0.3;        // [m]
  double robot_radius = 0.4;             // [m]
};

struct Pedestrian {
  int id = 0;
  Path2 route;                 // waypoints, route[0] is the spawn point
  double preferred_speed = kDefaultPedestrianSpeed;
  double start_delay = 0.0;    // [s]
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  std::size_t next_waypoint = 1;
  bool started = false;
  bool arrived = false;

  /// Spawned at route[0], not yet moving.
  static Pedestrian spawn(int id, Path2 route, double preferred_speed, double start_delay);
};

/// Bound on the distance a pedestrian covers in one step of length dt.
double max_step_displacement(const Pedestrian& ped, const CrowdParams& params, double dt);

/// Advances all pedestrians by dt from time `time`. Each moves toward its
/// next waypoint at its preferred speed, switching waypoints within
/// waypoint_tolerance and stopping at the final one. With repulsion enabled
/// pedestrians are pushed away from each other and from `robot` (if given).
void step_pedestrians(std::vector<Pedestrian>& peds, std::optional<Vec2> robot, double time,
                      double dt, const CrowdParams& params);

/// Parameters for the synthetic training-data generator.
struct CrowdGeneratorConfig {
  int episodes = 40;
  int pedestrians_per_episode = 6;
  double arena_half_width = 6.0;
  double arena_half_height = 5.0;
  double speed_min = 0.9;
  double speed_max = 1.5;
  int intermediate_waypoints = 0;
  double max_start_delay = 2.0;
  bool repulsion = true;
  double observation_noise = 0.03;  // [m] std of Gaussian noise on recorded positions
  double episode_duration = 25.0;  // [s]
  double sim_dt = 0.1;
  double dt_obs = kDefaultObservationDt;
  int history_length = kDefaultHistoryLength;
  int horizon = kDefaultPredictionSteps;
  int window_stride = 1;
  double arrival_margin = 1.0;  // [m] recording stops this close to the final goal
  double dwell_time = 4.0;      // [s] if > 0, record through arrival and this long standing still
  CrowdParams crowd;
};

/// Raw recorded tracks, one per pedestrian, at dt_obs.
struct CrowdTracks {
  std::vector<Path2> tracks;
  std::vector<int> ids;
};

/// Simulates the generator's episodes and returns each pedestrian's recorded
/// positions from its start until arrival, plus dwell_time standing at the
/// goal (or until arrival_margin short of it when dwell_time is 0).
/// Deterministic in (config, seed).
CrowdTracks simulate_crowd_tracks(const CrowdGeneratorConfig& config, std::uint64_t seed);

/// Cuts tracks into (history_length history, horizon future) windows.
std::vector<TrainingExample> windows_from_tracks(std::span<const Path2> tracks,
                                                 std::span<const int> ids, int history_length,
                                                 int horizon, double dt_obs, int stride);

/// simulate_crowd_tracks followed by windowing. Throws std::invalid_argument
/// for degenerate configurations (no pedestrians, no episodes).
std::vector<TrainingExample> generate_synthetic_crowd(const CrowdGeneratorConfig& config,
                                                      std::uint64_t seed);

}  // namespace crowdnav
